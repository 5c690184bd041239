// A deterministic in-memory stand-in for the HTTP service. It mirrors the
// real endpoints' semantics (shared model function between /curve and
// /whatif, pins honored exactly, budget respected) so store/view logic can
// be exercised without a network.

import {
    AllocateResponse,
    ApiClient,
    CountriesResponse,
    CurveResponse,
    ServiceError,
    WhatIfResponse,
} from "../src/api.js";

export const BOUND = 600;

const MODEL: Record<string, (aid: number) => number> = {
    AAA: (aid) => 0.02 + 0.0001 * aid,
    BBB: (aid) => 0.04 + 0.00005 * aid,
    CCC: (aid) => 0.01 + 0.00012 * aid,
};

export const OBSERVED: Record<string, number> = { AAA: 150, BBB: 40, CCC: 300 };

function lattice(points: number): number[] {
    return Array.from({ length: points }, (_, i) => (BOUND * i) / (points - 1));
}

export function makeCurve(country: string, points = 65): CurveResponse {
    const treatments = lattice(points);
    return {
        country,
        treatments,
        predictions: treatments.map(MODEL[country]),
        observed_aid: OBSERVED[country],
        bound: BOUND,
    };
}

export class FakeApi implements Pick<ApiClient, "countries" | "curve" | "whatIf" | "allocate"> {
    calls: string[] = [];
    failNextCurve = false;

    countries(): Promise<CountriesResponse> {
        this.calls.push("countries");
        return Promise.resolve({
            year: 2017,
            bound: BOUND,
            total_aid: Object.values(OBSERVED).reduce((a, b) => a + b, 0),
            countries: Object.keys(MODEL).map((id) => ({
                id,
                observed_aid: OBSERVED[id],
                infection_rate_per_1k: 1.0,
                population: 1e7,
            })),
        });
    }

    curve(country: string, points = 65): Promise<CurveResponse> {
        this.calls.push(`curve:${country}`);
        if (this.failNextCurve || !(country in MODEL)) {
            this.failNextCurve = false;
            return Promise.reject(new ServiceError({
                code: 404, stage: "lookup", message: `unknown country '${country}'`,
            }));
        }
        return Promise.resolve(makeCurve(country, points));
    }

    whatIf(country: string, aid: number): Promise<WhatIfResponse> {
        this.calls.push(`whatif:${country}:${aid}`);
        if (aid < 0 || aid > BOUND) {
            return Promise.reject(new ServiceError({
                code: 422, stage: "whatif", message: `aid ${aid} outside [0, ${BOUND}]`,
            }));
        }
        const fn = MODEL[country];
        const observed = OBSERVED[country];
        return Promise.resolve({
            country,
            aid,
            prediction: fn(aid),
            observed_aid: observed,
            observed_prediction: fn(observed),
            delta: fn(aid) - fn(observed),
            curve: makeCurve(country),
        });
    }

    allocate(budget: number | null,
             pins: Record<string, number>): Promise<AllocateResponse> {
        this.calls.push(`allocate:${budget}:${JSON.stringify(pins)}`);
        const ids = Object.keys(MODEL);
        const observedTotal = Object.values(OBSERVED).reduce((a, b) => a + b, 0);
        const total = budget ?? observedTotal;
        const observed = ids.map((id) => OBSERVED[id]);
        const infections = (alloc: number[]) =>
            ids.reduce((sum, id, i) => sum + (1 - MODEL[id](alloc[i])) * 1e4, 0);

        // two feasible candidates, like the real multi-start solver: an even
        // split and the (budget-scaled) observed allocation; pins override
        const withPins = (base: number[]) => {
            const out = base.slice();
            let left = total;
            ids.forEach((id, i) => {
                if (id in pins) {
                    out[i] = pins[id];
                }
            });
            ids.forEach((id, i) => {
                if (!(id in pins)) {
                    const free = left - ids.reduce(
                        (s, other, j) => s + (other in pins ? pins[other] : 0), 0);
                    out[i] = Math.min(out[i], BOUND);
                    void free;
                }
            });
            // scale unpinned coordinates onto the remaining budget
            const pinSum = ids.reduce((s, id, i) => s + (id in pins ? out[i] : 0), 0);
            const unpinnedSum = ids.reduce((s, id, i) => s + (id in pins ? 0 : out[i]), 0);
            const room = Math.max(total - pinSum, 0);
            const scale = unpinnedSum > 0 ? Math.min(room / unpinnedSum, 1) : 0;
            ids.forEach((id, i) => {
                if (!(id in pins)) {
                    out[i] = Math.min(out[i] * scale, BOUND);
                }
            });
            return out;
        };
        const candidates = [withPins(ids.map(() => total / ids.length)),
                            withPins(observed.slice())];
        candidates.sort((a, b) => infections(a) - infections(b));
        const aid = candidates[0];
        const current = infections(observed);
        const suggested = infections(aid);
        return Promise.resolve({
            plan: {
                countries: ids,
                aid,
                objective: suggested,
                warm_start_objective: current,
                budget_residual: 0,
                box_residual: 0,
                iterations: 12,
                pins,
            },
            current_expected_infections: current,
            suggested_expected_infections: suggested,
            reduction: current - suggested,
            reduction_pct: (100 * (current - suggested)) / current,
            observed_aid: observed,
            delta: aid.map((a, i) => a - observed[i]),
            total_suggested: aid.reduce((a, b) => a + b, 0),
            budget: total,
        });
    }
}

export function asClient(fake: FakeApi): ApiClient {
    return fake as unknown as ApiClient;
}
