import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ServiceError, WhatIfResponse } from "../src/api.js";
import { formatReduction } from "../src/format.js";
import { DashboardStore, WHATIF_DEBOUNCE_MS } from "../src/state.js";
import { asClient, BOUND, FakeApi, makeCurve, OBSERVED } from "./helpers.js";

describe("DashboardStore", () => {
    let api: FakeApi;
    let store: DashboardStore;

    beforeEach(async () => {
        api = new FakeApi();
        store = new DashboardStore(asClient(api));
        await store.loadCountries();
    });

    it("loads countries and adopts the service bound", () => {
        expect(store.countries?.countries.map((c) => c.id)).toEqual(["AAA", "BBB", "CCC"]);
        expect(store.state.bound).toBe(BOUND);
    });

    it("selecting a country fetches its curve and seeds the slider", async () => {
        await store.selectCountry("AAA");
        expect(store.state.curve?.country).toBe("AAA");
        expect(store.state.sliderAid).toBe(OBSERVED.AAA);
        expect(store.state.banner).toBeNull();
    });

    it("unknown country keeps the previous chart and raises a banner", async () => {
        await store.selectCountry("AAA");
        await store.selectCountry("XXX");
        expect(store.state.curve?.country).toBe("AAA");
        expect(store.state.banner?.kind).toBe("error");
        expect(store.state.banner?.text).toContain("unknown country");
    });

    it("re-fetching the same country returns identical data", async () => {
        await store.selectCountry("BBB");
        const first = store.state.curve;
        await store.selectCountry("BBB");
        expect(store.state.curve).toEqual(first);
    });

    describe("what-if slider", () => {
        beforeEach(async () => {
            await store.selectCountry("AAA");
            vi.useFakeTimers();
        });

        afterEach(() => {
            vi.useRealTimers();
        });

        it("debounces rapid movement into a single request", async () => {
            store.moveSlider(100);
            store.moveSlider(140);
            store.moveSlider(180);
            expect(api.calls.filter((c) => c.startsWith("whatif"))).toHaveLength(0);
            await vi.advanceTimersByTimeAsync(WHATIF_DEBOUNCE_MS + 10);
            const calls = api.calls.filter((c) => c.startsWith("whatif"));
            expect(calls).toEqual(["whatif:AAA:180"]);
            expect(store.state.whatIf?.aid).toBe(180);
        });

        it("blocks values beyond the bound before any request", async () => {
            store.moveSlider(BOUND + 50);
            await vi.advanceTimersByTimeAsync(WHATIF_DEBOUNCE_MS + 10);
            expect(api.calls.filter((c) => c.startsWith("whatif"))).toHaveLength(0);
            expect(store.state.sliderAid).toBe(BOUND);
            expect(store.state.banner?.kind).toBe("warning");
        });

        it("a 422 from the service becomes a range warning", async () => {
            store.state.bound = BOUND + 1000; // let the client pass it through
            store.moveSlider(BOUND + 500);
            await vi.advanceTimersByTimeAsync(WHATIF_DEBOUNCE_MS + 10);
            expect(store.state.banner?.kind).toBe("warning");
            expect(store.state.banner?.text).toContain("outside");
        });

        it("last response wins when requests overlap", async () => {
            vi.useRealTimers();
            let resolveSlow: (r: WhatIfResponse) => void = () => undefined;
            const slow = new Promise<WhatIfResponse>((res) => { resolveSlow = res; });
            const realWhatIf = api.whatIf.bind(api);
            let call = 0;
            api.whatIf = (country: string, aid: number) => {
                call += 1;
                return call === 1 ? slow : realWhatIf(country, aid);
            };
            store.state.sliderAid = 111;
            const first = store.runWhatIf();
            store.state.sliderAid = 222;
            const second = store.runWhatIf();
            await second;
            resolveSlow({
                country: "AAA", aid: 111, prediction: 99, observed_aid: 1,
                observed_prediction: 0, delta: 99, curve: makeCurve("AAA"),
            });
            await first;
            expect(store.state.whatIf?.aid).toBe(222);
        });
    });

    describe("what-if consistency", () => {
        it("point prediction equals the curve value at the same aid to displayed precision", async () => {
            await store.selectCountry("CCC");
            const curve = store.state.curve!;
            const nodeAid = curve.treatments[37];
            store.state.sliderAid = nodeAid;
            await store.runWhatIf();
            const shown = formatReduction(store.state.whatIf!.prediction);
            expect(shown).toBe(formatReduction(curve.predictions[37]));
        });

        it("delta comes from the service payload, not client arithmetic", async () => {
            await store.selectCountry("AAA");
            store.state.sliderAid = OBSERVED.AAA;
            await store.runWhatIf();
            expect(store.state.whatIf?.delta).toBe(0);
        });
    });

    describe("allocation form", () => {
        it("rejects pins beyond the bound client-side", async () => {
            store.setPin("AAA", BOUND + 1);
            await store.runAllocation();
            expect(api.calls.filter((c) => c.startsWith("allocate"))).toHaveLength(0);
            expect(store.state.banner?.text).toContain("pin for AAA");
        });

        it("rejects pins exceeding the budget before submitting", async () => {
            store.setBudget(100);
            store.setPin("AAA", 80);
            store.setPin("BBB", 50);
            await store.runAllocation();
            expect(api.calls.filter((c) => c.startsWith("allocate"))).toHaveLength(0);
            expect(store.state.banner?.text).toContain("exceed");
        });

        it("passes pins through and the plan honors them", async () => {
            store.setPin("BBB", 123.5);
            await store.runAllocation();
            const plan = store.state.lastPlan!;
            const idx = plan.plan.countries.indexOf("BBB");
            expect(plan.plan.aid[idx]).toBe(123.5);
            expect(plan.plan.pins.BBB).toBe(123.5);
        });

        it("pinned country is unchanged across re-runs", async () => {
            store.setPin("CCC", 42);
            await store.runAllocation();
            store.setBudget(450);
            await store.runAllocation();
            const plan = store.state.lastPlan!;
            const idx = plan.plan.countries.indexOf("CCC");
            expect(plan.plan.aid[idx]).toBe(42);
        });

        it("suggested totals respect the budget", async () => {
            store.setBudget(300);
            await store.runAllocation();
            const plan = store.state.lastPlan!;
            expect(plan.total_suggested).toBeLessThanOrEqual(plan.budget + 1e-9);
        });

        it("at the observed-total budget the plan beats current practice", async () => {
            store.setBudget(null);
            await store.runAllocation();
            const plan = store.state.lastPlan!;
            expect(plan.total_suggested).toBeLessThanOrEqual(plan.budget + 1e-9);
            expect(plan.suggested_expected_infections)
                .toBeLessThanOrEqual(plan.current_expected_infections + 1e-9);
        });

        it("clearing a pin removes it from requests", async () => {
            store.setPin("AAA", 10);
            store.setPin("AAA", null);
            await store.runAllocation();
            const call = api.calls.find((c) => c.startsWith("allocate"));
            expect(call).toBe("allocate:null:{}");
        });
    });
});

describe("error mapping", () => {
    it("ServiceError carries code and stage", () => {
        const err = new ServiceError({ code: 503, stage: "startup", message: "model not loaded" });
        expect(err.code).toBe(503);
        expect(err.stage).toBe("startup");
        expect(err.message).toBe("model not loaded");
    });
});
