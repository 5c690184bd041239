// Typed client for the aid-response service. Every number the dashboard
// shows originates from one of these payloads; the UI only formats.

export interface CountrySummary {
    id: string;
    observed_aid: number;
    infection_rate_per_1k: number;
    population: number;
}

export interface CountriesResponse {
    year: number;
    bound: number;
    total_aid: number;
    countries: CountrySummary[];
}

export interface CurveResponse {
    country: string;
    treatments: number[];
    predictions: number[];
    observed_aid: number;
    bound: number;
}

export interface WhatIfResponse {
    country: string;
    aid: number;
    prediction: number;
    observed_aid: number;
    observed_prediction: number;
    delta: number;
    curve: CurveResponse;
}

export interface AllocationPlan {
    countries: string[];
    aid: number[];
    objective: number;
    warm_start_objective: number;
    budget_residual: number;
    box_residual: number;
    iterations: number;
    pins: Record<string, number>;
}

export interface AllocateResponse {
    plan: AllocationPlan;
    current_expected_infections: number;
    suggested_expected_infections: number;
    reduction: number;
    reduction_pct: number;
    observed_aid: number[];
    delta: number[];
    total_suggested: number;
    budget: number;
}

export interface ApiError {
    code: number;
    stage: string;
    message: string;
}

export class ServiceError extends Error {
    readonly code: number;
    readonly stage: string;

    constructor(detail: ApiError) {
        super(detail.message);
        this.code = detail.code;
        this.stage = detail.stage;
    }
}

async function parse<T>(response: Response): Promise<T> {
    const body = await response.json().catch(() => null);
    if (!response.ok) {
        const detail: ApiError = body && typeof body.code === "number"
            ? body
            : { code: response.status, stage: "transport", message: response.statusText };
        throw new ServiceError(detail);
    }
    return body as T;
}

export class ApiClient {
    constructor(private readonly base: string,
                private readonly fetcher: typeof fetch = fetch) {}

    countries(): Promise<CountriesResponse> {
        return this.fetcher(`${this.base}/api/countries`).then((r) => parse(r));
    }

    curve(country: string, points = 65): Promise<CurveResponse> {
        const url = `${this.base}/api/curve/${encodeURIComponent(country)}?points=${points}`;
        return this.fetcher(url).then((r) => parse(r));
    }

    whatIf(country: string, aid: number): Promise<WhatIfResponse> {
        return this.fetcher(`${this.base}/api/whatif`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ country, aid }),
        }).then((r) => parse(r));
    }

    allocate(budget: number | null, pins: Record<string, number>):
            Promise<AllocateResponse> {
        const body: Record<string, unknown> = { pins };
        if (budget !== null) {
            body.budget = budget;
        }
        return this.fetcher(`${this.base}/api/allocate`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        }).then((r) => parse(r));
    }
}
