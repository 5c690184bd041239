// Dashboard state machine: country selection, the debounced what-if
// slider, and the allocation form. Concurrency is handled with request
// sequence tokens so a stale response can never overwrite a newer one;
// the view layer re-renders from this store and nothing else.

import {
    AllocateResponse,
    ApiClient,
    CountriesResponse,
    CurveResponse,
    ServiceError,
    WhatIfResponse,
} from "./api.js";

export interface Banner {
    kind: "error" | "warning";
    text: string;
}

export interface WhatIfState {
    country: string | null;
    bound: number;
    sliderAid: number;
    curve: CurveResponse | null;
    whatIf: WhatIfResponse | null;
    pins: Record<string, number>;
    budget: number | null;
    lastPlan: AllocateResponse | null;
    banner: Banner | null;
}

export const WHATIF_DEBOUNCE_MS = 150;

export class DashboardStore {
    state: WhatIfState = {
        country: null,
        bound: 0,
        sliderAid: 0,
        curve: null,
        whatIf: null,
        pins: {},
        budget: null,
        lastPlan: null,
        banner: null,
    };

    countries: CountriesResponse | null = null;

    private curveToken = 0;
    private whatIfToken = 0;
    private allocateToken = 0;
    private debounceHandle: ReturnType<typeof setTimeout> | null = null;
    private listeners: Array<() => void> = [];
    inflightWhatIf = 0;

    constructor(private readonly api: ApiClient) {}

    subscribe(listener: () => void): void {
        this.listeners.push(listener);
    }

    private emit(): void {
        for (const fn of this.listeners) {
            fn();
        }
    }

    async loadCountries(): Promise<void> {
        this.countries = await this.api.countries();
        this.state.bound = this.countries.bound;
        this.emit();
    }

    /** Clamp a slider value into the service's admissible range [0, L]. */
    clampAid(aid: number): number {
        return Math.min(Math.max(aid, 0), this.state.bound);
    }

    async selectCountry(country: string): Promise<void> {
        const token = ++this.curveToken;
        try {
            const curve = await this.api.curve(country);
            if (token !== this.curveToken) {
                return; // stale response: a newer selection already landed
            }
            this.state.country = country;
            this.state.curve = curve;
            this.state.whatIf = null;
            this.state.sliderAid = curve.observed_aid;
            this.state.banner = null;
        } catch (err) {
            if (token !== this.curveToken) {
                return;
            }
            // keep the previous chart; only surface the banner
            this.state.banner = toBanner(err);
        }
        this.emit();
    }

    /** Slider input: debounced so only one request is in flight. */
    moveSlider(aid: number): void {
        if (this.state.country === null) {
            return;
        }
        if (aid > this.state.bound || aid < 0) {
            // blocked client-side before any request
            this.state.sliderAid = this.clampAid(aid);
            this.state.banner = {
                kind: "warning",
                text: `aid must lie within [0, ${this.state.bound.toFixed(1)}] USD mn`,
            };
            this.emit();
            return;
        }
        this.state.sliderAid = aid;
        this.emit();
        if (this.debounceHandle !== null) {
            clearTimeout(this.debounceHandle);
        }
        this.debounceHandle = setTimeout(() => {
            this.debounceHandle = null;
            void this.runWhatIf();
        }, WHATIF_DEBOUNCE_MS);
    }

    async runWhatIf(): Promise<void> {
        if (this.state.country === null) {
            return;
        }
        const token = ++this.whatIfToken;
        this.inflightWhatIf += 1;
        try {
            const result = await this.api.whatIf(this.state.country, this.state.sliderAid);
            if (token !== this.whatIfToken) {
                return; // last response wins
            }
            this.state.whatIf = result;
            this.state.banner = null;
        } catch (err) {
            if (token !== this.whatIfToken) {
                return;
            }
            if (err instanceof ServiceError && err.code === 422) {
                this.state.banner = { kind: "warning", text: err.message };
            } else {
                this.state.banner = toBanner(err);
            }
        } finally {
            this.inflightWhatIf -= 1;
            this.emit();
        }
    }

    setPin(country: string, aid: number | null): void {
        if (aid === null) {
            delete this.state.pins[country];
        } else {
            this.state.pins[country] = aid;
        }
        this.emit();
    }

    setBudget(budget: number | null): void {
        this.state.budget = budget;
        this.emit();
    }

    /** Client-side consistency checks before an allocation request. */
    validateAllocationForm(): string | null {
        const pinTotal = Object.values(this.state.pins).reduce((a, b) => a + b, 0);
        for (const [country, value] of Object.entries(this.state.pins)) {
            if (value < 0 || value > this.state.bound) {
                return `pin for ${country} must lie within [0, ${this.state.bound.toFixed(1)}]`;
            }
        }
        if (this.state.budget !== null && this.state.budget <= 0) {
            return "budget must be positive";
        }
        if (this.state.budget !== null && pinTotal > this.state.budget) {
            return "pinned allocations exceed the budget";
        }
        return null;
    }

    async runAllocation(): Promise<void> {
        const problem = this.validateAllocationForm();
        if (problem !== null) {
            this.state.banner = { kind: "warning", text: problem };
            this.emit();
            return;
        }
        const token = ++this.allocateToken;
        try {
            const plan = await this.api.allocate(this.state.budget, { ...this.state.pins });
            if (token !== this.allocateToken) {
                return;
            }
            this.state.lastPlan = plan;
            this.state.banner = null;
        } catch (err) {
            if (token !== this.allocateToken) {
                return;
            }
            this.state.banner = toBanner(err);
        }
        this.emit();
    }
}

export function toBanner(err: unknown): Banner {
    if (err instanceof ServiceError) {
        return { kind: "error", text: `${err.stage}: ${err.message} (${err.code})` };
    }
    return { kind: "error", text: String(err) };
}
