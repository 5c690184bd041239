// DOM wiring: renders the store into the page and forwards user input.
// Everything displayed comes from service payloads held in the store;
// this layer only formats and draws.

import { allocationBars, curveGeometry, DEFAULT_LAYOUT, nearestIndex } from "./chart.js";
import { formatAid, formatCases, formatDelta, formatReduction } from "./format.js";
import { DashboardStore } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(tag: K, cls?: string,
                                                   text?: string): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (cls) {
        node.className = cls;
    }
    if (text !== undefined) {
        node.textContent = text;
    }
    return node;
}

export class App {
    private root: HTMLElement;
    private countrySelect!: HTMLSelectElement;
    private slider!: HTMLInputElement;
    private sliderLabel!: HTMLElement;
    private chartHost!: HTMLElement;
    private whatIfPanel!: HTMLElement;
    private bannerHost!: HTMLElement;
    private budgetInput!: HTMLInputElement;
    private pinHost!: HTMLElement;
    private allocationHost!: HTMLElement;

    constructor(private readonly store: DashboardStore, root: HTMLElement) {
        this.root = root;
        this.buildSkeleton();
        store.subscribe(() => this.render());
    }

    private buildSkeleton(): void {
        this.root.innerHTML = "";
        this.bannerHost = el("div", "banner-host");

        const explorer = el("section", "panel");
        explorer.appendChild(el("h2", "", "Aid-response explorer"));
        const row = el("div", "controls");
        this.countrySelect = document.createElement("select");
        this.countrySelect.onchange = () => {
            window.location.hash = this.countrySelect.value;
        };
        row.appendChild(this.countrySelect);
        this.slider = document.createElement("input");
        this.slider.type = "range";
        this.slider.min = "0";
        this.slider.step = "0.1";
        this.slider.oninput = () => this.store.moveSlider(Number(this.slider.value));
        row.appendChild(this.slider);
        this.sliderLabel = el("span", "slider-label");
        row.appendChild(this.sliderLabel);
        explorer.appendChild(row);
        this.chartHost = el("div", "chart-host");
        explorer.appendChild(this.chartHost);
        this.whatIfPanel = el("div", "whatif-panel");
        explorer.appendChild(this.whatIfPanel);

        const allocator = el("section", "panel");
        allocator.appendChild(el("h2", "", "Budget reallocation"));
        const form = el("div", "controls");
        this.budgetInput = document.createElement("input");
        this.budgetInput.type = "number";
        this.budgetInput.placeholder = "budget (USD mn, blank = observed total)";
        this.budgetInput.onchange = () => {
            const value = this.budgetInput.value.trim();
            this.store.setBudget(value === "" ? null : Number(value));
        };
        form.appendChild(this.budgetInput);
        const runBtn = el("button", "", "Optimize allocation");
        runBtn.onclick = () => void this.store.runAllocation();
        form.appendChild(runBtn);
        allocator.appendChild(form);
        this.pinHost = el("div", "pin-host");
        allocator.appendChild(this.pinHost);
        this.allocationHost = el("div", "allocation-host");
        allocator.appendChild(this.allocationHost);

        this.root.appendChild(this.bannerHost);
        this.root.appendChild(explorer);
        this.root.appendChild(allocator);
    }

    populateCountries(): void {
        const data = this.store.countries;
        if (!data) {
            return;
        }
        this.countrySelect.innerHTML = "";
        for (const c of data.countries) {
            const opt = document.createElement("option");
            opt.value = c.id;
            opt.textContent = `${c.id} (${formatAid(c.observed_aid)})`;
            this.countrySelect.appendChild(opt);
        }
        this.slider.max = String(data.bound);
    }

    render(): void {
        const state = this.store.state;
        this.bannerHost.innerHTML = "";
        if (state.banner) {
            this.bannerHost.appendChild(
                el("div", `banner banner-${state.banner.kind}`, state.banner.text));
        }
        if (state.country) {
            this.countrySelect.value = state.country;
        }
        this.slider.value = String(state.sliderAid);
        this.sliderLabel.textContent = formatAid(state.sliderAid);
        this.renderCurve();
        this.renderWhatIf();
        this.renderPins();
        this.renderAllocation();
    }

    private renderCurve(): void {
        const curve = this.store.state.curve;
        if (!curve) {
            return;
        }
        const geo = curveGeometry(curve);
        const { width, height, margin } = DEFAULT_LAYOUT;
        const svg = document.createElementNS(SVG_NS, "svg");
        svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
        svg.setAttribute("class", "curve-chart");

        const axis = document.createElementNS(SVG_NS, "line");
        axis.setAttribute("x1", String(margin.left));
        axis.setAttribute("x2", String(width - margin.right));
        axis.setAttribute("y1", String(height - margin.bottom));
        axis.setAttribute("y2", String(height - margin.bottom));
        axis.setAttribute("class", "axis");
        svg.appendChild(axis);

        const path = document.createElementNS(SVG_NS, "path");
        path.setAttribute("d", geo.path);
        path.setAttribute("class", "curve");
        svg.appendChild(path);

        const marker = document.createElementNS(SVG_NS, "line");
        marker.setAttribute("x1", geo.markerX.toFixed(2));
        marker.setAttribute("x2", geo.markerX.toFixed(2));
        marker.setAttribute("y1", String(margin.top));
        marker.setAttribute("y2", String(height - margin.bottom));
        marker.setAttribute("class", "observed-marker");
        svg.appendChild(marker);

        const whatIf = this.store.state.whatIf;
        if (whatIf && whatIf.country === curve.country) {
            const dot = document.createElementNS(SVG_NS, "circle");
            dot.setAttribute("cx", geo.x(whatIf.aid).toFixed(2));
            dot.setAttribute("cy", geo.y(whatIf.prediction).toFixed(2));
            dot.setAttribute("r", "5");
            dot.setAttribute("class", "whatif-dot");
            svg.appendChild(dot);
        }

        for (const [value, label] of [[0, "0"],
                                      [curve.bound, curve.bound.toFixed(0)]] as const) {
            const t = document.createElementNS(SVG_NS, "text");
            t.setAttribute("x", geo.x(value).toFixed(2));
            t.setAttribute("y", String(height - margin.bottom + 16));
            t.setAttribute("class", "tick");
            t.textContent = label;
            svg.appendChild(t);
        }

        this.chartHost.innerHTML = "";
        this.chartHost.appendChild(svg);
    }

    private renderWhatIf(): void {
        const w = this.store.state.whatIf;
        this.whatIfPanel.innerHTML = "";
        if (!w) {
            return;
        }
        const list = el("dl", "whatif-facts");
        const fact = (label: string, value: string) => {
            list.appendChild(el("dt", "", label));
            list.appendChild(el("dd", "", value));
        };
        fact("aid volume", formatAid(w.aid));
        fact("predicted reduction", formatReduction(w.prediction));
        fact("at observed aid", `${formatReduction(w.observed_prediction)} `
            + `(${formatAid(w.observed_aid)})`);
        fact("delta", formatReduction(w.delta));
        this.whatIfPanel.appendChild(list);
    }

    private renderPins(): void {
        this.pinHost.innerHTML = "";
        const pins = this.store.state.pins;
        const names = Object.keys(pins).sort();
        const label = el("div", "pin-title",
                         names.length ? "Pinned allocations:" : "No pins (double-click a row to pin)");
        this.pinHost.appendChild(label);
        for (const name of names) {
            const chip = el("span", "pin-chip", `${name}=${pins[name].toFixed(1)}`);
            chip.title = "click to remove";
            chip.onclick = () => this.store.setPin(name, null);
            this.pinHost.appendChild(chip);
        }
    }

    private renderAllocation(): void {
        const plan = this.store.state.lastPlan;
        this.allocationHost.innerHTML = "";
        if (!plan) {
            return;
        }
        const head = el("div", "headline");
        head.appendChild(el("span", "", `current: ${formatCases(plan.current_expected_infections)} expected infections`));
        head.appendChild(el("span", "", `suggested: ${formatCases(plan.suggested_expected_infections)}`));
        head.appendChild(el("span", "accent",
            `reduction: ${formatCases(plan.reduction)} (${plan.reduction_pct.toFixed(2)}%)`));
        head.appendChild(el("span", "",
            `total suggested ${formatAid(plan.total_suggested)} of budget ${formatAid(plan.budget)}`));
        this.allocationHost.appendChild(head);

        const bars = allocationBars(plan.plan.countries, plan.plan.aid,
                                    plan.observed_aid, plan.delta);
        const maxAbs = Math.max(...bars.map((b) => Math.abs(b.delta)), 1e-9);
        const table = el("table", "allocation-table");
        const header = el("tr");
        for (const caption of ["country", "current", "suggested", "delta", ""]) {
            header.appendChild(el("th", "", caption));
        }
        table.appendChild(header);
        for (const bar of bars) {
            const tr = el("tr");
            tr.ondblclick = () => this.store.setPin(bar.country, bar.suggested);
            tr.appendChild(el("td", "", bar.country));
            tr.appendChild(el("td", "num", bar.current.toFixed(1)));
            tr.appendChild(el("td", "num", bar.suggested.toFixed(1)));
            tr.appendChild(el("td", "num", formatDelta(bar.delta)));
            const cell = el("td", "bar-cell");
            const bal = el("div", bar.delta >= 0 ? "bar bar-up" : "bar bar-down");
            bal.style.width = `${(Math.abs(bar.delta) / maxAbs) * 100}%`;
            cell.appendChild(bal);
            tr.appendChild(cell);
            table.appendChild(tr);
        }
        this.allocationHost.appendChild(table);
    }
}

export function currentPointMatchesCurve(store: DashboardStore): boolean {
    // displayed-precision consistency between the what-if point and the
    // curve lattice (used by tests and a debug assertion)
    const { whatIf, curve } = store.state;
    if (!whatIf || !curve) {
        return true;
    }
    const i = nearestIndex(curve.treatments, whatIf.aid);
    if (Math.abs(curve.treatments[i] - whatIf.aid) > 1e-9) {
        return true; // aid between lattice nodes: nothing to compare
    }
    return formatReduction(curve.predictions[i]) === formatReduction(whatIf.prediction);
}
