// Pure geometry for the SVG curve chart: linear scales and path strings
// computed from raw service JSON. No smoothing, no resampling; one point
// per lattice node.

import { CurveResponse } from "./api.js";

export interface ChartLayout {
    width: number;
    height: number;
    margin: { left: number; right: number; top: number; bottom: number };
}

export const DEFAULT_LAYOUT: ChartLayout = {
    width: 640,
    height: 320,
    margin: { left: 56, right: 16, top: 12, bottom: 36 },
};

export interface LinearScale {
    (value: number): number;
    domain: [number, number];
    range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): LinearScale {
    const [d0, d1] = domain;
    const [r0, r1] = range;
    const span = d1 - d0 || 1;
    const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as LinearScale;
    scale.domain = domain;
    scale.range = range;
    return scale;
}

export interface CurveGeometry {
    x: LinearScale;
    y: LinearScale;
    path: string;
    markerX: number;            // observed-aid vertical line
    points: Array<{ x: number; y: number }>;
}

/** Axis bounds: treatments span [0, bound]; outcomes pad the data range. */
export function curveGeometry(curve: CurveResponse,
                              layout: ChartLayout = DEFAULT_LAYOUT): CurveGeometry {
    const { width, height, margin } = layout;
    const lo = Math.min(...curve.predictions);
    const hi = Math.max(...curve.predictions);
    const pad = (hi - lo || 1) * 0.08;
    const x = linearScale([0, curve.bound], [margin.left, width - margin.right]);
    const y = linearScale([lo - pad, hi + pad], [height - margin.bottom, margin.top]);
    const points = curve.treatments.map((t, i) => ({
        x: x(t),
        y: y(curve.predictions[i]),
    }));
    const path = points
        .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)},${p.y.toFixed(2)}`)
        .join("");
    return { x, y, path, markerX: x(curve.observed_aid), points };
}

/** Index of the lattice node closest to a treatment value. */
export function nearestIndex(treatments: number[], aid: number): number {
    let best = 0;
    let dist = Infinity;
    treatments.forEach((t, i) => {
        const d = Math.abs(t - aid);
        if (d < dist) {
            dist = d;
            best = i;
        }
    });
    return best;
}

export interface BarDatum {
    country: string;
    delta: number;              // served by the API: suggested - current
    suggested: number;
    current: number;
}

/** Reshape the service's parallel arrays into sorted bar data. All three
 * numbers per country come straight from the /allocate payload. */
export function allocationBars(countries: string[], suggested: number[],
                               current: number[], delta: number[]): BarDatum[] {
    const bars = countries.map((country, i) => ({
        country,
        delta: delta[i],
        suggested: suggested[i],
        current: current[i],
    }));
    bars.sort((a, b) => b.delta - a.delta);
    return bars;
}
