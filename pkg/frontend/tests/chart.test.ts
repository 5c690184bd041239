import { describe, expect, it } from "vitest";

import { allocationBars, curveGeometry, DEFAULT_LAYOUT, linearScale,
         nearestIndex } from "../src/chart.js";
import { formatAid, formatCases, formatDelta, formatReduction } from "../src/format.js";
import { makeCurve, BOUND } from "./helpers.js";

describe("linearScale", () => {
    it("maps domain endpoints onto range endpoints", () => {
        const s = linearScale([0, 10], [100, 200]);
        expect(s(0)).toBe(100);
        expect(s(10)).toBe(200);
        expect(s(5)).toBe(150);
    });

    it("degenerate domain does not divide by zero", () => {
        const s = linearScale([3, 3], [0, 1]);
        expect(Number.isFinite(s(3))).toBe(true);
    });
});

describe("curveGeometry", () => {
    const curve = makeCurve("AAA");
    const geo = curveGeometry(curve);

    it("renders one path command per lattice node", () => {
        expect(geo.points).toHaveLength(curve.treatments.length);
        expect(geo.path.startsWith("M")).toBe(true);
        expect(geo.path.match(/L/g)).toHaveLength(curve.treatments.length - 1);
    });

    it("x axis spans [0, bound]", () => {
        expect(geo.x.domain).toEqual([0, BOUND]);
        const { margin, width } = DEFAULT_LAYOUT;
        expect(geo.x(0)).toBe(margin.left);
        expect(geo.x(BOUND)).toBe(width - margin.right);
    });

    it("marker sits at the observed aid", () => {
        expect(geo.markerX).toBeCloseTo(geo.x(curve.observed_aid), 10);
    });

    it("y scale inverts (larger prediction is higher on screen)", () => {
        const low = geo.y(Math.min(...curve.predictions));
        const high = geo.y(Math.max(...curve.predictions));
        expect(high).toBeLessThan(low);
    });
});

describe("nearestIndex", () => {
    it("finds the closest lattice node", () => {
        const t = [0, 10, 20, 30];
        expect(nearestIndex(t, 0)).toBe(0);
        expect(nearestIndex(t, 14)).toBe(1);
        expect(nearestIndex(t, 16)).toBe(2);
        expect(nearestIndex(t, 99)).toBe(3);
    });
});

describe("allocationBars", () => {
    it("passes service deltas through and sorts descending", () => {
        const bars = allocationBars(
            ["A", "B", "C"], [10, 50, 30], [20, 10, 30], [-10, 40, 0]);
        expect(bars.map((b) => b.country)).toEqual(["B", "C", "A"]);
        expect(bars[0].delta).toBe(40);
        expect(bars[2].delta).toBe(-10);
        // no recomputation: the delta field is exactly what was served
        expect(bars.map((b) => b.delta)).toEqual([40, 0, -10]);
    });
});

describe("formatting", () => {
    it("is the only transformation applied to displayed numbers", () => {
        expect(formatAid(402)).toBe("USD 402.0 mn");
        expect(formatReduction(0.0694)).toBe("6.94%");
        expect(formatCases(1490000)).toBe("1.49 mn");
        expect(formatCases(48925)).toBe("48,925");
        expect(formatDelta(366.04)).toBe("+366.0");
        expect(formatDelta(-12.5)).toBe("-12.5");
    });
});
