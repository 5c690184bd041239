// Unit formatting: the only arithmetic the dashboard applies to service
// numbers (percent scaling for display and rounding).

export function formatAid(musd: number): string {
    return `USD ${musd.toFixed(1)} mn`;
}

export function formatReduction(fraction: number): string {
    return `${(fraction * 100).toFixed(2)}%`;
}

export function formatCases(cases: number): string {
    if (Math.abs(cases) >= 1e6) {
        return `${(cases / 1e6).toFixed(2)} mn`;
    }
    return Math.round(cases).toLocaleString("en-US");
}

export function formatDelta(musd: number): string {
    const sign = musd >= 0 ? "+" : "";
    return `${sign}${musd.toFixed(1)}`;
}
