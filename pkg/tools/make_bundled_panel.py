"""Build the synthetic benchmark panel shipped as cgct/datasets/hiv_aid_panel.csv.

The file is NOT real OECD/UN/World Bank data. It is a reproducible synthetic
sample constructed so that the 2016 columns match the published summary
statistics (mean, SD, median, min, max) of the country-level HIV aid panel
within 1%, with a plausible correlation structure: poorer and higher-burden
countries receive more aid, health indicators co-move, and the outcome
responds to aid with country-dependent strength.

Marginals: each column is a monotone beta-power quantile family with pinned
endpoints, whose three free parameters are tuned to hit mean/SD/median.
Dependence: a two-factor Gaussian copula (underdevelopment, epidemic scale);
column values are re-ordered by the copula ranks, which leaves every marginal
statistic untouched.

Run from the repo root:  python tools/make_bundled_panel.py
"""

import csv
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.special import betaincinv

OUT = Path(__file__).resolve().parents[1] / "src" / "cgct" / "datasets" / "hiv_aid_panel.csv"

N = 105
SEED = 416

# column -> (mean, sd, median, min, max); sd is sample sd (ddof=1)
TARGETS = {
    "outcome_reduction_pct": (3.26, 7.85, 2.94, -50.00, 17.30),
    "aid_usd_mn": (50.121, 112.858, 6.348, 0.003, 559.897),
    "gdp_pc_ppp_usd_k": (8.87, 6.79, 7.26, 0.77, 30.45),
    "gdp_growth_pct": (3.81, 3.53, 3.82, -5.07, 26.68),
    "fdi_usd_bn": (3.29, 8.75, 0.89, -7.40, 68.89),
    "cpi_inflation_pct": (7.75, 18.72, 4.38, -1.54, 187.85),
    "unemployment_pct": (7.83, 6.23, 5.65, 0.14, 27.04),
    "population_mn": (41.66, 135.75, 11.98, 0.38, 1338.68),
    "fertility_births": (3.25, 1.33, 2.85, 1.26, 7.00),
    "maternal_mortality_per_100k": (241.21, 259.08, 144.00, 2.00, 1150.00),
    "infant_mortality_per_1k": (30.95, 20.36, 26.60, 2.70, 87.30),
    "life_expectancy_years": (68.50, 6.90, 69.51, 52.95, 79.91),
    "school_enrolment_ratio": (1.04, 0.13, 1.03, 0.68, 1.45),
    "undernourishment_pct": (13.91, 11.65, 9.10, 2.50, 58.70),
    "electricity_access_pct": (73.83, 29.83, 90.30, 4.20, 100.00),
    "tuberculosis_per_100k": (162.29, 158.96, 99.00, 5.20, 738.00),
}

# untested marginal for the infection-rate column (per 1,000 uninfected);
# rescaled afterwards so aggregate new infections land near 1.6 million
RATE_TARGET = (0.95, 1.9, 0.30, 0.01, 12.0)

FEATURES = [
    "gdp_pc_ppp_usd_k", "gdp_growth_pct", "fdi_usd_bn", "cpi_inflation_pct",
    "unemployment_pct", "population_mn", "fertility_births",
    "maternal_mortality_per_100k", "infant_mortality_per_1k",
    "life_expectancy_years", "school_enrolment_ratio", "undernourishment_pct",
    "electricity_access_pct", "tuberculosis_per_100k",
]

# copula loadings on (underdevelopment g1, epidemic scale g2)
LOADINGS = {
    "aid_usd_mn": (0.45, 0.55),
    "gdp_pc_ppp_usd_k": (-0.85, -0.05),
    "gdp_growth_pct": (0.05, 0.05),
    "fdi_usd_bn": (-0.15, 0.35),
    "cpi_inflation_pct": (0.30, 0.05),
    "unemployment_pct": (-0.10, 0.05),
    "population_mn": (0.05, 0.60),
    "fertility_births": (0.70, 0.10),
    "maternal_mortality_per_100k": (0.80, 0.15),
    "infant_mortality_per_1k": (0.85, 0.10),
    "life_expectancy_years": (-0.80, -0.15),
    "school_enrolment_ratio": (0.10, 0.15),
    "undernourishment_pct": (0.60, 0.05),
    "electricity_access_pct": (-0.85, -0.10),
    "tuberculosis_per_100k": (0.55, 0.35),
    "hiv_infection_rate_per_1k": (0.30, 0.70),
}

COUNTRIES = [
    "AFG", "AGO", "ALB", "ARG", "ARM", "AZE", "BDI", "BEN", "BFA", "BGD",
    "BLZ", "BOL", "BRA", "BTN", "BWA", "CAF", "CHL", "CHN", "CIV", "CMR",
    "COD", "COG", "COL", "COM", "CPV", "CRI", "CUB", "DJI", "DOM",
    "ECU", "EGY", "ERI", "ETH", "GAB", "GEO", "GHA", "GIN", "GMB",
    "GNB", "GTM", "GUY", "HND", "HTI", "IDN", "IND", "IRN", "IRQ", "JAM",
    "JOR", "KAZ", "KEN", "KGZ", "KHM", "LAO", "LBN", "LBR", "LKA", "LSO",
    "MAR", "MDA", "MDG", "MEX", "MLI", "MMR", "MNG", "MOZ", "MRT", "MUS",
    "MWI", "MYS", "NAM", "NER", "NGA", "NIC", "NPL", "PAK", "PAN", "PER",
    "PHL", "PNG", "PRY", "RWA", "SDN", "SEN", "SLE", "SLV", "SOM", "SSD",
    "SUR", "SWZ", "TCD", "TGO", "THA", "TJK", "TLS", "TUN", "TZA", "UGA",
    "UKR", "UZB", "VNM", "YEM", "ZAF", "ZMB", "ZWE",
]

# rough development prior (higher = less developed) and epidemic prior
DEV_PRIOR = {
    "SSA": 1.6, "SAS": 1.0, "SEA": 0.4, "LAC": -0.3, "MENA": -0.2, "ECA": -0.5,
}
EPI_PRIOR = {"SSA_S": 2.0, "SSA": 0.9, "SAS": 0.2, "SEA": 0.0, "LAC": -0.3,
             "MENA": -0.8, "ECA": -0.4}
REGION = {
    "SSA": ["AGO", "BDI", "BEN", "BFA", "CAF", "CIV", "CMR", "COD", "COG",
            "COM", "CPV", "DJI", "ERI", "ETH", "GAB", "GHA", "GIN", "GMB",
            "GNB", "KEN", "LBR", "MDG", "MLI", "MRT", "MUS", "MWI", "NER",
            "NGA", "RWA", "SDN", "SEN", "SLE", "SOM", "SSD", "TCD", "TGO",
            "TZA", "UGA"],
    "SSA_S": ["BWA", "LSO", "MOZ", "NAM", "SWZ", "ZAF", "ZMB", "ZWE"],
    "SAS": ["AFG", "BGD", "BTN", "IND", "LKA", "NPL", "PAK"],
    "SEA": ["CHN", "IDN", "KHM", "LAO", "MMR", "MNG", "MYS", "PHL",
            "PNG", "THA", "TLS", "VNM"],
    "LAC": ["ARG", "BLZ", "BOL", "BRA", "CHL", "COL", "CRI", "CUB", "DOM",
            "ECU", "GTM", "GUY", "HND", "HTI", "JAM", "MEX", "NIC", "PAN",
            "PER", "PRY", "SLV", "SUR"],
    "MENA": ["EGY", "IRN", "IRQ", "JOR", "LBN", "MAR", "TUN", "YEM"],
    "ECA": ["ALB", "ARM", "AZE", "GEO", "KAZ", "KGZ", "MDA", "TJK", "UKR",
            "UZB"],
}


def marginal_values(mean, sd, med, lo, hi, n=N):
    """Sorted n values with pinned endpoints hitting mean/sd/median.

    Quantile family: a convex mix of a beta quantile and a power curve,
    raised to a power. Monotone in u for positive parameters, flexible
    enough for the very skewed columns (aid, population, inflation).
    """
    u = (np.arange(n) + 0.5) / n

    def build(params):
        a, b, c, d, logit_w = params
        a, b, c, d = np.exp([a, b, c, d])
        w = 1.0 / (1.0 + np.exp(-logit_w))
        base = ((1 - w) * betaincinv(a, b, u) + w * u ** d) ** c
        v = lo + (hi - lo) * base
        v[0], v[-1] = lo, hi
        return np.sort(v)

    def residuals(params):
        v = build(params)
        return np.array([
            (v.mean() - mean) / abs(mean),
            (v.std(ddof=1) - sd) / sd,
            (np.median(v) - med) / abs(med if med != 0 else 1.0),
        ])

    starts = [(1, 1, 1, 1, 0.0), (0.5, 3, 1, 2, 0.0), (2, 5, 0.7, 1, -2.0),
              (0.3, 8, 1.5, 4, 0.0), (0.15, 12, 1, 8, 2.0), (3, 2, 1.2, 1, -2.0),
              (0.8, 1.5, 2, 3, 0.0), (0.2, 4, 3, 10, 1.0), (0.1, 20, 0.8, 15, 0.0),
              (0.25, 2, 4, 20, 2.0), (0.5, 10, 2, 30, 1.0)]
    best, best_cost = None, np.inf
    for a0, b0, c0, d0, w0 in starts:
        x0 = np.array([np.log(a0), np.log(b0), np.log(c0), np.log(d0), w0])
        try:
            res = least_squares(residuals, x0, method="trf", max_nfev=6000)
        except Exception:
            continue
        if res.cost < best_cost:
            best, best_cost = res.x, res.cost
    v = build(best)
    errs = residuals(best)
    if np.max(np.abs(errs)) > 0.002:
        raise RuntimeError(f"marginal fit failed: errors {errs}")
    return v


def region_of(code):
    for reg, members in REGION.items():
        if code in members:
            return reg
    raise KeyError(code)


def copula_ranks(rng):
    """Per-column rank orders from a two-factor Gaussian copula."""
    g1 = np.empty(N)
    g2 = np.empty(N)
    for i, code in enumerate(COUNTRIES):
        reg = region_of(code)
        dev = DEV_PRIOR["SSA" if reg == "SSA_S" else reg]
        g1[i] = dev + 0.8 * rng.standard_normal()
        g2[i] = EPI_PRIOR[reg] + 0.8 * rng.standard_normal()
    g1 = (g1 - g1.mean()) / g1.std()
    g2 = (g2 - g2.mean()) / g2.std()
    latents = {}
    for col, (l1, l2) in LOADINGS.items():
        noise = np.sqrt(max(1.0 - l1 ** 2 - l2 ** 2, 0.05))
        latents[col] = l1 * g1 + l2 * g2 + noise * rng.standard_normal(N)
    return latents, g1, g2


def assign(values_sorted, latent):
    """Give the largest values to the rows with the largest latent scores."""
    order = np.argsort(np.argsort(latent))
    return values_sorted[order]


def outcome_signal(a_scaled, xs, rng, noise=0.2):
    """Latent outcome: a dominant aid trend, modest country-level effects,
    and small treatment-covariate interactions (more responsive where the
    burden is high, less responsive where income is high).

    The mix matters downstream: a dominant treatment trend with weak
    interactions keeps the interaction-regression surface tame away from
    the factual manifold while still giving curves country-specific shape.
    """
    beta = {
        "gdp_pc_ppp_usd_k": 0.1575, "gdp_growth_pct": 0.09, "fdi_usd_bn": 0.0225,
        "cpi_inflation_pct": -0.045, "unemployment_pct": -0.0225,
        "population_mn": 0.00, "fertility_births": -0.09,
        "maternal_mortality_per_100k": -0.09, "infant_mortality_per_1k": -0.1125,
        "life_expectancy_years": 0.135, "school_enrolment_ratio": 0.045,
        "undernourishment_pct": -0.0675, "electricity_access_pct": 0.09,
        "tuberculosis_per_100k": -0.09,
    }
    gamma = {
        "gdp_pc_ppp_usd_k": -0.144, "fertility_births": 0.072,
        "maternal_mortality_per_100k": 0.096, "infant_mortality_per_1k": 0.144,
        "life_expectancy_years": -0.072, "electricity_access_pct": -0.096,
        "population_mn": 0.06, "tuberculosis_per_100k": 0.096,
    }
    sig = 4.0 * a_scaled
    for j, col in enumerate(FEATURES):
        sig = sig + beta[col] * xs[:, j]
        if col in gamma:
            sig = sig + gamma[col] * a_scaled * xs[:, j]
    return sig + noise * rng.standard_normal(N)


def quantile_map(signal, sorted_target):
    return assign(np.sort(sorted_target), signal)


def scale01(v):
    return (v - v.min()) / (v.max() - v.min())


def force_value(col, code, value, year_cols, idx_of):
    """Swap so that `code` carries the row whose value is closest to `value`."""
    arr = year_cols[col]
    j = int(np.argmin(np.abs(arr - value)))
    i = idx_of[code]
    arr[i], arr[j] = arr[j], arr[i]


def punch_holes(cols, rng):
    """Mask cells while keeping observed-column stats within 0.9% of targets.

    A seeded local search picks the masked subsets: starting from a random
    choice, single-cell swaps are accepted whenever they reduce the worst
    relative drift of mean/SD/median over the remaining cells. The column
    extremes stay protected so min/max are untouched. Returns
    {col: set(row indices)}.
    """
    plan = {"school_enrolment_ratio": 8, "cpi_inflation_pct": 2,
            "undernourishment_pct": 6, "unemployment_pct": 6,
            "fdi_usd_bn": 2}
    holes = {}
    for col, count in plan.items():
        v = cols[col]
        mean, sd, med = v.mean(), v.std(ddof=1), np.median(v)
        protected = {int(np.argmin(v)), int(np.argmax(v))}
        candidates = np.array([i for i in range(N) if i not in protected])

        def drift(chosen):
            mask = np.ones(N, bool)
            mask[list(chosen)] = False
            obs = v[mask]
            return max(abs(obs.mean() - mean) / abs(mean),
                       abs(obs.std(ddof=1) - sd) / sd,
                       abs(np.median(obs) - med) / abs(med))

        best, best_err = None, np.inf
        for _ in range(6):
            chosen = set(rng.choice(candidates, size=count, replace=False).tolist())
            err = drift(chosen)
            for _ in range(3000):
                out = rng.choice(sorted(chosen))
                inn = int(rng.choice(candidates))
                if inn in chosen:
                    continue
                trial = (chosen - {out}) | {inn}
                trial_err = drift(trial)
                if trial_err < err:
                    chosen, err = trial, trial_err
                if err < 0.003:
                    break
            if err < best_err:
                best, best_err = chosen, err
            if best_err < 0.003:
                break
        if best_err > 0.0075:
            raise RuntimeError(f"hole plan breaks stats for {col}: {best_err}")
        holes[col] = set(int(i) for i in best)
    return holes


def build_year(rng, year, cols_prev=None):
    latents, g1, g2 = copula_ranks(rng)
    cols = {}
    for col, tgt in TARGETS.items():
        if col == "outcome_reduction_pct":
            continue
        v = marginal_values(*tgt)
        cols[col] = assign(v, latents[col])
    rate = marginal_values(*RATE_TARGET)
    cols["hiv_infection_rate_per_1k"] = assign(rate, latents["hiv_infection_rate_per_1k"])

    idx_of = {c: i for i, c in enumerate(COUNTRIES)}
    force_value("aid_usd_mn", "KEN", TARGETS["aid_usd_mn"][4], cols, idx_of)
    force_value("aid_usd_mn", "ZAF", 530.0, cols, idx_of)
    force_value("aid_usd_mn", "TZA", 470.0, cols, idx_of)
    force_value("aid_usd_mn", "MOZ", 390.0, cols, idx_of)
    force_value("population_mn", "IND", TARGETS["population_mn"][4], cols, idx_of)
    force_value("hiv_infection_rate_per_1k", "LSO", RATE_TARGET[4], cols, idx_of)
    force_value("hiv_infection_rate_per_1k", "ZAF", 5.9, cols, idx_of)

    # aggregate burden near 1.6 million new infections per year
    total = np.sum(cols["hiv_infection_rate_per_1k"] / 1000.0 * cols["population_mn"] * 1e6)
    cols["hiv_infection_rate_per_1k"] = cols["hiv_infection_rate_per_1k"] * (1.6e6 / total)

    xs = np.column_stack([scale01(cols[c]) for c in FEATURES])
    a_scaled = scale01(cols["aid_usd_mn"])
    sig = outcome_signal(a_scaled, xs, rng)
    out_sorted = marginal_values(*TARGETS["outcome_reduction_pct"])
    cols["outcome_reduction_pct"] = quantile_map(sig, out_sorted)
    return cols


def main():
    rng = np.random.default_rng(SEED)
    cols16 = build_year(rng, 2016)
    holes16 = punch_holes(cols16, rng)

    # 2017: persistence with idiosyncratic drift; slow-moving structure kept
    rng17 = np.random.default_rng(SEED + 1)
    cols17 = {}
    drift = {
        "aid_usd_mn": 0.22, "gdp_pc_ppp_usd_k": 0.04, "gdp_growth_pct": 0.8,
        "fdi_usd_bn": 0.25, "cpi_inflation_pct": 0.3, "unemployment_pct": 0.08,
        "population_mn": 0.0, "fertility_births": 0.02,
        "maternal_mortality_per_100k": 0.04, "infant_mortality_per_1k": 0.04,
        "life_expectancy_years": 0.004, "school_enrolment_ratio": 0.02,
        "undernourishment_pct": 0.05, "electricity_access_pct": 0.02,
        "tuberculosis_per_100k": 0.05, "hiv_infection_rate_per_1k": 0.07,
    }
    for col, v in cols16.items():
        if col == "outcome_reduction_pct":
            continue
        if col == "gdp_growth_pct":
            cols17[col] = 0.6 * v + 0.4 * v.mean() + drift[col] * rng17.standard_normal(N)
            continue
        lo = TARGETS[col][3] if col in TARGETS else RATE_TARGET[3]
        hi = TARGETS[col][4] if col in TARGETS else RATE_TARGET[4] * 1.3
        shock = np.exp(drift[col] * rng17.standard_normal(N)) if col != "life_expectancy_years" \
            else 1.0 + drift[col] * rng17.standard_normal(N)
        w = v * shock
        if col == "population_mn":
            w = v * 1.012
        cols17[col] = np.clip(w, lo if lo > 0 else None, None)

    idx_of = {c: i for i, c in enumerate(COUNTRIES)}
    for code, aid in [("KEN", 560.0), ("ZAF", 530.0), ("TZA", 482.0),
                      ("MOZ", 402.0), ("COG", 145.0)]:
        cols17["aid_usd_mn"][idx_of[code]] = aid
    # keep the 2017 total just above 5.2 billion
    total17 = cols17["aid_usd_mn"].sum()
    others = np.array([i for c, i in idx_of.items()
                       if c not in {"KEN", "ZAF", "TZA", "MOZ", "COG"}])
    scale = (5263.0 - (total17 - cols17["aid_usd_mn"][others].sum())) / cols17["aid_usd_mn"][others].sum()
    cols17["aid_usd_mn"][others] *= scale

    xs17 = np.column_stack([scale01(cols17[c]) for c in FEATURES])
    a17 = scale01(cols17["aid_usd_mn"])
    sig17 = outcome_signal(a17, xs17, rng17)
    out17 = marginal_values(3.4, 7.6, 3.1, -42.0, 16.8)
    cols17["outcome_reduction_pct"] = quantile_map(sig17, out17)
    holes17 = punch_holes(cols17, rng17)

    OUT.parent.mkdir(parents=True, exist_ok=True)
    header = ["country", "year", "outcome_reduction_pct", "aid_usd_mn",
              *FEATURES, "hiv_infection_rate_per_1k"]
    with open(OUT, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for year, cols, holes in [(2016, cols16, holes16), (2017, cols17, holes17)]:
            for i, code in enumerate(COUNTRIES):
                row = [code, year,
                       f"{cols['outcome_reduction_pct'][i]:.4f}",
                       f"{cols['aid_usd_mn'][i]:.3f}"]
                for col in FEATURES:
                    if col in holes and i in holes[col]:
                        row.append("")
                    else:
                        row.append(f"{cols[col][i]:.4f}")
                row.append(f"{cols['hiv_infection_rate_per_1k'][i]:.5f}")
                w.writerow(row)
    print(f"wrote {OUT}")

    # verification report
    for col, (mean, sd, med, lo, hi) in TARGETS.items():
        v = cols16[col]
        mask = np.ones(N, bool)
        if col in holes16:
            mask[list(holes16[col])] = False
        obs = v[mask]
        errs = (abs(obs.mean() - mean) / abs(mean),
                abs(obs.std(ddof=1) - sd) / sd,
                abs(np.median(obs) - med) / abs(med),
                abs(obs.min() - lo) / abs(lo), abs(obs.max() - hi) / abs(hi))
        print(f"{col:30s} max rel err {max(errs):.4%}")
        assert max(errs) < 0.01, f"{col}: bundled stats drift {max(errs):.4%} >= 1%"
    a = cols16["aid_usd_mn"]
    for col in FEATURES + ["hiv_infection_rate_per_1k"]:
        r = np.corrcoef(np.argsort(np.argsort(a)), np.argsort(np.argsort(cols16[col])))[0, 1]
        print(f"rank-corr(aid, {col:30s}) = {r:+.2f}")
    burden = np.sum(cols17["hiv_infection_rate_per_1k"] / 1000.0 * cols17["population_mn"] * 1e6)
    print(f"2017 total new infections at r*p: {burden/1e6:.3f} million")
    print(f"2017 total aid: {cols17['aid_usd_mn'].sum():.1f} USD mn")


if __name__ == "__main__":
    main()
