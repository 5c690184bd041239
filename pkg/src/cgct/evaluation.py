"""Metrics, repeated-run aggregation, hyperparameter search, and ablations.

Curve error is the mean integrated squared error over the observed aid
interval, integrated per country with Romberg extrapolation on a dyadic
lattice and averaged across countries; its square root is what reports
carry. Factual error on real outcomes is plain RMSE. The ablation matrix
re-runs the pipeline over all four stage combinations for each inference
stage, sharing seeds so rows are comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, MinMaxScaler
from .pipeline import ESTIMATORS, AblationFlags, HyperParams, train_cgct
from .semisynth import fit_ground_truth, gen_eval, gen_training

DEFAULT_GRID_SIZE = 65  # 2**6 intervals require 65 lattice nodes


def romberg_integral(y, dx):
    """Romberg integration of samples on 2**k + 1 equally spaced nodes."""
    y = np.asarray(y, dtype=float)
    m = y.size - 1
    if m < 1 or (m & (m - 1)) != 0:
        raise ValueError(f"need 2**k + 1 nodes, got {y.size}")
    k = m.bit_length() - 1
    table = np.empty((k + 1, k + 1))
    h = dx * m
    table[0, 0] = 0.5 * h * (y[0] + y[-1])
    for i in range(1, k + 1):
        h /= 2.0
        step = m >> i
        table[i, 0] = 0.5 * table[i - 1, 0] + h * y[step::2 * step].sum()
        for j in range(1, i + 1):
            table[i, j] = table[i, j - 1] + (table[i, j - 1] - table[i - 1, j - 1]) / (4.0 ** j - 1.0)
    return float(table[k, k])


def mise(pred, truth, grid):
    """Mean integrated squared error between curve families.

    ``pred`` and ``truth`` are (n, G) arrays sampled on the same strictly
    increasing, equally spaced grid of G = 2**k + 1 treatments.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    if pred.shape[1] != grid.size:
        raise ValueError("curves and grid differ in length")
    steps = np.diff(grid)
    if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("grid must be equally spaced")
    dx = float(steps[0])
    per_country = [romberg_integral((p - t) ** 2, dx) for p, t in zip(pred, truth)]
    return float(np.mean(per_country))


def sqrt_mise(pred, truth, grid):
    return float(np.sqrt(mise(pred, truth, grid)))


def rmse(pred, obs):
    pred = np.asarray(pred, dtype=float).reshape(-1)
    obs = np.asarray(obs, dtype=float).reshape(-1)
    if pred.size == 0 or pred.shape != obs.shape:
        raise ValueError("need equal-length, nonempty vectors")
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


@dataclass
class EvaluationCurves:
    """Ground-truth response curves for one evaluation year."""

    country_ids: list
    covariates: np.ndarray      # raw units, (n, p)
    grid_musd: np.ndarray       # (G,)
    values: np.ndarray          # (n, G)

    @property
    def n(self):
        return len(self.country_ids)

    @property
    def n_points(self):
        return self.values.size


def build_semisynthetic(d_train: Dataset, d_eval: Dataset,
                        grid_size=DEFAULT_GRID_SIZE, noise_seed=0):
    """Semi-synthetic learning/evaluation pair from two real panels.

    The ground-truth surface is estimated on the training year; training
    outcomes are regenerated at the observed treatments (with noise), and
    noise-free curves are produced for the evaluation year's covariates on
    a lattice spanning its observed aid interval. Returns
    (train dataset with simulated outcomes, EvaluationCurves, GroundTruth).
    """
    if d_train.has_missing() or d_eval.has_missing():
        raise ValueError("impute datasets before building semi-synthetic data")
    X_train = d_train.covariate_matrix()
    A_train = d_train.treatments()
    cov_scaler = MinMaxScaler().fit(X_train)
    treat_scaler = MinMaxScaler().fit(A_train.reshape(-1, 1))
    Xs = cov_scaler.transform(X_train)
    As = treat_scaler.transform(A_train.reshape(-1, 1)).ravel()
    gt = fit_ground_truth(d_train.outcomes(), As, Xs)
    y_new, _ = gen_training(gt, As, Xs, noise_seed)

    from dataclasses import replace as _replace
    records = [_replace(r, outcome_y=float(y), covariates=r.covariates.copy())
               for r, y in zip(d_train.records, y_new)]
    sim_train = Dataset(records, list(d_train.feature_names))

    A_eval = d_eval.treatments()
    grid_musd = np.linspace(A_eval.min(), A_eval.max(), grid_size)
    grid_scaled = treat_scaler.transform(grid_musd.reshape(-1, 1)).ravel()
    X_eval = d_eval.covariate_matrix()
    values, _ = gen_eval(gt, cov_scaler.transform(X_eval), grid_scaled)
    curves = EvaluationCurves(d_eval.country_ids, X_eval, grid_musd, values)
    return sim_train, curves, gt


@dataclass
class EvalReport:
    """Aggregated performance of one configuration across seeded runs."""

    method: str
    metric: str                 # "sqrt_mise" or "rmse"
    mean: float
    std: float
    runs: int
    per_run: list = field(default_factory=list)
    hyperparams: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    partial: bool = False
    errors: list = field(default_factory=list)

    def to_dict(self):
        return {"method": self.method, "metric": self.metric,
                "mean": self.mean, "std": self.std, "runs": self.runs,
                "per_run": self.per_run, "hyperparams": self.hyperparams,
                "flags": self.flags, "partial": self.partial,
                "errors": self.errors}

    def __str__(self):
        tag = " (partial)" if self.partial else ""
        return (f"{self.method}: {self.metric} = {self.mean:.3f} "
                f"+/- {self.std:.3f} over {self.runs} runs{tag}")


def _predict_curves(model, curves: EvaluationCurves):
    preds = np.empty_like(curves.values)
    bound = float(curves.grid_musd.max())
    for i in range(curves.n):
        rc = model.predict_curve(curves.covariates[i], curves.grid_musd,
                                 country_id=curves.country_ids[i],
                                 max_treatment=bound)
        preds[i] = rc.predictions
    return preds


def _evaluate(model, d_eval):
    if isinstance(d_eval, EvaluationCurves):
        preds = _predict_curves(model, d_eval)
        return "sqrt_mise", sqrt_mise(preds, d_eval.values, d_eval.grid_musd)
    if isinstance(d_eval, Dataset):
        preds = model.predict_at(d_eval.covariate_matrix(), d_eval.treatments())
        return "rmse", rmse(preds, d_eval.outcomes())
    raise TypeError("d_eval must be EvaluationCurves or Dataset")


def run_config(d_train: Dataset, d_eval, flags: AblationFlags, inference,
               hp: HyperParams, runs, base_seed, label):
    """Train/evaluate one configuration across consecutive seeds."""
    values, errors = [], []
    metric = "sqrt_mise" if isinstance(d_eval, EvaluationCurves) else "rmse"
    for k in range(runs):
        seed = base_seed + k
        try:
            model = train_cgct(d_train, hp, flags, seed, inference)
            metric, value = _evaluate(model, d_eval)
            values.append(value)
        except Exception as exc:  # run failures are recorded, not fatal
            errors.append(f"seed {seed}: {exc}")
    mean = float(np.mean(values)) if values else float("nan")
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return EvalReport(method=label, metric=metric, mean=mean, std=std,
                      runs=len(values), per_run=[float(v) for v in values],
                      hyperparams=hp.to_dict(), flags=flags.to_dict(),
                      partial=bool(errors), errors=errors)


def repeat_runs(method, d_train: Dataset, d_eval, runs=10, base_seed=0,
                hp: HyperParams | None = None):
    """Mean +/- sample std of a named estimator over seeded runs."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    flags, inference = ESTIMATORS[method]
    return run_config(d_train, d_eval, flags, inference,
                      hp or HyperParams(), runs, base_seed, method)


def tune(method, d_train: Dataset, grid, seed):
    """Pick the grid point with the lowest held-out factual MSE.

    One seeded 80/20 shuffle is drawn and shared by every grid point; ties
    keep the earliest grid entry.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    flags, inference = ESTIMATORS[method]
    rng = np.random.default_rng(seed)
    order = rng.permutation(d_train.n)
    cut = int(round(0.8 * d_train.n))
    if cut == d_train.n:
        cut = d_train.n - 1
    train_rows = [d_train.records[i] for i in order[:cut]]
    val_rows = [d_train.records[i] for i in order[cut:]]
    sub_train = Dataset(train_rows, list(d_train.feature_names))
    x_val = np.array([r.covariates for r in val_rows])
    a_val = np.array([r.treatment_a for r in val_rows])
    y_val = np.array([r.outcome_y for r in val_rows])

    best_hp, best_mse = None, np.inf
    for hp in grid:
        model = train_cgct(sub_train, hp, flags, seed, inference)
        preds = model.predict_at(x_val, a_val)
        val_mse = float(np.mean((preds - y_val) ** 2))
        if val_mse < best_mse:
            best_hp, best_mse = hp, val_mse
    return best_hp


ABLATION_ROWS = [("base", AblationFlags(False, False)),
                 ("bae", AblationFlags(True, False)),
                 ("cf-gen", AblationFlags(False, True)),
                 ("full", AblationFlags(True, True))]
ABLATION_INFERENCE = ("drnet", "ann", "lm", "gps")


def ablation_matrix(d_train: Dataset, d_eval, runs=10, base_seed=0,
                    hp: HyperParams | None = None):
    """All stage combinations for every inference model: 16 reports."""
    hp = hp or HyperParams()
    reports = []
    for inference in ABLATION_INFERENCE:
        for row, flags in ABLATION_ROWS:
            reports.append(run_config(
                d_train, d_eval, flags, inference, hp, runs, base_seed,
                label=f"{row}/{inference}"))
    return reports


def format_ablation_table(reports):
    """Text table: stage combinations as rows, inference models as columns."""
    cell = {r.method: r for r in reports}
    lines = ["component      " + "".join(f"{c:>18}" for c in ABLATION_INFERENCE)]
    for row, _ in ABLATION_ROWS:
        parts = [f"{row:<15}"]
        for inf in ABLATION_INFERENCE:
            r = cell.get(f"{row}/{inf}")
            parts.append(f"{r.mean:8.3f} +/- {r.std:5.3f}" if r else " " * 18)
        lines.append("".join(parts))
    return "\n".join(lines)
