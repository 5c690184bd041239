"""Two-stage generalized-propensity-score response model.

Stage one fits a Gaussian model of the (scaled) treatment given the
covariate representation: A | z ~ N(beta^T [1, z], sigma^2). Its density
evaluated at the observed pair is the propensity score R. Stage two
regresses the outcome on a second-degree polynomial in treatment and score:

    y = a0 + a1*A + a2*A^2 + a3*R + a4*R^2 + a5*A*R.

Both stages are closed-form least squares, so with representation size r
the whole model has exactly r+8 trainable parameters: r+1 regression
weights plus sigma, plus the six polynomial coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_MIN = 1e-6
RIDGE_JITTER = 1e-8


def ols(design, target, jitter=RIDGE_JITTER):
    """Least squares with a ridge fallback on rank-deficient designs.

    Returns (coefficients, ridged) where ridged records that the jitter
    path was taken (surfaced in model metadata).
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank == design.shape[1]:
        return coef, False
    gram = design.T @ design + jitter * np.eye(design.shape[1])
    coef = np.linalg.solve(gram, design.T @ target)
    return coef, True


@dataclass
class TreatmentModel:
    """Gaussian treatment stage: beta (intercept first) and residual sigma."""

    beta: np.ndarray
    sigma: float
    ridged: bool = False

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if self.sigma < SIGMA_MIN:
            raise ValueError("sigma below the configured floor")

    @property
    def r(self):
        return self.beta.shape[0] - 1

    def conditional_mean(self, z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            return float(self.beta[0] + self.beta[1:] @ z)
        return self.beta[0] + z @ self.beta[1:]

    def to_dict(self):
        return {"beta": self.beta.tolist(), "sigma": self.sigma,
                "ridged": self.ridged}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["beta"]), d["sigma"], d.get("ridged", False))


@dataclass
class OutcomeModel:
    """Polynomial outcome stage with six coefficients."""

    alpha: np.ndarray
    ridged: bool = False

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if self.alpha.shape != (6,):
            raise ValueError("outcome model needs exactly 6 coefficients")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("non-finite outcome coefficients")

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "ridged": self.ridged}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["alpha"]), d.get("ridged", False))


@dataclass
class ResponseCurve:
    """Per-country grid of (aid volume in USD millions, predicted outcome)."""

    country_id: str
    treatments: np.ndarray
    predictions: np.ndarray
    std: np.ndarray | None = None

    def __post_init__(self):
        self.treatments = np.asarray(self.treatments, dtype=float).reshape(-1)
        self.predictions = np.asarray(self.predictions, dtype=float).reshape(-1)
        if self.treatments.shape != self.predictions.shape:
            raise ValueError("treatments and predictions differ in length")
        if self.treatments.size > 1 and not np.all(np.diff(self.treatments) > 0):
            raise ValueError("treatment grid must be strictly increasing")
        if self.std is not None:
            self.std = np.asarray(self.std, dtype=float).reshape(-1)
            if self.std.shape != self.treatments.shape:
                raise ValueError("std length mismatch")

    def to_dict(self):
        d = {"country": self.country_id,
             "treatments": self.treatments.tolist(),
             "predictions": self.predictions.tolist()}
        if self.std is not None:
            d["std"] = self.std.tolist()
        return d


def fit_treatment_model(Z, A):
    """Least-squares Gaussian treatment stage on the representation."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    A = np.asarray(A, dtype=float).reshape(-1)
    n, r = Z.shape
    if n <= r + 1:
        raise ValueError(f"need n > r+1 rows, got n={n}, r={r}")
    design = np.column_stack([np.ones(n), Z])
    beta, ridged = ols(design, A)
    resid = A - design @ beta
    sigma = float(np.sqrt(np.mean(resid ** 2)))
    return TreatmentModel(beta, max(sigma, SIGMA_MIN), ridged)


def gps_density(a, z, tm: TreatmentModel):
    """Gaussian density of treatment value(s) a at representation z."""
    mean = tm.conditional_mean(z)
    a = np.asarray(a, dtype=float)
    out = np.exp(-0.5 * ((a - mean) / tm.sigma) ** 2) / np.sqrt(2.0 * np.pi * tm.sigma ** 2)
    return float(out) if out.ndim == 0 else out


def outcome_features(A, R):
    A = np.asarray(A, dtype=float).reshape(-1)
    R = np.asarray(R, dtype=float).reshape(-1)
    return np.column_stack([np.ones_like(A), A, A ** 2, R, R ** 2, A * R])


def fit_outcome_model(Y, A, R):
    """Second-stage polynomial regression of outcomes on (A, R)."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.shape[0] < 6:
        raise ValueError("need at least 6 rows for the outcome stage")
    design = outcome_features(A, R)
    alpha, ridged = ols(design, Y)
    return OutcomeModel(alpha, ridged)


def predict_outcome(om: OutcomeModel, a, R):
    """Polynomial response at treatment a and propensity score R."""
    a = np.asarray(a, dtype=float)
    R = np.asarray(R, dtype=float)
    out = (om.alpha[0] + om.alpha[1] * a + om.alpha[2] * a ** 2
           + om.alpha[3] * R + om.alpha[4] * R ** 2 + om.alpha[5] * a * R)
    return float(out) if out.ndim == 0 else out


def response_at(tm: TreatmentModel, om: OutcomeModel, z, a):
    """Full two-stage prediction for one representation and treatment(s)."""
    R = gps_density(a, z, tm)
    return predict_outcome(om, a, R)


def response_gradient(tm: TreatmentModel, om: OutcomeModel, z, a):
    """d(prediction)/d(treatment) in the same scaled units as a.

    Analytic: the polynomial contributes a1 + 2*a2*A + a5*R directly, and
    the density channel contributes (a3 + 2*a4*R + a5*A) * dR/dA with
    dR/dA = -R * (A - mean) / sigma^2.
    """
    a = np.asarray(a, dtype=float)
    mean = tm.conditional_mean(z)
    R = gps_density(a, z, tm)
    dR = -R * (a - mean) / (tm.sigma ** 2)
    grad = (om.alpha[1] + 2.0 * om.alpha[2] * a + om.alpha[5] * R
            + (om.alpha[3] + 2.0 * om.alpha[4] * R + om.alpha[5] * a) * dR)
    return float(grad) if grad.ndim == 0 else grad


def param_count(tm: TreatmentModel, om: OutcomeModel):
    """Trainable parameters across both stages: beta, sigma, and alpha."""
    return tm.beta.shape[0] + 1 + om.alpha.shape[0]
