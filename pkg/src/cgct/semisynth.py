"""Semi-synthetic outcomes with known treatment-response curves.

Real covariates and treatments are kept; outcomes are rebuilt from a linear
ground-truth surface with treatment-covariate interactions, estimated on the
real data:

    mu_i = c + alpha * a_i + sum_j (beta_j * x_ij + gamma_j * a_i * x_ij).

The pseudo-means are min-max normalized, pushed through a square root for
non-linearity, and observed with N(0, 0.01^2) noise for training data. For
evaluation, noise-free outcomes are produced on a dense treatment lattice,
which gives exact response curves to score predictions against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gps import ols

NOISE_STD = 0.01


@dataclass
class GroundTruth:
    """Coefficients of the outcome surface, in scaled (a, x) units."""

    intercept: float
    treatment_effect: float
    covariate_effects: np.ndarray
    interaction_effects: np.ndarray
    noise_std: float = NOISE_STD
    jittered: bool = False

    def __post_init__(self):
        self.covariate_effects = np.asarray(self.covariate_effects, float).reshape(-1)
        self.interaction_effects = np.asarray(self.interaction_effects, float).reshape(-1)
        if self.covariate_effects.shape != self.interaction_effects.shape:
            raise ValueError("effect vectors differ in length")

    @property
    def p(self):
        return self.covariate_effects.shape[0]

    def to_dict(self):
        return {
            "intercept": self.intercept,
            "treatment_effect": self.treatment_effect,
            "covariate_effects": self.covariate_effects.tolist(),
            "interaction_effects": self.interaction_effects.tolist(),
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["intercept"], d["treatment_effect"],
                   np.asarray(d["covariate_effects"]),
                   np.asarray(d["interaction_effects"]),
                   d.get("noise_std", NOISE_STD))


def interaction_design(a, x):
    a = np.asarray(a, dtype=float).reshape(-1)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.column_stack([np.ones(a.shape[0]), a, x, x * a[:, None]])


def fit_ground_truth(Y, A_scaled, X_scaled):
    """Estimate the ground-truth surface by least squares with interactions."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    design = interaction_design(A_scaled, X_scaled)
    coef, jittered = ols(design, Y)
    p = X_scaled.shape[1]
    return GroundTruth(float(coef[0]), float(coef[1]), coef[2:2 + p],
                       coef[2 + p:], jittered=jittered)


def pseudo_means(gt: GroundTruth, a, x):
    """Raw response surface before normalization and the square root."""
    return interaction_design(a, x) @ np.concatenate(
        [[gt.intercept, gt.treatment_effect], gt.covariate_effects,
         gt.interaction_effects])


@dataclass
class PseudoMeanScaler:
    """Min-max normalizer for pseudo-means; clips out-of-range inputs so the
    square root never sees negative values."""

    lo: float
    hi: float

    def __call__(self, mu):
        span = self.hi - self.lo if self.hi > self.lo else 1.0
        return np.clip((np.asarray(mu, dtype=float) - self.lo) / span, 0.0, 1.0)

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi}


def gen_training(gt: GroundTruth, A_scaled, X_scaled, seed):
    """Noisy factual outcomes at the observed treatments.

    Returns (outcomes, scaler); the scaler is fitted on this call's own
    pseudo-means. Fixed seed, fixed output.
    """
    mu = pseudo_means(gt, A_scaled, X_scaled)
    scaler = PseudoMeanScaler(float(mu.min()), float(mu.max()))
    tilde = np.sqrt(scaler(mu))
    rng = np.random.default_rng(seed)
    return tilde + rng.normal(0.0, gt.noise_std, size=tilde.shape), scaler


def gen_eval(gt: GroundTruth, X_scaled, grid_scaled):
    """Noise-free true response values for every row of X_scaled.

    ``grid_scaled`` is either a shared lattice of shape (G,) or per-row
    treatments of shape (n, G). The normalizer is fitted on the full set of
    pseudo-means generated here, so restricting the grid to the observed
    treatments reproduces gen_training without its noise. Returns
    (values of shape (n, G), scaler).
    """
    X_scaled = np.atleast_2d(np.asarray(X_scaled, dtype=float))
    grid = np.asarray(grid_scaled, dtype=float)
    n = X_scaled.shape[0]
    if grid.ndim == 1:
        grid = np.repeat(grid[None, :], n, axis=0)
    if grid.shape[0] != n:
        raise ValueError("per-row grid must have one row per covariate row")
    mus = np.empty_like(grid)
    for i in range(n):
        mus[i] = pseudo_means(gt, grid[i], np.repeat(X_scaled[i:i + 1],
                                                     grid.shape[1], axis=0))
    scaler = PseudoMeanScaler(float(mus.min()), float(mus.max()))
    return np.sqrt(scaler(mus)), scaler
