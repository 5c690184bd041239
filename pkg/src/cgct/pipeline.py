"""End-to-end training pipeline, model container, and persistence.

A trained model bundles the covariate/treatment scalers, the optional
balancing encoder, and one fitted inference stage (the propensity-score
polynomial by default; the linear, MLP, or dosage-head baselines can be
swapped in for ablations). The two augmentation stages toggle independently:

    bae=off, cfgen=off   plain inference model on scaled raw covariates
    bae=on,  cfgen=off   inference on the balanced embedding
    bae=off, cfgen=on    synthetic twins generated in raw covariate space
    bae=on,  cfgen=on    the full pipeline

Models serialize to a versioned JSON document; loading restores predictions
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np

from . import bae, baselines, cfgen, gps
from .data import Dataset, MinMaxScaler

MODEL_FORMAT = "cgct-model"
MODEL_VERSION = 1

#: hyperparameter search grid, by estimator
GRID = {
    "cgct": {
        "layer_size": (14, 10, 7),
        "repr_size": (10, 7, 4),
        "lr": (1e-3, 5e-4, 1e-4),
        "dropout": (0.0, 0.1, 0.2),
        "epochs": (100, 200, 300),
        "batch": (22, 11, 6),
        "theta": (0.05, 0.1, 0.5, 1.0, 5.0),
        "alpha_l1": (0.05, 0.1, 0.5, 1.0, 5.0),
        "m_twins": (3, 5, 7),
    },
    "ann": {
        "ann_layer_size": (53, 27, 14),
        "lr": (1e-3, 5e-4, 1e-4),
        "dropout": (0.0, 0.1, 0.2),
        "epochs": (100, 200, 300),
        "batch": (22, 11, 6),
    },
    "drnet": {
        "ann_layer_size": (53, 27, 14),
        "drnet_repr_size": (22, 11, 6),
        "lr": (1e-3, 5e-4, 1e-4),
        "dropout": (0.0, 0.1, 0.2),
        "epochs": (100, 200, 300),
        "batch": (22, 11, 6),
        "n_intervals": (5,),
    },
    "lm": {
        "lm_order": (0, 1, 2),
        "lm_lam": (0.05, 0.1, 0.5, 1.0, 5.0),
    },
    "gps": {},
}


@dataclass
class HyperParams:
    """One configuration point; defaults are the shipped configuration."""

    layer_size: int = 10
    repr_size: int = 4
    lr: float = 1e-3
    dropout: float = 0.0
    epochs: int = 200
    batch: int = 22
    theta: float = 0.5
    alpha_l1: float = 1.0
    m_twins: int = 5
    ann_layer_size: int = 27
    drnet_repr_size: int = 11
    n_intervals: int = 5
    lm_order: int = 2
    lm_reg: str = "ridge"
    lm_lam: float = 0.05

    def validate_grid(self, estimator="cgct"):
        """Check the fields the estimator reads against the search grid."""
        for name, choices in GRID[estimator].items():
            value = getattr(self, name)
            if not any(np.isclose(value, c) if isinstance(c, float) else value == c
                       for c in choices):
                raise ValueError(
                    f"{name}={value} outside the {estimator} search grid {choices}")

    def bae_view(self):
        return self

    def ann_view(self):
        return SimpleNamespace(layer_size=self.ann_layer_size, lr=self.lr,
                               dropout=self.dropout, epochs=self.epochs,
                               batch=self.batch,
                               drnet_repr_size=self.drnet_repr_size,
                               n_intervals=self.n_intervals)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class AblationFlags:
    bae: bool = True
    cfgen: bool = True

    def to_dict(self):
        return {"bae": self.bae, "cfgen": self.cfgen}

    @classmethod
    def from_dict(cls, d):
        return cls(bool(d["bae"]), bool(d["cfgen"]))


#: estimator name -> (flags, inference stage); the plain baselines are the
#: pipeline with both stages off, so ablation rows share code paths exactly
ESTIMATORS = {
    "cgct": (AblationFlags(True, True), "gps"),
    "gps": (AblationFlags(False, False), "gps"),
    "lm": (AblationFlags(False, False), "lm"),
    "ann": (AblationFlags(False, False), "ann"),
    "drnet": (AblationFlags(False, False), "drnet"),
}


class GpsEstimator:
    """Two-stage propensity/polynomial inference stage."""

    def __init__(self, treatment_model=None, outcome_model=None):
        self.treatment_model = treatment_model
        self.outcome_model = outcome_model

    def fit(self, Y, A, Z):
        self.treatment_model = gps.fit_treatment_model(Z, A)
        score = gps.gps_density(A, Z, self.treatment_model)
        self.outcome_model = gps.fit_outcome_model(Y, A, score)
        return self

    def predict(self, a, z):
        return np.atleast_1d(gps.response_at(self.treatment_model,
                                             self.outcome_model, z, a))

    @property
    def n_parameters(self):
        return gps.param_count(self.treatment_model, self.outcome_model)

    def to_dict(self):
        return {"kind": "gps",
                "treatment_model": self.treatment_model.to_dict(),
                "outcome_model": self.outcome_model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(gps.TreatmentModel.from_dict(d["treatment_model"]),
                   gps.OutcomeModel.from_dict(d["outcome_model"]))


def _estimator_from_dict(d):
    kind = d["kind"]
    if kind == "gps":
        return GpsEstimator.from_dict(d)
    if kind == "lm":
        return baselines.LinearBaseline.from_dict(d)
    if kind == "ann":
        return baselines.AnnRegressor.from_dict(d)
    if kind == "drnet":
        return baselines.DrnetRegressor.from_dict(d)
    raise ModelFormatError(f"unknown estimator kind {kind!r}")


class ModelFormatError(ValueError):
    """Raised for unreadable, corrupt, or wrong-version model documents."""


@dataclass
class CgCtModel:
    """Trained pipeline: scalers, optional encoder, inference stage."""

    cov_scaler: MinMaxScaler
    treat_scaler: MinMaxScaler
    encoder: bae.BalancingEncoder | None
    inference: str
    estimator: object
    hp: HyperParams
    flags: AblationFlags
    metadata: dict = field(default_factory=dict)

    @property
    def default_bound(self):
        """Largest treatment the model will extrapolate to (USD millions)."""
        return self.metadata["a_max_raw"] + self.metadata["sigma_a_raw"]

    def embed_raw(self, x_raw):
        """Scaled-then-embedded representation of raw covariate rows."""
        xs = self.cov_scaler.transform(np.atleast_2d(np.asarray(x_raw, float)))
        return bae.embed(self.encoder, xs) if self.encoder is not None else xs

    def predict_curve(self, x_raw, grid_musd, country_id="",
                      max_treatment=None, std=None):
        """Response curve over a raw-aid grid for one covariate vector.

        Covariates and the grid arrive in natural units; scaling happens
        inside. Grid points beyond [0, max_treatment] (the training-data
        bound by default) are rejected to avoid silent extrapolation.
        """
        grid = np.asarray(grid_musd, dtype=float).reshape(-1)
        bound = self.default_bound if max_treatment is None else max_treatment
        if grid.size and (grid.min() < 0 or grid.max() > bound + 1e-9):
            raise ValueError(
                f"grid outside [0, {bound:.3f}] USD millions")
        z = self.embed_raw(x_raw)[0]
        a_scaled = self.treat_scaler.transform(grid.reshape(-1, 1)).ravel()
        preds = self.estimator.predict(a_scaled, z)
        return gps.ResponseCurve(country_id, grid, preds, std=std)

    def predict_at(self, X_raw, a_musd):
        """Vectorized factual predictions at per-row treatments."""
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        a = np.asarray(a_musd, dtype=float).reshape(-1)
        Zr = self.embed_raw(X_raw)
        a_scaled = self.treat_scaler.transform(a.reshape(-1, 1)).ravel()
        return np.array([float(self.estimator.predict(a_scaled[i:i + 1], Zr[i])[0])
                         for i in range(Zr.shape[0])])

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "cov_scaler": self.cov_scaler.to_dict(),
            "treat_scaler": self.treat_scaler.to_dict(),
            "encoder": self.encoder.to_dict() if self.encoder else None,
            "inference": self.inference,
            "estimator": self.estimator.to_dict(),
            "hp": self.hp.to_dict(),
            "flags": self.flags.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not a model document")
        if d.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                f"unsupported model version {d.get('version')!r}; "
                f"expected {MODEL_VERSION}")
        return cls(
            cov_scaler=MinMaxScaler.from_dict(d["cov_scaler"]),
            treat_scaler=MinMaxScaler.from_dict(d["treat_scaler"]),
            encoder=bae.BalancingEncoder.from_dict(d["encoder"]) if d["encoder"] else None,
            inference=d["inference"],
            estimator=_estimator_from_dict(d["estimator"]),
            hp=HyperParams.from_dict(d["hp"]),
            flags=AblationFlags.from_dict(d["flags"]),
            metadata=d["metadata"],
        )


def data_hash(Y, A, X):
    h = hashlib.sha256()
    for arr in (Y, A, X):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()


def fit_arrays(Y, A_raw, X_raw, hp: HyperParams, flags: AblationFlags, seed,
               inference="gps", metadata=None):
    """Train the pipeline on raw arrays (the Dataset-free core).

    Stage seeds are spawned from the run seed, so toggling one stage does
    not shift the randomness of the others.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A_raw = np.asarray(A_raw, dtype=float).reshape(-1)
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    if np.isnan(X_raw).any():
        raise ValueError("covariates contain missing values; impute first")
    if inference not in ("gps", "lm", "ann", "drnet"):
        raise ValueError(f"unknown inference stage {inference!r}")
    cov_scaler = MinMaxScaler().fit(X_raw)
    treat_scaler = MinMaxScaler().fit(A_raw.reshape(-1, 1))
    Xs = cov_scaler.transform(X_raw)
    As = treat_scaler.transform(A_raw.reshape(-1, 1)).ravel()

    seed_seq = np.random.SeedSequence(seed)
    enc_seed, aug_seed, inf_seed = seed_seq.spawn(3)

    encoder = None
    Z = Xs
    if flags.bae:
        try:
            encoder = bae.train_bae(Xs, As, hp, np.random.default_rng(enc_seed))
        except FloatingPointError as exc:
            raise FloatingPointError(f"balancing-autoencoder stage: {exc}") from exc
        Z = bae.embed(encoder, Xs)

    Yt, At, Zt = Y, As, Z
    if flags.cfgen:
        try:
            aug = cfgen.augment(Y, As, Z, hp.m_twins, hp.alpha_l1,
                                np.random.default_rng(aug_seed))
        except (cfgen.InfeasibleConstraintError, cfgen.ConvergenceError) as exc:
            raise type(exc)(f"counterfactual-generator stage: {exc}") from exc
        Yt, At, Zt = aug.outcomes, aug.treatments, aug.representations

    try:
        if inference == "gps":
            estimator = GpsEstimator().fit(Yt, At, Zt)
        elif inference == "lm":
            estimator = baselines.LinearBaseline(hp.lm_order, hp.lm_reg,
                                                 hp.lm_lam).fit(Yt, At, Zt)
        elif inference == "ann":
            estimator = baselines.fit_ann(Yt, At, Zt, hp.ann_view(),
                                          np.random.default_rng(inf_seed))
        else:
            estimator = baselines.fit_drnet(Yt, At, Zt, hp.ann_view(),
                                            np.random.default_rng(inf_seed))
    except FloatingPointError as exc:
        raise FloatingPointError(f"inference stage ({inference}): {exc}") from exc

    meta = {
        "seed": int(seed) if np.isscalar(seed) else None,
        "data_hash": data_hash(Y, A_raw, X_raw),
        "n_train": int(Y.shape[0]),
        "n_fit_rows": int(np.asarray(Yt).shape[0]),
        "a_max_raw": float(A_raw.max()),
        "sigma_a_raw": float(A_raw.std(ddof=1)) if A_raw.size > 1 else 0.0,
        "outcome_units": "fraction reduction in infection rate",
        "treatment_units": "USD millions (scaled internally)",
    }
    meta.update(metadata or {})
    return CgCtModel(cov_scaler, treat_scaler, encoder, inference, estimator,
                     replace(hp), AblationFlags(flags.bae, flags.cfgen), meta)


def train_cgct(dataset: Dataset, hp: HyperParams, flags: AblationFlags, seed,
               inference="gps"):
    """Train on a Dataset (imputed); the standard entry point."""
    if dataset.has_missing():
        raise ValueError("dataset contains missing covariates; run imputation")
    model = fit_arrays(dataset.outcomes(), dataset.treatments(),
                       dataset.covariate_matrix(), hp, flags, seed, inference,
                       metadata={"year": dataset.year,
                                 "countries": dataset.country_ids})
    return model


def save_model(model: CgCtModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True)


def load_model(path) -> CgCtModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("corrupt model document: not an object")
    return CgCtModel.from_dict(doc)
