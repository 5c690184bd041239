"""Reference estimators: polynomial linear models, a plain MLP regressor,
and a dosage-stratified network with a shared trunk.

All three expose the same array-level protocol the pipeline drives:
``fit(Y, A, Z)`` on scaled treatments/representations and
``predict(a, z)`` for one representation across a treatment grid. The
pipeline owns scaling and country lookup; nothing here sees raw units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, DenseNet


def lm_features(a, z, order):
    """Design matrix of the linear baseline.

    order 0: intercept only; order 1: [1, a, z]; order 2 adds element-wise
    squares and treatment-by-covariate interactions (no covariate-covariate
    cross terms, which keeps the design at 3p+3 columns).
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = a.shape[0]
    if z.shape[0] == 1 and n > 1:
        z = np.repeat(z, n, axis=0)
    cols = [np.ones(n)]
    if order >= 1:
        cols.append(a)
        cols.append(z)
    if order >= 2:
        cols.append(a ** 2)
        cols.append(z ** 2)
        cols.append(z * a[:, None])
    return np.column_stack(cols)


def _soft(x, t):
    return np.sign(x) * max(abs(x) - t, 0.0)


@dataclass
class LinearBaseline:
    """Polynomial regression with optional ridge or lasso shrinkage.

    Ridge minimizes ||y - Xb||^2 + lam * ||b_1:||^2 in closed form; lasso
    minimizes (1/2n) ||y - Xb||^2 + lam * ||b_1:||_1 by coordinate descent
    (tolerance 1e-8 on the largest coefficient change per sweep). The
    intercept is never penalized.
    """

    order: int = 2
    reg: str = "none"
    lam: float = 0.0
    coef: np.ndarray | None = None
    jittered: bool = False

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError("order must be 0, 1, or 2")
        if self.reg not in ("none", "ridge", "lasso"):
            raise ValueError("reg must be none, ridge, or lasso")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    def fit(self, Y, A, Z):
        Y = np.asarray(Y, dtype=float).reshape(-1)
        X = lm_features(A, Z, self.order)
        n, d = X.shape
        if self.reg == "lasso" and self.lam > 0:
            self.coef = self._fit_lasso(X, Y)
            return self
        penalty = np.zeros(d)
        if self.reg == "ridge":
            penalty[1:] = self.lam
        gram = X.T @ X + np.diag(penalty)
        rhs = X.T @ Y
        if self.reg != "ridge" or self.lam == 0:
            rank = np.linalg.matrix_rank(X)
            if rank < d:
                gram = gram + 1e-8 * np.eye(d)
                self.jittered = True
        self.coef = np.linalg.solve(gram, rhs)
        return self

    def _fit_lasso(self, X, Y, max_sweeps=10000, tol=1e-8):
        n, d = X.shape
        beta = np.zeros(d)
        col_sq = (X ** 2).sum(axis=0) / n
        resid = Y.copy()
        beta[0] = resid.mean()
        resid -= beta[0]
        for _ in range(max_sweeps):
            biggest = 0.0
            for j in range(d):
                old = beta[j]
                rho = (X[:, j] @ resid) / n + col_sq[j] * old
                if j == 0:
                    new = rho / col_sq[j] if col_sq[j] > 0 else 0.0
                else:
                    new = _soft(rho, self.lam) / col_sq[j] if col_sq[j] > 0 else 0.0
                if new != old:
                    resid += X[:, j] * (old - new)
                    beta[j] = new
                    biggest = max(biggest, abs(new - old))
            if biggest < tol:
                break
        return beta

    def predict(self, a, z):
        if self.coef is None:
            raise RuntimeError("predict before fit")
        return lm_features(a, z, self.order) @ self.coef

    def to_dict(self):
        return {"kind": "lm", "order": self.order, "reg": self.reg,
                "lam": self.lam, "coef": self.coef.tolist(),
                "jittered": self.jittered}

    @classmethod
    def from_dict(cls, d):
        out = cls(d["order"], d["reg"], d["lam"])
        out.coef = np.asarray(d["coef"], dtype=float)
        out.jittered = d.get("jittered", False)
        return out


def _epoch_batches(rng, n, batch):
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


@dataclass
class AnnRegressor:
    """MLP on [treatment, representation] trained with Adam on MSE."""

    net: DenseNet
    losses: list = field(default_factory=list)

    def predict(self, a, z):
        a = np.asarray(a, dtype=float).reshape(-1)
        z = np.asarray(z, dtype=float).reshape(-1)
        x = np.column_stack([a, np.repeat(z[None, :], a.shape[0], axis=0)])
        out, _ = self.net.forward(x, training=False)
        return out.ravel()

    def to_dict(self):
        return {"kind": "ann", "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(DenseNet.from_dict(d["net"]))


def fit_ann(Y, A, Z, hp, seed, layer_sizes=None):
    """Train the MLP baseline; deterministic for a fixed seed.

    ``layer_sizes`` overrides the single hp.layer_size hidden layer with an
    arbitrary stack (used by the stratified-network degeneracy tests).
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float).reshape(-1)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Y.shape[0]
    hidden = list(layer_sizes) if layer_sizes is not None else [hp.layer_size]
    rng = np.random.default_rng(seed)
    net = DenseNet([1 + Z.shape[1], *hidden, 1], dropout=hp.dropout, rng=rng)
    model = AnnRegressor(net)
    X = np.column_stack([A, Z])
    opt = AdamState(net.parameters(), hp.lr)
    batch = min(hp.batch, n)
    for epoch in range(hp.epochs):
        for idx in _epoch_batches(rng, n, batch):
            out, cache = net.forward(X[idx], training=True, rng=rng)
            err = out.ravel() - Y[idx]
            loss = float(np.mean(err ** 2))
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            grads, _ = net.backward(cache, (2.0 * err / idx.size).reshape(-1, 1))
            opt.step(net.parameters(), grads)
            model.losses.append(loss)
    return model


def dosage_edges(a_min, a_max, n_intervals):
    """Interior edges of an equal partition of [a_min, a_max]."""
    if n_intervals < 1:
        raise ValueError("need at least one dosage interval")
    return np.linspace(a_min, a_max, n_intervals + 1)[1:-1]


def route_stratum(a, edges):
    """Stratum index per treatment; edge values go to the interval they
    open (half-open [e_k, e_{k+1}), last interval closed)."""
    return np.searchsorted(edges, np.asarray(a, dtype=float), side="right")


@dataclass
class DrnetRegressor:
    """Shared trunk plus one head per dosage stratum.

    The trunk consumes [treatment, representation]; each head refines the
    trunk output for treatments falling in its stratum. With one interval
    the model is exactly the plain MLP with hidden sizes
    (layer, repr, layer) when dropout is 0.
    """

    trunk: DenseNet
    heads: list
    edges: np.ndarray
    losses: list = field(default_factory=list)

    def predict(self, a, z):
        a = np.asarray(a, dtype=float).reshape(-1)
        z = np.asarray(z, dtype=float).reshape(-1)
        x = np.column_stack([a, np.repeat(z[None, :], a.shape[0], axis=0)])
        rep, _ = self.trunk.forward(x, training=False)
        strata = route_stratum(a, self.edges)
        out = np.empty(a.shape[0])
        for e, head in enumerate(self.heads):
            mask = strata == e
            if mask.any():
                pred, _ = head.forward(rep[mask], training=False)
                out[mask] = pred.ravel()
        return out

    def to_dict(self):
        return {"kind": "drnet", "trunk": self.trunk.to_dict(),
                "heads": [h.to_dict() for h in self.heads],
                "edges": self.edges.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(DenseNet.from_dict(d["trunk"]),
                   [DenseNet.from_dict(h) for h in d["heads"]],
                   np.asarray(d["edges"], dtype=float))


def fit_drnet(Y, A, Z, hp, seed):
    """Train the dosage-stratified network; heads train jointly on MSE."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float).reshape(-1)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Y.shape[0]
    rng = np.random.default_rng(seed)
    trunk = DenseNet([1 + Z.shape[1], hp.layer_size, hp.drnet_repr_size],
                     activations=["relu", "relu"], dropout=hp.dropout, rng=rng)
    heads = [DenseNet([hp.drnet_repr_size, hp.layer_size, 1],
                      dropout=hp.dropout, rng=rng)
             for _ in range(hp.n_intervals)]
    edges = dosage_edges(A.min(), A.max(), hp.n_intervals)
    strata = route_stratum(A, edges)
    for e in range(hp.n_intervals):
        if not (strata == e).any():
            warnings.warn(f"dosage stratum {e} is empty; its head stays at "
                          "initialization", RuntimeWarning)
    model = DrnetRegressor(trunk, heads, edges)
    X = np.column_stack([A, Z])
    params = trunk.parameters()
    for h in heads:
        params = params + h.parameters()
    opt = AdamState(params, hp.lr)
    batch = min(hp.batch, n)
    for epoch in range(hp.epochs):
        for idx in _epoch_batches(rng, n, batch):
            rep, trunk_cache = trunk.forward(X[idx], training=True, rng=rng)
            bstrata = strata[idx]
            d_rep = np.zeros_like(rep)
            head_grads = []
            sq_sum = 0.0
            for e, head in enumerate(heads):
                mask = bstrata == e
                if not mask.any():
                    head_grads.append([np.zeros_like(p) for p in head.parameters()])
                    continue
                pred, cache = head.forward(rep[mask], training=True, rng=rng)
                err = pred.ravel() - Y[idx][mask]
                sq_sum += float(np.sum(err ** 2))
                g, d_sub = head.backward(cache, (2.0 * err / idx.size).reshape(-1, 1))
                head_grads.append(g)
                d_rep[mask] = d_sub
            loss = sq_sum / idx.size
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            trunk_grads, _ = trunk.backward(trunk_cache, d_rep)
            flat = trunk_grads
            for g in head_grads:
                flat = flat + g
            opt.step(params, flat)
            model.losses.append(loss)
    return model
