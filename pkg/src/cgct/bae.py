"""Balancing autoencoder: low-dimensional covariate embeddings that are
deliberately bad at predicting the treatment.

Three nets share a representation z = encoder(x): a decoder reconstructs x
from z, and a treatment head predicts the (scaled) aid volume from z. The
training loss is

    L = L_x - theta * L_a,

where L_x is the mean reconstruction error (per-dimension MSE) and L_a the
mean squared treatment-prediction error. The encoder descends L_x while
*ascending* L_a via gradient-reversal scaling, so information that predicts
the treatment gets squeezed out of the representation; the treatment head
itself keeps descending L_a (scaled by theta) so the adversary stays sharp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import AdamState, DenseNet, grl_scale


@dataclass
class BalancingEncoder:
    encoder: DenseNet
    decoder: DenseNet
    treat_head: DenseNet
    theta: float
    r: int

    def to_dict(self):
        return {
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "treat_head": self.treat_head.to_dict(),
            "theta": self.theta,
            "r": self.r,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            encoder=DenseNet.from_dict(d["encoder"]),
            decoder=DenseNet.from_dict(d["decoder"]),
            treat_head=DenseNet.from_dict(d["treat_head"]),
            theta=d["theta"],
            r=d["r"],
        )


def build_bae(p, hp, rng):
    """Construct the three nets for covariate dimension p.

    Encoder p -> layer_size -> r with linear output (unbounded z); decoder
    and treatment head mirror it with one hidden layer each.
    """
    if not hp.repr_size < p:
        raise ValueError(f"representation size {hp.repr_size} must be < p={p}")
    enc = DenseNet([p, hp.layer_size, hp.repr_size], dropout=hp.dropout, rng=rng)
    dec = DenseNet([hp.repr_size, hp.layer_size, p], dropout=hp.dropout, rng=rng)
    head = DenseNet([hp.repr_size, hp.layer_size, 1], dropout=hp.dropout, rng=rng)
    return BalancingEncoder(enc, dec, head, theta=hp.theta, r=hp.repr_size)


def _forward(model, X, A, training=False, rng=None):
    z, c_enc = model.encoder.forward(X, training=training, rng=rng)
    x_hat, c_dec = model.decoder.forward(z, training=training, rng=rng)
    a_hat, c_head = model.treat_head.forward(z, training=training, rng=rng)
    p = X.shape[1]
    n = X.shape[0]
    loss_x = np.sum((X - x_hat) ** 2) / (n * p)
    loss_a = np.sum((A.reshape(-1, 1) - a_hat) ** 2) / n
    loss = loss_x - model.theta * loss_a
    return loss, loss_x, loss_a, (z, x_hat, a_hat, c_enc, c_dec, c_head)


def bae_loss(X, A, model):
    """Evaluate (L, L_x, L_a) on a batch of scaled covariates/treatments."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = np.asarray(A, dtype=float).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    loss, loss_x, loss_a, _ = _forward(model, X, A, training=False)
    return loss, loss_x, loss_a


def batch_gradients(model, X, A, training=False, rng=None):
    """Gradients g1..g4 of the batch losses, plus the loss triple.

    g1 = dL_x/d(encoder), g2 = dL_a/d(encoder), g3 = dL_x/d(decoder),
    g4 = dL_a/d(head). The caller composes the update directions.
    """
    n, p = X.shape
    loss, loss_x, loss_a, (z, x_hat, a_hat, c_enc, c_dec, c_head) = _forward(
        model, X, A, training=training, rng=rng)
    d_xhat = 2.0 * (x_hat - X) / (n * p)
    g3, dz_dec = model.decoder.backward(c_dec, d_xhat)
    g1, _ = model.encoder.backward(c_enc, dz_dec)
    d_ahat = 2.0 * (a_hat - A.reshape(-1, 1)) / n
    g4, dz_head = model.treat_head.backward(c_head, d_ahat)
    g2, _ = model.encoder.backward(c_enc, dz_head)
    return (g1, g2, g3, g4), (loss, loss_x, loss_a)


def train_bae(X, A, hp, seed, model=None, optimizer="adam"):
    """Train the balancing autoencoder on scaled data.

    X: (n, p) covariates in [0, 1]; A: (n,) scaled treatments. A prebuilt
    model can be passed in for tests; otherwise the architecture comes from
    hp. ``optimizer="sgd"`` replaces Adam with plain gradient steps so a
    single update equals the written update rule exactly.
    """
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1)
    n, p = X.shape
    rng = np.random.default_rng(seed)
    if model is None:
        model = build_bae(p, hp, rng)
    plain = optimizer == "sgd"
    opt_enc = AdamState(model.encoder.parameters(), hp.lr, plain_sgd=plain)
    opt_dec = AdamState(model.decoder.parameters(), hp.lr, plain_sgd=plain)
    opt_head = AdamState(model.treat_head.parameters(), hp.lr, plain_sgd=plain)

    batch = min(hp.batch, n)
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            (g1, g2, g3, g4), (loss, _, _) = batch_gradients(
                model, X[idx], A[idx], training=True, rng=rng)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite autoencoder loss at epoch {epoch}")
            g_enc = [a + b for a, b in zip(g1, grl_scale(g2, model.theta))]
            opt_enc.step(model.encoder.parameters(), g_enc)
            opt_dec.step(model.decoder.parameters(), g3)
            opt_head.step(model.treat_head.parameters(),
                          [model.theta * g for g in g4])
    return model


def embed(model, X):
    """Deterministic representation z = encoder(x), row-wise."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected a 2-D covariate matrix")
    if X.shape[0] == 0:
        return np.zeros((0, model.r))
    z, _ = model.encoder.forward(X, training=False)
    return z


def reconstruct(model, X):
    """Decoder output for the embedded covariates (eval mode)."""
    z = embed(model, X)
    x_hat, _ = model.decoder.forward(z, training=False)
    return x_hat
