"""Minimal dense feed-forward nets with explicit backprop and Adam updates.

Everything is plain numpy. Nets are small (tens to hundreds of parameters)
and trained full-precision on CPU; the point is exact control over gradient
flow, which the adversarial encoder training needs (see bae.py), and cheap
serialization. Weight layout: W has shape (n_in, n_out) so a batch forward
is ``x @ W + b``.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "linear")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


class DenseNet:
    """Fully connected net: affine layers with relu/linear activations.

    ``sizes`` lists layer widths including input and output, so
    ``DenseNet([14, 10, 7])`` maps 14 inputs through one hidden layer of 10
    onto 7 outputs. Hidden layers default to relu, the output to linear.
    Weights start uniform in +/- sqrt(6 / (fan_in + fan_out)); biases at 0.
    """

    def __init__(self, sizes, activations=None, dropout=0.0, rng=None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activations is None:
            activations = ["relu"] * (len(sizes) - 2) + ["linear"]
        if len(activations) != len(sizes) - 1:
            raise ValueError("one activation per weight layer required")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.sizes = list(sizes)
        self.activations = list(activations)
        self.dropout = float(dropout)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self):
        return len(self.weights)

    def parameters(self):
        """Live references, ordered W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x, training=False, rng=None):
        """Run the net; returns (output, cache) with cache for backward.

        Dropout (inverted scaling) applies to hidden activations only and
        only when ``training`` is set; it then needs an rng for the masks.
        """
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {h.shape[1]} != expected {self.sizes[0]}")
        use_dropout = training and self.dropout > 0.0
        if use_dropout and rng is None:
            raise ValueError("training forward with dropout needs an rng")
        cache = {"inputs": [], "pre": [], "masks": [], "squeeze": squeeze}
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            cache["inputs"].append(h)
            z = h @ w + b
            cache["pre"].append(z)
            h = _act(act, z)
            if use_dropout and i < self.n_layers - 1:
                mask = (rng.random(h.shape) >= self.dropout) / (1.0 - self.dropout)
                h = h * mask
                cache["masks"].append(mask)
            else:
                cache["masks"].append(None)
        out = h[0] if squeeze else h
        return out, cache

    def backward(self, cache, grad_out):
        """Backprop a gradient wrt the net output.

        Returns (grads, grad_input) where grads is ordered like
        ``parameters()`` and grad_input is the gradient wrt the net input
        (needed to chain nets, e.g. decoder gradients into the encoder).
        """
        grad_out = np.asarray(grad_out, dtype=float)
        if cache["squeeze"]:
            grad_out = np.atleast_2d(grad_out)
        delta = grad_out
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            mask = cache["masks"][i]
            if mask is not None:
                delta = delta * mask
            delta = delta * _act_grad(self.activations[i], cache["pre"][i])
            h_in = cache["inputs"][i]
            grads_w[i] = h_in.T @ delta
            grads_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend([gw, gb])
        grad_input = delta[0] if cache["squeeze"] else delta
        return grads, grad_input

    def to_dict(self):
        return {
            "sizes": self.sizes,
            "activations": self.activations,
            "dropout": self.dropout,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d):
        net = cls(d["sizes"], d["activations"], d["dropout"], rng=0)
        net.weights = [np.asarray(w, dtype=float) for w in d["weights"]]
        net.biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        return net


class AdamState:
    """Adam with bias correction; optionally degraded to plain SGD.

    One state drives a fixed list of parameter arrays (updated in place).
    ``plain_sgd=True`` turns the update into ``p -= lr * g``, which keeps
    the update-direction algebra of the adversarial training testable
    without the moment machinery.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 plain_sgd=False):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.plain_sgd = plain_sgd
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ValueError("parameter/gradient count mismatch")
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite gradient in parameter block {i}")
            if g.shape != params[i].shape:
                raise ValueError(f"gradient shape mismatch in block {i}")
        self.t += 1
        if self.plain_sgd:
            for p, g in zip(params, grads):
                p -= self.lr * g
            return
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grl_scale(grad, theta):
    """Gradient-reversal scaling: flip and scale a gradient by theta.

    Descending along the returned gradient makes the upstream encoder
    ascend the adversarial (treatment-prediction) loss.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if isinstance(grad, (list, tuple)):
        return [-theta * np.asarray(g) for g in grad]
    return -theta * np.asarray(grad)
