"""Synthetic-twin counterfactual outcomes via constrained reweighting.

For a target representation z_t and target treatment a_t, the weights solve

    min_w  || z_t - Z^T w ||^2 + alpha * ||w||_1   s.t.   A^T w = a_t

over w in R^n (negative weights allowed). The weighted observed outcomes
Y^T w* then provide the counterfactual outcome for (a_t, z_t). The solver is
an ADMM split: the smooth half-step solves an equality-constrained ridge
subproblem in closed form (so the treatment constraint holds exactly at
every iterate), the other half-step is the L1 proximal map.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class InfeasibleConstraintError(ValueError):
    """The treatment constraint cannot be met (A = 0 with nonzero target)."""


class ConvergenceError(RuntimeError):
    """Solver failed to converge within the iteration budget."""


@dataclass
class TwinQuery:
    """One counterfactual request in scaled treatment units."""

    target_representation: np.ndarray
    target_treatment: float
    alpha: float
    norm_order: int = 1

    def __post_init__(self):
        self.target_representation = np.asarray(
            self.target_representation, dtype=float).reshape(-1)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.norm_order != 1:
            raise ValueError("only the L1 penalty is supported")


def objective(Z, A, q, w):
    """Penalized objective of the weighting problem at w."""
    resid = q.target_representation - Z.T @ w
    return float(resid @ resid + q.alpha * np.abs(w).sum())


def constraint_residual(A, q, w):
    return float(A @ w - q.target_treatment)


def kkt_residual(Z, A, q, w, zero_tol=1e-8):
    """Max violation of the stationarity condition at w.

    The equality multiplier is recovered by least squares on the support of
    w (or from the full gradient when w = 0); off-support coordinates must
    have their gradient inside the L1 subdifferential band. Small values
    certify (near-)optimality.
    """
    grad = 2.0 * Z @ (Z.T @ w - q.target_representation)
    support = np.abs(w) > zero_tol
    if support.any():
        s = np.sign(w[support])
        num = -(A[support] @ (grad[support] + q.alpha * s))
        den = A[support] @ A[support]
        lam = num / den if den > 0 else 0.0
    else:
        den = A @ A
        lam = -(A @ grad) / den if den > 0 else 0.0
    res_support = 0.0
    if support.any():
        res_support = np.max(np.abs(grad[support] + q.alpha * np.sign(w[support])
                                    + lam * A[support]))
    res_zero = 0.0
    if (~support).any():
        inner = np.abs(grad[~support] + lam * A[~support]) - q.alpha
        res_zero = max(0.0, float(inner.max()))
    return max(res_support, res_zero)


class TwinSolver:
    """Reusable solver for one dataset (Z, A) and one penalty alpha.

    Factorizations are shared across queries, so generating m twins per row
    costs one matrix inverse total. ``rho`` is the ADMM penalty; the default
    scales with the data so the iteration count stays flat across problem
    sizes.
    """

    def __init__(self, Z_mat, A_vec, alpha, rho=None, max_iter=10000,
                 tol=1e-9):
        self.Z = np.atleast_2d(np.asarray(Z_mat, dtype=float))
        self.A = np.asarray(A_vec, dtype=float).reshape(-1)
        n = self.Z.shape[0]
        if self.A.shape[0] != n:
            raise ValueError("Z and A row counts differ")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.alpha = float(alpha)
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        scale = 2.0 * np.trace(self.Z @ self.Z.T) / n if n else 1.0
        self.rho = float(rho) if rho is not None else max(self.alpha, 0.1 * scale, 1e-3)
        M = 2.0 * (self.Z @ self.Z.T) + self.rho * np.eye(n)
        self.Minv = np.linalg.inv(M)
        self.Minv_a = self.Minv @ self.A
        self.a_Minv_a = float(self.A @ self.Minv_a)

    def _support_solve(self, q, support, signs):
        """Stationary point restricted to a candidate support.

        Solves the (|S|+1)-dimensional stationarity-plus-constraint system;
        sign consistency is the caller's business. Returns (w, lam) or
        (None, 0.0) when the system is inconsistent or infeasible.
        """
        zt, at = q.target_representation, q.target_treatment
        n = self.A.shape[0]
        if support.size == 0:
            if abs(at) > 1e-12:
                return None, 0.0
            w = np.zeros(n)
            grad = 2.0 * self.Z @ (self.Z.T @ w - zt)
            den = self.A @ self.A
            lam = -(self.A @ grad) / den if den > 0 else 0.0
            return w, lam
        ZF = self.Z[support]
        AF = self.A[support]
        k = support.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = 2.0 * ZF @ ZF.T
        K[:k, k] = AF
        K[k, :k] = AF
        rhs = np.concatenate([2.0 * ZF @ zt - q.alpha * signs, [at]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.abs(K @ sol - rhs).max() > 1e-8 * max(1.0, np.abs(rhs).max()):
            return None, 0.0
        w = np.zeros(n)
        w[support] = sol[:k]
        if abs(constraint_residual(self.A, q, w)) > 1e-9 * max(1.0, abs(at)):
            return None, 0.0
        return w, float(sol[k])

    def _polish(self, q, v):
        """Active-set finish seeded by the sparse iterate's support.

        Repeats: solve the restricted stationarity system; drop the worst
        sign violation, else add the worst subdifferential-band violator
        with the descent sign. Accepts once no coordinate violates
        optimality. Degenerate optima where one-step repairs are not
        enough are what the round budget covers.
        """
        zt = q.target_representation
        support = sorted(int(i) for i in np.nonzero(np.abs(v) > 1e-12)[0])
        signs = {i: float(np.sign(v[i])) for i in support}
        grad_scale = 2.0 * np.abs(self.Z @ (self.Z.T @ v - zt)).max() + q.alpha + 1.0
        gate = 1e-8 * grad_scale
        for _ in range(40):
            sup = np.array(support, dtype=int)
            sgn = np.array([signs[i] for i in sup])
            w, lam = self._support_solve(q, sup, sgn)
            if w is None:
                return None
            if sup.size:
                violation = sgn * w[sup]
                worst = int(np.argmin(violation))
                if violation[worst] < -1e-12:
                    support = [i for i in support if i != int(sup[worst])]
                    continue
            grad = 2.0 * self.Z @ (self.Z.T @ w - zt)
            band = np.abs(grad + lam * self.A) - q.alpha
            band[sup] = -np.inf
            j = int(np.argmax(band)) if band.size else -1
            if j < 0 or band[j] <= gate:
                return w
            signs[j] = float(-np.sign(grad[j] + lam * self.A[j]))
            for i in sup:
                if abs(w[i]) > 1e-12:
                    signs[i] = float(np.sign(w[i]))
            support = sorted(support + [j])
        return None

    def _sparsify(self, q, w):
        """Zero out trace coordinates and restore the constraint exactly.

        The dense ADMM iterate carries O(primal residual) dust on inactive
        coordinates; thresholding plus a correction along A on the surviving
        support gives a clean certificate without moving the objective.
        """
        tol = 1e-6 * max(1.0, np.abs(w).max())
        support = np.nonzero(np.abs(w) > tol)[0]
        if support.size == 0:
            return None
        ws = np.zeros_like(w)
        ws[support] = w[support]
        AF = self.A[support]
        den = AF @ AF
        if den <= 0:
            return None
        ws[support] += AF * (q.target_treatment - self.A @ ws) / den
        return ws

    def _iterate(self, q: TwinQuery, rho, Minv, Minv_a, a_Minv_a, w0):
        n = self.A.shape[0]
        two_Zz = 2.0 * (self.Z @ q.target_representation)
        w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()
        v = w.copy()
        u = np.zeros(n)
        thresh = q.alpha / rho
        prev_obj = np.inf
        relax = 1.7
        stall = 0
        for it in range(self.max_iter):
            q0 = two_Zz + rho * (v - u)
            Minv_q0 = Minv @ q0
            lam = (self.A @ Minv_q0 - q.target_treatment) / a_Minv_a
            w = Minv_q0 - lam * Minv_a
            wr = relax * w + (1.0 - relax) * v
            wu = wr + u
            v = np.sign(wu) * np.maximum(np.abs(wu) - thresh, 0.0)
            u = u + wr - v
            obj = objective(self.Z, self.A, q, w)
            # a single flat step can be a transient of the support hunt, so
            # the stall exit waits for three in a row
            stall = stall + 1 if abs(obj - prev_obj) < self.tol else 0
            if stall >= 3:
                polished = self._polish(q, v)
                if polished is not None:
                    return polished
                ws = self._sparsify(q, w)
                if ws is not None and objective(self.Z, self.A, q, ws) <= obj + self.tol:
                    return ws
                return w
            prev_obj = obj
            if (it + 1) % 25 == 0:
                polished = self._polish(q, v)
                if polished is not None:
                    return polished
        return None

    def solve(self, q: TwinQuery, w0=None):
        """Return optimal weights for one query; constraint exact on return.

        The ADMM iteration identifies the L1 support; every 25 iterations an
        exact finish on that support (and its one-step neighbours) is
        attempted and accepted once global optimality conditions hold. The
        plain iteration also stops once the objective stalls below tol, in
        which case the sparsified iterate is returned if it is at least as
        good. Slow geometric tails (near-degenerate optima) are retried
        with rescaled penalties before giving up.
        """
        n = self.A.shape[0]
        a_norm = np.abs(self.A).max() if n else 0.0
        if a_norm == 0.0 and abs(q.target_treatment) > 0:
            raise InfeasibleConstraintError(
                "all observed treatments are zero; nonzero target unreachable")
        if self.a_Minv_a <= 0:
            raise InfeasibleConstraintError("degenerate treatment constraint")
        out = self._iterate(q, self.rho, self.Minv, self.Minv_a,
                            self.a_Minv_a, w0)
        if out is None:
            for factor in (5.0, 0.2):
                rho = self.rho * factor
                M = 2.0 * (self.Z @ self.Z.T) + rho * np.eye(n)
                Minv = np.linalg.inv(M)
                Minv_a = Minv @ self.A
                out = self._iterate(q, rho, Minv, Minv_a,
                                    float(self.A @ Minv_a), None)
                if out is not None:
                    break
        if out is None:
            raise ConvergenceError(
                f"weight solve did not converge in {self.max_iter} iterations "
                f"(penalty retries exhausted)")
        residual = abs(constraint_residual(self.A, q, out))
        if residual > 1e-6:
            raise ConvergenceError(
                f"treatment constraint violated by {residual:.2e}")
        return out


def solve_weights(Z_mat, A_vec, q: TwinQuery, **kwargs):
    """One-shot weight solve; see TwinSolver for the reusable form."""
    solver = TwinSolver(Z_mat, A_vec, q.alpha, **kwargs)
    return solver.solve(q)


def generate_twin(Y_vec, w):
    """Counterfactual outcome: observed outcomes blended by the weights."""
    return float(np.asarray(Y_vec, dtype=float) @ w)


@dataclass
class AugmentedDataset:
    """Original rows plus generated twins, with per-row provenance.

    Treatments are in the scaled units the solver saw. ``source_row`` maps
    every row (original or twin) back to the observational row whose
    representation it carries.
    """

    outcomes: np.ndarray
    treatments: np.ndarray
    representations: np.ndarray
    is_generated: np.ndarray
    source_row: np.ndarray

    @property
    def n_rows(self):
        return self.outcomes.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            r = self.representations.shape[1]
            writer.writerow(["outcome", "treatment", "provenance", "source_row",
                             *[f"z{i}" for i in range(r)]])
            for i in range(self.n_rows):
                writer.writerow([
                    repr(float(self.outcomes[i])),
                    repr(float(self.treatments[i])),
                    "generated" if self.is_generated[i] else "observed",
                    int(self.source_row[i]),
                    *[repr(float(z)) for z in self.representations[i]],
                ])


def augment(Y, A, Z, m, alpha, seed, rho=None):
    """Add m synthetic twins per observational row.

    Twin treatments are sampled uniformly on the observed [A_min, A_max];
    each twin reuses its source row's representation and gets the outcome
    from the weight solve. Pure function of (data, m, alpha, seed). Any
    solve failure aborts with the (row, sample) identification.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float).reshape(-1)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Y.shape[0]
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return AugmentedDataset(Y.copy(), A.copy(), Z.copy(),
                                np.zeros(n, bool), np.arange(n))
    rng = np.random.default_rng(seed)
    a_lo, a_hi = A.min(), A.max()
    samples = rng.uniform(a_lo, a_hi, size=(n, m))
    solver = TwinSolver(Z, A, alpha, rho=rho)
    out_y = [Y]
    out_a = [A]
    out_z = [Z]
    src = [np.arange(n)]
    for i in range(n):
        w_prev = None  # warm starts only within a row; queries share z there
        for j in range(m):
            q = TwinQuery(Z[i], samples[i, j], alpha)
            try:
                w = solver.solve(q, w0=w_prev)
            except (InfeasibleConstraintError, ConvergenceError) as exc:
                raise type(exc)(f"twin generation failed for row {i}, "
                                f"sample {j}: {exc}") from exc
            w_prev = w
            out_y.append([generate_twin(Y, w)])
            out_a.append([samples[i, j]])
            out_z.append(Z[i:i + 1])
            src.append([i])
    flags = np.concatenate([np.zeros(n, bool), np.ones(n * m, bool)])
    return AugmentedDataset(
        outcomes=np.concatenate(out_y),
        treatments=np.concatenate(out_a),
        representations=np.vstack(out_z),
        is_generated=flags,
        source_row=np.concatenate(src).astype(int),
    )
