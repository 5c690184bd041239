"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one PASS line on success (run with -s to stream them);
a failure shows up as an ordinary pytest failure. Checks that depend on
the original real-world panel are skipped, not failed, when that file is
not supplied via the CGCT_AUTHORS_DATA environment variable: the bundled
panel is a synthetic benchmark sample, so absolute case-count targets do
not transfer to it.
"""

import json
import os
import time

import numpy as np
import pytest

from cgct.allocation import (AllocationProblem, bootstrap_ci,
                             expected_infections, optimize_allocation,
                             project_feasible)
from cgct.bae import BalancingEncoder, bae_loss, batch_gradients, build_bae, train_bae
from cgct.cfgen import TwinQuery, TwinSolver, objective as twin_objective
from cgct.data import bundled_data_path, impute_knn, load_dataset
from cgct.evaluation import (ablation_matrix, build_semisynthetic, mise,
                             repeat_runs, romberg_integral)
from cgct.gps import (fit_outcome_model, fit_treatment_model, gps_density,
                      outcome_features, param_count)
from cgct.nn import DenseNet
from cgct.pipeline import (AblationFlags, HyperParams, fit_arrays,
                           load_model, save_model, train_cgct)
from cgct.semisynth import fit_ground_truth, gen_eval, gen_training, pseudo_means
from oracles import (capped_simplex_projection_grid, fd_gradients,
                     l1_constrained_qp_oracle, ols_normal_equations,
                     relative_grad_error, simpson_like_exact_cubic)


def _announce(name):
    print(f"\nACCEPTANCE {name}: PASS")


@pytest.fixture(scope="module")
def panels():
    d16 = impute_knn(load_dataset(bundled_data_path(), 2016), 5)
    d17 = impute_knn(load_dataset(bundled_data_path(), 2017), 5)
    return d16, d17


@pytest.fixture(scope="module")
def semi(panels):
    d16, d17 = panels
    return build_semisynthetic(d16, d17, grid_size=65, noise_seed=0)


class HPView:
    def __init__(self, **kw):
        self.layer_size = kw.get("layer_size", 3)
        self.drnet_repr_size = kw.get("drnet_repr_size", 2)
        self.lr = kw.get("lr", 1e-3)
        self.dropout = 0.0
        self.epochs = kw.get("epochs", 0)
        self.batch = kw.get("batch", 4)
        self.n_intervals = kw.get("n_intervals", 2)
        self.repr_size = kw.get("repr_size", 2)
        self.theta = kw.get("theta", 0.5)


def test_gradient_correctness_bae_and_neural_baselines():
    start = time.time()
    rng = np.random.default_rng(42)
    checked = 0

    def margin_ok(caches):
        return min(np.abs(z).min() for c in caches for z in c["pre"]) > 1e-3

    # balancing autoencoder: d(L)/d(params) against central differences
    bae_instances = 0
    while bae_instances < 20:
        p, r = 4, 2
        model = build_bae(p, HPView(layer_size=3, repr_size=r), rng)
        for net in (model.encoder, model.decoder, model.treat_head):
            for b in net.biases:
                b += rng.normal(scale=0.3, size=b.shape)
        x = rng.uniform(size=(5, p))
        a = rng.uniform(size=5)
        import cgct.bae as bae_mod
        _, _, _, (_, _, _, ce, cd, ch) = bae_mod._forward(model, x, a)
        if not margin_ok((ce, cd, ch)):
            continue
        bae_instances += 1
        (g1, g2, g3, g4), _ = batch_gradients(model, x, a)
        analytic = ([gx - model.theta * gy for gx, gy in zip(g1, g2)]
                    + g3 + [-model.theta * g for g in g4])
        numeric = fd_gradients(lambda: bae_loss(x, a, model)[0],
                               model.encoder.parameters()
                               + model.decoder.parameters()
                               + model.treat_head.parameters())
        assert relative_grad_error(analytic, numeric) < 1e-4
        checked += 1

    # plain MLP regressor loss gradients
    ann_instances = 0
    while ann_instances < 10:
        net = DenseNet([3, 3, 1], rng=int(rng.integers(1e6)))
        for b in net.biases:
            b += rng.normal(scale=0.3, size=b.shape)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=5)
        out, cache = net.forward(x)
        if not margin_ok((cache,)):
            continue
        ann_instances += 1
        err = out.ravel() - y
        grads, _ = net.backward(cache, (2.0 * err / 5).reshape(-1, 1))
        numeric = fd_gradients(
            lambda: float(np.mean((net.forward(x)[0].ravel() - y) ** 2)),
            net.parameters())
        assert relative_grad_error(grads, numeric) < 1e-4
        checked += 1

    # dosage-head network: joint trunk+head gradients with routing
    drnet_instances = 0
    while drnet_instances < 10:
        trunk = DenseNet([3, 3, 2], activations=["relu", "relu"],
                         rng=int(rng.integers(1e6)))
        heads = [DenseNet([2, 2, 1], rng=int(rng.integers(1e6))) for _ in range(2)]
        for net in [trunk] + heads:
            for b in net.biases:
                b += rng.normal(scale=0.3, size=b.shape)
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=6)
        strata = (x[:, 0] > 0).astype(int)

        def drnet_loss():
            rep, _ = trunk.forward(x)
            pred = np.empty(6)
            for e, head in enumerate(heads):
                mask = strata == e
                if mask.any():
                    pred[mask] = head.forward(rep[mask])[0].ravel()
            return float(np.mean((pred - y) ** 2))

        rep, tc = trunk.forward(x)
        caches = [tc]
        d_rep = np.zeros_like(rep)
        head_grads = []
        ok = True
        for e, head in enumerate(heads):
            mask = strata == e
            if not mask.any():
                ok = False
                break
            pred, hc = head.forward(rep[mask])
            caches.append(hc)
            err = pred.ravel() - y[mask]
            g, d_sub = head.backward(hc, (2.0 * err / 6).reshape(-1, 1))
            head_grads.extend(g)
            d_rep[mask] = d_sub
        if not ok or not margin_ok(caches):
            continue
        drnet_instances += 1
        trunk_grads, _ = trunk.backward(tc, d_rep)
        analytic = trunk_grads + head_grads
        params = trunk.parameters() + [p for h in heads for p in h.parameters()]
        numeric = fd_gradients(drnet_loss, params)
        assert relative_grad_error(analytic, numeric) < 1e-4
        checked += 1

    elapsed = time.time() - start
    assert checked >= 20
    assert elapsed < 10.0, f"gradient battery took {elapsed:.1f}s"
    _announce(f"gradient-correctness ({checked} instances, {elapsed:.1f}s)")


def test_grl_semantics_single_step_exact():
    # one-parameter-per-net toy: a single plain-gradient step must equal the
    # written update rules for encoder, decoder, and treatment head
    enc = DenseNet([1, 1], activations=["linear"], rng=0)
    dec = DenseNet([1, 1], activations=["linear"], rng=0)
    head = DenseNet([1, 1], activations=["linear"], rng=0)
    w_e, w_d, w_h = 0.8, 1.3, -0.4
    enc.weights[0][:] = w_e
    dec.weights[0][:] = w_d
    head.weights[0][:] = w_h
    theta, eta = 0.7, 0.05
    model = BalancingEncoder(enc, dec, head, theta=theta, r=1)
    x, a = 0.9, 0.3
    z = w_e * x
    g1 = 2.0 * (w_d * z - x) * w_d * x
    g2 = 2.0 * (w_h * z - a) * w_h * x
    g3 = 2.0 * (w_d * z - x) * z
    g4 = 2.0 * (w_h * z - a) * z
    hp = HPView(layer_size=1, repr_size=1, epochs=1, batch=1, theta=theta)
    hp.lr = eta
    hp.epochs = 1
    trained = train_bae(np.array([[x]]), np.array([a]), hp, seed=0,
                        model=model, optimizer="sgd")
    assert trained.encoder.weights[0][0, 0] == pytest.approx(
        w_e - eta * (g1 - theta * g2), abs=1e-15)
    assert trained.decoder.weights[0][0, 0] == pytest.approx(
        w_d - eta * g3, abs=1e-15)
    assert trained.treat_head.weights[0][0, 0] == pytest.approx(
        w_h - eta * theta * g4, abs=1e-15)
    _announce("grl-single-step")


def test_counterfactual_solver_against_sign_enumeration():
    start = time.time()
    rng = np.random.default_rng(7)
    for trial in range(50):
        n = int(rng.integers(1, 7))
        r = int(rng.integers(1, 4))
        Z = rng.standard_normal((n, r))
        A = rng.uniform(0.05, 1.0, n)
        q = TwinQuery(rng.standard_normal(r), float(rng.uniform(0, 1)),
                      float(rng.choice([0.0, 0.05, 0.1, 0.5, 1.0, 5.0])))
        ref, _ = l1_constrained_qp_oracle(Z, A, q.target_representation,
                                          q.target_treatment, q.alpha)
        w = TwinSolver(Z, A, q.alpha).solve(q)
        got = twin_objective(Z, A, q, w)
        assert got <= ref + 1e-6, f"trial {trial}: {got} vs oracle {ref}"
        assert abs(A @ w - q.target_treatment) <= 1e-6
    elapsed = time.time() - start
    assert elapsed < 30.0
    _announce(f"counterfactual-solver (50 instances, {elapsed:.1f}s)")


def test_gps_closed_forms_and_parameter_count():
    rng = np.random.default_rng(3)
    for r in (4, 7, 10):
        n = 40
        Z = rng.normal(size=(n, r))
        A = rng.normal(size=n)
        Y = rng.normal(size=n)
        tm = fit_treatment_model(Z, A)
        design = np.column_stack([np.ones(n), Z])
        np.testing.assert_allclose(tm.beta, ols_normal_equations(design, A),
                                   atol=1e-8)
        R = gps_density(A, Z, tm)
        om = fit_outcome_model(Y, A, R)
        np.testing.assert_allclose(
            om.alpha, ols_normal_equations(outcome_features(A, R), Y), atol=1e-8)
        assert param_count(tm, om) == r + 8
    _announce("gps-closed-forms (r+8 parameters)")


def test_romberg_and_mise_exactness():
    rng = np.random.default_rng(5)
    for _ in range(10):
        coeffs = rng.normal(size=4)
        lo, hi = sorted(rng.uniform(-2.0, 2.0, size=2))
        if hi - lo < 0.2:
            hi = lo + 1.0
        grid = np.linspace(lo, hi, 65)
        y = sum(c * grid ** k for k, c in enumerate(coeffs))
        ref = simpson_like_exact_cubic(coeffs, lo, hi)
        assert abs(romberg_integral(y, grid[1] - grid[0]) - ref) <= 1e-10
    grid = np.linspace(1.0, 4.0, 33)
    truth = np.sin(grid)[None, :].repeat(5, axis=0)
    assert mise(truth, truth, grid) == 0.0
    delta = 0.21
    assert mise(truth + delta, truth, grid) == pytest.approx(
        delta ** 2 * (4.0 - 1.0), abs=1e-10)
    _announce("romberg-mise")


def test_semisynthetic_recipe(panels):
    d16, _ = panels
    rng = np.random.default_rng(0)
    # plant and recover exactly
    n, p = 60, 5
    A = rng.uniform(size=n)
    X = rng.uniform(size=(n, p))
    from cgct.semisynth import GroundTruth
    gt = GroundTruth(0.4, 1.2, rng.normal(size=p), rng.normal(size=p))
    rec = fit_ground_truth(pseudo_means(gt, A, X), A, X)
    np.testing.assert_allclose(
        np.concatenate([[rec.intercept, rec.treatment_effect],
                        rec.covariate_effects, rec.interaction_effects]),
        np.concatenate([[gt.intercept, gt.treatment_effect],
                        gt.covariate_effects, gt.interaction_effects]),
        atol=1e-6)
    # evaluation set size: 64 per country over the full panel
    Xs = d16.covariate_matrix()
    Xs = (Xs - Xs.min(0)) / np.where(Xs.max(0) > Xs.min(0),
                                     Xs.max(0) - Xs.min(0), 1.0)
    values, _ = gen_eval(gt if p == 14 else fit_ground_truth(
        d16.outcomes(), rng.uniform(size=d16.n), Xs),
        Xs, np.linspace(0, 1, 64))
    assert values.shape == (105, 64)
    assert values.size == 64 * 105
    # fixed-seed determinism
    y1, _ = gen_training(rec, A, X, seed=11)
    y2, _ = gen_training(rec, A, X, seed=11)
    np.testing.assert_array_equal(y1, y2)
    _announce("semisynthetic-recipe (64*n evaluation points)")


def test_end_to_end_ordering(semi):
    start = time.time()
    train, curves, _ = semi
    hp = HyperParams()
    gps_rep = repeat_runs("gps", train, curves, runs=10, base_seed=0, hp=hp)
    cgct_rep = repeat_runs("cgct", train, curves, runs=10, base_seed=0, hp=hp)
    assert not gps_rep.partial and not cgct_rep.partial, (
        gps_rep.errors + cgct_rep.errors)
    gap = (gps_rep.mean - cgct_rep.mean) / gps_rep.mean
    elapsed = time.time() - start
    assert cgct_rep.mean < gps_rep.mean, "full pipeline lost to the baseline"
    assert gap >= 0.05, f"improvement {gap:.1%} below the 5% bar"
    assert elapsed < 900.0
    _announce(f"end-to-end-ordering (gap {gap:.1%} over 10 seeds, {elapsed:.0f}s)")


def test_ablation_structure(semi):
    train, curves, _ = semi
    hp = HyperParams(epochs=100, ann_layer_size=14, drnet_repr_size=6)
    reports = ablation_matrix(train, curves, runs=2, base_seed=0, hp=hp)
    assert len(reports) == 16
    assert all(r.runs == 2 and not r.partial for r in reports), [
        r.errors for r in reports if r.partial]
    base_gps = next(r for r in reports if r.method == "base/gps")
    standalone = repeat_runs("gps", train, curves, runs=2, base_seed=0, hp=hp)
    assert base_gps.per_run == standalone.per_run, "code-path identity broken"
    _announce("ablation-structure (16 cells, base/gps bit-identical)")


def test_allocation_criteria(panels):
    d16, d17 = panels
    rng = np.random.default_rng(1)
    # projection against the dense grid oracle
    for _ in range(8):
        n = int(rng.integers(2, 4))
        point = rng.uniform(-1.0, 4.0, size=n)
        budget = float(rng.uniform(0.5, 2.5))
        cap = float(rng.uniform(0.5, 2.0))
        got = project_feasible(point, budget, cap)
        ref = capped_simplex_projection_grid(point, budget, cap)
        np.testing.assert_allclose(got, ref, atol=1e-6)
    # every plan feasible and never worse than observed practice
    hp = HyperParams(epochs=10, m_twins=2, layer_size=7, repr_size=4)
    model = train_cgct(d16, hp, AblationFlags(True, True), seed=0)
    problem = AllocationProblem.from_dataset(d17)
    for seed in range(3):
        plan = optimize_allocation(model, problem, seed=seed, max_iter=400)
        assert plan.aid.min() >= -1e-6
        assert plan.aid.max() <= problem.bound + 1e-6
        assert plan.aid.sum() <= problem.budget + 1e-6
        assert plan.objective <= plan.warm_start_objective + 1e-9
    _announce("allocation (projection oracle, feasibility, warm-start dominance)")


def test_allocation_case_counts_on_authors_data(panels):
    path = os.environ.get("CGCT_AUTHORS_DATA")
    if not path:
        pytest.skip("authors' released dataset not supplied "
                    "(set CGCT_AUTHORS_DATA to the panel CSV); the bundled "
                    "panel is synthetic, so absolute case counts do not apply")
    d16 = impute_knn(load_dataset(path, 2016), 5)
    d17 = impute_knn(load_dataset(path, 2017), 5)
    model = train_cgct(d16, HyperParams(), AblationFlags(True, True), seed=0)
    problem = AllocationProblem.from_dataset(d17)
    current = expected_infections(model, problem.observed_aid, problem)
    assert abs(current - 1.49e6) <= 0.05 * 1.49e6

    Y, A, X = d16.outcomes(), d16.treatments(), d16.covariate_matrix()

    def factory(idx, seed):
        return fit_arrays(Y[idx], A[idx], X[idx], HyperParams(),
                          AblationFlags(True, True), seed)

    boot = bootstrap_ci(factory, d16, problem, resamples=20, seed=0)
    assert 3.3 - 1.8 - 2.0 <= boot.reduction_pct_mean <= 3.3 + 1.8 + 2.0
    _announce("allocation-case-counts")


def test_persistence_bit_identical(panels, tmp_path):
    d16, _ = panels
    hp = HyperParams(epochs=10, m_twins=2, layer_size=7, repr_size=4)
    model = train_cgct(d16, hp, AblationFlags(True, True), seed=3)
    path = tmp_path / "model.json"
    save_model(model, path)
    clone = load_model(path)
    grid = np.linspace(0.0, model.default_bound, 65)
    for i in (0, 17, 104):
        x = d16.covariate_matrix()[i]
        a = model.predict_curve(x, grid).predictions
        b = clone.predict_curve(x, grid).predictions
        assert np.array_equal(a, b), "round-trip changed predictions"
    _announce("persistence-round-trip")
