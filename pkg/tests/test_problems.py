import math

import numpy as np
import pytest

from picardnet import (
    FrozenSample,
    MlpConfig,
    ROOT_PATH,
    architecture,
    max_network,
    mlp_estimate,
    network_encodings,
    problem_catalog,
    pwl_network,
    realize,
    uniform_grid,
)
from picardnet.problems import EncodingError, catalog_entry, coordinatewise_sum_network

SAMPLE = FrozenSample(55)


def test_catalog_contains_required_entries():
    cat = problem_catalog()
    assert {"ode-exp", "heat", "relu-exact", "bs-like"} <= set(cat)


def test_ode_reference_value(ode_entry):
    assert ode_entry.reference(0.0, np.zeros(1)) == pytest.approx(math.e)
    assert ode_entry.reference(1.0, np.zeros(1)) == pytest.approx(1.0)


def test_heat_reference_values():
    entry = catalog_entry("heat", d=2)
    assert entry.reference(0.0, np.zeros(2)) == pytest.approx(4.0)
    x = np.array([1.0, -2.0])
    assert entry.reference(1.0, x) == pytest.approx(entry.problem.g(x))


def test_unknown_problem_rejected():
    with pytest.raises(KeyError):
        catalog_entry("not-a-problem")


def test_lipschitz_declared_constants(rng):
    entries = problem_catalog().values()
    pairs_per_problem = 100_000 // len(entries)
    for entry in entries:
        f, c = entry.problem.f, entry.problem.lipschitz_c
        vs = rng.uniform(-20, 20, (pairs_per_problem, 2))
        for v, w in vs:
            if v != w:
                assert abs(f(v) - f(w)) <= c * abs(v - w) * (1 + 1e-12)


def test_exact_encodings_match_closures(rng):
    for name in ("ode-exp", "relu-exact", "bs-like"):
        entry = catalog_entry(name)
        problem = entry.problem
        nets = network_encodings(problem)
        assert nets.delta == 0.0
        d = problem.d
        for _ in range(1000):
            x = rng.uniform(-3, 3, d)
            v = float(rng.uniform(-4, 4))
            assert abs(realize(nets.f, [v])[0] - problem.f(v)) <= 1e-12
            assert abs(realize(nets.g, x)[0] - problem.g(x)) <= 1e-12
            np.testing.assert_allclose(
                realize(nets.mu, x), np.asarray(problem.mu(x), dtype=np.float64),
                rtol=0, atol=1e-12,
            )
        for _ in range(50):
            x = rng.uniform(-3, 3, d)
            v = rng.standard_normal(d)
            np.testing.assert_allclose(
                realize(nets.sigma(v), x),
                np.asarray(problem.sigma(x), dtype=np.float64) @ v,
                rtol=0, atol=1e-12,
            )


def test_sigma_family_architecture_invariance(rng):
    for name in ("heat", "relu-exact", "bs-like"):
        nets = network_encodings(catalog_entry(name).problem)
        ref = nets.sigma.reference_architecture
        for _ in range(20):
            v = rng.standard_normal(nets.sigma.input_dim) * 10
            assert architecture(nets.sigma(v)) == ref


def test_max_network_matches_builtin(rng):
    for d in (1, 2, 3, 5):
        net = max_network(d)
        for _ in range(200):
            x = rng.uniform(-5, 5, d)
            assert realize(net, x)[0] == pytest.approx(float(np.max(x)), abs=1e-12)


def test_two_input_max_identity(rng):
    net = max_network(2)
    for _ in range(1000):
        a, b = rng.uniform(-10, 10, 2)
        assert realize(net, [a, b])[0] == pytest.approx(max(a, b), abs=1e-12)


def test_pwl_interpolation_error_of_square():
    knots = np.linspace(-3.0, 3.0, 65)  # 64 pieces
    net = pwl_network(knots, knots**2)
    xs = np.linspace(-3.0, 3.0, 20_001)
    errs = [abs(realize(net, [x])[0] - x * x) for x in xs]
    h = 6.0 / 64
    # curvature of v^2 is 2, so the midpoint error per piece is h^2/4
    assert max(errs) <= h * h / 4 + 1e-12
    assert max(errs) >= h * h / 4 * 0.9  # the bound is sharp for a parabola


def test_coordinatewise_sum_network(rng):
    knots = np.linspace(-3.0, 3.0, 17)
    net = coordinatewise_sum_network(3, pwl_network(knots, knots**2))
    for _ in range(50):
        x = rng.uniform(-3, 3, 3)
        want = sum(np.interp(v, knots, knots**2) for v in x)
        assert realize(net, x)[0] == pytest.approx(want, abs=1e-10)


def test_heat_encoding_reports_measured_deviation():
    entry = catalog_entry("heat", d=2)
    nets = network_encodings(entry.problem)
    d, pieces, radius = 2, 64, 3.0
    analytic = d * (2 * radius / pieces) ** 2 / 4
    assert 0 < nets.delta <= analytic + 1e-12
    assert nets.box_radius == radius


def test_heat_encoding_delta_target_controls_pieces():
    entry = catalog_entry("heat", d=2)
    crude = entry.problem.encodings(0.05)
    fine = entry.problem.encodings(0.001)
    assert crude.delta <= 0.05
    assert fine.delta <= 0.001
    assert architecture(fine.g)[1] > architecture(crude.g)[1]
    with pytest.raises(EncodingError):
        entry.problem.encodings(0.0)  # exact encoding unreachable


def test_feynman_kac_fixed_point_closed_forms(rng):
    # u(t,x) = MC[g(X_T)] + integral of MC[f(u(s, X_s))] ds within the
    # combined statistical and quadrature tolerance
    for name, d in (("ode-exp", 1), ("heat", 3)):
        entry = catalog_entry(name, d=d)
        problem, ref = entry.problem, entry.reference
        grid = uniform_grid(problem.horizon, 1)
        for probe in range(5):
            t = float(rng.uniform(0, problem.horizon))
            x = rng.uniform(-1, 1, problem.d)
            n_paths = 4000
            from picardnet.analysis import simulate_terminal_batch

            term = simulate_terminal_batch(problem, grid, t, x, problem.horizon,
                                           n_paths, seed=900 + probe)
            gbar = float(np.mean([problem.g(y) for y in term["terminal"]]))
            nodes, weights = np.polynomial.legendre.leggauss(8)
            integral = 0.0
            half = (problem.horizon - t) / 2.0
            for node, weight in zip(nodes, weights):
                s = t + half * (node + 1.0)
                if s <= t + 1e-12:
                    mid = np.tile(x, (n_paths // 4, 1))
                else:
                    mid = simulate_terminal_batch(problem, grid, t, x, s,
                                                  n_paths // 4, seed=1700 + probe)["terminal"]
                fbar = float(np.mean([problem.f(ref(s, y)) for y in mid]))
                integral += weight * half * fbar
            fk = gbar + integral
            want = ref(t, x)
            assert fk == pytest.approx(want, rel=0.02, abs=0.02 * (1 + abs(want)))


def test_oracle_reference_close_to_estimator_limit(relu_entry):
    # the derived-oracle reference agrees with an independent moderate run
    problem = relu_entry.problem
    ref = relu_entry.reference(0.0, np.zeros(problem.d))
    cfg = MlpConfig(3, 3, uniform_grid(problem.horizon, 27), FrozenSample(31_000))
    vals = [
        mlp_estimate(problem, MlpConfig(3, 3, cfg.grid, FrozenSample(31_000 + i)),
                     ROOT_PATH, 0.0, np.zeros(problem.d))
        for i in range(8)
    ]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - ref) <= 5 * se + 0.05
