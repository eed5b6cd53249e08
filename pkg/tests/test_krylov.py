import io
import json

import numpy as np
import pytest
from scipy.linalg import solve

from probelogdet import (
    ConvergenceError,
    CsrMatrix,
    SolverConfig,
    SpectralBounds,
    apply_log,
    build_log_quadrature,
    cg_solve,
    cocg_m_solve,
    precision_spectral_bounds,
    shifted_quadratic_forms,
)
from probelogdet.spde import GridSpec, Hyperparams

from conftest import dense_logm, grid_q


class CountingMatrix:
    """Wraps a matrix and counts products (a block product counts once)."""

    def __init__(self, Q):
        self.Q = Q
        self.shape = Q.shape
        self.n = Q.n
        self.count = 0

    def matvec(self, x):
        self.count += 1
        return self.Q.matvec(x)


def grid_rule(shape, kappa, N):
    b = precision_spectral_bounds(GridSpec(shape), Hyperparams(kappa, 1.0), margin=0.05)
    return build_log_quadrature(b, N)


def test_config_validation():
    for bad in (0.0, 1.0, -1e-3):
        with pytest.raises(ValueError):
            SolverConfig(rel_tol=bad)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)


def test_cg_identity_one_iteration(rng):
    b = rng.standard_normal(5)
    x, its = cg_solve(CsrMatrix.from_dense(np.eye(5)), b, return_info=True)
    assert its == 1
    np.testing.assert_allclose(x, b)


def test_cg_diagonal():
    x = cg_solve(CsrMatrix.from_dense(np.diag(np.arange(1.0, 6.0))), np.ones(5), SolverConfig(1e-10))
    np.testing.assert_allclose(x, 1.0 / np.arange(1, 6), rtol=1e-9)


def test_cg_grid_matches_dense(rng):
    Q = grid_q((16, 16), kappa=0.5)
    b = rng.standard_normal(Q.n)
    cfg = SolverConfig(1e-6)
    x = cg_solve(Q, b, cfg)
    assert np.linalg.norm(Q.matvec(x) - b) <= cfg.rel_tol * np.linalg.norm(b)
    ref = solve(Q.toarray(), b)
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-3


def test_cg_budget_raises_with_iterate(rng):
    Q = grid_q((16, 16), kappa=0.1)
    with pytest.raises(ConvergenceError) as exc:
        cg_solve(Q, rng.standard_normal(Q.n), SolverConfig(1e-10, max_iter=3))
    assert exc.value.x is not None and exc.value.iterations == 3


def test_scalar_resolvent(rng):
    b = rng.standard_normal(4)
    res = cocg_m_solve(CsrMatrix.from_dense(np.eye(4)), b, [0.5j], SolverConfig(1e-12))
    np.testing.assert_allclose(res.solutions[0], b / (1 - 0.5j), rtol=1e-12)


def test_diagonal_resolvents():
    d = np.array([1.0, 3.0])
    b = np.array([1.0, -2.0])
    shifts = np.array([-1.0 + 2j, 0.5 - 0.3j, -4.0])
    res = cocg_m_solve(CsrMatrix.from_dense(np.diag(d)), b, shifts, SolverConfig(1e-12))
    assert res.all_converged
    np.testing.assert_allclose(res.solutions, b[None, :] / (d[None, :] - shifts[:, None]), rtol=1e-10)


def test_grid_shifts_match_dense_and_count_matvecs(rng):
    Q = grid_q((12, 12))
    rule = grid_rule((12, 12), 1.0, 16)
    b = rng.standard_normal(Q.n)
    cfg = SolverConfig(1e-4)
    counted = CountingMatrix(Q)
    res = cocg_m_solve(counted, b, rule.sigma, cfg, verify=False)
    _, seed_its = cg_solve(Q, b, cfg, return_info=True)
    assert counted.count == res.matvecs == res.seed_iterations
    assert res.seed_iterations >= seed_its
    dense = Q.toarray()
    for s, x in zip(rule.sigma, res.solutions):
        ref = solve(dense - s * np.eye(Q.n), b.astype(complex))
        assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-3


def test_matvecs_independent_of_shift_count(rng):
    Q = grid_q((10, 10), kappa=0.5)
    rule = grid_rule((10, 10), 0.5, 16)
    b = rng.standard_normal(Q.n)
    one = CountingMatrix(Q)
    many = CountingMatrix(Q)
    # the least damped shift governs convergence; put it in both runs
    slow = rule.sigma[np.argmin(np.abs(rule.sigma))]
    cocg_m_solve(one, b, [slow], verify=False)
    cocg_m_solve(many, b, rule.sigma, verify=False)
    assert one.count == many.count


def test_verification_costs_one_product_per_shift(rng):
    Q = grid_q((6, 6))
    rule = grid_rule((6, 6), 1.0, 7)
    b = rng.standard_normal(Q.n)
    res = cocg_m_solve(Q, b, rule.sigma)
    assert res.verify_matvecs == 7
    assert np.all(res.residuals <= 1e-3 * np.linalg.norm(b))
    assert res.all_converged


def test_shifted_residual_collinearity(rng):
    Q = grid_q((8, 8), kappa=0.5)
    rule = grid_rule((8, 8), 0.5, 10)
    b = rng.standard_normal(Q.n)
    dense = Q.toarray()
    cfg = SolverConfig(1e-10)
    target = cfg.rel_tol * np.linalg.norm(b)
    worst = []
    done = np.zeros(len(rule.sigma), dtype=bool)

    def check(it, r, z, x):
        # a converged shift stops updating, so compare only live shifts
        live = ~done
        done[:] |= np.abs(z) * np.linalg.norm(r) <= target
        if it % 10:
            return
        for s, zl, xl in zip(rule.sigma[live], z[live], x[live]):
            true = b - (dense @ xl - s * xl)
            gap = np.linalg.norm(true - zl * r)
            # the explicit residual carries rounding of order eps * |Q| |x|
            worst.append(gap / max(np.linalg.norm(true), 1e-4 * np.linalg.norm(b)))

    cocg_m_solve(Q, b, rule.sigma, cfg, callback=check)
    assert len(worst) >= len(rule.sigma) and max(worst) <= 1e-8


def test_diagnostics_stream(rng):
    Q = grid_q((5, 5))
    buf = io.StringIO()
    res = cocg_m_solve(Q, rng.standard_normal(Q.n), grid_rule((5, 5), 1.0, 5).sigma, diagnostics=buf)
    lines = [json.loads(s) for s in buf.getvalue().splitlines()]
    assert len(lines) == res.seed_iterations
    assert lines[-1]["converged"] == 5


def test_zero_rhs():
    Q = grid_q((4, 4))
    res = cocg_m_solve(Q, np.zeros(Q.n), [1j, -2.0])
    assert res.seed_iterations == 0 and res.all_converged
    assert not np.any(res.solutions)


def test_apply_log_scalar_cases(rng):
    v = rng.standard_normal(6)
    rule = build_log_quadrature(SpectralBounds(1.9, 2.1), 8)
    out = apply_log(CsrMatrix.from_dense(2 * np.eye(6)), v, rule, SolverConfig(1e-8))
    np.testing.assert_allclose(out, np.log(2) * v, rtol=1e-7)
    rule = build_log_quadrature(SpectralBounds(0.95, 1.05), 8)
    out = apply_log(CsrMatrix.from_dense(np.eye(6)), v, rule, SolverConfig(1e-8))
    assert np.abs(out).max() < 1e-8


def test_apply_log_matches_dense_column():
    Q = grid_q((10, 10))
    rule = grid_rule((10, 10), 1.0, 12)
    e = np.zeros(Q.n)
    e[45] = 1.0
    ref = dense_logm(Q)[:, 45]
    out = apply_log(Q, e, rule, SolverConfig(1e-4))
    assert np.linalg.norm(out - ref) / np.linalg.norm(ref) <= 1e-3


def test_apply_log_symmetry(rng):
    Q = grid_q((9, 9), kappa=0.4)
    rule = grid_rule((9, 9), 0.4, 12)
    cfg = SolverConfig(1e-5)
    v, w = rng.standard_normal((2, Q.n))
    a, b = v @ apply_log(Q, w, rule, cfg), w @ apply_log(Q, v, rule, cfg)
    scale = np.linalg.norm(v) * np.linalg.norm(w) * np.log(rule.bounds.lambda_max)
    assert abs(a - b) <= 10 * cfg.rel_tol * scale


def test_apply_log_raises_on_budget(rng):
    Q = grid_q((12, 12), kappa=0.1)
    rule = grid_rule((12, 12), 0.1, 10)
    with pytest.raises(ConvergenceError):
        apply_log(Q, rng.standard_normal(Q.n), rule, SolverConfig(1e-6, max_iter=5))


def test_quadratic_forms_match_full_solves(rng):
    Q = grid_q((10, 10), kappa=0.3)
    rule = grid_rule((10, 10), 0.3, 10)
    V = rng.standard_normal((Q.n, 5))
    cfg = SolverConfig(1e-8)
    res = shifted_quadratic_forms(Q, V, rule.sigma, cfg)
    assert res.converged.all()
    for j in range(5):
        full = cocg_m_solve(Q, V[:, j], rule.sigma, cfg)
        np.testing.assert_allclose(res.forms[j], full.solutions @ V[:, j], rtol=1e-6)


def test_quadratic_forms_fixed_iterations(rng):
    Q = grid_q((10, 10), kappa=0.3)
    rule = grid_rule((10, 10), 0.3, 10)
    V = rng.standard_normal((Q.n, 3))
    res = shifted_quadratic_forms(Q, V, rule.sigma, SolverConfig(1e-4))
    again = shifted_quadratic_forms(Q, V, rule.sigma, SolverConfig(1e-4), iterations=res.iterations)
    np.testing.assert_array_equal(again.iterations, res.iterations)
    np.testing.assert_allclose(again.forms, res.forms, rtol=1e-14)
    short = shifted_quadratic_forms(Q, V, rule.sigma, iterations=[2, 3, 4])
    assert short.iterations.tolist() == [2, 3, 4]


def test_quadratic_forms_column_independence(rng):
    # columns only share the matrix products; a column may stop one step
    # apart because block reductions round differently
    Q = grid_q((8, 8), kappa=0.5)
    rule = grid_rule((8, 8), 0.5, 8)
    V = rng.standard_normal((Q.n, 4))
    batch = shifted_quadratic_forms(Q, V, rule.sigma, SolverConfig(1e-6))
    for j in range(4):
        one = shifted_quadratic_forms(Q, V[:, [j]], rule.sigma, SolverConfig(1e-6))
        assert abs(int(one.iterations[0]) - int(batch.iterations[j])) <= 1
        np.testing.assert_allclose(one.forms[0], batch.forms[j], rtol=1e-5)
    again = shifted_quadratic_forms(Q, V, rule.sigma, SolverConfig(1e-6))
    np.testing.assert_array_equal(again.forms, batch.forms)
