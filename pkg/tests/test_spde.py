import numpy as np
import pytest
from scipy.linalg import eigvalsh

from probelogdet import GridSpec, Hyperparams, build_operator, build_precision, logdet_exact_dense, precision_spectral_bounds
from probelogdet.spde import negative_laplacian, precision_dlogdet_dtau


def _dense_laplacian(nx, ny):
    # brute-force stencil assembly with reflected (Neumann) boundaries
    n = nx * ny
    L = np.zeros((n, n))
    for i in range(nx):
        for j in range(ny):
            a = i * ny + j
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < nx and 0 <= jj < ny:
                    L[a, a] += 1.0
                    L[a, ii * ny + jj] -= 1.0
    return L


def test_parse_and_reject():
    g = GridSpec.parse("64x32")
    assert g.extents == (64, 32) and g.size == 2048 and str(g) == "64x32"
    assert GridSpec.parse("5x6x7").dims == 3
    for bad in ("1x5", "5", "axb", "2x2x2x2"):
        with pytest.raises(ValueError):
            GridSpec.parse(bad)
    with pytest.raises(ValueError):
        GridSpec((4, 4), "periodic")
    with pytest.raises(ValueError):
        Hyperparams(0.0, 1.0)
    with pytest.raises(ValueError):
        Hyperparams(1.0, -1.0)


def test_constant_vector_eigenpair():
    Q = build_precision(GridSpec((2, 2)), Hyperparams(1.0, 1.0))
    np.testing.assert_allclose(Q.matvec(np.ones(4)), np.ones(4), atol=1e-15)


@pytest.mark.parametrize("kappa,tau", [(0.5, 2.0), (1.3, 0.7)])
def test_matches_dense_assembly(kappa, tau):
    Q = build_precision(GridSpec((4, 4)), Hyperparams(kappa, tau))
    A = kappa * np.eye(16) + _dense_laplacian(4, 4)
    np.testing.assert_allclose(Q.toarray(), tau**2 * A.T @ A, rtol=0, atol=1e-14)


def test_operator_squares_to_precision():
    g, h = GridSpec((3, 5)), Hyperparams(0.4, 1.5)
    B = build_operator(g, h).toarray()
    np.testing.assert_allclose(B.T @ B, build_precision(g, h).toarray(), atol=1e-13)


def test_dirichlet_laplacian_diagonal():
    L = negative_laplacian(GridSpec((4, 4), "dirichlet"))
    assert np.all(L.diagonal() == 4.0)
    L = negative_laplacian(GridSpec((4, 4)))
    assert L.diagonal().min() == 2.0 and np.allclose(L @ np.ones(16), 0)


def test_tau_scaling_of_logdet():
    g = GridSpec((5, 5))
    base = logdet_exact_dense(build_precision(g, Hyperparams(0.6, 1.0)))
    for tau in (0.3, 2.5):
        ld = logdet_exact_dense(build_precision(g, Hyperparams(0.6, tau)))
        assert ld == pytest.approx(base + 2 * g.size * np.log(tau), rel=1e-12)


def test_dlogdet_dtau():
    g = GridSpec((4, 4))
    assert precision_dlogdet_dtau(g, Hyperparams(1.0, 1.0)) == 32
    assert precision_dlogdet_dtau(g, Hyperparams(1.0, 2.0)) == 16
    g, h, eps = GridSpec((8, 8)), Hyperparams(0.3, 1.7), 1e-5
    fd = (
        logdet_exact_dense(build_precision(g, Hyperparams(0.3, 1.7 + eps)))
        - logdet_exact_dense(build_precision(g, Hyperparams(0.3, 1.7 - eps)))
    ) / (2 * eps)
    assert fd == pytest.approx(precision_dlogdet_dtau(g, h), rel=1e-6)


@pytest.mark.parametrize("boundary", ["neumann", "dirichlet"])
@pytest.mark.parametrize("shape", [(6, 7), (3, 4, 5)])
def test_spectral_bounds_exact(shape, boundary):
    g, h = GridSpec(shape, boundary), Hyperparams(0.35, 1.4)
    lam = eigvalsh(build_precision(g, h).toarray())
    b = precision_spectral_bounds(g, h)
    assert b.lambda_min == pytest.approx(lam[0], rel=1e-10)
    assert b.lambda_max == pytest.approx(lam[-1], rel=1e-10)


@pytest.mark.parametrize("kappa", [0.1, 0.5, 1.0, 2.0])
def test_neumann_smallest_eigenvalue_is_tau2_kappa2(kappa):
    tau = 1.3
    lam = eigvalsh(build_precision(GridSpec((6, 6)), Hyperparams(kappa, tau)).toarray())
    assert lam[0] == pytest.approx(tau**2 * kappa**2, rel=1e-10)


def test_row_sparsity():
    Q2 = build_precision(GridSpec((9, 9)), Hyperparams(1.0, 1.0))
    Q3 = build_precision(GridSpec((6, 6, 6)), Hyperparams(1.0, 1.0))
    assert np.diff(Q2.row_offsets).max() <= 13
    assert np.diff(Q3.row_offsets).max() <= 25
    # full symmetric pattern passes validation
    type(Q2).from_scipy(Q2.to_scipy())
