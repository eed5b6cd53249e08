"""Gaussian (Markov random field) likelihoods and the Gauss-linear posterior."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .krylov import SolverConfig, cg_solve
from .spde import GridSpec, Hyperparams, build_operator, build_precision
from .sparse import CsrMatrix

LOG_2PI = float(np.log(2.0 * np.pi))


def _flat(_):
    return 0.0


def _as_sparse(A):
    if isinstance(A, CsrMatrix):
        return A.to_scipy()
    if sp.issparse(A):
        return A.tocsr()
    return sp.csr_matrix(np.asarray(A, dtype=float))


def _rows(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def quadratic_form(Q, x) -> float:
    """``sum_i x_i^T Q x_i`` over the rows of ``x`` (a single vector is one row)."""
    X = _rows(x)
    return float(np.einsum("ij,ji->", X, Q.matvec(X.T)))


def gmrf_neg_loglik(x, h: Hyperparams, g: GridSpec, logdet_fn: Callable) -> float:
    """Negative log-density of zero-mean ``x ~ N(0, Q(h)^{-1})`` on grid ``g``.

    ``x`` may hold several independent realizations as rows. ``logdet_fn``
    maps a :class:`CsrMatrix` to its log-determinant (exact or estimated).
    """
    X = _rows(x)
    if X.shape[1] != g.size:
        raise ValueError(f"field has {X.shape[1]} values, grid has {g.size} nodes")
    Q = build_precision(g, h)
    r, n = X.shape
    return float(-0.5 * r * float(logdet_fn(Q)) + 0.5 * quadratic_form(Q, X) + 0.5 * r * n * LOG_2PI)


@dataclass
class GaussLinearModel:
    """``y = A(theta) x + eps``, ``eps ~ N(0, Q1^{-1})``, ``x ~ N(mu, Q_x(eta)^{-1})``.

    Attributes
    ----------
    prior_precision : callable
        ``eta -> CsrMatrix``.
    forward : callable, matrix or None
        ``theta -> matrix`` or a fixed matrix; ``None`` means direct observation.
    noise_precision : float or CsrMatrix
        A scalar means ``q * I``.
    prior_mean : array_like or None
        ``None`` means zero.
    """

    prior_precision: Callable
    forward: object = None
    noise_precision: object = 1.0
    prior_mean: object = None
    log_prior_eta: Callable = _flat
    log_prior_theta: Callable = _flat

    def forward_matrix(self, theta, n):
        A = self.forward(theta) if callable(self.forward) else self.forward
        return sp.identity(n, format="csr") if A is None else _as_sparse(A)

    def mean(self, n):
        return np.zeros(n) if self.prior_mean is None else np.asarray(self.prior_mean, dtype=float)

    def noise_apply(self, r):
        q = self.noise_precision
        return q * r if np.isscalar(q) else q.matvec(r)

    def noise_logdet(self, m, logdet_fn):
        q = self.noise_precision
        if np.isscalar(q):
            return m * float(np.log(q))
        return float(logdet_fn(q))


@dataclass
class Posterior:
    precision: CsrMatrix
    mean: np.ndarray


def gauss_linear_objective(m: GaussLinearModel, x, y, eta, theta, logdet_fn: Callable) -> float:
    """Negative log of ``p(y | x, theta) p(x | eta) p(eta) p(theta)``.

    Uses the usual Gaussian normalizations (half log-determinants, half
    quadratic forms) and includes the ``2 pi`` constants.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Qx = m.prior_precision(eta)
    n = Qx.shape[0]
    if x.shape != (n,):
        raise ValueError(f"x has shape {x.shape}, prior precision is {n}x{n}")
    A = m.forward_matrix(theta, n)
    if A.shape != (len(y), n):
        raise ValueError(f"forward operator is {A.shape}, expected ({len(y)}, {n})")
    resid = y - A @ x
    dev = x - m.mean(n)
    return float(
        0.5 * resid @ m.noise_apply(resid)
        - 0.5 * m.noise_logdet(len(y), logdet_fn)
        + 0.5 * dev @ Qx.matvec(dev)
        - 0.5 * float(logdet_fn(Qx))
        - m.log_prior_eta(eta)
        - m.log_prior_theta(theta)
        + 0.5 * (len(y) + n) * LOG_2PI
    )


def posterior_mode(m: GaussLinearModel, y, eta, theta, cfg: SolverConfig = SolverConfig()) -> Posterior:
    """Posterior of ``x``: ``Q_p = Q_x + A^T Q1 A``, ``Q_p mu_p = Q_x mu + A^T Q1 y``."""
    y = np.asarray(y, dtype=float)
    Qx = m.prior_precision(eta)
    n = Qx.shape[0]
    A = m.forward_matrix(theta, n)
    if A.shape != (len(y), n):
        raise ValueError(f"forward operator is {A.shape}, expected ({len(y)}, {n})")
    q = m.noise_precision
    noise = q * sp.identity(len(y), format="csr") if np.isscalar(q) else _as_sparse(q)
    Qp = CsrMatrix.from_scipy(Qx.to_scipy() + A.T @ noise @ A, check=False)
    rhs = Qx.matvec(m.mean(n)) + A.T @ (noise @ y)
    return Posterior(precision=Qp, mean=cg_solve(Qp, rhs, cfg))


def sample_gmrf_dense(Q, size=1, random_state=None) -> np.ndarray:
    """Exact draws from ``N(0, Q^{-1})`` via a dense Cholesky factor (small ``n``)."""
    rng = np.random.default_rng(random_state)
    chol = np.linalg.cholesky(Q.toarray())
    z = rng.standard_normal((Q.shape[0], size))
    # Q = L L^T  =>  x = L^{-T} z has covariance Q^{-1}
    return solve_triangular(chol, z, lower=True, trans="T").T


def sample_spde(g: GridSpec, h: Hyperparams, size=1, random_state=None, tol=1e-10) -> np.ndarray:
    """Matrix-free draws using ``Q = B^T B`` with ``B = tau (kappa I + L)``."""
    rng = np.random.default_rng(random_state)
    B = build_operator(g, h)
    cfg = SolverConfig(rel_tol=tol, max_iter=50 * g.size)
    out = np.empty((size, g.size))
    for i in range(size):
        # B is SPD here, so CG applies directly
        out[i] = cg_solve(B, rng.standard_normal(g.size), cfg)
    return out
