"""Conjugate gradients and multi-shift conjugate gradients (CG-M / COCG-M).

For a real SPD seed system ``Q x = b`` the residuals of every shifted system
``(Q - sigma I) x = b`` are collinear with the seed residual,
``r_sigma = zeta_sigma * r``, because all systems share one Krylov space. The
scalars ``zeta`` obey a three-term recurrence driven by the seed CG
coefficients, so the whole shifted family costs one matrix-vector product per
iteration. Only the shifted iterates and directions are complex. With a real
seed the bilinear form ``x^T y`` of COCG coincides with the seed inner
product, so no conjugation ever appears.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_BREAKDOWN = 1e-300
# Shifts whose residual estimate falls below this (relative to |b|) are frozen
# to keep zeta from underflowing; far beneath any usable tolerance.
_UNDERFLOW_FREEZE = 1e-150


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the best iterate."""

    def __init__(self, message, x=None, residual=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-3
    max_iter: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class ShiftedSolveResult:
    solutions: np.ndarray
    shifts: np.ndarray
    seed_iterations: int
    residual_estimates: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    matvecs: int
    verify_matvecs: int = 0
    breakdown: np.ndarray = field(default=None)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _matvec(Q, x):
    return Q.matvec(x) if hasattr(Q, "matvec") else Q @ x


def cg_solve(Q, b, cfg: SolverConfig = SolverConfig(), return_info=False):
    """Solve ``Q x = b`` by unpreconditioned conjugate gradients.

    Returns ``x`` (and the iteration count when ``return_info`` is set). Stops
    once ``|b - Q x| <= rel_tol |b|``.

    Raises
    ------
    ConvergenceError
        After ``cfg.max_iter`` iterations; the exception holds the last iterate.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    target = cfg.rel_tol * np.sqrt(rr)
    it = 0
    while np.sqrt(rr) > target:
        if it >= cfg.max_iter:
            raise ConvergenceError(
                f"CG did not converge in {cfg.max_iter} iterations (residual {np.sqrt(rr):.3e})",
                x=x,
                residual=np.sqrt(rr),
                iterations=it,
            )
        ap = _matvec(Q, p)
        alpha = rr / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        p *= rr_new / rr
        p += r
        rr = rr_new
        it += 1
    return (x, it) if return_info else x


def _zeta_step(z, z_prev, alpha, alpha_prev, beta_prev, shifts):
    """Advance the shifted residual scale factors one CG step.

    Shifted matrix is ``Q - sigma I``; ``alpha`` and ``beta`` are the seed CG
    coefficients with ``r_{k+1} = r_k - alpha A p_k``.
    """
    den = alpha * beta_prev * (z_prev - z) + z_prev * alpha_prev * (1.0 - shifts * alpha)
    bad = np.abs(den) < _BREAKDOWN
    with np.errstate(divide="ignore", invalid="ignore"):
        z_next = z * z_prev * alpha_prev / np.where(bad, 1.0, den)
    return z_next, bad


def cocg_m_solve(Q, b, shifts, cfg: SolverConfig = SolverConfig(), callback=None, diagnostics=None, verify=True):
    """Solve ``(Q - sigma_l I) x_l = b`` for all shifts from one Krylov sequence.

    Parameters
    ----------
    Q : CsrMatrix or object with ``matvec``
        Real symmetric positive definite.
    b : array_like
        Real right-hand side.
    shifts : array_like of complex
        Shifts ``sigma_l``, off the spectrum of ``Q``.
    cfg : SolverConfig
    callback : callable, optional
        Called after every iteration as ``callback(k, r, zeta, x)`` with the
        seed residual, the residual factors and the shifted iterates.
    diagnostics : file-like, optional
        Receives one JSON line per iteration.
    verify : bool
        Recompute each true residual with one extra product per shift.

    Returns
    -------
    ShiftedSolveResult
        ``matvecs`` counts only the seed iteration products.
    """
    b = np.asarray(b, dtype=float)
    shifts = np.atleast_1d(np.asarray(shifts, dtype=complex))
    n, m = b.shape[0], len(shifts)
    bnorm = float(np.linalg.norm(b))
    target = cfg.rel_tol * bnorm

    r = b.copy()
    p = b.copy()
    rr = float(r @ r)
    x = np.zeros((m, n), dtype=complex)
    ps = np.tile(b.astype(complex), (m, 1))
    z = np.ones(m, dtype=complex)
    z_prev = np.ones(m, dtype=complex)
    alpha_prev, beta_prev = 1.0, 0.0
    active = np.ones(m, dtype=bool)
    broken = np.zeros(m, dtype=bool)
    est = np.full(m, bnorm)
    it = 0
    if bnorm == 0.0:
        active[:] = False

    while active.any() and it < cfg.max_iter:
        ap = _matvec(Q, p)
        alpha = rr / float(p @ ap)
        act = np.flatnonzero(active)
        z_next, bad = _zeta_step(z[act], z_prev[act], alpha, alpha_prev, beta_prev, shifts[act])
        ratio = z_next / z[act]
        x[act] += (alpha * ratio)[:, None] * ps[act]
        r -= alpha * ap
        rr_new = float(r @ r)
        beta = rr_new / rr
        ps[act] = z_next[:, None] * r + (beta * ratio * ratio)[:, None] * ps[act]
        p *= beta
        p += r
        z_prev[act] = z[act]
        z[act] = z_next
        alpha_prev, beta_prev, rr = alpha, beta, rr_new
        it += 1

        est[act] = np.abs(z_next) * np.sqrt(rr)
        broken[act[bad]] = True
        active[act] = (est[act] > target) & ~bad
        if callback is not None:
            callback(it, r, z.copy(), x)
        if diagnostics is not None:
            diagnostics.write(
                json.dumps(
                    {"iter": it, "seed_residual": float(np.sqrt(rr) / bnorm), "converged": int(m - active.sum())}
                )
                + "\n"
            )
        if np.sqrt(rr) <= 1e-15 * bnorm:
            break

    converged = (est <= target) & ~broken
    residuals = est.copy()
    verify_mv = 0
    if verify and m:
        qx = _matvec(Q, x.T).T
        verify_mv = m
        residuals = np.linalg.norm(b[None, :] - (qx - shifts[:, None] * x), axis=1)
        converged &= residuals <= target * (1.0 + 1e-8)
    logger.debug("cocg-m: %d iterations, %d/%d shifts converged", it, converged.sum(), m)
    return ShiftedSolveResult(
        solutions=x,
        shifts=shifts,
        seed_iterations=it,
        residual_estimates=est,
        residuals=residuals,
        converged=converged,
        matvecs=it,
        verify_matvecs=verify_mv,
        breakdown=broken,
    )


def apply_log(Q, v, rule, cfg: SolverConfig = SolverConfig(), return_info=False):
    """Approximate ``log(Q) v`` by ``Re sum_l alpha_l (Q - sigma_l I)^{-1} v``.

    Raises
    ------
    ConvergenceError
        If any shifted system misses the tolerance.
    """
    res = cocg_m_solve(Q, v, rule.sigma, cfg)
    if not res.all_converged:
        raise ConvergenceError(
            f"{int((~res.converged).sum())} of {len(rule.sigma)} shifted systems did not converge "
            f"in {res.seed_iterations} iterations",
            x=(rule.alpha[:, None] * res.solutions).sum(axis=0).real,
            residual=res.residuals,
            iterations=res.seed_iterations,
        )
    out = (rule.alpha[:, None] * res.solutions).sum(axis=0).real
    return (out, res) if return_info else out


@dataclass
class QuadraticFormResult:
    """``V[:, j]^T (Q - sigma_l I)^{-1} V[:, j]`` for every column and shift."""

    forms: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    matvecs: int


def shifted_quadratic_forms(Q, V, shifts, cfg: SolverConfig = SolverConfig(), iterations=None, min_iterations=None):
    """Multi-shift CG restricted to the quadratic forms ``b^T x_l``.

    Each column of ``V`` is an independent right-hand side ``b``. Tracking
    ``b^T x_l`` and ``b^T p_l`` needs only scalar recurrences, so besides the
    seed CG block no shifted vectors are stored.

    Parameters
    ----------
    V : ndarray, shape (n, B)
    shifts : array_like of complex, length N
    iterations : array_like of int, optional
        Run exactly this many seed iterations per column instead of stopping on
        the tolerance. Makes the result a smooth function of ``Q`` for a fixed
        Krylov dimension.
    min_iterations : array_like of int, optional
        Stop on the tolerance, but never before this many seed iterations.

    Returns
    -------
    QuadraticFormResult
        ``forms`` has shape ``(B, N)``.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    shifts = np.asarray(shifts, dtype=complex)[:, None]
    nb, ns = V.shape[1], shifts.shape[0]
    fixed = iterations is not None
    if fixed:
        iterations = np.broadcast_to(np.asarray(iterations, dtype=int), (nb,))
    floor = np.zeros(nb, dtype=int)
    if min_iterations is not None:
        floor = np.broadcast_to(np.asarray(min_iterations, dtype=int), (nb,))

    forms = np.zeros((nb, ns), dtype=complex)
    iters_out = np.zeros(nb, dtype=int)
    conv_out = np.zeros(nb, dtype=bool)

    cols = np.arange(nb)
    R = V.copy()
    P = V.copy()
    rr = np.einsum("ij,ij->j", R, R)
    bnorm = np.sqrt(rr)
    target = cfg.rel_tol * bnorm
    freeze = _UNDERFLOW_FREEZE * bnorm
    vx = np.zeros((ns, nb), dtype=complex)
    vp = np.tile(rr.astype(complex), (ns, 1))
    z = np.ones((ns, nb), dtype=complex)
    z_prev = np.ones((ns, nb), dtype=complex)
    alpha_prev = np.ones(nb)
    beta_prev = np.zeros(nb)
    live = np.ones((ns, nb), dtype=bool)
    ok = np.ones(nb, dtype=bool)
    it = 0
    matvecs = 0

    def retire(mask):
        nonlocal cols, R, P, V, rr, bnorm, target, freeze, est, vx, vp, z, z_prev, alpha_prev, beta_prev, live, ok
        done = cols[mask]
        forms[done] = vx[:, mask].T
        iters_out[done] = it
        conv_out[done] = ok[mask] & (est[mask] <= target[mask])
        keep = ~mask
        cols, R, P, V = cols[keep], R[:, keep], P[:, keep], V[:, keep]
        rr, bnorm, target, freeze, est = rr[keep], bnorm[keep], target[keep], freeze[keep], est[keep]
        vx, vp, z, z_prev, live = vx[:, keep], vp[:, keep], z[:, keep], z_prev[:, keep], live[:, keep]
        alpha_prev, beta_prev, ok = alpha_prev[keep], beta_prev[keep], ok[keep]

    est = bnorm.copy()
    live[:, bnorm == 0.0] = False
    while len(cols):
        if fixed:
            finished = iterations[cols] <= it
        else:
            settled = ((est <= target) | ~live.any(axis=0)) & (floor[cols] <= it)
            finished = settled | (np.sqrt(rr) <= 1e-15 * bnorm)
            if it >= cfg.max_iter:
                finished[:] = True
        if finished.any():
            retire(finished)
            if not len(cols):
                break
        AP = _matvec(Q, P)
        matvecs += 1
        alpha = rr / np.einsum("ij,ij->j", P, AP)
        z_next, bad = _zeta_step(z, z_prev, alpha, alpha_prev, beta_prev, shifts)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(live & ~bad, z_next / z, 0.0)
        vx = np.where(live, vx + alpha * ratio * vp, vx)
        R -= alpha * AP
        rr_new = np.einsum("ij,ij->j", R, R)
        vr = np.einsum("ij,ij->j", V, R)
        beta = rr_new / rr
        vp = np.where(live, z_next * vr + beta * ratio * ratio * vp, vp)
        P *= beta
        P += R
        z_prev = np.where(live, z, z_prev)
        z = np.where(live & ~bad, z_next, z)
        ok &= ~(bad & live).any(axis=0)
        live &= ~bad
        alpha_prev, beta_prev, rr = alpha, beta, rr_new
        it += 1
        zr = np.abs(z) * np.sqrt(rr)
        est = np.where(live, zr, 0.0).max(axis=0)
        live &= zr > freeze
    return QuadraticFormResult(forms=forms, iterations=iters_out, converged=conv_out, matvecs=matvecs)
