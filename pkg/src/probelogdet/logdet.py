"""Log-determinant of SPD matrices: dense oracle, probing and Hutchinson estimators.

All stochastic and probing estimators go through ``log det Q = tr log Q``
with ``v^T log(Q) v`` computed by the rational quadrature and multi-shift CG.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .krylov import ConvergenceError, SolverConfig, apply_log, shifted_quadratic_forms
from .probing import Coloring, probing_matrix, probing_vectors
from .quadrature import (
    QuadratureRule,
    SpectralBounds,
    build_log_quadrature,
    choose_order,
    estimate_spectral_bounds,
)

DENSE_CAP = 4096
# Working-set cap for one block of probing vectors (elements of an n x B block).
_BLOCK_ELEMENTS = 1 << 20
_MAX_BLOCK = 64


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass
class LogDetEstimate:
    value: float
    method: str
    num_vectors: int = 0
    seed_iterations_total: int = 0
    quadrature_order: int | None = None
    bounds: tuple | None = None
    seed: int | None = None
    confidence: dict | None = None
    wall_time_s: float = 0.0
    iterations: np.ndarray | None = field(default=None, repr=False)

    def __float__(self):
        return float(self.value)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("iterations")
        return d


def default_threads() -> int:
    env = os.environ.get("PROBELOGDET_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def logdet_exact_dense(Q, cap: int = DENSE_CAP) -> float:
    """``sum 2 log L_jj`` from a dense Cholesky factor of ``Q``.

    Raises
    ------
    ValueError
        If ``Q.n`` exceeds ``cap``.
    NotPositiveDefiniteError
        If the factorization breaks down.
    """
    n = Q.shape[0]
    if n > cap:
        raise ValueError(f"dense log-determinant capped at n={cap}, got n={n}")
    dense = Q.toarray() if hasattr(Q, "toarray") else np.asarray(Q)
    try:
        chol = np.linalg.cholesky(dense)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    return float(2.0 * np.log(np.diagonal(chol)).sum())


def default_rule(Q, cfg: SolverConfig, bounds: SpectralBounds | None = None, order: int | None = None) -> QuadratureRule:
    """Quadrature rule sized for ``Q`` and the solver tolerance."""
    if bounds is None:
        bounds = estimate_spectral_bounds(Q)
    if order is None:
        order = choose_order(bounds, cfg.rel_tol)
    return build_log_quadrature(bounds, order)


def _block_size(n, requested):
    if requested:
        return int(requested)
    return int(np.clip(_BLOCK_ELEMENTS // max(n, 1), 1, _MAX_BLOCK))


def _log_forms(Q, V_blocks, rule, cfg, threads, iterations=None):
    """``v^T f_N(Q) v`` for every column, blocks run concurrently."""

    def work(item):
        idx, block, its, floor = item
        res = shifted_quadratic_forms(Q, block(), rule.sigma, cfg, iterations=its, min_iterations=floor)
        if its is None and not res.converged.all():
            raise ConvergenceError(
                f"probing block {idx}: {int((~res.converged).sum())} vectors did not converge",
                iterations=res.iterations,
            )
        return (res.forms @ rule.alpha).real, res.iterations

    if threads > 1 and len(V_blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, V_blocks))
    else:
        parts = [work(item) for item in V_blocks]
    values = np.concatenate([p[0] for p in parts])
    iters = np.concatenate([p[1] for p in parts])
    return values, iters


def logdet_probing(
    Q,
    c: Coloring,
    rule: QuadratureRule | None = None,
    cfg: SolverConfig = SolverConfig(),
    mode: str = "signed",
    seed: int = 0,
    threads: int | None = None,
    block_size: int | None = None,
    iterations=None,
    min_iterations=None,
    full_vectors: bool = False,
) -> LogDetEstimate:
    """Probing estimate ``sum_c v_c^T log(Q) v_c`` over the color classes.

    The probing vectors partition the coordinates, so no averaging factor
    appears. Blocks of vectors are dealt to ``threads`` workers; the block
    layout depends only on ``block_size`` and the partial values are reduced in
    color order, so the result does not depend on the thread count.

    Parameters
    ----------
    iterations : array_like of int, optional
        Per-vector Krylov dimensions to reuse (see ``LogDetEstimate.iterations``).
    min_iterations : array_like of int, optional
        Per-vector lower bounds on the Krylov dimension; the tolerance still
        decides when to stop beyond them.
    full_vectors : bool
        Form ``log(Q) v_c`` explicitly with :func:`apply_log` instead of the
        scalar quadratic-form recurrences. Slower; kept as a cross-check.
    """
    t0 = time.perf_counter()
    threads = threads or default_threads()
    if rule is None:
        rule = default_rule(Q, cfg)
    vecs = probing_vectors(c, mode=mode, seed=seed)
    n = Q.shape[0]
    if full_vectors:
        vals = np.array([v.to_dense(n) @ apply_log(Q, v.to_dense(n), rule, cfg) for v in vecs])
        iters = np.zeros(len(vecs), dtype=int)
    else:
        bs = _block_size(n, block_size)
        starts = range(0, len(vecs), bs)
        its = None if iterations is None else np.asarray(iterations)
        floor = None if min_iterations is None else np.asarray(min_iterations)
        items = [
            (
                i,
                (lambda s=s: probing_matrix(vecs, n, s, s + bs)),
                None if its is None else its[s : s + bs],
                None if floor is None else floor[s : s + bs],
            )
            for i, s in enumerate(starts)
        ]
        vals, iters = _log_forms(Q, items, rule, cfg, threads)
    return LogDetEstimate(
        value=float(np.sum(vals)),
        method=f"probing(k={c.k},{mode})",
        num_vectors=len(vecs),
        seed_iterations_total=int(iters.sum()),
        quadrature_order=rule.order,
        bounds=(rule.bounds.lambda_min, rule.bounds.lambda_max),
        seed=seed if mode == "signed" else None,
        wall_time_s=time.perf_counter() - t0,
        iterations=iters,
    )


def hoeffding_half_width(bounds: SpectralBounds, n: int, s: int, level: float) -> float:
    """Hoeffding half-width for the mean of ``s`` samples of ``v^T log(Q) v``.

    Each sample lies in ``[n log lmin, n log lmax]`` because ``v^T v = n``.
    """
    spread = n * (np.log(bounds.lambda_max) - np.log(bounds.lambda_min))
    return float(spread * np.sqrt(np.log(2.0 / (1.0 - level)) / (2.0 * s)))


def logdet_hutchinson(
    Q,
    s: int,
    rule: QuadratureRule | None = None,
    cfg: SolverConfig = SolverConfig(),
    seed: int = 0,
    level: float = 0.95,
    threads: int | None = None,
    block_size: int | None = None,
) -> LogDetEstimate:
    """Hutchinson estimate ``(1/s) sum_j v_j^T log(Q) v_j`` with Rademacher ``v_j``.

    ``confidence`` holds a normal-approximation half-width from the sample
    standard deviation and the distribution-free Hoeffding half-width.
    """
    if s < 1:
        raise ValueError("need at least one sample vector")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    t0 = time.perf_counter()
    threads = threads or default_threads()
    if rule is None:
        rule = default_rule(Q, cfg)
    n = Q.shape[0]
    signs = np.random.default_rng(seed).choice(np.array([-1.0, 1.0]), size=(n, s))
    bs = _block_size(n, block_size)
    items = [(i, (lambda a=a: signs[:, a : a + bs]), None, None) for i, a in enumerate(range(0, s, bs))]
    samples, iters = _log_forms(Q, items, rule, cfg, threads)
    mean = float(np.mean(samples))
    sd = float(np.std(samples, ddof=1)) if s > 1 else 0.0
    z = float(norm.ppf(0.5 + 0.5 * level))
    confidence = {
        "level": level,
        "std_error": sd / np.sqrt(s),
        "half_width": z * sd / np.sqrt(s),
        "hoeffding_half_width": hoeffding_half_width(rule.bounds, n, s, level),
    }
    return LogDetEstimate(
        value=mean,
        method=f"hutchinson(s={s})",
        num_vectors=s,
        seed_iterations_total=int(iters.sum()),
        quadrature_order=rule.order,
        bounds=(rule.bounds.lambda_min, rule.bounds.lambda_max),
        seed=seed,
        confidence=confidence,
        wall_time_s=time.perf_counter() - t0,
        iterations=iters,
    )
