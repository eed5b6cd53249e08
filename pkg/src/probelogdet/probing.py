"""Distance-k graph colorings and the probing vectors they generate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import AdjacencyGraph, CsrMatrix

MODES = ("signed", "indicator")


@dataclass(frozen=True)
class Coloring:
    """Assignment of nodes to colors such that equal colors are more than ``k`` apart."""

    k: int
    color_of: np.ndarray
    num_colors: int

    @property
    def n(self) -> int:
        return len(self.color_of)

    def classes(self):
        """Node index arrays, one per color, in color order."""
        order = np.argsort(self.color_of, kind="stable")
        counts = np.bincount(self.color_of, minlength=self.num_colors)
        return np.split(order, np.cumsum(counts)[:-1])


@dataclass(frozen=True)
class ProbingVector:
    """Sparse vector supported on one color class with entries of magnitude one."""

    color: int
    mode: str
    support: np.ndarray
    signs: np.ndarray

    def to_dense(self, n: int) -> np.ndarray:
        v = np.zeros(n)
        v[self.support] = self.signs
        return v


def color_distance_k(G: AdjacencyGraph, k: int) -> Coloring:
    """Greedy distance-``k`` coloring in natural node order.

    Each node gets the smallest color not used inside its radius-``k`` ball.
    The ball is found by breadth-first search, so no power of the matrix is
    ever formed.
    """
    if isinstance(G, CsrMatrix):
        G = G.graph()
    if k < 1:
        raise ValueError(f"coloring distance must be >= 1, got {k}")
    n = G.n
    color = np.full(n, -1, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    ncol = 0
    for i in range(n):
        levels = G.bfs_levels(i, k, mark)
        taken = np.zeros(ncol + 1, dtype=bool)
        if len(levels) > 1:
            used = color[np.concatenate(levels[1:])]
            taken[used[used >= 0]] = True
        c = int(np.argmin(taken))
        color[i] = c
        ncol = max(ncol, c + 1)
    return Coloring(k=k, color_of=color, num_colors=ncol)


def is_valid_coloring(G: AdjacencyGraph, c: Coloring) -> bool:
    """Check that no two nodes of equal color lie within distance ``c.k``."""
    mark = np.full(G.n, -1, dtype=np.int64)
    for i in range(G.n):
        ball = np.concatenate(G.bfs_levels(i, c.k, mark)[1:] or [np.empty(0, dtype=int)])
        if np.any(c.color_of[ball] == c.color_of[i]):
            return False
    return True


def probing_vectors(c: Coloring, mode: str = "signed", seed: int = 0):
    """One probing vector per color.

    ``indicator`` vectors are the 0/1 indicators of the color classes.
    ``signed`` vectors carry independent Rademacher signs drawn from ``seed``,
    which makes the probing trace estimate unbiased.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "signed":
        signs = np.random.default_rng(seed).choice(np.array([-1.0, 1.0]), size=c.n)
    else:
        signs = np.ones(c.n)
    return [
        ProbingVector(color=j, mode=mode, support=cls, signs=signs[cls])
        for j, cls in enumerate(c.classes())
    ]


def probing_matrix(vectors, n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Dense ``(n, m)`` block holding vectors ``start:stop``."""
    vecs = vectors[start:stop]
    out = np.zeros((n, len(vecs)))
    for j, v in enumerate(vecs):
        out[v.support, j] = v.signs
    return out


def estimate_probing_distance(Q: CsrMatrix, eps: float, sample_nodes=None, apply_logQ=None, seed: int = 0) -> int:
    """Largest graph distance at which ``log(Q)`` entries still exceed ``eps``.

    For each sample node ``j`` the column ``w = log(Q) e_j`` is computed and the
    rings of the graph around ``j`` are scanned outward until the first ring
    whose entries are all below ``eps`` in magnitude. The maximum of those
    distances over the samples, minus one, is returned.

    Parameters
    ----------
    Q : CsrMatrix
    eps : float
        Magnitude threshold, must be positive.
    sample_nodes : sequence of int, optional
        Defaults to the middle node plus two random nodes drawn from ``seed``.
    apply_logQ : callable, optional
        ``v -> log(Q) v``. Defaults to the quadrature + multi-shift Krylov
        route with a tight solver tolerance.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = Q.n
    if sample_nodes is None:
        rng = np.random.default_rng(seed)
        sample_nodes = [n // 2, *rng.choice(n, size=min(2, n), replace=False).tolist()]
    if apply_logQ is None:
        apply_logQ = _default_log_operator(Q)
    G = Q.graph()
    best = 0
    for j in sample_nodes:
        e = np.zeros(n)
        e[j] = 1.0
        w = np.abs(np.asarray(apply_logQ(e)))
        if w[j] < eps:
            raise ValueError(
                f"eps={eps:g} exceeds |log(Q)_jj|={w[j]:.3g} at node {j}; the distance heuristic is degenerate"
            )
        levels = G.bfs_levels(j, n)
        dist = len(levels)
        for d, ring in enumerate(levels):
            if len(ring) == 0 or w[ring].max() < eps:
                dist = d
                break
        best = max(best, dist)
    return best - 1


def _default_log_operator(Q):
    from .krylov import SolverConfig, apply_log
    from .quadrature import build_log_quadrature, choose_order, estimate_spectral_bounds

    cfg = SolverConfig(rel_tol=1e-8, max_iter=10 * Q.n + 100)
    bounds = estimate_spectral_bounds(Q, iters=max(10, min(Q.n, 200)))
    rule = build_log_quadrature(bounds, choose_order(bounds, cfg.rel_tol))
    return lambda v: apply_log(Q, v, rule, cfg)
