"""Modified-Newton fitting of (kappa, tau) with escalating probing distance.

The optimization runs in ``(log kappa, log tau)``. Derivatives are central
finite differences. Because ``Q(kappa, tau) = tau^2 Q(kappa, 1)``, the
log-determinant is evaluated as ``2 n log tau + log det Q(kappa, 1)``, so a
finite-difference stencil needs estimates at three values of kappa only.
Within one stencil, and during the line search, the Krylov dimension of every
probing vector is frozen at the value found at the current iterate; otherwise a
change of one iteration in some solve would show up as noise amplified by
``1/h^2`` or would decide the Armijo test. Across iterates of one phase the
dimensions only ever grow, so the phase objective settles into a single smooth
function after finitely many changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .krylov import SolverConfig
from .likelihood import LOG_2PI, quadratic_form
from .logdet import logdet_exact_dense, logdet_probing
from .probing import color_distance_k
from .quadrature import build_log_quadrature, choose_order
from .spde import GridSpec, Hyperparams, build_precision, precision_spectral_bounds

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 30
MAX_STEP = 2.0
# Finite differences with step h need objective noise far below h^2 |phi''|.
# The noise of a probing estimate scales with the Krylov tolerance (about
# 1e-9 relative at 1e-3), so fits solve more tightly than single estimates.
FIT_SOLVER_TOL = 1e-7


def parse_schedule(text: str):
    """``"2:20,4:10,6:10"`` -> ``[(2, 20), (4, 10), (6, 10)]``."""
    out = []
    for part in text.split(","):
        k, _, budget = part.strip().partition(":")
        out.append((int(k), int(budget) if budget else 20))
    return validate_schedule(out)


def validate_schedule(schedule):
    schedule = [(int(k), int(b)) for k, b in schedule]
    if not schedule:
        raise ValueError("schedule must contain at least one phase")
    ks = [k for k, _ in schedule]
    if any(k < 1 for k in ks) or ks != sorted(ks):
        raise ValueError(f"schedule distances must be positive and ascending, got {ks}")
    if any(b < 1 for _, b in schedule):
        raise ValueError("every phase needs an iteration budget >= 1")
    return schedule


@dataclass
class OptimizerTrace:
    """Every accepted iterate plus a summary per schedule phase."""

    iterates: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    termination: str = ""

    def to_dict(self):
        return {"iterates": self.iterates, "phases": self.phases, "termination": self.termination}


class _LogDetCurve:
    """``kappa -> log det Q(kappa, 1)`` for one phase of the fit."""

    def __init__(self, g, method, k, cfg, mode, seed, threads, margin=0.05):
        self.g = g
        self.method = method
        self.k = k
        self.cfg = cfg
        self.mode = mode
        self.seed = seed
        self.threads = threads
        self.margin = margin
        self.order = None
        self.coloring = None
        self.stats = {}

    def _rule(self, kappa):
        bounds = precision_spectral_bounds(self.g, Hyperparams(kappa, 1.0), self.margin)
        if self.order is None:
            self.order = choose_order(bounds, self.cfg.rel_tol)
        return build_log_quadrature(bounds, self.order)

    def __call__(self, kappa, iterations=None, min_iterations=None):
        Q = build_precision(self.g, Hyperparams(kappa, 1.0))
        if self.method == "exact":
            self.stats = {"method": "exact-dense"}
            return logdet_exact_dense(Q), None
        if self.coloring is None:
            self.coloring = color_distance_k(Q.graph(), self.k)
        est = logdet_probing(
            Q,
            self.coloring,
            rule=self._rule(kappa),
            cfg=self.cfg,
            mode=self.mode,
            seed=self.seed,
            threads=self.threads,
            iterations=iterations,
            min_iterations=min_iterations,
        )
        self.stats = {
            "method": est.method,
            "num_vectors": est.num_vectors,
            "seed_iterations_total": est.seed_iterations_total,
            "quadrature_order": est.quadrature_order,
        }
        return est.value, est.iterations


class _Objective:
    """Negative log-likelihood as a function of ``theta = (log kappa, log tau)``."""

    def __init__(self, X, g, curve):
        self.X = X
        self.g = g
        self.curve = curve
        self.r, self.n = X.shape

    def _quad(self, kappa):
        # x^T Q(kappa, 1) x; the tau^2 factor is applied by the caller
        return quadratic_form(build_precision(self.g, Hyperparams(kappa, 1.0)), self.X)

    def value(self, theta, ld, quad):
        lk, lt = theta
        logdet = 2.0 * self.n * lt + ld
        return -0.5 * self.r * logdet + 0.5 * np.exp(2.0 * lt) * quad + 0.5 * self.r * self.n * LOG_2PI

    def evaluate(self, theta, iterations=None, min_iterations=None):
        ld, its = self.curve(float(np.exp(theta[0])), iterations, min_iterations)
        quad = self._quad(float(np.exp(theta[0])))
        return self.value(theta, ld, quad), ld, quad, its

    def derivatives(self, theta, center, h):
        """Central-difference gradient and Hessian around ``theta``."""
        _, ld0, q0, its = center
        lk, lt = theta
        ld = {0: ld0}
        q = {0: q0}
        for s in (-1, 1):
            ld[s], _ = self.curve(float(np.exp(lk + s * h)), its)
            q[s] = self._quad(float(np.exp(lk + s * h)))

        def f(a, b):
            return self.value((lk + a * h, lt + b * h), ld[a], q[a])

        f0 = f(0, 0)
        grad = np.array([(f(1, 0) - f(-1, 0)) / (2 * h), (f(0, 1) - f(0, -1)) / (2 * h)])
        hkk = (f(1, 0) - 2 * f0 + f(-1, 0)) / h**2
        htt = (f(0, 1) - 2 * f0 + f(0, -1)) / h**2
        hkt = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * h**2)
        return grad, np.array([[hkk, hkt], [hkt, htt]])


def _newton_direction(grad, hess):
    vals, vecs = np.linalg.eigh(0.5 * (hess + hess.T))
    floor = 1e-6 * np.max(np.abs(vals))
    vals = np.maximum(np.abs(vals), floor)
    d = -(vecs @ ((vecs.T @ grad) / vals))
    norm = np.linalg.norm(d)
    return d * (MAX_STEP / norm) if norm > MAX_STEP else d


def fit_hyperparams(
    x_obs,
    g: GridSpec,
    init: Hyperparams,
    schedule=((2, 20), (4, 10), (6, 10)),
    cfg: SolverConfig = SolverConfig(rel_tol=FIT_SOLVER_TOL),
    method: str = "probing",
    mode: str = "signed",
    seed: int = 0,
    phase_tol: float = 1e-3,
    final_tol: float = 1e-5,
    fd_step: float = 1e-4,
    threads: int | None = None,
):
    """Maximize the GMRF likelihood of ``x_obs`` over ``(kappa, tau)``.

    Each phase of ``schedule`` is ``(k, max_iter)``: the log-determinant uses a
    distance-``k`` probing coloring with its own frozen seed. A phase ends when
    the gradient norm drops below ``phase_tol`` (``final_tol`` for the last
    phase) or its budget runs out. With ``method="exact"`` the dense Cholesky
    log-determinant is used in a single phase holding the summed budget.

    Returns
    -------
    Hyperparams, OptimizerTrace
    """
    X = np.asarray(x_obs, dtype=float)
    X = X[None, :] if X.ndim == 1 else X
    if X.shape[1] != g.size:
        raise ValueError(f"data has {X.shape[1]} values per field, grid has {g.size}")
    if method not in ("probing", "exact"):
        raise ValueError(f"method must be 'probing' or 'exact', got {method!r}")
    schedule = validate_schedule(schedule)
    if method == "exact":
        schedule = [(None, sum(b for _, b in schedule))]

    trace = OptimizerTrace()
    theta = np.asarray(init.to_log(), dtype=float)
    for phase, (k, budget) in enumerate(schedule):
        last = phase == len(schedule) - 1
        tol = final_tol if last else phase_tol
        curve = _LogDetCurve(g, method, k, cfg, mode, seed + phase, threads)
        obj = _Objective(X, g, curve)
        center = obj.evaluate(theta)
        reason = "budget"
        gnorm = np.inf
        it = 0
        for it in range(budget + 1):
            grad, hess = obj.derivatives(theta, center, fd_step)
            gnorm = float(np.linalg.norm(grad))
            h = Hyperparams.from_log(theta)
            trace.iterates.append(
                {
                    "phase": phase,
                    "k": k,
                    "kappa": h.kappa,
                    "tau": h.tau,
                    "objective": float(center[0]),
                    "grad_norm": gnorm,
                    "logdet": dict(curve.stats),
                }
            )
            logger.info("phase %d k=%s it %d: kappa=%.6g tau=%.6g phi=%.10g |g|=%.3g",
                        phase, k, it, h.kappa, h.tau, center[0], gnorm)
            if gnorm < tol:
                reason = "converged"
                break
            if it == budget:
                break
            d = _newton_direction(grad, hess)
            slope = float(grad @ d)
            t = 1.0
            # trials reuse the center's Krylov dimensions so that the Armijo
            # test compares values of one smooth function
            for _ in range(MAX_BACKTRACKS):
                trial = obj.evaluate(theta + t * d, center[3])
                if trial[0] <= center[0] + ARMIJO_C * t * slope:
                    break
                t *= BACKTRACK
            else:
                reason = "line_search_failed"
                break
            theta = theta + t * d
            # ratchet: Krylov dimensions only grow within a phase, so the
            # objective changes finitely often and Newton can settle
            center = obj.evaluate(theta, min_iterations=center[3]) if method == "probing" else trial
        h = Hyperparams.from_log(theta)
        trace.phases.append(
            {
                "phase": phase,
                "k": k,
                "kappa": h.kappa,
                "tau": h.tau,
                "objective": float(center[0]),
                "grad_norm": gnorm,
                "iterations": it,
                "reason": reason,
            }
        )
    trace.termination = trace.phases[-1]["reason"]
    return Hyperparams.from_log(theta), trace
