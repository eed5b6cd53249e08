"""Precision matrices for the SPDE tau (kappa - Laplacian) u = white noise.

The field lives on a regular 2D or 3D grid with unit spacing and nodes in
row-major (C) order. With ``L`` the finite-difference negative Laplacian, the
precision is ``Q = tau^2 (kappa I + L)^T (kappa I + L)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .quadrature import SpectralBounds
from .sparse import CsrMatrix

BOUNDARIES = ("neumann", "dirichlet")


@dataclass(frozen=True)
class GridSpec:
    """Regular grid: per-axis node counts and boundary condition."""

    extents: tuple
    boundary: str = "neumann"

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extents)
        object.__setattr__(self, "extents", ext)
        if len(ext) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {len(ext)} axes")
        if min(ext) < 2:
            raise ValueError(f"every grid extent must be >= 2, got {ext}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @classmethod
    def parse(cls, text: str, boundary: str = "neumann") -> GridSpec:
        """Parse ``"64x64"`` or ``"50x50x50"``."""
        try:
            ext = tuple(int(p) for p in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"bad grid spec {text!r}, expected e.g. 64x64") from None
        return cls(ext, boundary)

    @property
    def dims(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    def __str__(self):
        return "x".join(map(str, self.extents))


@dataclass(frozen=True)
class Hyperparams:
    """Range parameter ``kappa`` and precision scale ``tau``, both positive."""

    kappa: float
    tau: float

    def __post_init__(self):
        for name in ("kappa", "tau"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @classmethod
    def from_log(cls, theta) -> Hyperparams:
        return cls(float(np.exp(theta[0])), float(np.exp(theta[1])))

    def to_log(self) -> np.ndarray:
        return np.log([self.kappa, self.tau])


def _laplacian_1d(m, boundary):
    main = np.full(m, 2.0)
    if boundary == "neumann":
        main[0] = main[-1] = 1.0
    off = -np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def negative_laplacian(g: GridSpec) -> sp.csr_matrix:
    """Unit-spacing 5-point (2D) or 7-point (3D) negative Laplacian."""
    eyes = [sp.identity(m, format="csr") for m in g.extents]
    terms = []
    for axis, m in enumerate(g.extents):
        factors = list(eyes)
        factors[axis] = _laplacian_1d(m, g.boundary)
        terms.append(reduce(lambda a, b: sp.kron(a, b, format="csr"), factors))
    lap = reduce(lambda a, b: a + b, terms).tocsr()
    lap.sort_indices()
    return lap


def _operator(g: GridSpec, kappa: float) -> sp.csr_matrix:
    return (kappa * sp.identity(g.size, format="csr") + negative_laplacian(g)).tocsr()


def build_precision(g: GridSpec, h: Hyperparams) -> CsrMatrix:
    """Assemble ``Q = tau^2 (kappa I + L)^2`` as a :class:`CsrMatrix`."""
    if not isinstance(h, Hyperparams):
        h = Hyperparams(*h)
    a = _operator(g, h.kappa)
    q = (h.tau**2) * (a.T @ a)
    return CsrMatrix.from_scipy(q, check=False)


def build_operator(g: GridSpec, h: Hyperparams) -> CsrMatrix:
    """The first-order factor ``tau (kappa I + L)``; its square is the precision."""
    return CsrMatrix.from_scipy(h.tau * _operator(g, h.kappa), check=False)


def laplacian_eigen_range(g: GridSpec):
    """Exact smallest and largest eigenvalue of the negative Laplacian."""
    lo = hi = 0.0
    for m in g.extents:
        if g.boundary == "neumann":
            lam = 2.0 - 2.0 * np.cos(np.pi * np.arange(m) / m)
        else:
            lam = 2.0 - 2.0 * np.cos(np.pi * np.arange(1, m + 1) / (m + 1))
        lo += lam.min()
        hi += lam.max()
    return lo, hi


def precision_spectral_bounds(g: GridSpec, h: Hyperparams, margin: float = 0.0) -> SpectralBounds:
    """Exact spectral interval of ``Q(kappa, tau)``, optionally widened."""
    lo, hi = laplacian_eigen_range(g)
    t2 = h.tau**2
    return SpectralBounds(t2 * (h.kappa + lo) ** 2 / (1.0 + margin), t2 * (h.kappa + hi) ** 2 * (1.0 + margin))


def precision_dlogdet_dtau(g: GridSpec, h: Hyperparams) -> float:
    """``d log det Q / d tau = 2 n / tau`` since ``Q`` is proportional to ``tau^2``."""
    if not isinstance(h, Hyperparams):
        h = Hyperparams(*h)
    return 2.0 * g.size / h.tau
