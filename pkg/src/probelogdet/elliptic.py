"""Complete elliptic integrals and Jacobi elliptic functions.

Everything here is computed with the arithmetic-geometric mean. The Jacobi
functions accept complex arguments through the imaginary transformation and
the addition theorems, which is what the conformal-map quadrature needs.
"""

import numpy as np

_AGM_TOL = 1e-16
_AGM_MAXSTEPS = 64


def agm(a, b):
    """Arithmetic-geometric mean of two nonnegative reals."""
    a, b = float(a), float(b)
    for _ in range(_AGM_MAXSTEPS):
        if abs(a - b) <= _AGM_TOL * a:
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    return a


def ellipk(m, m1=None):
    """Complete elliptic integral of the first kind, K(m) = pi / (2 agm(1, sqrt(1-m))).

    Parameters
    ----------
    m : float
        Parameter (modulus squared), 0 <= m < 1.
    m1 : float, optional
        Complementary parameter 1 - m. Pass it explicitly when m is close to 1
        to avoid the cancellation in 1 - m.
    """
    if m1 is None:
        m1 = 1.0 - m
    if not (0.0 <= m <= 1.0) or m1 <= 0.0:
        raise ValueError(f"parameter must satisfy 0 <= m < 1, got m={m!r}")
    return np.pi / (2.0 * agm(1.0, np.sqrt(m1)))


def _ellipj_real(u, m, m1):
    """sn, cn, dn for real u by descending Landen (AGM) recursion."""
    u = np.asarray(u, dtype=float)
    a, b, c = 1.0, np.sqrt(m1), np.sqrt(m)
    a_list, c_list = [a], [c]
    for _ in range(_AGM_MAXSTEPS):
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        a_list.append(a)
        c_list.append(c)
        if abs(c) <= _AGM_TOL * a:
            break
    nsteps = len(a_list) - 1
    phi = (2.0**nsteps) * a_list[-1] * u
    phi_next = phi
    for i in range(nsteps, 0, -1):
        phi_next = phi
        phi = 0.5 * (phi + np.arcsin(c_list[i] / a_list[i] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    denom = np.cos(phi_next - phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        dn = np.where(np.abs(denom) > 1e-8, cn / denom, np.sqrt(np.maximum(1.0 - m * sn * sn, 0.0)))
    return sn, cn, dn


def ellipj(u, m, m1=None):
    """Jacobi elliptic functions sn, cn, dn with parameter m.

    Complex ``u`` is supported. With u = x + iy the functions are assembled
    from real evaluations at x (parameter m) and y (parameter 1 - m).

    Returns
    -------
    sn, cn, dn : ndarray
        Same shape as ``u``; complex if ``u`` is complex.
    """
    if m1 is None:
        m1 = 1.0 - m
    u = np.asarray(u)
    if not np.iscomplexobj(u):
        return _ellipj_real(u, m, m1)
    s, c, d = _ellipj_real(u.real, m, m1)
    s1, c1, d1 = _ellipj_real(u.imag, m1, m)
    den = c1 * c1 + m * s * s * s1 * s1
    sn = (s * d1 + 1j * c * d * s1 * c1) / den
    cn = (c * c1 - 1j * s * d * s1 * d1) / den
    dn = (d * c1 * d1 - 1j * m * s * c * s1) / den
    return sn, cn, dn
