"""Shared numerical helpers: guarded adaptive quadrature and a vectorised golden-section search."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from .errors import QuadratureNotConverged

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

QUAD_EPSABS = 1e-30
QUAD_EPSREL = 1e-6


def quad(f, a, b, *, points=None, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200):
    """``scipy.integrate.quad`` that raises instead of warning on non-convergence."""
    if points is not None:
        points = sorted(p for p in points if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                f, a, b, points=points or None, epsabs=epsabs, epsrel=epsrel, limit=limit
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureNotConverged(str(exc)) from exc
    # quad's error estimate is conservative; allow a factor 10 of slack
    if abserr > 10.0 * max(epsabs, epsrel * abs(value)):
        raise QuadratureNotConverged(
            f"estimated error {abserr:.3e} exceeds target for value {value:.6e}"
        )
    return value


def golden_section_min(f, lo, hi, tol):
    """Minimise ``f`` elementwise on the brackets ``[lo, hi]``.

    ``f`` must accept an array of abscissae (same shape as ``lo``) and return
    metric values of that shape. All brackets are iterated together for the
    number of steps the widest one needs to shrink below ``tol``.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    width = float(np.max(b - a)) if a.size else 0.0
    if width <= tol:
        return 0.5 * (a + b)
    n_iter = int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))
    for _ in range(n_iter):
        c = b - INV_PHI * (b - a)
        d = a + INV_PHI * (b - a)
        left = f(c) < f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return 0.5 * (a + b)
