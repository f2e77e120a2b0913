"""Shared oracles for the test suite.

The quadrature oracles evaluate the wall-aware density straight from its
defining integral (log-space integrand, scipy adaptive quadrature), fully
independent of the closed forms under test.
"""

import numpy as np
import pytest
from scipy import integrate


def quad_pdf(x, nu, D, L, x0, t, ratio=None, side="right"):
    """Wall density by adaptive quadrature of the defining integral.

    ratio = alpha/beta (None = absorbing). Mirrors left-side problems.
    """
    if side == "left":
        return quad_pdf(-x, -nu, D, -L, -x0, t,
                        None if ratio is None else -ratio, "right")
    s2 = 4.0 * D * t
    norm = np.sqrt(np.pi * s2)
    p1 = np.exp(-(x - x0 - nu * t) ** 2 / s2) / norm
    xR = 2.0 * L - x0
    k = (nu / D) * (L - x0)
    p2 = np.exp(k - (x - xR - nu * t) ** 2 / s2) / norm
    if ratio is None:
        return p1 - p2
    K = ratio + nu / (2.0 * D)

    def integrand(eta):
        return np.exp(-ratio * (eta - xR) + k - (x - eta - nu * t) ** 2 / s2) / norm

    val, _ = integrate.quad(integrand, xR, np.inf, epsabs=1e-15,
                            epsrel=1e-13, limit=500)
    return p1 + p2 - 2.0 * K * val


def quad_mass(nu, D, L, x0, t, ratio=None, lo=None):
    """In-domain mass of quad_pdf by an outer adaptive quadrature."""
    if lo is None:
        lo = min(x0, L) - (12.0 * np.sqrt(2.0 * D * t) + abs(nu) * t + 5.0 * D / max(abs(nu), 1e-12))
    val, _ = integrate.quad(lambda y: quad_pdf(y, nu, D, L, x0, t, ratio),
                            lo, L, epsabs=1e-13, epsrel=1e-11, limit=500)
    return val


def weighted_ks(xs, ws, cdf_at, grid):
    """Sup distance between the weighted empirical CDF and cdf_at(grid)."""
    order = np.argsort(xs)
    xs, ws = xs[order], ws[order]
    cw = np.cumsum(ws) / ws.sum()
    idx = np.searchsorted(xs, grid, side="right")
    emp = np.where(idx == 0, 0.0, cw[np.maximum(idx - 1, 0)])
    return float(np.max(np.abs(emp - np.asarray(cdf_at))))


def ks_critical(n, level_const=1.63):
    """One-sample KS critical distance (1.63 -> 1% level)."""
    return level_const / np.sqrt(n)


class StubRng:
    """Deterministic stand-in feeding scripted uniforms and normals."""

    def __init__(self, uniforms=(), normals=()):
        self.u = list(uniforms)
        self.n = list(normals)

    def random(self, size=None):
        if size is None:
            return self.u.pop(0)
        return np.array([self.u.pop(0) for _ in range(int(size))])

    def standard_normal(self, size=None):
        if size is None:
            return self.n.pop(0)
        return np.array([self.n.pop(0) for _ in range(int(size))])


@pytest.fixture
def stub_rng():
    return StubRng
