"""Exact transition density of 1D advection-diffusion next to a single wall.

For constant drift nu and diffusion D on the half-line ]-inf, L] with a Robin
wall  alpha*p(L,t) + beta*dp/dx(L,t) = 0  and a point source at x0, the
density splits into three parts:

    p(x,t) = direct(x) + image(x) + boundary(x)

    direct   = U(x,t,x0)                         free kernel from the source
    image    = k * U(x,t,xR)                     mirror source at xR = 2L - x0
    boundary = -2 (c + nu/2D) k *
               int_{xR}^inf exp(-c (eta - xR)) U(x,t,eta) d(eta)

with k = exp((nu/D)(L - x0)), c = alpha/beta and the free kernel
U(x,t,eta) = exp(-(x - eta - nu t)^2 / 4Dt) / sqrt(4 pi D t).  The integral
collapses to a scaled-complementary-error-function product by completing the
square, which is how it is evaluated here (no quadrature at runtime).  A
purely absorbing wall (beta = 0) degenerates to  direct - image.

Sign conventions matter: the boundary term must carry the prefactor
-2(c + nu/2D) and proposal rate -c for the solution to satisfy its own Robin
condition and to conserve mass for the zero-flux wall c = -nu/D.  Both are
verified against adaptive quadrature, finite-difference PDE/BC residuals and
mass conservation in the test suite.  With drift toward the wall the boundary
term is positive and, at late times, carries the stationary boundary layer
(nu/D) exp((nu/D)(x - L)); with drift away from the wall it is negative.

Only flux-outward walls are supported: c >= -nu/D (anything smaller injects
probability mass at the wall, which has no particle-weight interpretation).

All evaluations combine exponents before a single exp and route negative
erfcx arguments through the reflection identity, so nothing overflows even
for (nu/D)(L - x0) in the hundreds.  Left-hand walls are handled by the exact
mirror map x -> -x, nu -> -nu, c -> -c.

Every function broadcasts over array-valued parameters; a GreenParams may
hold one boundary problem per particle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

from .errors import DomainError, NumericalError, ParameterError

__all__ = [
    "GreenParams",
    "free_kernel",
    "pdf",
    "pdf_terms",
    "survival_mass",
    "mass_split",
    "boundary_term_mass_below",
    "boundary_term_quantile",
]

_SQRT_PI = np.sqrt(np.pi)
_TWO_OVER_SQRT_PI = 2.0 / _SQRT_PI
# bisection sweeps for the boundary-term quantile; 52 halvings of the O(1)
# bracket localize the position to ~1 ulp of the wall coordinate
_BISECT_SWEEPS = 52


# ===================================================================
# Parameters
# ===================================================================
@dataclass(frozen=True, eq=False)
class GreenParams:
    """One wall problem: (nu, D, L, x0, t) plus the boundary kind.

    ratio is alpha/beta for a Robin wall, None for absorbing. Fields may be
    numpy arrays of a common shape (kind and side stay scalar). x0 must lie
    strictly inside the domain and D, t must be positive.
    """

    nu: object
    D: object
    L: object
    x0: object
    t: object
    ratio: object = None          # alpha/beta, None = absorbing
    side: str = "right"
    reflecting: bool = False      # marks ratio == -nu/D exactly

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ParameterError(f"side must be left|right, got {self.side!r}")
        D = np.asarray(self.D, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if not np.all(D > 0):
            raise ParameterError("D must be > 0")
        if not np.all(t > 0):
            raise ParameterError("t must be > 0")
        x0 = np.asarray(self.x0, dtype=float)
        L = np.asarray(self.L, dtype=float)
        if self.side == "right":
            if not np.all(x0 < L):
                raise ParameterError("x0 must lie strictly inside (x0 < L)")
        else:
            if not np.all(x0 > L):
                raise ParameterError("x0 must lie strictly inside (x0 > L)")
        if self.ratio is not None:
            nu_c, ratio_c = self._canonical_nu_ratio()
            floor = -nu_c / D
            slack = 1e-9 * (np.abs(ratio_c) + np.abs(floor) + 1.0)
            if not np.all(ratio_c >= floor - slack):
                raise ParameterError(
                    "unsupported Robin ratio: alpha/beta below the zero-flux "
                    "value -nu/D injects mass at the wall")

    def _canonical_nu_ratio(self):
        sgn = 1.0 if self.side == "right" else -1.0
        nu_c = sgn * np.asarray(self.nu, dtype=float)
        ratio_c = None if self.ratio is None else sgn * np.asarray(self.ratio, dtype=float)
        return nu_c, ratio_c

    @property
    def absorbing(self) -> bool:
        return self.ratio is None

    # -- constructors --------------------------------------------------------
    @classmethod
    def make_reflecting(cls, nu, D, L, x0, t, side="right"):
        """Zero-flux wall: alpha/beta = -nu/D for the local coefficients."""
        D_arr = np.asarray(D, dtype=float)
        if not np.all(D_arr > 0):
            raise ParameterError("D must be > 0")
        ratio = -np.asarray(nu, dtype=float) / D_arr
        return cls(nu=nu, D=D, L=L, x0=x0, t=t, ratio=ratio, side=side,
                   reflecting=True)

    @classmethod
    def make_absorbing(cls, nu, D, L, x0, t, side="right"):
        return cls(nu=nu, D=D, L=L, x0=x0, t=t, ratio=None, side=side)

    @classmethod
    def make_robin(cls, nu, D, L, x0, t, alpha, beta, side="right"):
        beta = np.asarray(beta, dtype=float)
        if np.any(beta == 0):
            raise ParameterError("beta == 0 is an absorbing wall; use make_absorbing")
        return cls(nu=nu, D=D, L=L, x0=x0, t=t,
                   ratio=np.asarray(alpha, dtype=float) / beta, side=side)


def _canon(gp: GreenParams):
    """Mirror to a canonical right-hand wall. Returns (nu, D, L, x0, t, c, sgn).

    sgn maps canonical coordinates back to physical ones (x_phys = sgn * x_can).
    """
    sgn = 1.0 if gp.side == "right" else -1.0
    nu = sgn * np.asarray(gp.nu, dtype=float)
    D = np.asarray(gp.D, dtype=float)
    L = sgn * np.asarray(gp.L, dtype=float)
    x0 = sgn * np.asarray(gp.x0, dtype=float)
    t = np.asarray(gp.t, dtype=float)
    c = None if gp.ratio is None else sgn * np.asarray(gp.ratio, dtype=float)
    return nu, D, L, x0, t, c, sgn


# ===================================================================
# Stable erfcx building blocks
# ===================================================================
def _erfcx_weighted(a, e):
    """erfcx(a) * exp(e), stable for negative a via erfcx(a) = 2e^{a^2} - erfcx(-a).

    Callers guarantee that a^2 + e stays bounded whenever a < 0. Branches are
    evaluated on index subsets only (this sits inside sampler inner loops).
    """
    a, e = np.broadcast_arrays(np.asarray(a, dtype=float),
                               np.asarray(e, dtype=float))
    shape = a.shape
    a, e = np.ravel(a), np.ravel(e)
    neg = a < 0
    if not neg.any():
        out = erfcx(a) * np.exp(e)
    else:
        out = np.empty(a.shape)
        pos = ~neg
        if pos.any():
            out[pos] = erfcx(a[pos]) * np.exp(e[pos])
        an, en = a[neg], e[neg]
        out[neg] = 2.0 * np.exp(an * an + en) - erfcx(-an) * np.exp(en)
    if not np.all(np.isfinite(out)):
        raise NumericalError("overflow in boundary-kernel evaluation")
    return out.reshape(shape)


def _ediff_weighted(g, h, e, gh=None):
    """(erfcx(g + h) - erfcx(g)) * exp(e) / h, stable in both regards.

    Negative arguments go through _erfcx_weighted; a Taylor branch based on
    erfcx'(g) = 2 g erfcx(g) - 2/sqrt(pi) handles the cancellation when h is
    tiny (including h == 0). ``gh`` may supply an algebraically exact g + h
    (callers with an analytically simplified sum avoid rounding it twice).
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    gh = g + h if gh is None else np.asarray(gh, dtype=float)
    small = np.abs(h) < 1e-8 * np.maximum(1.0, np.abs(g))
    egw = _erfcx_weighted(g, e)
    if not small.any():
        return (_erfcx_weighted(gh, e) - egw) / h
    d1 = 2.0 * g * egw - _TWO_OVER_SQRT_PI * np.exp(e)
    d2 = 2.0 * egw + 2.0 * g * d1
    taylor = d1 + 0.5 * h * d2
    hs = np.where(small, 1.0, h)
    direct = (_erfcx_weighted(gh, e) - egw) / hs
    return np.where(small, taylor, direct)


# ===================================================================
# Kernel and pdf
# ===================================================================
def free_kernel(x, gp: GreenParams, center):
    """Free advection-diffusion kernel U(x, t, center) (units 1/m)."""
    nu = np.asarray(gp.nu, dtype=float)
    D = np.asarray(gp.D, dtype=float)
    t = np.asarray(gp.t, dtype=float)
    s = np.sqrt(4.0 * D * t)
    z = (np.asarray(x, dtype=float) - np.asarray(center, dtype=float) - nu * t) / s
    return np.exp(-z * z) / (s * _SQRT_PI)


def pdf_terms(x, gp: GreenParams):
    """Signed components (direct, image, boundary) with p = sum of the three.

    For an absorbing wall the image term is negative and the boundary term is
    identically zero.
    """
    nu, D, L, x0, t, c, sgn = _canon(gp)
    xc = sgn * np.asarray(x, dtype=float)
    if np.any(xc > L + 1e-12 * (np.abs(L) + 1.0)):
        raise DomainError("pdf evaluated outside the wall")
    d = L - x0
    xR = 2.0 * L - x0
    s = np.sqrt(4.0 * D * t)
    direct = np.exp(-((xc - x0 - nu * t) / s) ** 2) / (s * _SQRT_PI)
    u = xR - xc + nu * t
    e2 = (nu / D) * d - (u / s) ** 2
    image = np.exp(e2) / (s * _SQRT_PI)
    if gp.absorbing:
        return direct, -image, np.zeros_like(direct)
    K = c + nu / (2.0 * D)
    if gp.reflecting:
        zt = (xR - xc - nu * t) / s
    else:
        zt = (u + 2.0 * c * D * t) / s
    boundary = -K * _erfcx_weighted(zt, e2)
    return direct, image, boundary


def pdf(x, gp: GreenParams):
    """Transition density p(x, t) for the wall problem ``gp``."""
    direct, image, boundary = pdf_terms(x, gp)
    p = direct + image + boundary
    if not np.all(np.isfinite(p)):
        raise NumericalError("non-finite density value")
    return p


# ===================================================================
# Masses
# ===================================================================
def _mass_pieces(gp: GreenParams):
    """(Q2, m2, m3) in the canonical frame.

    Q2 = mass of the direct term beyond the wall, m2/m3 = in-domain masses of
    the image and boundary terms (signed).
    """
    nu, D, L, x0, t, c, _ = _canon(gp)
    d = L - x0
    s = np.sqrt(4.0 * D * t)
    w = (d - nu * t) / s
    g = (d + nu * t) / s
    Q2 = 0.5 * erfc(w)
    m2 = 0.5 * _erfcx_weighted(g, -w * w)
    if gp.absorbing:
        return Q2, -m2, np.zeros_like(np.asarray(m2))
    K = c + nu / (2.0 * D)
    ch = c * s / 2.0
    # reflecting: g + ch telescopes to w exactly; avoids exponent noise
    gh = w if gp.reflecting else None
    m3 = K * (s / 2.0) * _ediff_weighted(g, ch, -w * w, gh=gh)
    return Q2, m2, m3


def survival_mass(gp: GreenParams):
    """Q = total in-domain mass of p; the weight multiplier after one step.

    Exactly 1 for a reflecting wall (up to rounding), < 1 when the wall
    absorbs.
    """
    Q2, m2, m3 = _mass_pieces(gp)
    return 1.0 - Q2 + m2 + m3


def mass_split(gp: GreenParams):
    """(Q1, Q2): in-domain mass of image+boundary, and direct mass beyond L.

    Robin walls only; satisfies survival_mass == 1 - Q2 + Q1.
    """
    if gp.absorbing:
        raise ParameterError("mass_split applies to Robin walls only")
    Q2, m2, m3 = _mass_pieces(gp)
    return m2 + m3, Q2


def boundary_term_mass_below(gp: GreenParams, X):
    """Integral of the boundary term from -inf to X (canonical frame of the
    wall side; X in physical coordinates)."""
    nu, D, L, x0, t, c, sgn = _canon(gp)
    if gp.absorbing:
        raise ParameterError("absorbing wall has no boundary term")
    Xc = sgn * np.asarray(X, dtype=float)
    d = L - x0
    xR = 2.0 * L - x0
    s = np.sqrt(4.0 * D * t)
    K = c + nu / (2.0 * D)
    ch = c * s / 2.0
    gX = (xR - Xc + nu * t) / s
    eX = (nu / D) * d - gX * gX
    gh = (xR - Xc - nu * t) / s if gp.reflecting else None
    return K * (s / 2.0) * _ediff_weighted(gX, ch, eX, gh=gh)


def boundary_term_quantile(gp: GreenParams, q):
    """Inverse CDF of the normalized boundary term (positive-mass walls).

    q in [0, 1); returns physical positions. Used to draw exact samples of
    the boundary component when it is a positive density (drift toward the
    wall). Pure bisection on the closed-form partial mass: monotone, no
    rejection, fixed iteration count.
    """
    nu, D, L, x0, t, c, sgn = _canon(gp)
    qa = np.asarray(q, dtype=float)
    m3 = boundary_term_mass_below(gp, sgn * L)
    if np.any(m3 <= 0):
        raise ParameterError("boundary term is not a positive density here")
    target = qa * m3
    d = L - x0
    s = np.sqrt(4.0 * D * t)
    g = (d + nu * t) / s
    # bracket start where the partial mass underflows relative to m3:
    # gX(lo)^2 = g^2 + 760 guarantees F(lo)/m3 < e^-760 and lo < L always
    lo = 2.0 * L - x0 + nu * t - s * np.sqrt(g * g + 760.0)
    lo = np.broadcast_to(lo, qa.shape).astype(float).copy()
    hi = np.broadcast_to(L, qa.shape).astype(float).copy()
    # hoisted partial-mass evaluation (this loop dominates sampler cost)
    xRt = 2.0 * L - x0 + nu * t
    inv_s = 1.0 / s
    h0 = (nu / D) * d
    Ksh = (c + nu / (2.0 * D)) * (s / 2.0)
    ch = c * s / 2.0
    two_nt = 2.0 * nu * t * inv_s
    for _ in range(_BISECT_SWEEPS):
        mid = 0.5 * (lo + hi)
        gX = (xRt - mid) * inv_s
        gh = gX - two_nt if gp.reflecting else None
        val = Ksh * _ediff_weighted(gX, ch, h0 - gX * gX, gh=gh)
        below = val < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return sgn * 0.5 * (lo + hi)
