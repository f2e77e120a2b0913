"""Draw end-of-step positions from the wall-aware transition density.

Two samplers with identical target law but different cost profiles:

``sample_basic``
    Always decomposes the density. Where the boundary term is negative
    (drift away from the wall, near-absorbing Robin), proposals come from
    the direct+image Gaussian mixture truncated to the domain and are
    accepted with probability p/(p1+p2). Where it is positive (drift toward
    the wall) the density is itself a three-component positive mixture
    (direct, image, boundary-layer term) and is sampled exactly, the
    boundary component through closed-form CDF inversion. The returned
    weight factor is the deterministic in-domain mass Q.

``sample_efficient``
    Free Gaussian draw first; particles that land inside keep weight 1 and
    never touch the wall machinery. Crossers are re-drawn from the
    image+boundary part of the density and reweighted by Q1/Q2 (crossing
    mass ratio), so the weighted law is exact. For an absorbing wall
    crossers die (weight 0) and interior samples are thinned by the exact
    survival ratio, which keeps the expected weight equal to Q without any
    re-draws.

Both samplers return positions strictly on the domain side of the wall and
compose with reflecting walls at exactly unit weight (no rounding drift in
conserved total weight).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import greens
from .errors import (InvariantViolation, NumericalError, ParameterError,
                     UnsupportedConfigError)
from .greens import GreenParams
from .sampling import MAX_REJECT_SWEEPS, sample_truncated_gaussian

__all__ = ["WeightedSample", "SamplerStats", "sample_basic",
           "sample_efficient", "sample_basic_many", "sample_efficient_many"]

# predicted acceptance below which the absorbing rejection sampler hands over
# to CDF inversion (deep-absorption regime, Q << 1)
_ABSORBING_REJECTION_FLOOR = 0.05


@dataclass
class WeightedSample:
    """One drawn position and its multiplicative weight adjustment."""

    x: float
    weight_factor: float


@dataclass
class SamplerStats:
    """Cheap counters for rejection diagnostics."""

    proposals: int = 0
    accepted: int = 0
    cdf_inversions: int = 0
    crossings: int = 0

    def merge(self, other: "SamplerStats"):
        self.proposals += other.proposals
        self.accepted += other.accepted
        self.cdf_inversions += other.cdf_inversions
        self.crossings += other.crossings


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _canon_arrays(gp: GreenParams, n):
    nu, D, L, x0, t, c, sgn = greens._canon(gp)
    b = lambda a: np.broadcast_to(np.asarray(a, dtype=float), (n,)).astype(float)
    return (b(nu), b(D), b(L), b(x0), b(t),
            None if c is None else b(c), sgn)


def _sub_gp(nu, D, L, x0, t, c, reflecting, idx):
    return GreenParams(nu=nu[idx], D=D[idx], L=L[idx], x0=x0[idx], t=t[idx],
                       ratio=None if c is None else c[idx],
                       side="right", reflecting=reflecting)


def _absorb_accept(x, nu, D, L, x0, t):
    """p/p1 for an absorbing wall: 1 - exp((L-x0)(x-L)/(D t)), in [0, 1]."""
    return -np.expm1((L - x0) * (x - L) / (D * t))


def _absorbing_quantile(nu, D, L, x0, t, q):
    """Bisect the absorbing-wall CDF; used when rejection would thrash."""
    gp = GreenParams(nu=nu, D=D, L=L, x0=x0, t=t, ratio=None, side="right")
    Q = greens.survival_mass(gp)
    target = q * Q
    s = np.sqrt(4.0 * D * t)
    # bracket where the direct Gaussian mass alone underflows vs Q
    z = np.sqrt(760.0 + np.maximum(0.0, -np.log(np.maximum(Q, 1e-308))))
    lo = np.minimum(x0 + nu * t, L) - s * z
    hi = np.broadcast_to(L, lo.shape).astype(float).copy()
    for _ in range(greens._BISECT_SWEEPS):
        mid = 0.5 * (lo + hi)
        below = _absorbing_mass_below(nu, D, L, x0, t, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _absorbing_mass_below(nu, D, L, x0, t, X):
    """CDF of the (unnormalized) absorbing-wall density at X <= L."""
    d = L - x0
    s = np.sqrt(4.0 * D * t)
    p1_part = 0.5 * erfc((x0 + nu * t - X) / s)
    gX = (2.0 * L - x0 - X + nu * t) / s
    image_part = 0.5 * greens._erfcx_weighted(gX, (nu / D) * d - gX * gX)
    return p1_part - image_part


# ---------------------------------------------------------------------------
# basic sampler
# ---------------------------------------------------------------------------
def sample_basic_many(gp: GreenParams, n, rng, stats: SamplerStats | None = None):
    """Vector form of sample_basic: n draws for the (broadcast) problems in gp.

    Returns (x, weight_factor) arrays in physical coordinates.
    """
    stats = stats if stats is not None else SamplerStats()
    nu, D, L, x0, t, c, sgn = _canon_arrays(gp, n)
    sd = np.sqrt(2.0 * D * t)

    if gp.absorbing:
        x = _basic_absorbing(nu, D, L, x0, t, sd, rng, stats)
        gpr = GreenParams(nu=nu, D=D, L=L, x0=x0, t=t, ratio=None, side="right")
        wf = greens.survival_mass(gpr)
        return sgn * x, wf

    Q2, m2, m3 = greens._mass_pieces(
        GreenParams(nu=nu, D=D, L=L, x0=x0, t=t, ratio=c, side="right",
                    reflecting=gp.reflecting))
    m1 = 1.0 - Q2
    Q = np.ones(n) if gp.reflecting else m1 + m2 + m3

    x = np.empty(n)
    neg = m3 <= 0.0            # boundary term is a deficit: accept-reject
    if neg.any():
        idx = np.nonzero(neg)[0]
        x[idx] = _basic_mixture_reject(nu, D, L, x0, t, c, sd, idx, m1, m2,
                                       gp.reflecting, rng, stats)
    pos = ~neg                 # positive three-part mixture: exact draw
    if pos.any():
        idx = np.nonzero(pos)[0]
        x[idx] = _basic_positive_mixture(nu, D, L, x0, t, c, sd, idx,
                                         m1, m2, m3, gp.reflecting, rng, stats)
    return sgn * x, Q


def _basic_mixture_reject(nu, D, L, x0, t, c, sd, idx, m1, m2, reflecting,
                          rng, stats):
    """Proposals from direct+image truncated to the domain, thinned by
    p/(p1+p2); valid whenever the boundary term is <= 0 pointwise."""
    out = np.empty(idx.size)
    pending = idx.copy()
    slot = np.arange(idx.size)
    for _ in range(MAX_REJECT_SWEEPS):
        if pending.size == 0:
            return out
        k = pending
        w1 = m1[k] / (m1[k] + m2[k])
        comp_image = rng.random(k.size) >= w1
        mean = np.where(comp_image, 2.0 * L[k] - x0[k] + nu[k] * t[k],
                        x0[k] + nu[k] * t[k])
        cand = sample_truncated_gaussian(rng, mean, sd[k], upper=L[k],
                                         size=k.size)
        sub = _sub_gp(nu, D, L, x0, t, c, reflecting, k)
        p1, p2, p3 = greens.pdf_terms(cand, sub)
        denom = p1 + p2
        rate = np.where(denom > 0, (denom + p3) / np.where(denom > 0, denom, 1.0), 0.0)
        if np.any(rate > 1.0 + 1e-12) or np.any(rate < -1e-12):
            raise InvariantViolation(
                f"basic-sampler acceptance left [0,1]: range "
                f"[{rate.min():.3e}, {rate.max():.3e}]")
        acc = rng.random(k.size) < np.clip(rate, 0.0, 1.0)
        stats.proposals += k.size
        stats.accepted += int(acc.sum())
        out[slot[acc]] = cand[acc]
        pending, slot = pending[~acc], slot[~acc]
    raise NumericalError(
        f"basic sampler rejection stalled ({pending.size} pending after "
        f"{MAX_REJECT_SWEEPS} sweeps)")


def _basic_positive_mixture(nu, D, L, x0, t, c, sd, idx, m1, m2, m3,
                            reflecting, rng, stats):
    """Exact draw when all three parts are nonnegative densities."""
    k = idx
    tot = m1[k] + m2[k] + m3[k]
    u = rng.random(k.size) * tot
    pick_direct = u < m1[k]
    pick_image = (~pick_direct) & (u < m1[k] + m2[k])
    pick_layer = ~(pick_direct | pick_image)
    out = np.empty(k.size)
    stats.proposals += k.size
    stats.accepted += k.size
    for pick, image in ((pick_direct, False), (pick_image, True)):
        if pick.any():
            kk = k[pick]
            mean = np.where(image, 2.0 * L[kk] - x0[kk] + nu[kk] * t[kk],
                            x0[kk] + nu[kk] * t[kk])
            out[pick] = sample_truncated_gaussian(rng, mean, sd[kk],
                                                  upper=L[kk], size=kk.size)
    if pick_layer.any():
        kk = k[pick_layer]
        sub = _sub_gp(nu, D, L, x0, t, c, reflecting, kk)
        out[pick_layer] = greens.boundary_term_quantile(sub, rng.random(kk.size))
        stats.cdf_inversions += kk.size
    return out


def _basic_absorbing(nu, D, L, x0, t, sd, rng, stats):
    n = nu.size
    gp = GreenParams(nu=nu, D=D, L=L, x0=x0, t=t, ratio=None, side="right")
    Q = np.broadcast_to(greens.survival_mass(gp), (n,))
    m1 = np.broadcast_to(1.0 - 0.5 * erfc((L - x0 - nu * t) / np.sqrt(4 * D * t)), (n,))
    predicted = Q / np.maximum(m1, 1e-300)
    slow = predicted < _ABSORBING_REJECTION_FLOOR
    out = np.empty(n)
    if slow.any():
        i = np.nonzero(slow)[0]
        out[i] = _absorbing_quantile(nu[i], D[i], L[i], x0[i], t[i],
                                     rng.random(i.size))
        stats.cdf_inversions += i.size
    fast = np.nonzero(~slow)[0]
    pending, slot = fast, fast
    for _ in range(MAX_REJECT_SWEEPS):
        if pending.size == 0:
            return out
        k = pending
        cand = sample_truncated_gaussian(rng, x0[k] + nu[k] * t[k], sd[k],
                                         upper=L[k], size=k.size)
        rate = _absorb_accept(cand, nu[k], D[k], L[k], x0[k], t[k])
        acc = rng.random(k.size) < rate
        stats.proposals += k.size
        stats.accepted += int(acc.sum())
        out[slot[acc]] = cand[acc]
        pending, slot = pending[~acc], slot[~acc]
    raise NumericalError("absorbing basic sampler stalled")


def sample_basic(gp: GreenParams, rng, stats: SamplerStats | None = None) -> WeightedSample:
    """One draw from the wall-aware density; weight_factor is the in-domain
    mass Q (deterministic given gp)."""
    x, w = sample_basic_many(gp, 1, rng, stats)
    return WeightedSample(x=float(x[0]), weight_factor=float(np.ravel(w)[0]))


# ---------------------------------------------------------------------------
# efficient sampler
# ---------------------------------------------------------------------------
def sample_efficient_many(gp: GreenParams, n, rng,
                          stats: SamplerStats | None = None):
    """Vector form of sample_efficient. Returns (x, weight_factor)."""
    stats = stats if stats is not None else SamplerStats()
    nu, D, L, x0, t, c, sgn = _canon_arrays(gp, n)
    sd = np.sqrt(2.0 * D * t)

    z = x0 + nu * t + sd * rng.standard_normal(n)
    inside = z <= L
    x = np.where(inside, z, L)
    wf = np.where(inside, 1.0, 0.0)

    crossed = np.nonzero(~inside)[0]
    stats.crossings += crossed.size

    if gp.absorbing:
        # interior samples are thinned by the exact survival ratio p/p1;
        # crossers and thinned samples are absorbed at the wall
        ii = np.nonzero(inside)[0]
        if ii.size:
            keep = rng.random(ii.size) < _absorb_accept(z[ii], nu[ii], D[ii],
                                                        L[ii], x0[ii], t[ii])
            x[ii] = np.where(keep, z[ii], L[ii])
            wf[ii] = np.where(keep, 1.0, 0.0)
            stats.proposals += ii.size
            stats.accepted += int(keep.sum())
        return sgn * x, wf

    if crossed.size:
        k = crossed
        sub = _sub_gp(nu, D, L, x0, t, c, gp.reflecting, k)
        Q1, Q2 = greens.mass_split(sub)
        if np.any(Q1 < -1e-15):
            raise UnsupportedConfigError(
                "image+boundary mass is negative: crossing particles would "
                "need negative weights (unsupported)")
        wf[k] = 1.0 if gp.reflecting else Q1 / Q2
        _, m2, m3 = greens._mass_pieces(sub)
        x[k] = _crosser_positions(nu, D, L, x0, t, c, sd, k, m2, m3,
                                  gp.reflecting, rng, stats)
    return sgn * x, wf


def _crosser_positions(nu, D, L, x0, t, c, sd, k, m2, m3, reflecting, rng,
                       stats):
    """Draw from (image + boundary)/Q1 restricted to the domain."""
    out = np.empty(k.size)
    neg = m3 <= 0.0
    if neg.any():
        # image-term proposals thinned by (p2+p3)/p2
        pending = np.nonzero(neg)[0]
        for _ in range(MAX_REJECT_SWEEPS):
            if pending.size == 0:
                break
            kk = k[pending]
            cand = sample_truncated_gaussian(
                rng, 2.0 * L[kk] - x0[kk] + nu[kk] * t[kk], sd[kk],
                upper=L[kk], size=kk.size)
            sub = _sub_gp(nu, D, L, x0, t, c, reflecting, kk)
            _, p2, p3 = greens.pdf_terms(cand, sub)
            rate = (p2 + p3) / np.where(p2 > 0, p2, 1.0)
            if np.any(rate < -1e-12):
                raise UnsupportedConfigError(
                    "image+boundary density is negative at proposed points "
                    "(would require negative weights)")
            if np.any(rate > 1.0 + 1e-12):
                raise InvariantViolation("crosser acceptance exceeded 1")
            acc = rng.random(kk.size) < np.clip(rate, 0.0, 1.0)
            stats.proposals += kk.size
            stats.accepted += int(acc.sum())
            out[pending[acc]] = cand[acc]
            pending = pending[~acc]
        else:
            raise NumericalError("efficient-sampler crosser rejection stalled")
    pos = np.nonzero(~neg)[0]
    if pos.size:
        kk = k[pos]
        frac_image = m2[pos] / (m2[pos] + m3[pos])
        take_image = rng.random(pos.size) < frac_image
        res = np.empty(pos.size)
        if take_image.any():
            ki = kk[take_image]
            res[take_image] = sample_truncated_gaussian(
                rng, 2.0 * L[ki] - x0[ki] + nu[ki] * t[ki], sd[ki],
                upper=L[ki], size=ki.size)
        if (~take_image).any():
            kb = kk[~take_image]
            sub = _sub_gp(nu, D, L, x0, t, c, reflecting, kb)
            res[~take_image] = greens.boundary_term_quantile(
                sub, rng.random(kb.size))
            stats.cdf_inversions += kb.size
        stats.proposals += pos.size
        stats.accepted += pos.size
        out[pos] = res
    return out


def sample_efficient(gp: GreenParams, rng,
                     stats: SamplerStats | None = None) -> WeightedSample:
    """One draw; interior hits keep weight 1, crossers carry Q1/Q2 (Robin)
    or die with weight 0 (absorbing)."""
    x, w = sample_efficient_many(gp, 1, rng, stats)
    return WeightedSample(x=float(x[0]), weight_factor=float(np.ravel(w)[0]))
