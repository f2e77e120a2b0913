"""Reproducible random streams and the elementary distributions.

Streams are counter-based (Philox) keyed by (seed, stream_id): the same pair
yields the same sequence on every run and platform, and distinct ids give
statistically independent streams without jump-ahead bookkeeping. Population
solvers assign one stream per fixed-size particle chunk, which makes results
independent of worker scheduling.

The truncated-normal sampler switches between plain rejection from the
untruncated Gaussian (interval mass >= NAIVE_MASS_THRESHOLD) and the
exponential-proposal accept-reject scheme with rate
lambda* = (a + sqrt(a^2 + 4))/2 for a standardized one-sided bound a, which
keeps the expected number of proposals O(1) arbitrarily far into the tail.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .errors import NumericalError, ParameterError

__all__ = [
    "make_stream",
    "sample_exponential",
    "sample_gaussian",
    "sample_truncated_gaussian",
]

# interval mass above which plain rejection is cheaper than tail proposals
NAIVE_MASS_THRESHOLD = 0.1
# rejection sweeps before declaring the loop stuck (diagnostic, unreachable
# for supported configurations)
MAX_REJECT_SWEEPS = 10_000

_MASK64 = (1 << 64) - 1


def make_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream_id).

    Pure and thread-safe to call; the returned generator is single-owner.
    """
    key = np.array([int(seed) & _MASK64, int(stream_id) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _positive_rate(rate):
    r = np.asarray(rate, dtype=float)
    if not np.all(r > 0):
        raise ParameterError(f"rate must be > 0, got {rate}")
    return r


def sample_exponential(rng, rate, size=None):
    """Exp(rate) flight times via inversion: -log(1 - U)/rate.

    Strictly positive; monotone decreasing in the underlying uniform draw.
    """
    r = _positive_rate(rate)
    u = rng.random(size)
    tau = -np.log1p(-u) / r
    # U == 0 maps to 0; nudge to the smallest representable positive time
    tiny = 2.0 ** -53 / r
    return np.maximum(tau, tiny)


def sample_gaussian(rng, mean, std, size=None):
    """N(mean, std^2) draws."""
    s = np.asarray(std, dtype=float)
    if not np.all(s > 0):
        raise ParameterError(f"std must be > 0, got {std}")
    return np.asarray(mean, dtype=float) + s * rng.standard_normal(size)


# ---------------------------------------------------------------------------
# truncated normal
# ---------------------------------------------------------------------------
def _robert_tail(rng, a):
    """One proposal sweep of the exponential accept-reject tail sampler.

    a: standardized lower bounds (finite) for the pending elements.
    Returns (z, accepted) for the pending subset.
    """
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    u1 = 1.0 - rng.random(a.size)          # (0, 1]
    z = a - np.log(u1) / lam
    u2 = rng.random(a.size)
    acc = u2 <= np.exp(-0.5 * (z - lam) ** 2)
    acc &= z > a
    return z, acc


def sample_truncated_gaussian(rng, mean, std, lower=None, upper=None,
                              size=None, method="auto"):
    """N(mean, std^2) conditioned on [lower, upper].

    Either bound may be None (unbounded). ``method`` selects the internal
    branch: "auto" picks per element by interval mass, "naive" forces plain
    rejection, "tail" forces the exponential-proposal scheme (diagnostic use;
    both branches target the same law).
    """
    s = np.asarray(std, dtype=float)
    if not np.all(s > 0):
        raise ParameterError(f"std must be > 0, got {std}")
    if method not in ("auto", "naive", "tail"):
        raise ParameterError(f"unknown method {method!r}")

    scalar = size is None and all(np.ndim(v) == 0 for v in (mean, std, lower, upper)
                                  if v is not None) and np.ndim(mean) == 0
    n = 1 if size is None else int(np.prod(size))
    shape = () if size is None else size

    m = np.broadcast_to(np.asarray(mean, dtype=float), (n,)).astype(float)
    sd = np.broadcast_to(s, (n,)).astype(float)
    a = np.full(n, -np.inf) if lower is None else \
        np.broadcast_to((np.asarray(lower, dtype=float) - m) / sd, (n,)).astype(float)
    b = np.full(n, np.inf) if upper is None else \
        np.broadcast_to((np.asarray(upper, dtype=float) - m) / sd, (n,)).astype(float)
    if np.any(a >= b):
        raise ParameterError("empty truncation interval (lower >= upper)")

    if lower is None and upper is None:
        z = rng.standard_normal(n)
        out = m + sd * z
        return float(out[0]) if scalar else out.reshape(shape)

    mass = ndtr(b) - ndtr(a)
    if method == "naive":
        use_naive = np.ones(n, dtype=bool)
    elif method == "tail":
        use_naive = np.zeros(n, dtype=bool)
    else:
        use_naive = mass >= NAIVE_MASS_THRESHOLD

    z = np.empty(n)
    pending = np.arange(n)
    a_p, b_p, naive_p = a.copy(), b.copy(), use_naive.copy()
    for _ in range(MAX_REJECT_SWEEPS):
        if pending.size == 0:
            break
        acc = np.zeros(pending.size, dtype=bool)
        prop = np.empty(pending.size)

        nm = naive_p
        if nm.any():
            zz = rng.standard_normal(int(nm.sum()))
            prop[nm] = zz
            acc[nm] = (zz > a_p[nm]) & (zz < b_p[nm])

        tm = ~naive_p
        if tm.any():
            at, bt = a_p[tm], b_p[tm]
            lower_sided = np.isfinite(at) & ~np.isfinite(bt)
            upper_sided = ~np.isfinite(at) & np.isfinite(bt)
            two_sided = np.isfinite(at) & np.isfinite(bt)
            zz = np.empty(at.size)
            aa = np.zeros(at.size, dtype=bool)
            if lower_sided.any():
                zz[lower_sided], aa[lower_sided] = _robert_tail(rng, at[lower_sided])
            if upper_sided.any():
                # mirror: sample a lower tail at -b and negate
                zm, am = _robert_tail(rng, -bt[upper_sided])
                zz[upper_sided], aa[upper_sided] = -zm, am
            if two_sided.any():
                a2, b2 = at[two_sided], bt[two_sided]
                u = rng.random(a2.size)
                cand = a2 + (b2 - a2) * u
                rho = np.where(a2 > 0, 0.5 * (a2 * a2 - cand * cand),
                               np.where(b2 < 0, 0.5 * (b2 * b2 - cand * cand),
                                        -0.5 * cand * cand))
                u2 = rng.random(a2.size)
                zz[two_sided] = cand
                aa[two_sided] = (u2 <= np.exp(rho)) & (cand > a2) & (cand < b2)
            prop[tm] = zz
            acc[tm] = aa

        z[pending[acc]] = prop[acc]
        keep = ~acc
        pending = pending[keep]
        a_p, b_p, naive_p = a_p[keep], b_p[keep], naive_p[keep]
    else:
        raise NumericalError(
            f"truncated-normal rejection did not converge within "
            f"{MAX_REJECT_SWEEPS} sweeps ({pending.size} pending)")

    out = m + sd * z
    return float(out[0]) if scalar else out.reshape(shape)
