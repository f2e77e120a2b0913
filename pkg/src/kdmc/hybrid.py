"""Hybrid kinetic-diffusion steppers and the advection-diffusion fluid model.

One hybrid step of length dt:

1. Kinetic phase: straight flight with the current velocity until the first
   charge-exchange collision. If no collision falls inside the step the
   whole step is kinetic and we are done.
2. Diffusive phase over the remaining window theta: the many unresolved
   collisions are replaced by one displacement. A trailing flight duration
   delta = min(Exp(R), theta) (the flight in progress at the window end) and
   its fresh velocity v' ~ N(nu_p, sigma_p2) are drawn first; the diffusive
   displacement then carries drift nu*(theta - delta) and Gaussian noise of
   variance 2*D(theta)*theta, where D(theta) is the collision-window
   diffusion coefficient below. This split reproduces the kinetic window
   displacement exactly in mean and variance (the moment-matching tests are
   the arbiter).
   * mode "kin": if the diffusive mean comes within k standard deviations of
     a wall, or the sampled displacement leaves the domain, the displacement
     is discarded and the remainder of the step is simulated kinetically
     from the collision state (weights never change).
   * mode "fluid": the displacement is drawn from the wall-aware transition
     density of the nearest wall instead; the sampler's weight factor is
     applied and no kinetic fallback ever happens.
3. The trailing flight v'*delta is applied with specular/absorbing wall
   handling and v' becomes the particle's velocity for the next step.

The fluid solver advances the SDE dX = nu dt + sqrt(2 D) dW with exact
Gaussian sub-steps (D = sigma_p2/R_cx) and the same wall-aware sampling
machinery at the walls.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import bsampler
from .errors import ParameterError
from .greens import GreenParams
from .kinetic import advance_to_collision, advect, kinetic_solve, _walls
from .model import Background, ParticleArray, ParticleState, local_params
from .sampling import sample_exponential, sample_gaussian

__all__ = ["FluidCoeffs", "fluid_coefficients", "effective_diffusion",
           "kdmc_step", "kdmc_step_many", "kdmc_solve", "fluid_solve"]

# R_cx * theta below which the diffusion bracket switches to its series
# (the direct expression loses all significant digits to cancellation)
_SERIES_SWITCH = 0.02


class FluidCoeffs(NamedTuple):
    nu: object     # drift (m/s)
    D: object      # diffusion (m^2/s)


def fluid_coefficients(x, bg: Background) -> FluidCoeffs:
    """Fluid-limit drift and diffusion at x.

    drift = nu_p + sigma_p2 * d/dx (1/R_cx)   (gradient term zero when the
    background is homogeneous), diffusion = sigma_p2 / R_cx.
    """
    from .model import cell_of
    i = cell_of(x, bg)
    nu = bg.nu_p[i] + bg.sigma_p2[i] * bg.d_inv_rcx[i]
    D = bg.sigma_p2[i] / bg.r_cx[i]
    return FluidCoeffs(nu=nu, D=D)


def effective_diffusion(theta, sigma_p2, r_cx):
    """Diffusion coefficient of one collision window of length theta.

    D(theta) = sigma_p2/(R^2 theta) * (2 e^{-R theta} + R theta
               + R theta e^{-R theta} - 2);
    equals the variance of the completed-flight displacement over the window
    divided by 2 theta. Tends to sigma_p2/R (the fluid value) for
    R*theta -> inf and to sigma_p2*R*theta^2/6 for R*theta -> 0. A series
    evaluation protects the heavily cancelling small-R*theta regime.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ParameterError("theta must be > 0")
    r = np.asarray(r_cx, dtype=float)
    x = r * theta
    ex = np.exp(-x)
    direct = 2.0 * ex + x + x * ex - 2.0
    series = (x ** 3) / 6.0 - (x ** 4) / 12.0 + (x ** 5) / 40.0 - (x ** 6) / 180.0
    bracket = np.where(x < _SERIES_SWITCH, series, direct)
    return np.asarray(sigma_p2, dtype=float) / r * (bracket / x)


def _confine(x, bounds):
    """Push stray positions back inside (single fold / absorb at wall).

    Samples land outside the sampled wall's domain only through the far
    wall, whose image terms are below resolvable probability; this is pure
    defensive plumbing.
    """
    left, right = _walls(bounds)
    absorbed = np.zeros(np.shape(x), dtype=bool)
    if right is not None:
        out = x > right.L
        if out.any():
            if right.kind == "absorbing":
                absorbed |= out
                x = np.where(out, right.L, x)
            else:
                x = np.where(out, 2.0 * right.L - x, x)
    if left is not None:
        out = x < left.L
        if out.any():
            if left.kind == "absorbing":
                absorbed |= out
                x = np.where(out, left.L, x)
            else:
                x = np.where(out, 2.0 * left.L - x, x)
    if left is not None and right is not None:
        x = np.clip(x, left.L, right.L)
    return x, absorbed


def _nudge_inside(x, bounds):
    """Strictly interior copy of x (wall-touching points moved one ulp in)."""
    left, right = _walls(bounds)
    out = np.asarray(x, dtype=float).copy()
    if right is not None:
        out = np.minimum(out, np.nextafter(right.L, -np.inf))
    if left is not None:
        out = np.maximum(out, np.nextafter(left.L, np.inf))
    return out


def _wall_green_params(wall, nu_eff, D, x0, theta):
    if wall.kind == "reflecting":
        return GreenParams.make_reflecting(nu_eff, D, wall.L, x0, theta,
                                           side=wall.side)
    if wall.kind == "absorbing":
        return GreenParams.make_absorbing(nu_eff, D, wall.L, x0, theta,
                                          side=wall.side)
    return GreenParams.make_robin(nu_eff, D, wall.L, x0, theta,
                                  wall.alpha, wall.beta, side=wall.side)


def _sample_wall_aware(x1, nu_eff, D_th, theta, bounds, sampler, rng,
                       metrics=None):
    """Diffusive displacement drawn against the nearest wall per particle.

    Returns (x2, weight_factor). weight_factor == 0 marks absorption.
    """
    left, right = _walls(bounds)
    n = x1.size
    x2 = np.empty(n)
    wf = np.ones(n)
    x0 = _nudge_inside(x1, bounds)
    draw = (bsampler.sample_basic_many if sampler == "basic"
            else bsampler.sample_efficient_many)

    if left is not None and right is not None:
        use_right = (right.L - x1) <= (x1 - left.L)
        groups = [(left, np.nonzero(~use_right)[0]),
                  (right, np.nonzero(use_right)[0])]
        far_dist = np.where(use_right, x1 - left.L, right.L - x1)
    else:
        wall = right if right is not None else left
        groups = [(wall, np.arange(n))]
        far_dist = np.full(n, np.inf)

    if metrics is not None:
        sd = np.sqrt(2.0 * D_th * theta)
        metrics.far_wall_warnings += int(np.count_nonzero(sd > 0.25 * far_dist))

    for wall, gi in groups:
        if gi.size == 0:
            continue
        gp = _wall_green_params(wall, nu_eff[gi], D_th[gi], x0[gi], theta[gi])
        stats = bsampler.SamplerStats()
        xs, ws = draw(gp, gi.size, rng, stats)
        if metrics is not None:
            metrics.absorb_sampler_stats(stats)
        x2[gi] = xs
        wf[gi] = ws

    # defensive far-wall confinement (probability below double resolution)
    x2, absorbed = _confine(x2, bounds)
    if absorbed.any():
        wf = np.where(absorbed, 0.0, wf)
    return x2, wf


# ===================================================================
# One hybrid step
# ===================================================================
def kdmc_step_many(pa: ParticleArray, bg: Background, bounds, dt, mode, rng,
                   sampler="efficient", k_sigma=2.0, metrics=None):
    """Advance every alive particle by exactly dt (in place)."""
    if mode not in ("kin", "fluid"):
        raise ParameterError(f"mode must be kin|fluid, got {mode!r}")
    idx = np.nonzero(pa.alive)[0]
    if idx.size == 0:
        return pa
    if metrics is not None:
        metrics.steps_total += idx.size
    t_goal = pa.t[idx] + dt

    # ---- phase 1: kinetic until the first collision ------------------------
    if bg.homogeneous:
        R = float(bg.r_cx[0])
        tau = sample_exponential(rng, R, idx.size)
        dt_k = np.minimum(tau, dt)
        x1, v1, absorbed = advect(pa.x[idx], pa.v[idx], dt_k, bounds)
        pa.x[idx] = x1
        pa.v[idx] = v1
        pa.t[idx] += dt_k
        if absorbed.any():
            ai = idx[absorbed]
            if metrics is not None:
                metrics.absorbed_weight += float(pa.w[ai].sum())
            pa.alive[ai] = False
            pa.w[ai] = 0.0
        collided = (tau < dt) & ~absorbed
        if metrics is not None:
            metrics.collisions += int(collided.sum())
    else:
        t_end_full = pa.t.copy()
        t_end_full[idx] = t_goal
        collided = advance_to_collision(pa, idx, bg, bounds, t_end_full, rng,
                                        metrics)
        collided &= pa.alive[idx]

    col = idx[collided]
    goal_col = t_goal[collided]
    if col.size == 0:
        return pa

    theta = goal_col - pa.t[col]
    live = theta > 1e-12 * dt
    stub = col[~live]
    if stub.size:
        # collision at the very end of the window: resample velocity only
        nup_s, sig2_s, _ = local_params(pa.x[stub], bg)
        pa.v[stub] = sample_gaussian(rng, nup_s, np.sqrt(sig2_s), stub.size)
        pa.t[stub] = goal_col[~live]
    col = col[live]
    goal_col = goal_col[live]
    theta = theta[live]
    if col.size == 0:
        return pa

    # ---- phase 2 prep: window coefficients and trailing-flight draws -------
    x1 = pa.x[col]
    nu_p, sig2, R1 = local_params(x1, bg)
    sig = np.sqrt(sig2)
    nu_f, _ = fluid_coefficients(x1, bg)
    D_th = effective_diffusion(theta, sig2, R1)
    delta = np.minimum(sample_exponential(rng, R1, col.size), theta)
    v_trail = sample_gaussian(rng, nu_p, sig, col.size)
    shift = nu_f * (theta - delta)
    sd = np.sqrt(2.0 * D_th * theta)
    left, right = _walls(bounds)

    if mode == "kin":
        xi = rng.standard_normal(col.size)
        x2 = x1 + shift + sd * xi
        mean = x1 + shift
        near = np.zeros(col.size, dtype=bool)
        outside = np.zeros(col.size, dtype=bool)
        if right is not None:
            near |= (right.L - mean) < k_sigma * sd
            outside |= x2 > right.L
        if left is not None:
            near |= (mean - left.L) < k_sigma * sd
            outside |= x2 < left.L
        fb = near | outside
        ok = ~fb
        wf = None
        if fb.any():
            fi = col[fb]
            if metrics is not None:
                metrics.steps_fallback += fi.size
            # restart kinetically from the collision state with a fresh
            # post-collision velocity; the drawn diffusive pieces are void
            pa.v[fi] = v_trail[fb]
            t_end = pa.t.copy()
            t_end[fi] = goal_col[fb]
            kinetic_solve(pa, bg, bounds, t_end, rng, metrics)
    else:
        if left is None and right is None:
            xi = rng.standard_normal(col.size)
            x2 = x1 + shift + sd * xi
            wf = None
        else:
            nu_eff = shift / theta
            x2, wf = _sample_wall_aware(x1, nu_eff, D_th, theta, bounds,
                                        sampler, rng, metrics)
        ok = np.ones(col.size, dtype=bool)
        if wf is not None:
            dead = wf == 0.0
            if dead.any():
                di = col[dead]
                if metrics is not None:
                    metrics.absorbed_weight += float(pa.w[di].sum())
                pa.x[di] = x2[dead]
                pa.w[di] = 0.0
                pa.alive[di] = False
                pa.t[di] = goal_col[dead]
                ok &= ~dead
            pa.w[col[ok]] *= wf[ok]

    # ---- phase 3: trailing flight for committed particles ------------------
    ci = col[ok]
    if ci.size:
        x3, v3, absorbed = advect(x2[ok], v_trail[ok], delta[ok], bounds)
        pa.x[ci] = x3
        pa.v[ci] = v3
        pa.t[ci] = goal_col[ok]
        if absorbed.any():
            ai = ci[absorbed]
            if metrics is not None:
                metrics.absorbed_weight += float(pa.w[ai].sum())
            pa.alive[ai] = False
            pa.w[ai] = 0.0
    return pa


def kdmc_step(p: ParticleState, bg: Background, bounds, dt, mode, rng,
              sampler="efficient", k_sigma=2.0, metrics=None) -> ParticleState:
    """One hybrid step for a single particle; returns the advanced state."""
    pa = p.to_array()
    kdmc_step_many(pa, bg, bounds, dt, mode, rng, sampler=sampler,
                   k_sigma=k_sigma, metrics=metrics)
    return pa.state(0)


def kdmc_solve(p, bg: Background, bounds, dt, t_final, mode, rng,
               sampler="efficient", k_sigma=2.0, metrics=None):
    """Repeat hybrid steps until t_final (last step truncated to fit)."""
    scalar = isinstance(p, ParticleState)
    pa = p.to_array() if scalar else p
    n_steps = max(1, math.ceil(t_final / dt - 1e-9))
    for k in range(n_steps):
        step = min(dt, t_final - k * dt)
        kdmc_step_many(pa, bg, bounds, step, mode, rng, sampler=sampler,
                       k_sigma=k_sigma, metrics=metrics)
    return pa.state(0) if scalar else pa


# ===================================================================
# Fluid model
# ===================================================================
def fluid_solve(p, bg: Background, bounds, t_end, rng, dt_fluid=None,
                sampler="efficient", metrics=None):
    """Advection-diffusion solver with exact Gaussian sub-steps.

    With constant coefficients and no walls the result is exact for any
    sub-step count; walls are applied per sub-step through the wall-aware
    transition density (default sub-step: t_end/1000).
    """
    scalar = isinstance(p, ParticleState)
    pa = p.to_array() if scalar else p
    if dt_fluid is None:
        n_sub = 1000
    else:
        if dt_fluid <= 0:
            raise ParameterError("dt_fluid must be > 0")
        n_sub = max(1, math.ceil(t_end / dt_fluid - 1e-9))
    h = t_end / n_sub
    left, right = _walls(bounds)
    for _ in range(n_sub):
        idx = np.nonzero(pa.alive)[0]
        if idx.size == 0:
            break
        x = pa.x[idx]
        nu_f, D = fluid_coefficients(x, bg)
        if left is None and right is None:
            pa.x[idx] = x + nu_f * h + np.sqrt(2.0 * D * h) * \
                rng.standard_normal(idx.size)
        else:
            th = np.full(idx.size, h)
            x2, wf = _sample_wall_aware(x, nu_f, D, th, bounds, sampler, rng,
                                        metrics)
            dead = wf == 0.0
            if dead.any():
                di = idx[dead]
                if metrics is not None:
                    metrics.absorbed_weight += float(pa.w[di].sum())
                pa.x[di] = x2[dead]
                pa.w[di] = 0.0
                pa.alive[di] = False
            ok = ~dead
            oi = idx[ok]
            pa.x[oi] = x2[ok]
            pa.w[oi] *= wf[ok]
        pa.t[idx] += h
    alive = pa.alive
    pa.t[alive] = t_end
    return pa.state(0) if scalar else pa
