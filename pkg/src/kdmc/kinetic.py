"""Pure kinetic Monte Carlo: exponential free flights, Gaussian velocity
resampling at charge-exchange collisions, exact wall interaction.

Two execution paths with the same law:

* a fast population kernel for homogeneous backgrounds with two reflecting
  walls (one vector sweep per collision; reflections are exact triangle
  folds of the straight flight, valid because the collision rate does not
  change across the fold), and
* a generic event kernel (one event - collision, cell-edge crossing, wall
  hit or window end - per particle per sweep) that handles absorbing walls
  and piecewise-constant backgrounds. Crossing a cell edge re-draws the
  exponential clock in the new cell, which is exact for piecewise-constant
  rates by memorylessness.

Both operate in place on ParticleArray fields; `kinetic_flight` and
`kinetic_solve` are the single-particle/population entry points.
"""

from __future__ import annotations

import numpy as np

from .model import Background, ParticleArray, ParticleState, cell_of
from .sampling import sample_exponential, sample_gaussian

__all__ = ["kinetic_flight", "kinetic_solve", "advect"]


def _walls(bounds):
    left = right = None
    for b in bounds or ():
        if b.side == "left":
            left = b
        else:
            right = b
    return left, right


def _fold_reflecting(x, v, x_min, x_max):
    """Exact specular multi-fold of out-of-domain straight-flight endpoints."""
    width = x_max - x_min
    y = np.mod(x - x_min, 2.0 * width)
    flip = y > width
    xf = np.where(flip, 2.0 * width - y, y) + x_min
    vf = np.where(flip, -v, v)
    return xf, vf


def advect(x, v, dt, bounds):
    """Straight flight for duration dt with wall interaction.

    Returns (x, v, absorbed) arrays; absorbed marks particles that hit an
    absorbing wall during the flight.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    absorbed = np.zeros(x.shape, dtype=bool)
    left, right = _walls(bounds)
    xe = x + v * np.asarray(dt, dtype=float)
    if left is None and right is None:
        return xe, v.copy(), absorbed
    if (left is not None and right is not None
            and left.kind == "reflecting" and right.kind == "reflecting"):
        xf, vf = _fold_reflecting(xe, v, left.L, right.L)
        return xf, vf, absorbed

    # general: walk wall hits in time order (few bounces expected)
    xc, vc = x.copy(), v.copy()
    rem = np.broadcast_to(np.asarray(dt, dtype=float), x.shape).astype(float).copy()
    act = np.ones(x.shape, dtype=bool)
    while act.any():
        i = np.nonzero(act)[0]
        t_hit = np.full(i.size, np.inf)
        hit_right = np.zeros(i.size, dtype=bool)
        if right is not None:
            m = vc[i] > 0
            t_hit[m] = (right.L - xc[i][m]) / vc[i][m]
            hit_right[m] = True
        if left is not None:
            m = vc[i] < 0
            t_hit[m] = (left.L - xc[i][m]) / vc[i][m]
            hit_right[m] = False
        done = t_hit >= rem[i]
        di = i[done]
        xc[di] += vc[di] * rem[di]
        rem[di] = 0.0
        act[di] = False
        hi = i[~done]
        if hi.size:
            th = t_hit[~done]
            xc[hi] += vc[hi] * th
            rem[hi] -= th
            wall = np.where(hit_right[~done],
                            right.kind == "absorbing" if right else False,
                            left.kind == "absorbing" if left else False)
            dead = hi[wall]
            absorbed[dead] = True
            act[dead] = False
            rem[dead] = 0.0
            refl = hi[~wall]
            vc[refl] = -vc[refl]
    return xc, vc, absorbed


# ===================================================================
# Generic event kernel
# ===================================================================
def _advance_one_event(pa: ParticleArray, idx, cell, bg: Background, bounds,
                       t_end, rng, metrics=None, stop_on_collision=False):
    """Advance each particle in idx through exactly one event.

    Returns (still_active_idx, matching_cell, collided_mask_over_idx).
    """
    left, right = _walls(bounds)
    x, v, t = pa.x[idx], pa.v[idx], pa.t[idx]
    te = np.broadcast_to(np.asarray(t_end, dtype=float), pa.x.shape)[idx]
    R = bg.r_cx[cell]
    tau = sample_exponential(rng, R, idx.size)
    rem = te - t
    dt_col = np.minimum(tau, rem)

    # first space-limited obstacle in the direction of travel
    h = bg.cell_width
    target = np.full(idx.size, np.inf)
    is_wall = np.zeros(idx.size, dtype=bool)
    pos_v = v > 0
    neg_v = v < 0
    if pos_v.any():
        edge = bg.x_min + (cell[pos_v] + 1) * h
        last = cell[pos_v] == bg.n_cells - 1
        # an undeclared wall leaves the edge cell open: the flight continues
        # at the edge cell's rate with no space event
        wall_x = right.L if right is not None else np.inf
        target[pos_v] = np.where(last, wall_x, edge)
        is_wall[pos_v] = last & (right is not None)
    if neg_v.any():
        edge = bg.x_min + cell[neg_v] * h
        first = cell[neg_v] == 0
        wall_x = left.L if left is not None else -np.inf
        target[neg_v] = np.where(first, wall_x, edge)
        is_wall[neg_v] = first & (left is not None)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_space = np.where(np.isfinite(target), (target - x) / v, np.inf)
    t_space = np.where(np.isnan(t_space), np.inf, np.maximum(t_space, 0.0))

    space_first = t_space < dt_col
    collided = np.zeros(idx.size, dtype=bool)

    # (a/d) collision or window end
    m = ~space_first
    if m.any():
        pa.x[idx[m]] = x[m] + v[m] * dt_col[m]
        hit_end = m & (tau >= rem)
        hit_col = m & ~hit_end
        pa.t[idx[hit_end]] = te[hit_end]
        pa.t[idx[hit_col]] = t[hit_col] + tau[hit_col]
        collided[hit_col] = True
        n_col = int(hit_col.sum())
        if metrics is not None:
            metrics.collisions += n_col
        if n_col and not stop_on_collision:
            ci = idx[hit_col]
            cc = cell[hit_col]
            pa.v[ci] = sample_gaussian(rng, bg.nu_p[cc],
                                       np.sqrt(bg.sigma_p2[cc]), n_col)

    # (b/c) cell edge or wall
    s = space_first
    if s.any():
        si = idx[s]
        pa.x[si] = target[s]
        pa.t[si] = t[s] + t_space[s]
        wall_hit = s & is_wall
        if wall_hit.any():
            wi = idx[wall_hit]
            going_right = v[wall_hit] > 0
            kinds = np.where(going_right,
                             (right.kind == "absorbing") if right else False,
                             (left.kind == "absorbing") if left else False)
            dead = wi[kinds]
            if dead.size:
                if metrics is not None:
                    metrics.absorbed_weight += float(pa.w[dead].sum())
                pa.alive[dead] = False
                pa.w[dead] = 0.0
            refl = wi[~kinds]
            pa.v[refl] = -pa.v[refl]
        edge_hit = s & ~is_wall
        cell[edge_hit] += np.sign(v[edge_hit]).astype(cell.dtype)

    te_now = np.broadcast_to(np.asarray(t_end, dtype=float), pa.x.shape)[idx]
    running = pa.alive[idx] & (pa.t[idx] < te_now)
    if stop_on_collision:
        running &= ~collided
    return idx[running], cell[running], collided


def _solve_events(pa: ParticleArray, bg, bounds, t_end, rng, metrics=None):
    idx = np.nonzero(pa.alive & (pa.t < np.broadcast_to(
        np.asarray(t_end, dtype=float), pa.x.shape)))[0]
    cell = cell_of(pa.x[idx], bg) if idx.size else np.empty(0, dtype=np.int64)
    cell = np.atleast_1d(cell)
    while idx.size:
        idx, cell, _ = _advance_one_event(pa, idx, cell, bg, bounds, t_end,
                                          rng, metrics)


def _solve_fast_reflecting(pa: ParticleArray, bg, bounds, t_end, rng,
                           metrics=None):
    """Homogeneous background, two reflecting walls: one sweep per collision.

    Works on locally compacted arrays and scatters a particle back exactly
    once, when its window ends; survivor velocities are never materialized
    because each collision redraws them.
    """
    left, right = _walls(bounds)
    R = float(bg.r_cx[0])
    nu_p = float(bg.nu_p[0])
    sig = float(np.sqrt(bg.sigma_p2[0]))
    x_min = left.L
    width = right.L - left.L
    width2 = 2.0 * width
    te_all = np.broadcast_to(np.asarray(t_end, dtype=float), pa.x.shape)
    gidx = np.nonzero(pa.alive & (pa.t < te_all))[0]
    x = pa.x[gidx].copy()
    v = pa.v[gidx].copy()
    t = pa.t[gidx].copy()
    te = te_all[gidx].copy()
    while gidx.size:
        tau = sample_exponential(rng, R, gidx.size)
        rem = te - t
        coll = tau < rem
        x += v * np.where(coll, tau, rem)
        y = (x - x_min) % width2
        flip = y > width
        x = np.where(flip, width2 - y, y)
        x += x_min
        done = ~coll
        if done.any():
            di = gidx[done]
            pa.x[di] = x[done]
            pa.v[di] = np.where(flip[done], -v[done], v[done])
            pa.t[di] = te[done]
        gidx = gidx[coll]
        if metrics is not None:
            metrics.collisions += gidx.size
        x = x[coll]
        t = t[coll] + tau[coll]
        te = te[coll]
        v = sample_gaussian(rng, nu_p, sig, gidx.size) if gidx.size else v[:0]


def _fast_path_ok(bg, bounds):
    left, right = _walls(bounds)
    return (bg.homogeneous and left is not None and right is not None
            and left.kind == "reflecting" and right.kind == "reflecting")


# ===================================================================
# Public entry points
# ===================================================================
def kinetic_flight(p: ParticleState, bg: Background, bounds, t_end, rng):
    """Advance one particle through exactly one event.

    The event is whichever comes first: a charge-exchange collision (move,
    resample velocity), a cell-edge crossing (move to the edge, new rate
    applies), a wall hit (specular reflection or absorption), or the window
    end t_end (move and stop).
    """
    if not p.alive:
        return p
    if p.t >= t_end:
        return p
    pa = p.to_array()
    idx = np.array([0])
    cell = np.atleast_1d(cell_of(pa.x[idx], bg))
    _advance_one_event(pa, idx, cell, bg, bounds, t_end, rng)
    return pa.state(0)


def kinetic_solve(p, bg: Background, bounds, t_end, rng, metrics=None):
    """Run kinetic transport until every particle reaches t_end or dies.

    ``p`` may be a ParticleState (returns a new one) or a ParticleArray
    (modified in place and returned). ``t_end`` may be a scalar or a
    per-particle array.
    """
    scalar = isinstance(p, ParticleState)
    pa = p.to_array() if scalar else p
    if _fast_path_ok(bg, bounds):
        _solve_fast_reflecting(pa, bg, bounds, t_end, rng, metrics)
    else:
        _solve_events(pa, bg, bounds, t_end, rng, metrics)
    return pa.state(0) if scalar else pa


def advance_to_collision(pa: ParticleArray, idx, bg, bounds, t_end, rng,
                         metrics=None):
    """Kinetic transport of pa[idx] until the first collision or t_end.

    Used as the kinetic phase of the hybrid step in heterogeneous
    backgrounds. Particles stop at their first collision with the clock set
    to the collision time and their pre-collision velocity (the
    post-collision velocity is the business of the diffusive phase).
    Returns a boolean mask over idx marking who collided.
    """
    cell = np.atleast_1d(cell_of(pa.x[idx], bg)) if idx.size else \
        np.empty(0, dtype=np.int64)
    collided_global = np.zeros(len(pa), dtype=bool)
    cur, cell_cur = idx, cell
    while cur.size:
        cur2, cell2, coll = _advance_one_event(pa, cur, cell_cur, bg, bounds,
                                               t_end, rng, metrics,
                                               stop_on_collision=True)
        collided_global[cur[coll]] = True
        cur, cell_cur = cur2, cell2
    return collided_global[idx]
