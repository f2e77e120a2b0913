"""Domain, plasma-background, boundary and particle data model.

Geometry is a 1D interval [x_min, x_max] split into equal cells. The plasma
background is piecewise constant per cell: each cell carries a mean
post-collision velocity nu_p, a post-collision velocity variance sigma_p2 and
a charge-exchange rate R_cx. Cells are half-open [left, right); the right
domain edge belongs to the last cell.

All model types are immutable after construction and safe to share between
workers. Particle populations are stored struct-of-arrays (ParticleArray) so
the solvers can operate on whole populations with numpy; ParticleState is the
single-particle view used by the scalar entry points and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "Background",
    "BoundarySpec",
    "ParticleArray",
    "ParticleState",
    "StepConfig",
    "cell_of",
    "local_params",
]

SOLVERS = ("kinetic", "fluid", "kdmc_kin", "kdmc_fluid")
SAMPLERS = ("basic", "efficient")


# ===================================================================
# Background plasma
# ===================================================================
@dataclass(frozen=True, eq=False)
class Background:
    """Per-cell plasma parameters on a uniform 1D grid.

    Parameters
    ----------
    x_min, x_max : float
        Domain bounds (m).
    nu_p : ndarray, shape (n_cells,)
        Mean post-collision velocity per cell (m/s).
    sigma_p2 : ndarray, shape (n_cells,)
        Post-collision velocity variance per cell (m^2/s^2), > 0.
    r_cx : ndarray, shape (n_cells,)
        Charge-exchange rate per cell (1/s), > 0.
    """

    x_min: float
    x_max: float
    nu_p: np.ndarray
    sigma_p2: np.ndarray
    r_cx: np.ndarray

    def __post_init__(self):
        for name in ("nu_p", "sigma_p2", "r_cx"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        n = self.nu_p.size
        if self.sigma_p2.size != n or self.r_cx.size != n or n < 1:
            raise ParameterError("per-cell arrays must share one length >= 1")
        if not (self.x_max > self.x_min):
            raise ParameterError(f"empty domain [{self.x_min}, {self.x_max}]")
        if not np.all(self.r_cx > 0):
            raise ParameterError("R_cx must be > 0 in every cell")
        if not np.all(self.sigma_p2 > 0):
            raise ParameterError("sigma_p2 must be > 0 in every cell")
        # derivative of 1/R_cx by central differences of cell values,
        # one-sided at the ends; identically zero for a uniform background
        h = (self.x_max - self.x_min) / n
        inv = 1.0 / self.r_cx
        d = np.zeros(n)
        if n > 1:
            d[1:-1] = (inv[2:] - inv[:-2]) / (2 * h)
            d[0] = (inv[1] - inv[0]) / h
            d[-1] = (inv[-1] - inv[-2]) / h
        object.__setattr__(self, "_d_inv_rcx", d)
        homog = (np.ptp(self.nu_p) == 0 and np.ptp(self.sigma_p2) == 0
                 and np.ptp(self.r_cx) == 0)
        object.__setattr__(self, "homogeneous", bool(homog))

    # -- construction helpers ------------------------------------------------
    @classmethod
    def uniform(cls, x_min, x_max, n_cells, nu_p, sigma_p2, r_cx):
        """Homogeneous background: every cell carries the same triple."""
        n = int(n_cells)
        if n < 1:
            raise ParameterError("n_cells must be >= 1")
        return cls(x_min, x_max,
                   np.full(n, float(nu_p)),
                   np.full(n, float(sigma_p2)),
                   np.full(n, float(r_cx)))

    # -- geometry ------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return self.nu_p.size

    @property
    def cell_width(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def d_inv_rcx(self) -> np.ndarray:
        """Per-cell finite-difference derivative of 1/R_cx (s/m)."""
        return self._d_inv_rcx

    def cell_centers(self) -> np.ndarray:
        h = self.cell_width
        return self.x_min + h * (np.arange(self.n_cells) + 0.5)


def grid_index(x, x_min, x_max, n_cells):
    """Half-open cell lookup; x == x_max belongs to the last cell."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < x_min) or np.any(xa > x_max):
        bad = xa[(xa < x_min) | (xa > x_max)]
        raise DomainError(f"position outside [{x_min}, {x_max}]: {np.ravel(bad)[:4]}")
    h = (x_max - x_min) / n_cells
    idx = np.floor((xa - x_min) / h).astype(np.int64)
    idx = np.minimum(idx, n_cells - 1)
    return idx if xa.ndim else int(idx)


def cell_of(x, bg: Background):
    """Cell index of position ``x`` (scalar or array).

    Cells are half-open; x == x_max belongs to the last cell.
    Raises DomainError for positions outside [x_min, x_max].
    """
    return grid_index(x, bg.x_min, bg.x_max, bg.n_cells)


def local_params(x, bg: Background):
    """(nu_p, sigma_p2, R_cx) of the cell containing ``x``; constant per cell."""
    i = cell_of(x, bg)
    return bg.nu_p[i], bg.sigma_p2[i], bg.r_cx[i]


# ===================================================================
# Boundaries
# ===================================================================
@dataclass(frozen=True)
class BoundarySpec:
    """One wall of the domain.

    ``kind`` is one of ``reflecting``, ``absorbing`` or ``robin``. A Robin
    wall enforces alpha*p(L) + beta*dp/dx(L) = 0 and requires beta != 0
    (beta == 0 is an absorbing wall and must be declared as such). A
    reflecting wall is the zero-flux condition nu*p - D*dp/dx = 0, i.e. the
    Robin pair (alpha, beta) = (nu, -D) for the local drift and diffusion.
    """

    side: str              # "left" | "right"
    L: float               # wall location (m)
    kind: str = "reflecting"
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ParameterError(f"side must be left|right, got {self.side!r}")
        if self.kind not in ("reflecting", "absorbing", "robin"):
            raise ParameterError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "robin":
            if self.beta is None or self.beta == 0.0:
                raise ParameterError("robin boundary requires beta != 0; "
                                     "use kind='absorbing' for beta == 0")
            if self.alpha is None:
                raise ParameterError("robin boundary requires alpha")
        elif self.alpha is not None or self.beta is not None:
            raise ParameterError("alpha/beta only apply to kind='robin'")

    @classmethod
    def reflecting(cls, side, L):
        return cls(side=side, L=float(L), kind="reflecting")

    @classmethod
    def absorbing(cls, side, L):
        return cls(side=side, L=float(L), kind="absorbing")

    @classmethod
    def robin(cls, side, L, alpha, beta):
        return cls(side=side, L=float(L), kind="robin",
                   alpha=float(alpha), beta=float(beta))

    def as_robin(self, nu, D):
        """Equivalent (alpha, beta) given local drift/diffusion.

        Reflecting maps to the zero-flux pair (nu, -D); absorbing has no
        finite Robin representation and raises.
        """
        if self.kind == "robin":
            return self.alpha, self.beta
        if self.kind == "reflecting":
            return float(nu), -float(D)
        raise ParameterError("absorbing wall has no Robin coefficients (beta=0)")

    def ratio(self, nu, D):
        """alpha/beta for the Green's function; None marks absorbing."""
        if self.kind == "absorbing":
            return None
        a, b = self.as_robin(nu, D)
        return a / b


def check_walls(bounds, bg: Background):
    """Validate that declared walls sit on the domain edges."""
    for b in bounds:
        edge = bg.x_min if b.side == "left" else bg.x_max
        if abs(b.L - edge) > 1e-12 * max(1.0, abs(edge)):
            raise ParameterError(
                f"{b.side} wall at {b.L} does not match domain edge {edge}")
    sides = [b.side for b in bounds]
    if len(set(sides)) != len(sides):
        raise ParameterError("duplicate wall side")


# ===================================================================
# Particles
# ===================================================================
@dataclass
class ParticleState:
    """A single Monte Carlo particle.

    w is the statistical weight (>= 0, w == 0 implies dead); t is the clock
    within the current solve window.
    """

    x: float
    v: float
    w: float = 1.0
    t: float = 0.0
    alive: bool = True

    def __post_init__(self):
        if self.w < 0:
            raise ParameterError("weight must be >= 0")
        if self.w == 0.0:
            self.alive = False

    def to_array(self) -> "ParticleArray":
        return ParticleArray(
            x=np.array([self.x], dtype=float),
            v=np.array([self.v], dtype=float),
            w=np.array([self.w], dtype=float),
            t=np.array([self.t], dtype=float),
            alive=np.array([self.alive], dtype=bool),
        )


@dataclass
class ParticleArray:
    """Struct-of-arrays particle population (the unit the kernels act on)."""

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    t: np.ndarray
    alive: np.ndarray

    @classmethod
    def filled(cls, n, x, v, w=1.0):
        return cls(
            x=np.full(n, float(x)),
            v=np.asarray(v, dtype=float) * np.ones(n) if np.ndim(v) else np.full(n, float(v)),
            w=np.full(n, float(w)),
            t=np.zeros(n),
            alive=np.ones(n, dtype=bool),
        )

    def __len__(self):
        return self.x.size

    def state(self, i=0) -> ParticleState:
        return ParticleState(x=float(self.x[i]), v=float(self.v[i]),
                             w=float(self.w[i]), t=float(self.t[i]),
                             alive=bool(self.alive[i]))

    def total_weight(self) -> float:
        return float(self.w[self.alive].sum()) if self.alive.any() else 0.0


# ===================================================================
# Run configuration
# ===================================================================
@dataclass(frozen=True)
class StepConfig:
    """Knobs of one solver run."""

    dt: float
    t_final: float
    n_particles: int
    seed: int = 0
    solver: str = "kdmc_fluid"
    sampler: str = "efficient"
    boundary_sigma_threshold: float = 2.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if self.t_final < self.dt:
            raise ParameterError("t_final must be >= dt")
        if self.n_particles < 1:
            raise ParameterError("n_particles must be >= 1")
        if self.solver not in SOLVERS:
            raise ParameterError(f"solver must be one of {SOLVERS}")
        if self.sampler not in SAMPLERS:
            raise ParameterError(f"sampler must be one of {SAMPLERS}")
        if not self.boundary_sigma_threshold > 0:
            raise ParameterError("boundary_sigma_threshold must be > 0")
