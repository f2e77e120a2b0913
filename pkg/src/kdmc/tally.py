"""Weighted density estimation on the cell grid plus run diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, ParameterError
from .model import Background, ParticleArray, ParticleState, grid_index

__all__ = ["DensityTally", "RunMetrics", "deposit", "relative_error"]


@dataclass
class DensityTally:
    """Per-cell accumulated statistical weight.

    density = weight / (n_launched * cell_width), so with unit initial
    weights and lossless walls the density integrates to exactly 1.
    """

    x_min: float
    x_max: float
    n_cells: int
    weights: np.ndarray = None
    n_launched: int = 0

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.zeros(self.n_cells)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.n_cells,):
            raise ParameterError("weights shape must be (n_cells,)")

    @classmethod
    def for_background(cls, bg: Background):
        return cls(x_min=bg.x_min, x_max=bg.x_max, n_cells=bg.n_cells)

    @property
    def cell_width(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    def cell_centers(self) -> np.ndarray:
        h = self.cell_width
        return self.x_min + h * (np.arange(self.n_cells) + 0.5)

    def density(self) -> np.ndarray:
        if self.n_launched == 0:
            return np.zeros(self.n_cells)
        return self.weights / (self.n_launched * self.cell_width)

    def integral(self) -> float:
        """Integral of the density over the domain (= deposited weight per
        launched particle)."""
        if self.n_launched == 0:
            return 0.0
        return float(self.weights.sum()) / self.n_launched

    def merge(self, other: "DensityTally") -> "DensityTally":
        """Associative, commutative combination of two tallies."""
        if (other.n_cells != self.n_cells or other.x_min != self.x_min
                or other.x_max != self.x_max):
            raise ParameterError("cannot merge tallies on different grids")
        return DensityTally(self.x_min, self.x_max, self.n_cells,
                            self.weights + other.weights,
                            self.n_launched + other.n_launched)


def deposit(tally: DensityTally, p):
    """Score alive particles into their cells (snapshot estimator).

    p is a ParticleState or ParticleArray. Counts toward n_launched happen
    here: every particle passed in (alive or dead) is a launch.
    """
    pa = p.to_array() if isinstance(p, ParticleState) else p
    tally.n_launched += len(pa)
    m = pa.alive
    if not m.any():
        return
    x = pa.x[m]
    if np.any(x < tally.x_min) or np.any(x > tally.x_max):
        raise InvariantViolation("alive particle outside the domain at deposit")
    idx = grid_index(x, tally.x_min, tally.x_max, tally.n_cells)
    np.add.at(tally.weights, np.atleast_1d(idx), pa.w[m])


def relative_error(d, d_ref):
    """Euclidean-norm relative difference ||d - d_ref|| / ||d_ref||."""
    d = np.asarray(d, dtype=float)
    d_ref = np.asarray(d_ref, dtype=float)
    if d.shape != d_ref.shape:
        raise ParameterError("density grids differ")
    ref = float(np.linalg.norm(d_ref))
    if ref == 0.0:
        raise ParameterError("reference density has zero norm")
    return float(np.linalg.norm(d - d_ref)) / ref


@dataclass
class RunMetrics:
    """Counters and timing for one solver run."""

    runtime_s: float = 0.0
    collisions: int = 0
    steps_total: int = 0
    steps_fallback: int = 0
    proposals: int = 0
    accepted: int = 0
    cdf_inversions: int = 0
    crossings: int = 0
    absorbed_weight: float = 0.0
    far_wall_warnings: int = 0

    @property
    def fallback_fraction(self) -> float:
        """Share of hybrid steps that were finished kinetically."""
        return self.steps_fallback / self.steps_total if self.steps_total else 0.0

    @property
    def rejections(self) -> int:
        return self.proposals - self.accepted

    def merge(self, other: "RunMetrics"):
        self.collisions += other.collisions
        self.steps_total += other.steps_total
        self.steps_fallback += other.steps_fallback
        self.proposals += other.proposals
        self.accepted += other.accepted
        self.cdf_inversions += other.cdf_inversions
        self.crossings += other.crossings
        self.absorbed_weight += other.absorbed_weight
        self.far_wall_warnings += other.far_wall_warnings

    def absorb_sampler_stats(self, stats):
        self.proposals += stats.proposals
        self.accepted += stats.accepted
        self.cdf_inversions += stats.cdf_inversions
        self.crossings += stats.crossings
