"""Kinetic-diffusion Monte Carlo for 1D neutral particle transport.

Hybrid solver family for a homogeneous-per-cell plasma background: a pure
kinetic Monte Carlo reference, an exact-step advection-diffusion fluid model,
and two kinetic-diffusion hybrids that differ in how the diffusive step
treats walls (kinetic fallback vs. an exact boundary-aware transition
density).
"""

from .bsampler import (SamplerStats, WeightedSample, sample_basic,
                       sample_basic_many, sample_efficient,
                       sample_efficient_many)
from .driver import SourceSpec, run_solver
from .errors import (DomainError, InvariantViolation, KdmcError,
                     NumericalError, ParameterError, UnsupportedConfigError)
from .greens import (GreenParams, boundary_term_mass_below,
                     boundary_term_quantile, free_kernel, mass_split, pdf,
                     pdf_terms, survival_mass)
from .hybrid import (FluidCoeffs, effective_diffusion, fluid_coefficients, fluid_solve,
                     kdmc_solve, kdmc_step, kdmc_step_many)
from .kinetic import advect, kinetic_flight, kinetic_solve
from .model import (Background, BoundarySpec, ParticleArray, ParticleState,
                    StepConfig, cell_of, local_params)
from .sampling import (make_stream, sample_exponential, sample_gaussian,
                       sample_truncated_gaussian)
from .tally import DensityTally, RunMetrics, deposit, relative_error

__version__ = "0.1.0"

__all__ = [
    "Background", "BoundarySpec", "ParticleArray", "ParticleState",
    "StepConfig", "cell_of", "local_params",
    "make_stream", "sample_exponential", "sample_gaussian",
    "sample_truncated_gaussian",
    "GreenParams", "free_kernel", "pdf", "pdf_terms", "survival_mass",
    "mass_split", "boundary_term_mass_below", "boundary_term_quantile",
    "WeightedSample", "SamplerStats", "sample_basic", "sample_efficient",
    "sample_basic_many", "sample_efficient_many",
    "kinetic_flight", "kinetic_solve", "advect",
    "FluidCoeffs", "fluid_coefficients", "effective_diffusion", "kdmc_step",
    "kdmc_step_many", "kdmc_solve", "fluid_solve",
    "DensityTally", "RunMetrics", "deposit", "relative_error",
    "SourceSpec", "run_solver",
    "KdmcError", "DomainError", "ParameterError", "NumericalError",
    "UnsupportedConfigError", "InvariantViolation",
    "__version__",
]
