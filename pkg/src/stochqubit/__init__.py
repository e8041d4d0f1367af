"""Stochastic two-level dynamics in a classical noise bath.

Trajectory integrators, Fokker-Planck solvers on (theta, phi), closed-form
relaxation spectra, and quenched/annealed entropy observables for one spin
and for two spins sharing a bath.
"""

__version__ = "0.1.0"

from .density import (  # noqa: E402
    AngleState,
    DensityMatrix,
    entropy,
    from_angles,
    mixing_alpha,
    purity,
    spin_z_expectation,
    to_angles,
)
from .dynamics import BathParameters, EnsembleConfig, run_ensemble  # noqa: E402

__all__ = [
    "AngleState",
    "BathParameters",
    "DensityMatrix",
    "EnsembleConfig",
    "entropy",
    "from_angles",
    "mixing_alpha",
    "purity",
    "run_ensemble",
    "spin_z_expectation",
    "to_angles",
]
