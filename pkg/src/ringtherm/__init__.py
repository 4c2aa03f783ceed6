"""Thermometry of a bosonic bath with a ring of interacting two-level atoms.

The library integrates the collective dissipative dynamics of the probe,
propagates temperature sensitivities, and evaluates quantum Fisher
information in and out of equilibrium to locate optimal operating
temperatures and measurement times.
"""

from .dynamics import (
    IntegratorOptions,
    ProbeState,
    SensitivityState,
    evolve,
    evolve_with_sensitivity,
    ghz_like_state,
    gibbs_state,
    gibbs_state_derivative,
)
from .errors import RingthermError
from .qfi import (
    QfiResult,
    block_spectrum,
    cramer_rao_bound,
    dynamical_qfi,
    equilibrium_qfi,
    spectral_qfi_oracle,
)
from .spectrum import (
    ProbeParams,
    decay_weight,
    energy,
    extreme_gap_trends,
    gap,
    planck_derivative,
    planck_occupation,
    validate_params,
)

__version__ = "0.1.0"

__all__ = [
    "IntegratorOptions",
    "ProbeParams",
    "ProbeState",
    "QfiResult",
    "RingthermError",
    "SensitivityState",
    "__version__",
    "block_spectrum",
    "cramer_rao_bound",
    "decay_weight",
    "dynamical_qfi",
    "energy",
    "equilibrium_qfi",
    "evolve",
    "evolve_with_sensitivity",
    "extreme_gap_trends",
    "gap",
    "ghz_like_state",
    "gibbs_state",
    "gibbs_state_derivative",
    "planck_derivative",
    "planck_occupation",
    "spectral_qfi_oracle",
    "validate_params",
]
