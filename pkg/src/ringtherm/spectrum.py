"""Dicke-ladder spectrum of the ring probe.

Energies, transition gaps, thermal occupations and collective decay
weights for N permutation-symmetric two-level atoms restricted to the
maximal angular-momentum sector J = N/2.  Levels are labelled by the
half-integer projection M in {-J, ..., J}; internally every routine
works with the integer offset k = M + J in {0, ..., N} so that no
half-integer bookkeeping leaks into array indexing.

Units: hbar = k_B = 1 and the squared dipole moment is 1; the atomic
transition frequency is carried explicitly (conventionally 1.0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CouplingOutOfRange,
    NoLowerLevel,
    NonpositiveFrequency,
    TooFewAtoms,
)

__all__ = [
    "ProbeParams",
    "validate_params",
    "levels",
    "level_offset",
    "energy",
    "level_energies",
    "gap",
    "all_gaps",
    "extreme_gap_trends",
    "planck_occupation",
    "planck_derivative",
    "decay_weight",
    "all_decay_weights",
]

# exp(x) overflows near x = 709; beyond this the occupation underflows to 0
_EXP_ARG_MAX = 700.0


@dataclass(frozen=True)
class ProbeParams:
    """Validated probe parameters.

    n_atoms: number N of atoms in the ring (N >= 2).
    coupling: nearest-neighbour interaction strength, |coupling| < 0.5 * transition_freq.
    transition_freq: bare atomic transition frequency (> 0).
    j: total angular momentum J = N / 2 (derived).
    """

    n_atoms: int
    coupling: float
    transition_freq: float = 1.0

    @property
    def j(self) -> float:
        return self.n_atoms / 2.0


def validate_params(n_atoms: int, coupling: float, transition_freq: float = 1.0) -> ProbeParams:
    """Build a ProbeParams after checking every invariant.

    Raises TooFewAtoms, CouplingOutOfRange or NonpositiveFrequency.  The
    coupling bound excludes level crossings, which also guarantees that
    every transition gap returned by `gap` is strictly positive.
    """
    n_atoms = int(n_atoms)
    if n_atoms < 2:
        raise TooFewAtoms(f"need at least 2 atoms, got {n_atoms}")
    if transition_freq <= 0:
        raise NonpositiveFrequency(f"transition frequency must be > 0, got {transition_freq}")
    if abs(coupling) >= 0.5 * transition_freq:
        raise CouplingOutOfRange(
            f"|coupling| must be < 0.5 * transition frequency, got {coupling}"
        )
    params = ProbeParams(n_atoms, float(coupling), float(transition_freq))
    # positivity of all gaps follows from the bounds above; cheap to assert
    assert np.all(all_gaps(params) > 0.0)
    return params


def levels(params: ProbeParams) -> np.ndarray:
    """All level labels M = -J ... J in ascending order."""
    return np.arange(params.n_atoms + 1) - params.j


def level_offset(params: ProbeParams, m: float) -> int:
    """Integer offset k = M + J of a level label; validates the label."""
    k = m + params.j
    ki = round(k)
    if abs(k - ki) > 1e-9 or not 0 <= ki <= params.n_atoms:
        raise ValueError(f"level M={m} is not in the ladder for N={params.n_atoms}")
    return int(ki)


def energy(params: ProbeParams, m: float) -> float:
    """Energy of level M: M * w_A + coupling * (J^2 - M^2) / (J - 1/2)."""
    level_offset(params, m)
    j = params.j
    return m * params.transition_freq + params.coupling * (j * j - m * m) / (j - 0.5)


def level_energies(params: ProbeParams) -> np.ndarray:
    """Energies of all N + 1 levels, ascending in M."""
    j = params.j
    ms = levels(params)
    return ms * params.transition_freq + params.coupling * (j * j - ms * ms) / (j - 0.5)


def gap(params: ProbeParams, m: float) -> float:
    """Transition frequency w_M = E_M - E_{M-1} for the channel M -> M-1.

    Defined for M in {-J+1, ..., J}; equals
    w_A - 4 * coupling * (M - 1/2) / (N - 1).
    """
    k = level_offset(params, m)
    if k == 0:
        raise NoLowerLevel(f"no level below M={m}")
    return params.transition_freq - 4.0 * params.coupling * (m - 0.5) / (params.n_atoms - 1)


def all_gaps(params: ProbeParams) -> np.ndarray:
    """Gaps of all N channels, ordered by upper-level offset k = 1 ... N."""
    ms = np.arange(1, params.n_atoms + 1) - params.j  # upper level of each channel
    return params.transition_freq - 4.0 * params.coupling * (ms - 0.5) / (params.n_atoms - 1)


def extreme_gap_trends(params: ProbeParams) -> tuple[float, float]:
    """Second-from-edge gaps (high side, low side) of the ladder.

    These are the gaps that keep an N-dependence:
    (w_A - 2*coupling*(1 - 2/(N-1)), w_A + 2*coupling*(1 - 2/(N-1))).
    For N = 2 the ladder has only the two edge gaps, so those are returned.
    """
    w, omega = params.transition_freq, params.coupling
    if params.n_atoms == 2:
        return w - 2.0 * omega, w + 2.0 * omega
    shrink = 2.0 * omega * (1.0 - 2.0 / (params.n_atoms - 1))
    return w - shrink, w + shrink


def planck_occupation(freq: float, temperature: float) -> float:
    """Mean thermal photon number 1 / (exp(freq/T) - 1).

    Numerically stable via expm1; underflows to exactly 0 for
    freq/T > ~700 and at T = 0 (limit value).  Negative frequencies are
    accepted so the reflection identity N(-w) = -(1 + N(w)) can be
    exercised directly; production call sites always pass w > 0.
    """
    if temperature == 0.0:
        return 0.0 if freq > 0 else -1.0
    x = freq / temperature
    if x > _EXP_ARG_MAX:
        return 0.0
    return 1.0 / math.expm1(x)


def planck_derivative(freq: float, temperature: float) -> float:
    """Temperature derivative of the Planck occupation.

    dN/dT = (freq / T^2) * N * (N + 1); returns 0 at T = 0 (the limit is
    exponentially suppressed).
    """
    if temperature == 0.0:
        return 0.0
    x = freq / temperature
    if x > _EXP_ARG_MAX:
        return 0.0
    n = 1.0 / math.expm1(x)
    return (freq / temperature**2) * n * (n + 1.0)


def decay_weight(params: ProbeParams, m: float) -> float:
    """Collective decay weight of the channel M -> M-1.

    Gamma_M = (4 w_M^3 / 3) (J - M + 1)(J + M); strictly positive for
    every valid channel.
    """
    w = gap(params, m)  # validates the channel
    j = params.j
    return (4.0 * w**3 / 3.0) * (j - m + 1.0) * (j + m)


def all_decay_weights(params: ProbeParams) -> np.ndarray:
    """Decay weights of all N channels, ordered by upper-level offset k = 1 ... N."""
    n = params.n_atoms
    k = np.arange(1, n + 1)
    w = all_gaps(params)
    # (J - M + 1)(J + M) at M = k - J reduces to k (N - k + 1)
    return (4.0 * w**3 / 3.0) * k * (n - k + 1)
