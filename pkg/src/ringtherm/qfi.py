"""Quantum Fisher information of the probe with respect to temperature.

Two production routes are provided: an analytic expression for the
thermal state (energy variance over T^4) and a block-diagonal formula
for the evolving state, which splits into the 2x2 coherence block
spanned by the bottom and top levels plus a classical sum over interior
populations.  A general spectral-decomposition evaluator is included as
the desk-scale test oracle for both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ProbeState, SensitivityState
from .errors import NonpositiveQfi, NonpositiveTemperature, NotDensityMatrix, SingularTerm
from .spectrum import ProbeParams, level_energies

__all__ = [
    "QfiResult",
    "BlockSpectrum",
    "equilibrium_qfi",
    "block_spectrum",
    "dynamical_qfi",
    "spectral_qfi_oracle",
    "cramer_rao_bound",
]

EPS_POP = 1e-15
EPS_COHERENCE = 1e-14


@dataclass(frozen=True)
class QfiResult:
    """A QFI value split into coherence-block and population contributions."""

    total: float
    block_part: float
    diagonal_part: float
    degenerate_branch_used: bool


@dataclass(frozen=True)
class BlockSpectrum:
    """Eigendecomposition of the 2x2 block on the bottom/top level pair.

    a_* are the bottom-level components of the eigenvectors, b_* the
    top-level components.  `degenerate` marks that the coherence was below
    threshold and basis vectors were substituted for the eigenvectors.
    """

    p_plus: float
    p_minus: float
    eta: float
    chi_plus: float
    chi_minus: float
    a_plus: complex
    a_minus: complex
    b_plus: complex
    b_minus: complex
    degenerate: bool


def equilibrium_qfi(params: ProbeParams, temperature: float) -> float:
    """QFI of the thermal state: energy variance over T^4.

    Boltzmann weights are evaluated with ground-shifted exponents, so the
    result stays finite down to very low temperatures (it underflows to 0
    rather than producing NaN).
    """
    if temperature <= 0:
        raise NonpositiveTemperature(f"temperature must be > 0, got {temperature}")
    e = level_energies(params)
    w = np.exp(-(e - e.min()) / temperature)
    p = w / w.sum()
    mean = float(p @ e)
    var = float(p @ (e - mean) ** 2)
    return var / temperature**4


def block_spectrum(state: ProbeState, eps_coherence: float = EPS_COHERENCE) -> BlockSpectrum:
    """Diagonalize the 2x2 block spanned by the bottom and top levels.

    For |coherence| below `eps_coherence` the block is already diagonal to
    working precision and its eigenvectors are ill-conditioned (or
    undefined when the two populations also coincide), so basis vectors
    are returned and the condition is flagged.
    """
    pops = state.populations_clamped
    p_bot, p_top = float(pops[0]), float(pops[-1])
    c = complex(state.coherence)
    total = p_bot + p_top
    eta = math.sqrt(4.0 * abs(c) ** 2 + (p_bot - p_top) ** 2)
    p_plus = 0.5 * (total + eta)
    p_minus = max(0.5 * (total - eta), 0.0)

    if abs(c) < eps_coherence:
        # block is diagonal to working precision: populations are the
        # eigenvalues and basis vectors stand in for the eigenvectors
        if p_bot >= p_top:
            p_plus, p_minus = p_bot, p_top
            a_plus, b_plus, a_minus, b_minus = 1.0, 0.0, 0.0, 1.0
        else:
            p_plus, p_minus = p_top, p_bot
            a_plus, b_plus, a_minus, b_minus = 0.0, 1.0, 1.0, 0.0
        return BlockSpectrum(
            p_plus, p_minus, eta, abs(p_top - p_plus), abs(p_bot - p_minus),
            complex(a_plus), complex(a_minus), complex(b_plus), complex(b_minus),
            degenerate=True,
        )

    chi_minus = math.sqrt(abs(c) ** 2 + (p_bot - p_minus) ** 2)
    chi_plus = math.sqrt(abs(c) ** 2 + (p_top - p_plus) ** 2)
    a_minus = -c / chi_minus
    b_minus = (p_bot - p_minus) / chi_minus
    a_plus = (p_top - p_plus) / chi_plus
    b_plus = -np.conj(c) / chi_plus
    return BlockSpectrum(
        p_plus, p_minus, eta, chi_plus, chi_minus,
        complex(a_plus), complex(a_minus), complex(b_plus), complex(b_minus),
        degenerate=False,
    )


# A population this far below eps_pop is indistinguishable from integrator
# noise on a truly empty level; a real Boltzmann tail this deep contributes
# nothing at the equilibration-criterion scale.
_DEAD_FRACTION = 1e-3


def _classical_term(pop: float, dpop: float, eps_pop: float) -> float:
    """One population's Fisher contribution |dp|^2 / p with 0/0 handling.

    A level that is empty to threshold and carries a negligible derivative
    is a consistent 0/0 and contributes nothing (e.g. interior levels of a
    fresh superposition state).  Sub-threshold levels with a genuine
    derivative keep their term: low-temperature Boltzmann tails sit far
    below any sensible threshold yet their terms |dp|^2/p matter at the
    equilibration-criterion scale.  A dead level (population below
    eps_pop * _DEAD_FRACTION, typically clamped integrator noise) may
    carry derivative noise up to sqrt(eps_pop); beyond that the thresholds
    are misconfigured and SingularTerm is raised.
    """
    if pop < eps_pop and abs(dpop) < eps_pop:
        return 0.0
    if pop <= eps_pop * _DEAD_FRACTION:
        if abs(dpop) <= math.sqrt(eps_pop):
            return 0.0
        raise SingularTerm(
            f"population is dead ({pop:.3e}) but its derivative {dpop:.3e} is not negligible"
        )
    return dpop * dpop / pop


def dynamical_qfi(
    state: ProbeState,
    sens: SensitivityState,
    eps_pop: float = EPS_POP,
    eps_coherence: float = EPS_COHERENCE,
) -> QfiResult:
    """QFI of an evolving state from its elementwise temperature derivative.

    The coherence block contributes through all four eigenvector pairs
    (j, k); a pair is skipped when its population sum falls below
    `eps_pop`.  Interior levels contribute classically; an interior level
    counted as empty must also have a negligible derivative, otherwise the
    thresholds are misconfigured and SingularTerm is raised.

    In the degenerate branch (no coherence) the bottom/top populations
    join the classical sum, and the block part reduces to the two
    off-diagonal derivative terms, which vanish when the coherence
    derivative does.
    """
    pops = state.populations_clamped
    dp = sens.d_populations
    dc = complex(sens.d_coherence)
    bs = block_spectrum(state, eps_coherence)

    diagonal_part = 0.0
    for k in range(1, len(pops) - 1):
        diagonal_part += _classical_term(float(pops[k]), float(dp[k]), eps_pop)

    if bs.degenerate:
        diagonal_part += _classical_term(float(pops[0]), float(dp[0]), eps_pop)
        diagonal_part += _classical_term(float(pops[-1]), float(dp[-1]), eps_pop)
        pair_sum = bs.p_plus + bs.p_minus
        block_part = 4.0 * abs(dc) ** 2 / pair_sum if pair_sum >= eps_pop else 0.0
    else:
        dblock = np.array([[dp[0], dc], [np.conj(dc), dp[-1]]])
        vecs = {
            "+": np.array([bs.a_plus, bs.b_plus]),
            "-": np.array([bs.a_minus, bs.b_minus]),
        }
        pvals = {"+": bs.p_plus, "-": bs.p_minus}
        block_part = 0.0
        for j in ("+", "-"):
            for k in ("+", "-"):
                denom = pvals[j] + pvals[k]
                if denom < eps_pop:
                    continue
                overlap = vecs[j].conj() @ dblock @ vecs[k]
                block_part += 2.0 / denom * abs(overlap) ** 2

    return QfiResult(
        total=float(block_part + diagonal_part),
        block_part=float(block_part),
        diagonal_part=float(diagonal_part),
        degenerate_branch_used=bs.degenerate,
    )


def spectral_qfi_oracle(
    rho: np.ndarray,
    drho: np.ndarray,
    eps_pop: float = EPS_POP,
    matrix_tol: float = 1e-8,
) -> float:
    """General QFI via full eigendecomposition (desk-scale test oracle).

    Q = 2 sum_{j,k} |<v_j| drho |v_k>|^2 / (p_j + p_k) over eigenpairs of
    rho, skipping pairs whose population sum is below `eps_pop`.
    """
    rho = np.asarray(rho, dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape != drho.shape:
        raise ValueError("expected square matrices of matching shape")
    if rho.shape[0] > 64:
        raise ValueError("oracle is desk-scale only (dimension <= 64)")
    if np.max(np.abs(rho - rho.conj().T)) > matrix_tol:
        raise NotDensityMatrix("state is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > matrix_tol:
        raise NotDensityMatrix("state does not have unit trace")
    if np.max(np.abs(drho - drho.conj().T)) > matrix_tol:
        raise NotDensityMatrix("derivative is not Hermitian")

    p, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if p.min() < -matrix_tol:
        raise NotDensityMatrix(f"state has negative eigenvalue {p.min():.3e}")
    overlaps = v.conj().T @ drho @ v
    denom = p[:, None] + p[None, :]
    mask = denom >= eps_pop
    total = 2.0 * float(np.sum(np.abs(overlaps[mask]) ** 2 / denom[mask]))
    return total


def cramer_rao_bound(qfi: float, repetitions: int = 1) -> float:
    """Lower bound on the estimation error: 1 / sqrt(repetitions * qfi)."""
    if qfi <= 0:
        raise NonpositiveQfi(f"QFI must be > 0, got {qfi}")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    return 1.0 / math.sqrt(repetitions * qfi)
