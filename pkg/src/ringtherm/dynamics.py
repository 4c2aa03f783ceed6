"""Collective-decay dynamics of the ring probe.

The probe state is tracked in reduced form: the N + 1 level populations
plus the single coherence between the bottom and top of the ladder.
This set is closed under the dissipative generator (each jump operator
feeds populations only, and the Hamiltonian plus anticommutator act as a
complex scalar on the extreme coherence), which is verified by a full
density-matrix oracle in the test suite rather than assumed.

Temperature sensitivities are integrated jointly with the state: the
bath temperature enters the generator only through the thermal
occupations, so the derivative system needs nothing beyond the analytic
Planck derivative.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    IntegrationFailure,
    NonpositiveTemperature,
    NonzeroCoupling,
    PhiOutOfRange,
)
from .spectrum import (
    ProbeParams,
    all_decay_weights,
    all_gaps,
    level_energies,
    levels,
    planck_derivative,
    planck_occupation,
)

__all__ = [
    "ProbeState",
    "SensitivityState",
    "IntegratorOptions",
    "SensitivityPropagator",
    "ghz_like_state",
    "gibbs_state",
    "gibbs_state_derivative",
    "master_rhs",
    "collective_rhs",
    "evolve",
    "evolve_with_sensitivity",
    "sensitivity_trajectory",
    "check_state",
]

_METHODS = ("DOP853", "RK45", "RK23")


@dataclass(frozen=True)
class ProbeState:
    """Reduced probe state: level populations and the extreme coherence.

    populations[k] is the occupation of level M = k - J; coherence is the
    matrix element between the bottom (-J) and top (+J) levels.  The
    mirrored element is implicit by Hermiticity.
    """

    params: ProbeParams
    populations: np.ndarray
    coherence: complex = 0.0

    @property
    def populations_clamped(self) -> np.ndarray:
        """Populations with tiny integrator negatives clamped to zero."""
        return np.maximum(self.populations, 0.0)


@dataclass(frozen=True)
class SensitivityState:
    """Elementwise temperature derivative of a ProbeState."""

    d_populations: np.ndarray
    d_coherence: complex = 0.0


@dataclass(frozen=True)
class IntegratorOptions:
    """Adaptive embedded Runge-Kutta settings."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    method: str = "DOP853"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")


def check_state(
    state: ProbeState,
    trace_tol: float = 1e-9,
    positivity_tol: float = 1e-12,
    coherence_tol: float = 1e-9,
) -> None:
    """Raise ValueError if the state violates its invariants."""
    p = state.populations
    if p.shape != (state.params.n_atoms + 1,):
        raise ValueError("population vector does not match the parameter set")
    if abs(p.sum() - 1.0) > trace_tol:
        raise ValueError(f"trace deviates by {p.sum() - 1.0:.3e}")
    if p.min() < -positivity_tol:
        raise ValueError(f"population {p.min():.3e} below -{positivity_tol:g}")
    bound = math.sqrt(max(p[0], 0.0) * max(p[-1], 0.0))
    if abs(state.coherence) > bound + coherence_tol:
        raise ValueError(f"coherence {abs(state.coherence):.3e} exceeds block bound {bound:.3e}")


def ghz_like_state(params: ProbeParams, phi: float) -> ProbeState:
    """Superposition cos(phi)|bottom> + sin(phi)|top> as a density matrix."""
    if not 0.0 <= phi <= math.pi / 2:
        raise PhiOutOfRange(f"phi must be in [0, pi/2], got {phi}")
    p = np.zeros(params.n_atoms + 1)
    c, s = math.cos(phi), math.sin(phi)
    p[0] = c * c
    p[-1] = s * s
    return ProbeState(params, p, complex(c * s))


def gibbs_state(params: ProbeParams, temperature: float) -> ProbeState:
    """Thermal state with Boltzmann-weighted populations and no coherence.

    Weights are computed with the exponent shifted by the ground energy so
    that low temperatures underflow gracefully instead of overflowing.
    """
    if temperature <= 0:
        raise NonpositiveTemperature(f"temperature must be > 0, got {temperature}")
    e = level_energies(params)
    w = np.exp(-(e - e.min()) / temperature)
    return ProbeState(params, w / w.sum(), 0.0)


def gibbs_state_derivative(params: ProbeParams, temperature: float) -> SensitivityState:
    """Analytic temperature derivative of the thermal state.

    dp_M/dT = p_M (E_M - <E>) / T^2; the coherence stays zero.
    """
    state = gibbs_state(params, temperature)
    e = level_energies(params)
    mean_e = float(state.populations @ e)
    dp = state.populations * (e - mean_e) / temperature**2
    return SensitivityState(dp, 0.0)


class _Generator:
    """Precomputed linear generator of the reduced dynamics at fixed T.

    Populations evolve as p' = A p (a birth-death chain over the ladder);
    the extreme coherence evolves as c' = lam * c.  The *_dt fields are
    the elementwise temperature derivatives of A and lam.
    """

    def __init__(self, params: ProbeParams, temperature: float):
        if temperature <= 0:
            raise NonpositiveTemperature(f"temperature must be > 0, got {temperature}")
        n = params.n_atoms
        gaps = all_gaps(params)  # channel k = 1..N at index k-1
        gamma = all_decay_weights(params)
        nbar = np.array([planck_occupation(w, temperature) for w in gaps])
        ndot = np.array([planck_derivative(w, temperature) for w in gaps])

        self.n_levels = n + 1
        self.matrix = self._chain(n, gamma * (nbar + 1.0), gamma * nbar)
        self.matrix_dt = self._chain(n, gamma * ndot, gamma * ndot)

        e = level_energies(params)
        self.lam = -1j * (e[0] - e[-1]) - 0.5 * (gamma[-1] * (nbar[-1] + 1.0) + gamma[0] * nbar[0])
        self.lam_dt = complex(-0.5 * (gamma[-1] * ndot[-1] + gamma[0] * ndot[0]))

    @staticmethod
    def _chain(n: int, down: np.ndarray, up: np.ndarray) -> np.ndarray:
        """Tridiagonal rate matrix: down[k-1] drains level k into k-1, up[k-1] the reverse."""
        a = np.zeros((n + 1, n + 1))
        ks = np.arange(1, n + 1)
        a[ks - 1, ks] += down
        a[ks, ks - 1] += up
        a[ks, ks] -= down
        a[ks - 1, ks - 1] -= up
        return a

    def rhs(self, _t: float, y: np.ndarray) -> np.ndarray:
        """Plain system: y = [populations, Re c, Im c]."""
        n1 = self.n_levels
        out = np.empty_like(y)
        out[:n1] = self.matrix @ y[:n1]
        dc = self.lam * complex(y[n1], y[n1 + 1])
        out[n1] = dc.real
        out[n1 + 1] = dc.imag
        return out

    def rhs_augmented(self, _t: float, y: np.ndarray) -> np.ndarray:
        """Augmented system: y = [p, Re c, Im c, dp, Re dc, Im dc]."""
        n1 = self.n_levels
        half = n1 + 2
        out = np.empty_like(y)
        out[:n1] = self.matrix @ y[:n1]
        c = complex(y[n1], y[n1 + 1])
        dc = self.lam * c
        out[n1] = dc.real
        out[n1 + 1] = dc.imag
        out[half : half + n1] = self.matrix @ y[half : half + n1] + self.matrix_dt @ y[:n1]
        ds = self.lam * complex(y[half + n1], y[half + n1 + 1]) + self.lam_dt * c
        out[half + n1] = ds.real
        out[half + n1 + 1] = ds.imag
        return out


def master_rhs(
    params: ProbeParams, temperature: float, state: ProbeState
) -> tuple[np.ndarray, complex]:
    """Instantaneous rates of the reduced master equation.

    Returns (population rates, coherence rate).  Populations obey a
    birth-death chain whose channel k couples levels k and k-1 with
    emission rate Gamma_k (nbar_k + 1) and absorption rate Gamma_k nbar_k;
    the coherence decays as a complex scalar combining the free phase with
    half the sum of its two dephasing channels.
    """
    gen = _Generator(params, temperature)
    if state.populations.shape != (gen.n_levels,):
        raise ValueError("state does not match the parameter set")
    return gen.matrix @ state.populations, gen.lam * state.coherence


def collective_rhs(
    params: ProbeParams, temperature: float, state: ProbeState
) -> tuple[np.ndarray, complex]:
    """Rates from the zero-coupling collective form of the generator.

    Built independently of master_rhs: the collective raising/lowering
    operators are assembled as full matrices from their ladder matrix
    elements sqrt((J -+ M)(J +- M + 1)) and the two dissipators are applied
    to the embedded density matrix.  Valid only at zero coupling, where it
    must coincide with master_rhs on the tracked elements.
    """
    if params.coupling != 0.0:
        raise NonzeroCoupling(f"collective form requires coupling = 0, got {params.coupling}")
    if temperature <= 0:
        raise NonpositiveTemperature(f"temperature must be > 0, got {temperature}")
    n = params.n_atoms
    j = params.j
    ms = levels(params)
    amp = np.sqrt((j - ms[1:] + 1.0) * (j + ms[1:]))  # <M-1| J_- |M>
    jm = np.zeros((n + 1, n + 1))
    jm[np.arange(n), np.arange(1, n + 1)] = amp
    jp = jm.T.copy()

    rho = np.diag(state.populations).astype(complex)
    rho[0, -1] = state.coherence
    rho[-1, 0] = np.conj(state.coherence)

    w = params.transition_freq
    h = np.diag(ms * w)
    nbar = planck_occupation(w, temperature)
    g0 = 4.0 * w**3 / 3.0

    def dissipator(op: np.ndarray, r: np.ndarray) -> np.ndarray:
        opd = op.T.conj()
        return op @ r @ opd - 0.5 * (opd @ op @ r + r @ opd @ op)

    drho = -1j * (h @ rho - rho @ h)
    drho += g0 * (nbar * dissipator(jp, rho) + (nbar + 1.0) * dissipator(jm, rho))
    return np.real(np.diag(drho)).copy(), complex(drho[0, -1])


def _pack(state: ProbeState) -> np.ndarray:
    c = complex(state.coherence)
    return np.concatenate([state.populations, [c.real, c.imag]])


def _unpack(params: ProbeParams, y: np.ndarray) -> ProbeState:
    n1 = params.n_atoms + 1
    return ProbeState(params, y[:n1].copy(), complex(y[n1], y[n1 + 1]))


def _integrate(gen, rhs, y0, t0: float, t1: float, opts: IntegratorOptions) -> np.ndarray:
    sol = solve_ivp(
        rhs,
        (t0, t1),
        y0,
        method=opts.method,
        rtol=opts.rel_tol,
        atol=opts.abs_tol,
        max_step=opts.max_step,
        dense_output=False,
    )
    if not sol.success:
        raise IntegrationFailure(sol.message, float(sol.t[-1]))
    return sol.y[:, -1]


def evolve(
    params: ProbeParams,
    temperature: float,
    state0: ProbeState,
    horizon: float,
    opts: IntegratorOptions | None = None,
) -> ProbeState:
    """Integrate the reduced master equation for `horizon` time units."""
    opts = opts or IntegratorOptions()
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    gen = _Generator(params, temperature)
    if horizon == 0:
        return state0
    y = _integrate(gen, gen.rhs, _pack(state0), 0.0, horizon, opts)
    state = _unpack(params, y)
    _require_valid(state, horizon)
    return state


def evolve_with_sensitivity(
    params: ProbeParams,
    temperature: float,
    state0: ProbeState,
    horizon: float,
    opts: IntegratorOptions | None = None,
) -> tuple[ProbeState, SensitivityState]:
    """Integrate state and temperature sensitivity jointly.

    The initial state must not depend on T, so the sensitivity starts at
    zero; it picks up exactly the terms generated by the Planck-occupation
    derivatives of the rate matrix.
    """
    return SensitivityPropagator(params, temperature, state0, opts).at(horizon)


class SensitivityPropagator:
    """One trajectory of the augmented (state + sensitivity) system.

    Evaluations at arbitrary times continue the integration from the
    nearest earlier checkpoint, so sweeping a time grid costs a single
    pass and out-of-order probes (bisection, golden-section) only
    re-integrate short segments.  Every returned point is a genuine
    integrator endpoint, never an interpolant.
    """

    def __init__(
        self,
        params: ProbeParams,
        temperature: float,
        state0: ProbeState,
        opts: IntegratorOptions | None = None,
    ):
        self.params = params
        self.temperature = temperature
        self._gen = _Generator(params, temperature)
        self._opts = opts or IntegratorOptions()
        y0 = np.concatenate([_pack(state0), np.zeros(self._gen.n_levels + 2)])
        self._times = [0.0]
        self._states = [y0]

    def at(self, t: float) -> tuple[ProbeState, SensitivityState]:
        """State and sensitivity at time t >= 0."""
        if t < 0:
            raise ValueError(f"time must be >= 0, got {t}")
        t = float(t)
        i = bisect.bisect_right(self._times, t) - 1
        if self._times[i] == t:
            y = self._states[i]
        else:
            y = _integrate(
                self._gen, self._gen.rhs_augmented, self._states[i], self._times[i], t, self._opts
            )
            self._times.insert(i + 1, t)
            self._states.insert(i + 1, y)

        n1 = self._gen.n_levels
        state = _unpack(self.params, y[: n1 + 2])
        sens = SensitivityState(
            y[n1 + 2 : 2 * n1 + 2].copy(), complex(y[2 * n1 + 2], y[2 * n1 + 3])
        )
        _require_valid(state, t)
        if abs(sens.d_populations.sum()) > 1e-9:
            raise IntegrationFailure(
                f"sensitivity trace drifted to {sens.d_populations.sum():.3e}", t
            )
        return state, sens


def sensitivity_trajectory(
    params: ProbeParams,
    temperature: float,
    state0: ProbeState,
    times,
    opts: IntegratorOptions | None = None,
) -> list[tuple[ProbeState, SensitivityState]]:
    """State and sensitivity at each requested time, in one integration pass.

    `times` must be non-decreasing and non-negative.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be non-decreasing and non-negative")
    prop = SensitivityPropagator(params, temperature, state0, opts)
    return [prop.at(t) for t in times]


def _require_valid(state: ProbeState, time_reached: float) -> None:
    try:
        check_state(state)
    except ValueError as exc:
        raise IntegrationFailure(
            f"integrator output violates state invariants: {exc}", time_reached
        )
