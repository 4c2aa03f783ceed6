"""QFI formulas against the spectral-decomposition oracle and frozen values."""

from __future__ import annotations

import math

import numpy as np
import pytest

from ringtherm.dynamics import (
    ProbeState,
    SensitivityState,
    evolve_with_sensitivity,
    ghz_like_state,
    gibbs_state,
    gibbs_state_derivative,
)
from ringtherm.errors import (
    NonpositiveQfi,
    NonpositiveTemperature,
    NotDensityMatrix,
    SingularTerm,
)
from ringtherm.qfi import (
    block_spectrum,
    cramer_rao_bound,
    dynamical_qfi,
    equilibrium_qfi,
    spectral_qfi_oracle,
)
from ringtherm.spectrum import level_energies, validate_params

from _oracles import (
    embed_sensitivity,
    embed_state,
    random_sensitivity,
    random_state,
)

# Var(E)/T^4 for two atoms, no coupling, T = 1 (energies -1, 0, 1),
# evaluated with a 40-digit Boltzmann sum
EQ_QFI_N2_T1 = 0.4244045446892544


class TestEquilibriumQfi:
    def test_two_atom_reference_value(self):
        p = validate_params(2, 0.0)
        assert equilibrium_qfi(p, 1.0) == pytest.approx(EQ_QFI_N2_T1, rel=1e-13)

    def test_vanishes_at_high_temperature(self):
        p = validate_params(6, 0.2)
        assert equilibrium_qfi(p, 1e6) < 1e-20

    def test_rejects_nonpositive_temperature(self):
        p = validate_params(2, 0.0)
        with pytest.raises(NonpositiveTemperature):
            equilibrium_qfi(p, 0.0)

    def test_matches_spectral_oracle_on_gibbs_states(self):
        for n, omega, t in [(2, 0.0, 1.0), (5, 0.3, 0.7), (6, -0.4, 0.4), (4, 0.45, 2.0)]:
            p = validate_params(n, omega)
            q = equilibrium_qfi(p, t)
            oracle = spectral_qfi_oracle(
                embed_state(gibbs_state(p, t)),
                embed_sensitivity(gibbs_state_derivative(p, t)),
            )
            assert q == pytest.approx(oracle, rel=1e-10)

    def test_ferromagnetic_peak_higher_and_earlier(self):
        pf = validate_params(20, -0.45)
        p0 = validate_params(20, 0.0)
        ts = np.arange(0.01, 3.0, 0.005)
        qf = np.array([equilibrium_qfi(pf, t) for t in ts])
        q0 = np.array([equilibrium_qfi(p0, t) for t in ts])
        assert qf.max() > q0.max()
        assert ts[qf.argmax()] < ts[q0.argmax()]


class TestBlockSpectrum:
    def test_diagonal_block(self):
        p = validate_params(4, 0.0)
        pops = np.array([0.7, 0.0, 0.0, 0.0, 0.3])
        bs = block_spectrum(ProbeState(p, pops, 0.0))
        assert bs.degenerate
        assert bs.eta == pytest.approx(0.4)
        assert (bs.p_plus, bs.p_minus) == (0.7, 0.3)
        assert (bs.a_plus, bs.b_plus) == (1.0, 0.0)
        assert (bs.a_minus, bs.b_minus) == (0.0, 1.0)

    def test_pure_superposition_block(self):
        p = validate_params(4, 0.0)
        bs = block_spectrum(ghz_like_state(p, math.pi / 4))
        assert not bs.degenerate
        assert bs.eta == pytest.approx(1.0)
        assert bs.p_plus == pytest.approx(1.0)
        assert bs.p_minus == pytest.approx(0.0, abs=1e-15)

    def test_matches_eigh_on_random_blocks(self):
        rng = np.random.default_rng(23)
        p = validate_params(3, 0.1)
        for _ in range(200):
            state = random_state(p, rng)
            bs = block_spectrum(state)
            block = np.array(
                [
                    [state.populations[0], state.coherence],
                    [np.conj(state.coherence), state.populations[-1]],
                ]
            )
            evals = np.linalg.eigvalsh(block)
            assert bs.p_minus == pytest.approx(evals[0], abs=1e-12)
            assert bs.p_plus == pytest.approx(evals[1], abs=1e-12)
            # eigenvector normalization and eigen-equation
            for pv, a, b in ((bs.p_plus, bs.a_plus, bs.b_plus), (bs.p_minus, bs.a_minus, bs.b_minus)):
                vec = np.array([a, b])
                assert abs(np.linalg.norm(vec) - 1.0) < 1e-12
                assert np.linalg.norm(block @ vec - pv * vec) < 1e-12

    def test_eigenvalue_sum_preserved(self):
        rng = np.random.default_rng(29)
        p = validate_params(5, -0.2)
        for _ in range(50):
            state = random_state(p, rng)
            bs = block_spectrum(state)
            assert bs.p_plus + bs.p_minus == pytest.approx(
                state.populations[0] + state.populations[-1], abs=1e-12
            )


class TestDynamicalQfi:
    def test_zero_sensitivity_zero_qfi(self):
        p = validate_params(5, 0.3)
        state = ghz_like_state(p, math.pi / 4)
        sens = SensitivityState(np.zeros(6), 0.0)
        result = dynamical_qfi(state, sens)
        assert result.total == 0.0

    def test_matches_oracle_on_random_inputs(self):
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 7))
            p = validate_params(n, float(rng.uniform(-0.45, 0.45)))
            state = random_state(p, rng)
            sens = random_sensitivity(p, rng)
            got = dynamical_qfi(state, sens).total
            want = spectral_qfi_oracle(embed_state(state), embed_sensitivity(sens))
            worst = max(worst, abs(got - want) / max(want, 1e-300))
        assert worst <= 1e-9

    def test_diagonal_state_reduces_to_classical_fisher(self):
        rng = np.random.default_rng(37)
        p = validate_params(5, 0.2)
        pops = rng.random(6) + 0.1
        pops /= pops.sum()
        dp = rng.standard_normal(6)
        dp -= dp.mean()
        result = dynamical_qfi(ProbeState(p, pops, 0.0), SensitivityState(dp, 0.0))
        classical = float(np.sum(dp**2 / pops))
        assert result.total == pytest.approx(classical, rel=1e-12)
        assert result.degenerate_branch_used
        # with no coherence derivative the whole sum is classical
        assert result.block_part == 0.0
        assert result.diagonal_part == pytest.approx(classical, rel=1e-12)

    def test_degenerate_branch_keeps_coherence_derivative(self):
        # diagonal state but nonzero d(coherence)/dT: the off-diagonal
        # derivative still carries information 4|dc|^2 / (p0 + pN)
        p = validate_params(4, 0.1)
        pops = np.array([0.5, 0.1, 0.1, 0.1, 0.2])
        dc = 0.05 + 0.02j
        result = dynamical_qfi(ProbeState(p, pops, 0.0), SensitivityState(np.zeros(5), dc))
        expected = 4.0 * abs(dc) ** 2 / 0.7
        assert result.block_part == pytest.approx(expected, rel=1e-12)
        oracle = spectral_qfi_oracle(
            embed_state(ProbeState(p, pops, 0.0)),
            embed_sensitivity(SensitivityState(np.zeros(5), dc)),
        )
        assert result.total == pytest.approx(oracle, rel=1e-9)

    def test_ghz_time_zero_skips_empty_levels(self):
        p = validate_params(6, 0.3)
        state = ghz_like_state(p, math.pi / 3)
        sens = SensitivityState(np.zeros(7), 0.0)
        assert dynamical_qfi(state, sens).total == 0.0

    def test_singular_term_signals_misconfiguration(self):
        p = validate_params(4, 0.1)
        pops = np.array([0.5, 0.0, 0.2, 0.1, 0.2])
        dp = np.array([0.0, 0.5, -0.25, 0.0, -0.25])  # dead level with real derivative
        with pytest.raises(SingularTerm):
            dynamical_qfi(ProbeState(p, pops, 0.0), SensitivityState(dp, 0.0))

    def test_long_time_limit_equals_equilibrium_qfi(self):
        p = validate_params(5, 0.3)
        state, sens = evolve_with_sensitivity(p, 1.0, ghz_like_state(p, math.pi / 4), 60.0)
        q = dynamical_qfi(state, sens).total
        assert q == pytest.approx(equilibrium_qfi(p, 1.0), rel=1e-9)

    def test_total_is_block_plus_diagonal_and_nonnegative(self):
        rng = np.random.default_rng(41)
        p = validate_params(4, -0.35)
        for _ in range(100):
            r = dynamical_qfi(random_state(p, rng), random_sensitivity(p, rng))
            assert r.total == r.block_part + r.diagonal_part
            assert r.total >= 0.0


class TestSpectralOracle:
    def test_two_level_classical_value(self):
        q = 0.3
        rho = np.diag([q, 1 - q]).astype(complex)
        qdot = 0.17
        drho = np.diag([qdot, -qdot]).astype(complex)
        want = qdot**2 * (1 / q + 1 / (1 - q))
        assert spectral_qfi_oracle(rho, drho) == pytest.approx(want, rel=1e-12)

    def test_zero_derivative(self):
        rho = np.diag([0.5, 0.5]).astype(complex)
        assert spectral_qfi_oracle(rho, np.zeros((2, 2))) == 0.0

    def test_rejects_bad_inputs(self):
        good = np.diag([0.5, 0.5]).astype(complex)
        with pytest.raises(NotDensityMatrix):
            spectral_qfi_oracle(np.array([[0.5, 1.0], [0.0, 0.5]]), np.zeros((2, 2)))
        with pytest.raises(NotDensityMatrix):
            spectral_qfi_oracle(2 * good, np.zeros((2, 2)))
        with pytest.raises(NotDensityMatrix):
            spectral_qfi_oracle(np.diag([1.5, -0.5]).astype(complex), np.zeros((2, 2)))
        with pytest.raises(NotDensityMatrix):
            spectral_qfi_oracle(good, np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            spectral_qfi_oracle(np.eye(128) / 128, np.zeros((128, 128)))


class TestCramerRao:
    def test_arithmetic(self):
        assert cramer_rao_bound(4.0, 1) == 0.5
        assert cramer_rao_bound(4.0, 100) == pytest.approx(0.05)

    def test_two_atom_equilibrium_error_bound(self):
        assert cramer_rao_bound(EQ_QFI_N2_T1, 1) == pytest.approx(1.535005680828274, rel=1e-12)

    def test_rejects_nonpositive_qfi(self):
        with pytest.raises(NonpositiveQfi):
            cramer_rao_bound(0.0, 1)
        with pytest.raises(ValueError):
            cramer_rao_bound(1.0, 0)
