"""Reduced dynamics against full-matrix, analytic and finite-difference oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from ringtherm.dynamics import (
    IntegratorOptions,
    ProbeState,
    SensitivityPropagator,
    check_state,
    collective_rhs,
    evolve,
    evolve_with_sensitivity,
    ghz_like_state,
    gibbs_state,
    gibbs_state_derivative,
    master_rhs,
    sensitivity_trajectory,
)
from ringtherm.errors import (
    IntegrationFailure,
    NonpositiveTemperature,
    NonzeroCoupling,
    PhiOutOfRange,
)
from ringtherm.spectrum import all_decay_weights, all_gaps, level_energies, planck_occupation, validate_params

from _oracles import (
    boltzmann_populations,
    embed_state,
    evolve_full,
    full_ladder_rhs,
    ghz_full,
    random_state,
)


class TestStateBuilders:
    def test_ghz_angles(self):
        p = validate_params(4, 0.2)
        ground = ghz_like_state(p, 0.0)
        assert ground.populations[0] == 1.0 and ground.coherence == 0.0
        top = ghz_like_state(p, math.pi / 2)
        assert top.populations[-1] == pytest.approx(1.0)
        assert abs(top.coherence) < 1e-16
        ghz = ghz_like_state(p, math.pi / 4)
        assert ghz.populations[0] == pytest.approx(0.5)
        assert ghz.populations[-1] == pytest.approx(0.5)
        assert ghz.coherence == pytest.approx(0.5)

    def test_phi_range_enforced(self):
        p = validate_params(4, 0.2)
        for phi in (-0.1, math.pi / 2 + 0.1):
            with pytest.raises(PhiOutOfRange):
                ghz_like_state(p, phi)

    def test_gibbs_matches_direct_boltzmann_sum(self):
        p = validate_params(2, 0.0)
        state = gibbs_state(p, 1.0)
        np.testing.assert_allclose(
            state.populations, boltzmann_populations(p, 1.0), rtol=1e-14
        )
        # Z = e + 1 + 1/e
        z = math.e + 1.0 + math.exp(-1.0)
        assert state.populations[0] == pytest.approx(math.e / z, rel=1e-14)

    def test_gibbs_limits(self):
        p = validate_params(2, 0.0)
        cold = gibbs_state(p, 1e-4)
        assert cold.populations[0] == pytest.approx(1.0, abs=1e-12)
        hot = gibbs_state(p, 1e6)
        np.testing.assert_allclose(hot.populations, 1.0 / 3.0, atol=1e-5)

    def test_gibbs_rejects_nonpositive_temperature(self):
        p = validate_params(2, 0.0)
        with pytest.raises(NonpositiveTemperature):
            gibbs_state(p, 0.0)

    def test_gibbs_derivative_matches_finite_difference(self):
        p = validate_params(6, -0.25)
        t, step = 0.8, 1e-6
        fd = (gibbs_state(p, t + step).populations - gibbs_state(p, t - step).populations) / (
            2 * step
        )
        np.testing.assert_allclose(gibbs_state_derivative(p, t).d_populations, fd, rtol=1e-8)


class TestMasterRhs:
    def test_gibbs_is_fixed_point(self):
        for n, omega, t in [(2, 0.0, 1.0), (5, 0.3, 0.5), (20, -0.45, 0.2), (10, 0.4, 2.0)]:
            p = validate_params(n, omega)
            dp, dc = master_rhs(p, t, gibbs_state(p, t))
            assert np.abs(dp).max() <= 1e-10
            assert dc == 0.0

    def test_pure_top_level_spontaneous_emission(self):
        p = validate_params(4, 0.1)
        pops = np.zeros(5)
        pops[-1] = 1.0
        state = ProbeState(p, pops, 0.0)
        dp, _ = master_rhs(p, 1e-4, state)  # cold bath: absorption frozen out
        gamma_top = all_decay_weights(p)[-1]
        assert dp[-1] == pytest.approx(-gamma_top, rel=1e-12)
        assert dp[-2] == pytest.approx(gamma_top, rel=1e-12)
        np.testing.assert_allclose(dp[:-2], 0.0, atol=1e-300)

    def test_rates_conserve_trace(self):
        rng = np.random.default_rng(7)
        p = validate_params(6, -0.3)
        for _ in range(20):
            dp, _ = master_rhs(p, 0.7, random_state(p, rng))
            assert abs(dp.sum()) < 1e-13

    def test_matches_full_matrix_rhs_elementwise(self):
        rng = np.random.default_rng(11)
        for n in (2, 3, 4):
            p = validate_params(n, 0.25)
            for _ in range(5):
                state = random_state(p, rng)
                dp, dc = master_rhs(p, 0.6, state)
                full = full_ladder_rhs(p, 0.6, embed_state(state))
                np.testing.assert_allclose(dp, np.real(np.diag(full)), atol=1e-13)
                assert abs(dc - full[0, -1]) < 1e-13

    def test_full_rhs_preserves_the_tracked_ansatz(self):
        # dissipators feed populations only; the Hamiltonian and the
        # anticommutator act within the extreme-corner pair
        rng = np.random.default_rng(13)
        p = validate_params(4, 0.35)
        state = random_state(p, rng)
        full = full_ladder_rhs(p, 0.5, embed_state(state))
        mask = np.zeros_like(full, dtype=bool)
        np.fill_diagonal(mask, True)
        mask[0, -1] = mask[-1, 0] = True
        assert np.abs(full[~mask]).max() < 1e-15


class TestCollectiveForm:
    def test_requires_zero_coupling(self):
        p = validate_params(4, 0.2)
        with pytest.raises(NonzeroCoupling):
            collective_rhs(p, 1.0, ghz_like_state(p, 0.3))

    def test_agrees_with_ladder_form_on_random_states(self):
        rng = np.random.default_rng(3)
        p = validate_params(4, 0.0)
        worst = 0.0
        for _ in range(100):
            state = random_state(p, rng)
            dp1, dc1 = master_rhs(p, 0.8, state)
            dp2, dc2 = collective_rhs(p, 0.8, state)
            worst = max(worst, np.abs(dp1 - dp2).max(), abs(dc1 - dc2))
        assert worst <= 1e-12

    def test_gibbs_fixed_point_of_collective_form(self):
        p = validate_params(6, 0.0)
        dp, dc = collective_rhs(p, 0.9, gibbs_state(p, 0.9))
        assert np.abs(dp).max() < 1e-12 and abs(dc) < 1e-15

    def test_hot_bath_drives_toward_uniform(self):
        # maximally mixed diagonal state: net flux raises low-occupation edges
        p = validate_params(4, 0.0)
        pops = np.full(5, 0.2)
        state = ProbeState(p, pops, 0.0)
        dp, _ = collective_rhs(p, 1e5, state)
        # at infinite temperature the uniform state is stationary
        assert np.abs(dp).max() / planck_occupation(1.0, 1e5) < 1e-3


class TestEvolve:
    def test_zero_horizon_is_identity(self):
        p = validate_params(5, 0.3)
        s0 = ghz_like_state(p, 0.4)
        out = evolve(p, 1.0, s0, 0.0)
        assert out is s0

    def test_reduced_matches_full_matrix_evolution(self):
        rng = np.random.default_rng(42)
        for n in (2, 3, 4):
            p = validate_params(n, -0.3)
            phi = rng.uniform(0, math.pi / 2)
            t, horizon = rng.uniform(0.3, 1.5), rng.uniform(0.5, 8.0)
            reduced = evolve(p, t, ghz_like_state(p, phi), horizon)
            full = evolve_full(p, t, ghz_full(p, phi), horizon)
            np.testing.assert_allclose(
                reduced.populations, np.real(np.diag(full)), atol=1e-9
            )
            assert abs(reduced.coherence - full[0, -1]) < 1e-9

    def test_long_horizon_reaches_gibbs(self):
        rng = np.random.default_rng(5)
        p = validate_params(4, 0.3)
        state = evolve(p, 1.0, random_state(p, rng), 300.0)
        target = gibbs_state(p, 1.0)
        assert 0.5 * np.abs(state.populations - target.populations).sum() <= 1e-8
        assert abs(state.coherence) <= 1e-12

    @pytest.mark.parametrize(
        "n,omega,t_bath,horizon",
        [(6, 0.25, 0.7, 2.0), (4, -0.3, 1.0, 0.5), (8, 0.1, 0.5, 1.0)],
    )
    def test_coherence_follows_closed_form(self, n, omega, t_bath, horizon):
        # independent oracle: the tracked coherence is an eigenmode with
        # rate -i(E_bottom - E_top) - (Gamma_top (n+1) + Gamma_bottom n)/2;
        # horizons keep |c| well above the integrator's absolute noise floor
        p = validate_params(n, omega)
        state = evolve(p, t_bath, ghz_like_state(p, math.pi / 4), horizon)
        e = level_energies(p)
        gaps = all_gaps(p)
        gammas = all_decay_weights(p)
        lam = -1j * (e[0] - e[-1]) - 0.5 * (
            gammas[-1] * (planck_occupation(gaps[-1], t_bath) + 1.0)
            + gammas[0] * planck_occupation(gaps[0], t_bath)
        )
        expected = 0.5 * np.exp(lam * horizon)
        assert abs(expected) > 1e-4  # guard: stay out of the noise floor
        assert abs(state.coherence - expected) / abs(expected) <= 1e-8

    def test_trace_positivity_coherence_invariants(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            n = int(rng.integers(2, 9))
            p = validate_params(n, float(rng.uniform(-0.45, 0.45)))
            state = evolve(
                p,
                float(rng.uniform(0.05, 3.0)),
                ghz_like_state(p, float(rng.uniform(0, math.pi / 2))),
                float(rng.uniform(0, 15.0)),
            )
            check_state(state)  # raises on violation

    def test_invalid_horizon_rejected(self):
        p = validate_params(4, 0.1)
        with pytest.raises(ValueError):
            evolve(p, 1.0, ghz_like_state(p, 0.1), -1.0)
        with pytest.raises(NonpositiveTemperature):
            evolve(p, -1.0, ghz_like_state(p, 0.1), 1.0)


class TestSensitivity:
    def test_zero_horizon_zero_sensitivity(self):
        p = validate_params(4, 0.2)
        _, sens = evolve_with_sensitivity(p, 1.0, ghz_like_state(p, 0.5), 0.0)
        assert np.all(sens.d_populations == 0.0) and sens.d_coherence == 0.0

    @pytest.mark.parametrize("omega", [-0.3, 0.3])
    def test_matches_central_finite_difference(self, omega):
        p = validate_params(5, omega)
        t_bath, horizon = 1.0, 5.0
        state0 = ghz_like_state(p, math.pi / 4)
        _, sens = evolve_with_sensitivity(p, t_bath, state0, horizon)
        step = 1e-4 * t_bath
        hi = evolve(p, t_bath + step, state0, horizon)
        lo = evolve(p, t_bath - step, state0, horizon)
        fd_pops = (hi.populations - lo.populations) / (2 * step)
        fd_coh = (hi.coherence - lo.coherence) / (2 * step)
        scale = np.abs(fd_pops).max()
        np.testing.assert_allclose(sens.d_populations, fd_pops, atol=1e-5 * scale, rtol=1e-5)
        assert abs(sens.d_coherence - fd_coh) <= 1e-5 * max(abs(fd_coh), scale)

    def test_long_horizon_matches_analytic_gibbs_derivative(self):
        p = validate_params(4, -0.2)
        t_bath = 1.0
        _, sens = evolve_with_sensitivity(p, t_bath, ghz_like_state(p, 0.0), 400.0)
        target = gibbs_state_derivative(p, t_bath)
        np.testing.assert_allclose(sens.d_populations, target.d_populations, atol=1e-7)
        assert abs(sens.d_coherence) <= 1e-9

    def test_sensitivity_trace_free(self):
        p = validate_params(7, 0.35)
        for horizon in (0.5, 2.0, 10.0):
            _, sens = evolve_with_sensitivity(p, 0.4, ghz_like_state(p, 1.0), horizon)
            assert abs(sens.d_populations.sum()) <= 1e-9


class TestPropagator:
    def test_matches_single_shot_evaluation(self):
        p = validate_params(5, 0.2)
        prop = SensitivityPropagator(p, 0.8, ghz_like_state(p, math.pi / 4))
        for t in (2.0, 1.0, 3.0, 0.5):  # out-of-order probes
            st_c, se_c = prop.at(t)
            st_f, se_f = evolve_with_sensitivity(p, 0.8, ghz_like_state(p, math.pi / 4), t)
            np.testing.assert_allclose(st_c.populations, st_f.populations, atol=1e-11)
            np.testing.assert_allclose(se_c.d_populations, se_f.d_populations, atol=1e-9)

    def test_trajectory_requires_sorted_times(self):
        p = validate_params(4, 0.0)
        with pytest.raises(ValueError):
            sensitivity_trajectory(p, 1.0, ghz_like_state(p, 0.1), [2.0, 1.0])

    def test_integrator_options_validated(self):
        with pytest.raises(ValueError):
            IntegratorOptions(rel_tol=0.0)
        with pytest.raises(ValueError):
            IntegratorOptions(method="EULER")
