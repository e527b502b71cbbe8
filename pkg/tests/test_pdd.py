import math
from dataclasses import replace as dc_replace

import numpy as np
import pytest

from swiptma.channel import synthesize_scenario
from swiptma.model import DesignPoint, harvested_power, equivalent_channels
from swiptma.pdd import (
    PddState,
    PddStop,
    build_power_forms,
    build_quadratic_forms,
    outer_update,
    run_pdd_feasibility,
    run_pdd_sumrate,
    solve_theta_subproblem,
    update_phi,
    _augmented_lagrangian,
)

from conftest import random_point, small_config


def random_vw(cfg, rng):
    v = 1e4 * (rng.normal(size=cfg.num_idrs) + 1j * rng.normal(size=cfg.num_idrs))
    w = rng.uniform(1.0, 50.0, cfg.num_idrs)
    return v, w


def block_objective_via_model(point, chans, cfg, v, w):
    """Weighted-MSE block objective evaluated from physical quantities."""
    H, _ = equivalent_channels(point, chans, cfg)
    total = 0.0
    for i in range(cfg.num_idrs):
        amps = H[i].conj() @ point.beamformers.T
        quad = np.sum(np.abs(amps) ** 2)
        total += cfg.rate_weights[i] * w[i] * (
            abs(v[i]) ** 2 * quad
            - 2.0 * np.real(np.conj(v[i]) * amps[i]))
    return total


class TestQuadraticForms:
    def test_zero_beamformers(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        point.beamformers[:] = 0.0
        v, w = random_vw(cfg, rng)
        forms = build_quadratic_forms(point, chans, v, w, cfg)
        np.testing.assert_allclose(forms.Q0, 0.0, atol=1e-30)
        np.testing.assert_allclose(forms.q0, 0.0, atol=1e-30)
        for Q1 in forms.Q1:
            np.testing.assert_allclose(Q1, 0.0, atol=1e-30)

    def test_power_quadratic_matches_harvested_power(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        v, w = random_vw(cfg, rng)
        forms = build_quadratic_forms(point, chans, v, w, cfg)
        theta = point.phase_vector
        for j, Q1 in enumerate(forms.Q1):
            got = float(np.real(theta.conj() @ Q1 @ theta))
            want = harvested_power(point, chans, cfg, j)
            assert abs(got - want) <= 1e-10 * max(want, 1e-30)

    def test_objective_identity_up_to_constant(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        v, w = random_vw(cfg, rng)
        forms = build_quadratic_forms(point, chans, v, w, cfg)
        gaps = []
        for _ in range(2):
            phases = rng.uniform(0, 2 * math.pi, cfg.num_irs_elements)
            trial = point.copy()
            trial.phases = phases
            theta = trial.phase_vector
            gaps.append(forms.block_objective(theta)
                        - block_objective_via_model(trial, chans, cfg, v, w))
        scale = max(abs(forms.block_objective(point.phase_vector)), 1.0)
        assert abs(gaps[0] - gaps[1]) <= 1e-9 * scale


class TestThetaSubproblem:
    def test_pure_consensus_is_separable_projection(self, rng):
        N = 5
        from swiptma.pdd import QuadraticForms
        forms = QuadraticForms(np.zeros((N, N)), np.zeros(N), [])
        phi = np.exp(1j * rng.uniform(0, 2 * math.pi, N))
        lam = 0.3 * (rng.normal(size=N) + 1j * rng.normal(size=N))
        state = PddState(theta=phi.copy(), phi=phi, multiplier=lam, rho=0.5,
                         delta=1e-3, shrink=0.75)
        theta = solve_theta_subproblem(state, forms, np.zeros(0), phi.copy())
        target = phi - state.rho * lam
        mags = np.abs(target)
        want = np.where(mags > 1.0, target / mags, target)
        np.testing.assert_allclose(theta, want, atol=1e-6)

    def test_linearized_power_lower_bounds_quadratic(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        forms = build_power_forms(point, chans, cfg)
        anchor = point.phase_vector
        Q1 = forms[0]
        a = Q1 @ anchor
        anchor_val = float(np.real(anchor.conj() @ Q1 @ anchor))
        for _ in range(100):
            z = rng.normal(size=anchor.size) + 1j * rng.normal(size=anchor.size)
            z /= np.maximum(np.abs(z), 1.0)
            lin = 2 * float(np.real(np.vdot(a, z))) - anchor_val
            quad = float(np.real(z.conj() @ Q1 @ z))
            assert lin <= quad + 1e-9 * max(abs(quad), 1.0)
        # exact at the anchor
        lin0 = 2 * float(np.real(np.vdot(a, anchor))) - anchor_val
        assert abs(lin0 - anchor_val) <= 1e-12 * max(abs(anchor_val), 1e-30)


class TestPhiUpdate:
    def test_phase_extraction(self):
        phi = update_phi(np.array([1.0 + 0j, 2j]), 0.0, np.zeros(2))
        np.testing.assert_allclose(phi, [1.0, 1j], atol=1e-15)

    def test_real_positive_gives_ones(self):
        phi = update_phi(np.array([0.3 + 0j, 2.0 + 0j]), 0.5,
                         np.zeros(2, dtype=complex))
        np.testing.assert_allclose(phi, [1.0, 1.0], atol=1e-15)

    def test_zero_entry_convention(self):
        phi = update_phi(np.zeros(2, dtype=complex), 0.5,
                         np.zeros(2, dtype=complex))
        np.testing.assert_allclose(phi, [1.0, 1.0], atol=1e-15)

    def test_dominates_random_unit_candidates(self, rng):
        target = rng.normal(size=6) + 1j * rng.normal(size=6)
        phi = update_phi(target, 1.0, np.zeros(6, dtype=complex))
        best = float(np.real(np.vdot(target, phi)))
        for _ in range(1000):
            cand = np.exp(1j * rng.uniform(0, 2 * math.pi, 6))
            assert float(np.real(np.vdot(target, cand))) <= best + 1e-12


class TestOuterUpdate:
    def make_state(self, theta, phi, rho=0.5, delta=1e-3):
        return PddState(theta=theta, phi=phi,
                        multiplier=np.zeros(theta.size, dtype=complex),
                        rho=rho, delta=delta, shrink=0.75)

    def test_consensus_reached_updates_multiplier_only(self):
        theta = np.exp(1j * np.array([0.1, 0.2]))
        state = self.make_state(theta.copy(), theta.copy())
        new = outer_update(state)
        assert new.rho == state.rho
        np.testing.assert_allclose(new.multiplier, 0.0, atol=1e-15)

    def test_consensus_missed_shrinks_penalty(self):
        theta = np.array([1.0 + 0j, 1.0 + 0j])
        phi = np.array([1.0 + 0j, -1.0 + 0j])    # gap 2 >> delta
        state = self.make_state(theta, phi, rho=0.5, delta=1e-3)
        new = outer_update(state)
        assert abs(new.rho - 0.75 * 0.5) < 1e-15
        np.testing.assert_allclose(new.multiplier, state.multiplier)

    def test_repeated_misses_decay_geometrically(self):
        theta = np.array([1.0 + 0j])
        phi = np.array([-1.0 + 0j])
        state = self.make_state(theta, phi)
        for _ in range(4):
            state = outer_update(state)
        assert abs(state.rho - 0.5 * 0.75 ** 4) < 1e-15


def feasible_thresholds(point, chans, cfg, fraction=0.5):
    """Thresholds set to a fraction of the current harvested powers."""
    powers = [harvested_power(point, chans, cfg, j)
              for j in range(cfg.num_ehrs)]
    return dc_replace(cfg, ehr_thresholds=tuple(fraction * p for p in powers))


class TestRunSumrate:
    def test_degenerate_fixed_point(self):
        cfg = small_config(num_ehrs=0)
        chans = synthesize_scenario(cfg)
        point = random_point(cfg, np.random.default_rng(0))
        point.beamformers[:] = 0.0       # block objective identically zero
        v = np.zeros(cfg.num_idrs, dtype=complex)
        w = np.ones(cfg.num_idrs)
        res = run_pdd_sumrate(point, chans, v, w, cfg)
        assert res.outer_rounds == 1
        np.testing.assert_allclose(res.theta, point.phase_vector, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_consensus_and_monotone_block(self, seed):
        cfg0 = small_config(num_irs_elements=6, rng_seed=seed)
        chans = synthesize_scenario(cfg0)
        rng = np.random.default_rng(seed)
        point = random_point(cfg0, rng)
        cfg = feasible_thresholds(point, chans, cfg0)
        v, w = random_vw(cfg, rng)
        forms = build_quadratic_forms(point, chans, v, w, cfg)
        res = run_pdd_sumrate(point, chans, v, w, cfg)
        assert res.consensus_gap <= 1e-4
        np.testing.assert_allclose(np.abs(res.theta), 1.0, atol=1e-12)
        before = forms.block_objective(point.phase_vector)
        after = forms.block_objective(res.theta)
        assert after <= before + 1e-9 * (1 + abs(before))
        # exported phases keep every EHR above its threshold
        trial = point.copy()
        trial.phases = np.angle(res.theta)
        for j in range(cfg.num_ehrs):
            got = harvested_power(trial, chans, cfg, j)
            assert got >= cfg.ehr_thresholds[j] * (1 - 1e-6)

    def test_inner_alternation_monotone(self, rng):
        cfg0 = small_config(num_irs_elements=5)
        chans = synthesize_scenario(cfg0)
        point = random_point(cfg0, rng)
        cfg = feasible_thresholds(point, chans, cfg0)
        v, w = random_vw(cfg, rng)
        forms = build_quadratic_forms(point, chans, v, w, cfg)
        theta0 = point.phase_vector
        state = PddState(theta=theta0.copy(), phi=theta0.copy(),
                         multiplier=np.zeros(theta0.size, dtype=complex),
                         rho=cfg.pdd_rho, delta=1e-3, shrink=cfg.pdd_shrink)
        thresholds = np.asarray(cfg.ehr_thresholds)
        al = _augmented_lagrangian(state, forms)
        for _ in range(8):
            state.theta = solve_theta_subproblem(state, forms, thresholds,
                                                 state.theta)
            al_theta = _augmented_lagrangian(state, forms)
            assert al_theta <= al + 1e-9 * (1 + abs(al))
            state.phi = update_phi(state.theta, state.rho, state.multiplier)
            al = _augmented_lagrangian(state, forms)
            assert al <= al_theta + 1e-9 * (1 + abs(al_theta))

    def test_single_element_phase_sweep(self):
        # one IRS element, one IDR: every phase yields the same amplitude,
        # so the returned phase must tie with an exhaustive sweep
        cfg = small_config(num_bs_antennas=1, num_irs_elements=1, num_idrs=1,
                          num_ehrs=0, paths_per_link=2)
        chans = synthesize_scenario(cfg)
        point = random_point(cfg, np.random.default_rng(5))
        v, w = random_vw(cfg, np.random.default_rng(6))
        res = run_pdd_sumrate(point, chans, v, w, cfg)
        trial = point.copy()
        trial.phases = np.angle(res.theta)
        H, _ = equivalent_channels(trial, chans, cfg)
        ours = abs(np.vdot(H[0], trial.beamformers[0]))
        best = 0.0
        for ang in np.linspace(0, 2 * math.pi, 360, endpoint=False):
            sweep = point.copy()
            sweep.phases = np.array([ang])
            Hs, _ = equivalent_channels(sweep, chans, cfg)
            best = max(best, abs(np.vdot(Hs[0], sweep.beamformers[0])))
        assert ours >= best * (1 - 1e-6)


class TestRunFeasibility:
    def test_zero_thresholds_immediately_nonpositive(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        res, beta = run_pdd_feasibility(point, chans, cfg)
        assert beta <= 0.0
        np.testing.assert_allclose(np.abs(res.theta), 1.0, atol=1e-12)

    def test_single_element_matches_sweep(self):
        cfg0 = small_config(num_bs_antennas=1, num_irs_elements=1, num_idrs=1,
                           num_ehrs=1, paths_per_link=2)
        chans = synthesize_scenario(cfg0)
        point = random_point(cfg0, np.random.default_rng(7))
        base = harvested_power(point, chans, cfg0, 0)
        cfg = dc_replace(cfg0, ehr_thresholds=(2.0 * base,))
        _, beta = run_pdd_feasibility(point, chans, cfg)
        sweep_best = math.inf
        for ang in np.linspace(0, 2 * math.pi, 360, endpoint=False):
            trial = point.copy()
            trial.phases = np.array([ang])
            p = harvested_power(trial, chans, cfg, 0)
            sweep_best = min(sweep_best, cfg.ehr_thresholds[0] - p)
        assert beta <= sweep_best + abs(sweep_best) * 1e-3 + 1e-15

    def test_beta_nonincreasing_over_repeated_calls(self, rng):
        cfg0 = small_config(num_irs_elements=6)
        chans = synthesize_scenario(cfg0)
        point = random_point(cfg0, rng)
        base = harvested_power(point, chans, cfg0, 0)
        cfg = dc_replace(cfg0, ehr_thresholds=(3.0 * base,))
        betas = []
        for _ in range(3):
            res, beta = run_pdd_feasibility(point, chans, cfg)
            betas.append(beta)
            point = point.copy()
            point.phases = np.angle(res.theta)
        assert all(b <= a + 1e-12 for a, b in zip(betas, betas[1:]))
