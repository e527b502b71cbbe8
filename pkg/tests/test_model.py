import math

import numpy as np

from swiptma.channel import (
    ChannelSet,
    PathCluster,
    assemble_bs_irs_channel,
    assemble_irs_user_channel,
    synthesize_scenario,
)
from swiptma.model import (
    DesignPoint,
    constraint_report,
    equivalent_channels,
    harvested_power,
    sinr,
    sinr_values,
    weighted_sum_rate,
)

from conftest import grid_positions, random_point, small_config


def scalar_chain():
    """N = M = 1 scenario with one IDR and no EHR."""
    cfg = small_config(num_bs_antennas=1, num_irs_elements=1, num_idrs=1,
                      num_ehrs=0, paths_per_link=1)
    cluster = PathCluster([[0.4, 1.1]], [[0.2, 0.7]], [0.8 - 0.3j])
    user = PathCluster([[1.0, 0.4]], [[0.1, 0.9]], [0.5 + 0.2j])
    chans = ChannelSet(cluster, [user], [], np.zeros((1, 2)))
    return cfg, chans


class TestEquivalentChannels:
    def test_scalar_chain_zero_phase(self):
        cfg, chans = scalar_chain()
        point = DesignPoint(np.ones((1, 1)), np.zeros((1, 2)), np.zeros(1))
        H, E = equivalent_channels(point, chans, cfg)
        G = assemble_bs_irs_channel(point.ma_positions, chans, cfg.carrier_wavelength)
        h_r = assemble_irs_user_channel(chans.irs_idr[0], chans.irs_positions,
                                        cfg.carrier_wavelength)
        # row form: h^H = conj(h_r) * G for the scalar chain
        np.testing.assert_allclose(H[0].conj(), np.conj(h_r[0]) * G[0],
                                   atol=1e-14)
        assert E.shape == (0, 1)

    def test_zero_bs_irs_channel(self, rng):
        cfg = small_config()
        chans = synthesize_scenario(cfg)
        chans.bs_irs.response_diag[:] = 0.0
        H, E = equivalent_channels(random_point(cfg, rng), chans, cfg)
        np.testing.assert_allclose(H, 0.0, atol=1e-15)
        np.testing.assert_allclose(E, 0.0, atol=1e-15)

    def test_matches_matrix_product_oracle(self, rng):
        cfg = small_config(num_irs_elements=5, num_ehrs=2)
        chans = synthesize_scenario(cfg)
        point = random_point(cfg, rng)
        H, E = equivalent_channels(point, chans, cfg)

        lam = cfg.carrier_wavelength
        G = assemble_bs_irs_channel(point.ma_positions, chans, lam)
        Theta = np.diag(np.exp(1j * point.phases))
        for i, cl in enumerate(chans.irs_idr):
            hr = assemble_irs_user_channel(cl, chans.irs_positions, lam)
            np.testing.assert_allclose(H[i].conj(), hr.conj() @ Theta @ G,
                                       atol=1e-12)
        for j, cl in enumerate(chans.irs_ehr):
            gr = assemble_irs_user_channel(cl, chans.irs_positions, lam)
            np.testing.assert_allclose(E[j].conj(), gr.conj() @ Theta @ G,
                                       atol=1e-12)


class TestSinr:
    def test_zero_beamformers(self, small_scenario):
        cfg, chans = small_scenario
        point = random_point(cfg, np.random.default_rng(1))
        point.beamformers[:] = 0.0
        assert sinr(point, chans, cfg, 0) == 0.0

    def test_unit_sinr_when_signal_equals_noise(self):
        cfg, chans = scalar_chain()
        point = DesignPoint(np.ones((1, 1)), np.zeros((1, 2)), np.zeros(1))
        H, _ = equivalent_channels(point, chans, cfg)
        # scale the beamformer so the received power equals the noise floor
        amp = math.sqrt(cfg.noise_powers[0]) / abs(H[0, 0])
        point.beamformers[:] = amp
        assert abs(sinr(point, chans, cfg, 0) - 1.0) < 1e-12

    def test_matches_accumulation_oracle(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        H, _ = equivalent_channels(point, chans, cfg)
        for i in range(cfg.num_idrs):
            num = abs(np.vdot(H[i], point.beamformers[i])) ** 2
            den = cfg.noise_powers[i]
            for k in range(cfg.num_idrs):
                if k != i:
                    den += abs(np.vdot(H[i], point.beamformers[k])) ** 2
            for j in range(cfg.num_ehrs):
                den += abs(np.vdot(H[i], point.beamformers[cfg.num_idrs + j])) ** 2
            assert abs(sinr(point, chans, cfg, i) - num / den) <= 1e-12 * (num / den)


class TestHarvestedPower:
    def test_zero_beamformers(self, small_scenario):
        cfg, chans = small_scenario
        point = random_point(cfg, np.random.default_rng(2))
        point.beamformers[:] = 0.0
        assert harvested_power(point, chans, cfg, 0) == 0.0

    def test_aligned_beamformer_reaches_cauchy_schwarz_bound(self, small_scenario):
        cfg, chans = small_scenario
        point = random_point(cfg, np.random.default_rng(3))
        _, E = equivalent_channels(point, chans, cfg)
        g = E[0]
        point.beamformers[:] = 0.0
        point.beamformers[0] = math.sqrt(cfg.power_budget) * g / np.linalg.norm(g)
        want = np.linalg.norm(g) ** 2 * cfg.power_budget
        assert abs(harvested_power(point, chans, cfg, 0) - want) < 1e-12 * want

    def test_gram_matrix_identity(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        _, E = equivalent_channels(point, chans, cfg)
        F = sum(np.outer(f, f.conj()) for f in point.beamformers)
        want = float(np.real(E[0].conj() @ F @ E[0]))
        got = harvested_power(point, chans, cfg, 0)
        assert abs(got - want) <= 1e-12 * max(want, 1e-30)


class TestWeightedSumRate:
    def test_zero_beamformers(self, small_scenario):
        cfg, chans = small_scenario
        point = random_point(cfg, np.random.default_rng(4))
        point.beamformers[:] = 0.0
        assert weighted_sum_rate(point, chans, cfg) == 0.0

    def test_log_identity_single_weight(self):
        cfg, chans = scalar_chain()
        point = DesignPoint(np.ones((1, 1)), np.zeros((1, 2)), np.zeros(1))
        H, _ = equivalent_channels(point, chans, cfg)
        # set |h^H f|^2 = (e - 1) * sigma^2 so the rate is exactly 1 nat
        amp = math.sqrt((math.e - 1) * cfg.noise_powers[0]) / abs(H[0, 0])
        point.beamformers[:] = amp
        assert abs(weighted_sum_rate(point, chans, cfg) - 1.0) < 1e-10

    def test_matches_composed_oracle(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        want = sum(w * math.log1p(sinr(point, chans, cfg, i))
                   for i, w in enumerate(cfg.rate_weights))
        assert abs(weighted_sum_rate(point, chans, cfg) - want) <= 1e-12 * abs(want)

    def test_monotone_in_single_user_power(self):
        cfg, chans = scalar_chain()
        point = DesignPoint(np.full((1, 1), 0.01 + 0j), np.zeros((1, 2)),
                            np.zeros(1))
        rates = []
        for c in (1.0, 1.5, 2.0, 4.0):
            scaled = point.copy()
            scaled.beamformers *= c
            rates.append(weighted_sum_rate(scaled, chans, cfg))
        assert all(b >= a for a, b in zip(rates, rates[1:]))


class TestConstraintReport:
    def test_grid_point_is_geometry_feasible(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)     # thresholds are zero in small_config
        report = constraint_report(point, chans, cfg)
        assert report.power_excess <= 0
        assert report.spacing_violation <= 0
        assert report.region_violation <= 0
        assert np.all(report.ehr_shortfalls <= 0)
        assert report.is_feasible(cfg)

    def test_coincident_antennas(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        point.ma_positions[1] = point.ma_positions[0]
        report = constraint_report(point, chans, cfg)
        assert abs(report.spacing_violation - cfg.min_spacing) < 1e-15

    def test_power_excess_is_linear(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng, power_fraction=1.0)
        point.beamformers *= math.sqrt(2.0)
        report = constraint_report(point, chans, cfg)
        assert abs(report.power_excess - cfg.power_budget) < 1e-9


class TestInvariances:
    def test_global_phase_invariance(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        base_sinrs = [sinr(point, chans, cfg, i) for i in range(cfg.num_idrs)]
        base_power = harvested_power(point, chans, cfg, 0)
        rotated = point.copy()
        rotated.beamformers[0] *= np.exp(1j * 0.73)
        for i, s in enumerate(base_sinrs):
            assert abs(sinr(rotated, chans, cfg, i) - s) <= 1e-12 * (1 + s)
        p = harvested_power(rotated, chans, cfg, 0)
        assert abs(p - base_power) <= 1e-12 * (1 + base_power)

    def test_deterministic_reevaluation(self, small_scenario, rng):
        cfg, chans = small_scenario
        point = random_point(cfg, rng)
        a = weighted_sum_rate(point, chans, cfg)
        b = weighted_sum_rate(point, chans, cfg)
        assert a == b
