"""Physical-layer quantities and constraint residuals of the design problem.

The design variables are the stacked transmit beamformers (information
streams first, then energy streams), the movable-antenna positions, and the
reflecting-surface phase angles. Rates are in nats.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, assemble_bs_irs_channel, assemble_irs_user_channel
from .config import ScenarioConfig

# Feasibility tolerances: relative on powers, absolute (meters) on geometry.
REL_POWER_TOL = 1e-6
GEOMETRY_TOL = 1e-9


@dataclass
class DesignPoint:
    """One candidate design: beamformers, antenna positions, phase angles."""

    beamformers: np.ndarray     # (K_I + K_E, M) complex, IDR rows first
    ma_positions: np.ndarray    # (M, 2) meters
    phases: np.ndarray          # (N,) radians

    def __post_init__(self):
        self.beamformers = np.asarray(self.beamformers, dtype=complex)
        self.ma_positions = np.asarray(self.ma_positions, dtype=float)
        self.phases = np.asarray(self.phases, dtype=float)
        if self.beamformers.ndim != 2:
            raise ValueError("beamformers must be a (K_I + K_E, M) array")
        if self.ma_positions.shape != (self.beamformers.shape[1], 2):
            raise ValueError("ma_positions must be (M, 2) matching beamformers")

    @property
    def phase_vector(self) -> np.ndarray:
        """Unit-modulus reflection coefficients derived from the angles."""
        return np.exp(1j * self.phases)

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.beamformers) ** 2))

    def idr_beamformers(self, num_idrs: int) -> np.ndarray:
        return self.beamformers[:num_idrs]

    def ehr_beamformers(self, num_idrs: int) -> np.ndarray:
        return self.beamformers[num_idrs:]

    def copy(self) -> "DesignPoint":
        return DesignPoint(self.beamformers.copy(), self.ma_positions.copy(),
                           self.phases.copy())


@dataclass
class ConstraintReport:
    """Signed residuals; an entry above its tolerance means a violation."""

    ehr_shortfalls: np.ndarray      # P_min,j - P_j, watts
    power_excess: float             # used - budget, watts
    spacing_violation: float        # worst D_min - pairwise distance, meters
    region_violation: float         # worst coordinate overshoot, meters

    def is_feasible(self, config: ScenarioConfig) -> bool:
        power_ok = self.power_excess <= REL_POWER_TOL * config.power_budget
        thr = np.asarray(config.ehr_thresholds)
        ehr_ok = np.all(self.ehr_shortfalls <= REL_POWER_TOL * np.maximum(thr, 0.0))
        geo_ok = (self.spacing_violation <= GEOMETRY_TOL
                  and self.region_violation <= GEOMETRY_TOL)
        return bool(power_ok and ehr_ok and geo_ok)


def equivalent_channels(point: DesignPoint, channels: ChannelSet,
                        config: ScenarioConfig):
    """Cascaded BS->IRS->user channels at the current design.

    Returns ``(H, G)`` with shapes (K_I, M) and (K_E, M); row ``i`` is the
    vector whose conjugate inner product with a beamformer gives the
    received amplitude.
    """
    lam = config.carrier_wavelength
    G = assemble_bs_irs_channel(point.ma_positions, channels, lam)
    theta = point.phase_vector
    idr = [((assemble_irs_user_channel(cl, channels.irs_positions, lam).conj()
             * theta) @ G).conj() for cl in channels.irs_idr]
    ehr = [((assemble_irs_user_channel(cl, channels.irs_positions, lam).conj()
             * theta) @ G).conj() for cl in channels.irs_ehr]
    M = point.beamformers.shape[1]
    H = np.array(idr).reshape(len(idr), M)
    E = np.array(ehr).reshape(len(ehr), M)
    return H, E


def received_powers(H: np.ndarray, beamformers: np.ndarray) -> np.ndarray:
    """|h_i^H f_k|^2 for every (user, stream) pair; shape (users, streams)."""
    return np.abs(H.conj() @ beamformers.T) ** 2


def sinr(point: DesignPoint, channels: ChannelSet, config: ScenarioConfig,
         i: int) -> float:
    H, _ = equivalent_channels(point, channels, config)
    return float(sinr_values(H, point.beamformers, config)[i])


def sinr_values(H: np.ndarray, beamformers: np.ndarray,
                config: ScenarioConfig) -> np.ndarray:
    """All IDR SINRs given precomputed equivalent channels."""
    K_I = config.num_idrs
    powers = received_powers(H, beamformers)          # (K_I, K_I + K_E)
    signal = np.diag(powers[:, :K_I])
    interference = powers.sum(axis=1) - signal
    return signal / (interference + np.asarray(config.noise_powers))


def harvested_power(point: DesignPoint, channels: ChannelSet,
                    config: ScenarioConfig, j: int) -> float:
    """Received RF power at one EHR, noise ignored."""
    _, E = equivalent_channels(point, channels, config)
    return float(received_powers(E[j:j + 1], point.beamformers).sum())


def harvested_powers(E: np.ndarray, beamformers: np.ndarray) -> np.ndarray:
    return received_powers(E, beamformers).sum(axis=1)


def weighted_sum_rate(point: DesignPoint, channels: ChannelSet,
                      config: ScenarioConfig) -> float:
    H, _ = equivalent_channels(point, channels, config)
    s = sinr_values(H, point.beamformers, config)
    return float(np.asarray(config.rate_weights) @ np.log1p(s))


def constraint_report(point: DesignPoint, channels: ChannelSet,
                      config: ScenarioConfig) -> ConstraintReport:
    _, E = equivalent_channels(point, channels, config)
    harvested = harvested_powers(E, point.beamformers)
    shortfalls = np.asarray(config.ehr_thresholds) - harvested

    power_excess = point.total_power() - config.power_budget

    M = point.ma_positions.shape[0]
    spacing = -math.inf
    for m in range(M):
        for s in range(m + 1, M):
            d = np.linalg.norm(point.ma_positions[m] - point.ma_positions[s])
            spacing = max(spacing, config.min_spacing - d)
    if M < 2:
        spacing = 0.0

    half = config.region_size / 2.0
    region = float(np.max(np.abs(point.ma_positions)) - half)

    return ConstraintReport(shortfalls, float(power_excess), float(spacing),
                            region)
