"""Scenario parameters and unit helpers."""

import math
from dataclasses import dataclass, replace

import numpy as np


def dbm_to_watts(dbm: float) -> float:
    """Convert a dBm level to watts (40 dBm -> 10 W, -90 dBm -> 1e-12 W)."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("watts must be positive for a dBm conversion")
    return 10.0 * math.log10(watts) + 30.0


def nats_to_bits(nats: float) -> float:
    """Rates are kept in nats internally; divide by ln(2) to get bits."""
    return nats / math.log(2.0)


@dataclass
class ScenarioConfig:
    """Physical and algorithmic parameters of one propagation scenario.

    Powers are in watts, lengths in meters, angles in radians. Per-user
    fields (``rate_weights``, ``noise_powers``, ``ehr_thresholds``) accept a
    scalar, which is broadcast to all users of that kind.
    """

    num_bs_antennas: int = 4
    num_irs_elements: int = 8
    num_idrs: int = 2
    num_ehrs: int = 2
    carrier_wavelength: float = 0.125
    region_size: float = 2.5 * 0.125          # square side A of the BS surface
    min_spacing: float = 0.5 * 0.125          # D_B, anti-coupling distance
    power_budget: float = 10.0                # 40 dBm
    ehr_thresholds: tuple = 5e-9              # per-EHR minimum RF power
    rate_weights: tuple = 1.0                 # per-IDR weight
    noise_powers: tuple = 1e-12               # per-IDR, -90 dBm
    paths_per_link: int = 5
    bs_irs_distance: float = 4.0
    irs_idr_distance: tuple = (20.0, 25.0)    # sampled uniformly per IDR
    irs_ehr_distance: tuple = (4.0, 4.5)      # sampled uniformly per EHR
    bs_irs_exponent: float = 2.2
    irs_idr_exponent: float = 2.2
    irs_ehr_exponent: float = 2.2
    rng_seed: int = 0

    # PDD penalty schedule
    pdd_rho: float = 0.5
    pdd_shrink: float = 0.75

    def __post_init__(self):
        self.ehr_thresholds = _broadcast(self.ehr_thresholds, self.num_ehrs)
        self.rate_weights = _broadcast(self.rate_weights, self.num_idrs)
        self.noise_powers = _broadcast(self.noise_powers, self.num_idrs)
        self.irs_idr_distance = _as_range(self.irs_idr_distance)
        self.irs_ehr_distance = _as_range(self.irs_ehr_distance)
        self.validate()

    def validate(self):
        if self.num_bs_antennas < 1 or self.num_irs_elements < 1:
            raise ValueError("need at least one BS antenna and one IRS element")
        if self.num_idrs < 1 or self.num_ehrs < 0:
            raise ValueError("need at least one IDR; EHR count must be >= 0")
        if self.paths_per_link < 1:
            raise ValueError("paths_per_link must be >= 1")
        for name in ("carrier_wavelength", "region_size", "min_spacing",
                     "power_budget", "bs_irs_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if any(w < 0 for w in self.rate_weights):
            raise ValueError("rate weights must be nonnegative")
        if any(s <= 0 for s in self.noise_powers):
            raise ValueError("noise powers must be strictly positive")
        if any(p < 0 for p in self.ehr_thresholds):
            raise ValueError("EHR thresholds must be nonnegative")
        if not (0 < self.pdd_shrink < 1):
            raise ValueError("pdd_shrink must lie in (0, 1)")
        if self.pdd_rho <= 0:
            raise ValueError("pdd_rho must be positive")
        for lo, hi in (self.irs_idr_distance, self.irs_ehr_distance):
            if not (0 < lo <= hi):
                raise ValueError("distance ranges must satisfy 0 < lo <= hi")
        # A grid of ceil(sqrt(M)) antennas per side at pitch D_B must fit,
        # otherwise no initial layout can satisfy the spacing constraint.
        side = math.isqrt(self.num_bs_antennas)
        if side * side < self.num_bs_antennas:
            side += 1
        if self.min_spacing * (side - 1) > self.region_size + 1e-12:
            raise ValueError(
                "region too small: min_spacing * (ceil(sqrt(M)) - 1) exceeds "
                "region_size, so no feasible antenna layout exists")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, rng_seed=seed)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        """Build a config from a plain dict, accepting ``*_dbm`` power keys."""
        data = dict(data)
        for key in ("power_budget", "noise_powers", "ehr_thresholds"):
            dbm_key = key + "_dbm"
            if dbm_key in data:
                if key in data:
                    raise ValueError(f"give either {key} or {dbm_key}, not both")
                val = data.pop(dbm_key)
                if isinstance(val, (list, tuple)):
                    data[key] = tuple(dbm_to_watts(v) for v in val)
                else:
                    data[key] = dbm_to_watts(val)
        return cls(**data)


def _broadcast(value, count: int) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value),) * count
    value = tuple(float(v) for v in value)
    if len(value) != count:
        raise ValueError(f"expected {count} entries, got {len(value)}")
    return value


def _as_range(value) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    lo, hi = value
    return (float(lo), float(hi))
