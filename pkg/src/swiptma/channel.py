"""Propagation geometry: field responses, per-link path clusters, channels.

All links follow a planar far-field multipath model. A point at position
``t`` (2-D, meters) sees path ``l`` through the phase factor
``exp(j * (2*pi/wavelength) * t @ rho_l)`` where ``rho_l`` packs the
direction cosines of the path. The BS side and the IRS side use different
direction-cosine conventions (azimuth enters via cos on the BS array, via
sin on the IRS surface).
"""

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig

BS_TRANSMIT = "bs_transmit"
IRS_SIDE = "irs_side"


def direction_cosines(angles: np.ndarray, convention: str) -> np.ndarray:
    """Map (azimuth, elevation) pairs to 2-D direction-cosine vectors."""
    angles = np.asarray(angles, dtype=float)
    az, el = angles[:, 0], angles[:, 1]
    if convention == BS_TRANSMIT:
        first = np.cos(az) * np.sin(el)
    elif convention == IRS_SIDE:
        first = np.sin(az) * np.sin(el)
    else:
        raise ValueError(f"unknown direction convention: {convention!r}")
    return np.stack([first, np.cos(el)], axis=1)


def field_response_vector(position, angles, convention: str,
                          wavelength: float) -> np.ndarray:
    """Per-path phase factors seen at ``position``; all entries unit modulus."""
    position = np.asarray(position, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    if angles.ndim != 2 or angles.shape[0] == 0 or angles.shape[1] != 2:
        raise ValueError("angles must be a nonempty (L, 2) array")
    if not (np.all(np.isfinite(position)) and np.all(np.isfinite(angles))):
        raise ValueError("position and angles must be finite")
    rho = direction_cosines(angles, convention)
    phase = (2.0 * math.pi / wavelength) * (rho @ position)
    return np.exp(1j * phase)


def field_response_matrix(positions, angles, convention: str,
                          wavelength: float) -> np.ndarray:
    """Stack field response vectors column-wise: shape (L, num_positions)."""
    positions = np.asarray(positions, dtype=float)
    cols = [field_response_vector(p, angles, convention, wavelength)
            for p in positions]
    return np.stack(cols, axis=1)


@dataclass
class PathCluster:
    """Angles and complex per-path gains of one link.

    ``response_diag`` holds the diagonal of the path response matrix; the
    transmit and receive sides share the same path count.
    """

    departure_angles: np.ndarray    # (L, 2) (azimuth, elevation)
    arrival_angles: np.ndarray      # (L, 2)
    response_diag: np.ndarray       # (L,) complex

    def __post_init__(self):
        self.departure_angles = np.atleast_2d(np.asarray(self.departure_angles, float))
        self.arrival_angles = np.atleast_2d(np.asarray(self.arrival_angles, float))
        self.response_diag = np.asarray(self.response_diag, complex)
        L = self.response_diag.shape[0]
        if self.departure_angles.shape != (L, 2) or self.arrival_angles.shape != (L, 2):
            raise ValueError("angle arrays must be (L, 2) with L matching the gains")

    @property
    def num_paths(self) -> int:
        return self.response_diag.shape[0]


@dataclass
class ChannelSet:
    """All per-scenario channel data; IRS element positions are fixed."""

    bs_irs: PathCluster                 # BS array -> IRS surface
    irs_idr: list                       # one PathCluster per IDR
    irs_ehr: list                       # one PathCluster per EHR
    irs_positions: np.ndarray           # (N, 2), fixed for scenario lifetime

    def __post_init__(self):
        self.irs_positions = np.asarray(self.irs_positions, dtype=float)
        if self.irs_positions.ndim != 2 or self.irs_positions.shape[1] != 2:
            raise ValueError("irs_positions must be an (N, 2) array")
        uniq = {tuple(np.round(p, 12)) for p in self.irs_positions}
        if len(uniq) != self.irs_positions.shape[0]:
            raise ValueError("IRS element positions must be pairwise distinct")

    @property
    def num_elements(self) -> int:
        return self.irs_positions.shape[0]


def assemble_bs_irs_channel(ma_positions, channels: ChannelSet,
                            wavelength: float) -> np.ndarray:
    """Channel matrix from the BS array to the IRS surface, shape (N, M)."""
    ma_positions = np.asarray(ma_positions, dtype=float)
    if not np.all(np.isfinite(ma_positions)):
        raise ValueError("antenna positions must be finite")
    cluster = channels.bs_irs
    ft = field_response_matrix(ma_positions, cluster.departure_angles,
                               BS_TRANSMIT, wavelength)          # (L, M)
    fr = field_response_matrix(channels.irs_positions, cluster.arrival_angles,
                               IRS_SIDE, wavelength)             # (L, N)
    return fr.conj().T @ (cluster.response_diag[:, None] * ft)


def assemble_irs_user_channel(cluster: PathCluster, irs_positions,
                              wavelength: float) -> np.ndarray:
    """Channel vector from the IRS to a single-antenna user, shape (N,)."""
    ft = field_response_matrix(irs_positions, cluster.departure_angles,
                               IRS_SIDE, wavelength)             # (L, N)
    return ft.conj().T @ cluster.response_diag


def centered_grid(count: int, pitch: float) -> np.ndarray:
    """First ``count`` nodes of a square grid with the grid center at origin."""
    side = math.isqrt(count)
    if side * side < count:
        side += 1
    offset = pitch * (side - 1) / 2.0
    pts = [(c * pitch - offset, r * pitch - offset)
           for r in range(side) for c in range(side)]
    return np.asarray(pts[:count], dtype=float)


def synthesize_scenario(config: ScenarioConfig) -> ChannelSet:
    """Draw a random scenario; a pure, replayable function of the config.

    Per-path gains are circularly-symmetric complex Gaussian with variance
    ``C0^2 * d^-alpha / L`` where ``C0 = wavelength / (4*pi)`` is the
    reference path gain at 1 m. Azimuths are uniform on [0, 2*pi), elevations
    uniform on [0, pi). IRS elements sit on a half-wavelength grid.
    """
    rng = config.rng()
    lam = config.carrier_wavelength
    L = config.paths_per_link
    c0 = lam / (4.0 * math.pi)

    def draw_cluster(distance: float, exponent: float) -> PathCluster:
        departure = _draw_angles(rng, L)
        arrival = _draw_angles(rng, L)
        var = c0 ** 2 * distance ** (-exponent) / L
        gains = math.sqrt(var / 2.0) * (rng.standard_normal(L)
                                        + 1j * rng.standard_normal(L))
        return PathCluster(departure, arrival, gains)

    bs_irs = draw_cluster(config.bs_irs_distance, config.bs_irs_exponent)
    irs_idr = []
    for _ in range(config.num_idrs):
        d = rng.uniform(*config.irs_idr_distance)
        irs_idr.append(draw_cluster(d, config.irs_idr_exponent))
    irs_ehr = []
    for _ in range(config.num_ehrs):
        d = rng.uniform(*config.irs_ehr_distance)
        irs_ehr.append(draw_cluster(d, config.irs_ehr_exponent))

    irs_positions = centered_grid(config.num_irs_elements, lam / 2.0)
    return ChannelSet(bs_irs, irs_idr, irs_ehr, irs_positions)


def _draw_angles(rng: np.random.Generator, count: int) -> np.ndarray:
    azimuth = rng.uniform(0.0, 2.0 * math.pi, size=count)
    elevation = rng.uniform(0.0, math.pi, size=count)
    return np.stack([azimuth, elevation], axis=1)
