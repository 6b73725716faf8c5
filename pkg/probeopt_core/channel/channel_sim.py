"""Synthetic geometric multipath channels for a cell-free deployment.

Every link is a sum of ``l_paths`` plane waves impinging on a uniform
rectangular array with half-wavelength spacing. Path parameters follow
simple geometric distributions around the AP-to-user bearing, with the
total power set by a log-distance pathloss.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from probeopt_core.config.settings import ArrayGeometry, ScenarioConfig
from probeopt_core.seeding import derive_seed

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PathComponent:
    """One propagation path of a link."""
    gain: float  # linear power
    delay: float  # seconds
    azimuth: float  # radians, [-pi, pi)
    elevation: float  # radians from the vertical axis, (0, pi)

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError(f"path gain must be nonnegative, got {self.gain}")


@dataclass
class ChannelRealization:
    """Per-(AP, user) channel vectors of one drop."""
    links: np.ndarray  # (B, U, M) complex
    user_positions: Optional[np.ndarray] = None  # (U, 3) meters

    @property
    def n_aps(self) -> int:
        return self.links.shape[0]

    @property
    def n_users(self) -> int:
        return self.links.shape[1]

    @property
    def n_antennas(self) -> int:
        return self.links.shape[2]

    @property
    def stacked(self) -> np.ndarray:
        """H: (B*M, U); column u concatenates h_{1,u}, ..., h_{B,u}."""
        return self.links.transpose(0, 2, 1).reshape(self.n_aps * self.n_antennas, self.n_users)


def array_response(azimuth: float, elevation: float, geometry: ArrayGeometry) -> np.ndarray:
    """
    Array response of a uniform rectangular array.

    Args:
        azimuth: Azimuth angle in radians
        elevation: Elevation angle in radians, measured from the vertical axis
        geometry: Array dimensions

    Returns:
        np.ndarray: Unit-modulus complex vector of length m_y * m_z (a_y kron a_z)
    """
    a_y = np.exp(1j * np.pi * np.arange(geometry.m_y) * np.sin(elevation) * np.sin(azimuth))
    a_z = np.exp(1j * np.pi * np.arange(geometry.m_z) * np.cos(elevation))
    return np.kron(a_y, a_z)


def dft_codebook(geometry: ArrayGeometry) -> np.ndarray:
    """
    2D-DFT codebook of a uniform rectangular array.

    Column ``c = i_y * m_z + i_z`` is the Kronecker product of the i_y-th
    column of the m_y-point unitary DFT and the i_z-th column of the m_z-point
    one, so the codebook is unitary.

    Args:
        geometry: Array dimensions

    Returns:
        np.ndarray: Complex matrix of shape (M, M)
    """
    return np.kron(_unitary_dft(geometry.m_y), _unitary_dft(geometry.m_z))


def _unitary_dft(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def link_channel(paths: Sequence[PathComponent], geometry: ArrayGeometry, bandwidth: float) -> np.ndarray:
    """
    Channel vector of one link as the sum of its paths.

    Args:
        paths: Path components of the link
        geometry: Array dimensions
        bandwidth: System bandwidth W in Hz (per-path phase exp(j 2 pi tau W))

    Returns:
        np.ndarray: Complex vector of length M
    """
    h = np.zeros(geometry.n_antennas, dtype=complex)
    for path in paths:
        phase = np.exp(2j * np.pi * path.delay * bandwidth)
        h += math.sqrt(path.gain) * phase * array_response(path.azimuth, path.elevation, geometry)
    return h


def pathloss_gain(distance: float, carrier: float, exponent: float) -> float:
    """Log-distance pathloss referenced to free space at 1 m."""
    wavelength = SPEED_OF_LIGHT / carrier
    reference = (wavelength / (4.0 * math.pi)) ** 2
    return reference * max(distance, 1.0) ** (-exponent)


def ap_boresights(scenario: ScenarioConfig) -> np.ndarray:
    """Azimuth of each AP's broadside, pointing at the centroid of the user regions."""
    centroid = np.mean(np.asarray(scenario.region_centers, dtype=float), axis=0)
    aps = np.asarray(scenario.ap_positions, dtype=float)
    return np.arctan2(centroid[1] - aps[:, 1], centroid[0] - aps[:, 0])


def _wrap_angle(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def sample_user_positions(
    scenario: ScenarioConfig, rng: Union[np.random.Generator, int]
) -> np.ndarray:
    """
    Drop one user per region.

    User u is placed uniformly inside the square of side ``region_side``
    centered on region ``u mod len(region_centers)``.

    Args:
        scenario: Scenario configuration
        rng: Generator or seed

    Returns:
        np.ndarray: (U, 3) positions in meters
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    centers = np.asarray(scenario.region_centers, dtype=float)
    half = scenario.region_side / 2.0
    positions = np.empty((scenario.n_users, 3))
    for user in range(scenario.n_users):
        center = centers[user % len(centers)]
        positions[user, :2] = center + rng.uniform(-half, half, size=2)
        positions[user, 2] = scenario.user_height
    return positions


def draw_link_paths(
    scenario: ScenarioConfig,
    ap_index: int,
    user_position: np.ndarray,
    rng: np.random.Generator,
    boresights: Optional[np.ndarray] = None,
) -> List[PathComponent]:
    """
    Draw the path parameters of one AP-user link.

    Azimuths are uniform within the angular spread around the bearing
    (relative to the AP broadside), elevations uniform in the configured
    range, delays uniform in [0, max_delay]; gains follow an exponential
    power-decay profile whose sum equals the link pathloss.

    Args:
        scenario: Scenario configuration
        ap_index: AP index b
        user_position: (3,) user position in meters
        rng: Random generator
        boresights: Precomputed AP broadside azimuths

    Returns:
        list: ``l_paths`` path components
    """
    boresights = ap_boresights(scenario) if boresights is None else boresights
    ap = np.asarray(scenario.ap_positions[ap_index], dtype=float)
    offset = np.asarray(user_position, dtype=float) - ap
    bearing = math.atan2(offset[1], offset[0]) - boresights[ap_index]
    distance = float(np.linalg.norm(offset))

    n_paths = scenario.l_paths
    spread = math.radians(scenario.angular_spread_deg)
    azimuths = _wrap_angle(bearing + rng.uniform(-spread, spread, size=n_paths))
    elevations = np.radians(
        rng.uniform(scenario.elevation_min_deg, scenario.elevation_max_deg, size=n_paths)
    )
    delays = rng.uniform(0.0, scenario.max_delay, size=n_paths)

    profile = np.exp(-scenario.power_decay * np.arange(n_paths))
    profile /= profile.sum()
    gains = pathloss_gain(distance, scenario.carrier, scenario.pathloss_exponent) * profile

    return [
        PathComponent(gain=float(g), delay=float(t), azimuth=float(az), elevation=float(el))
        for g, t, az, el in zip(gains, delays, azimuths, elevations)
    ]


def generate_channel(
    scenario: ScenarioConfig,
    seed: int,
    user_positions: Optional[np.ndarray] = None,
) -> ChannelRealization:
    """
    Generate one channel realization.

    Args:
        scenario: Scenario configuration
        seed: Seed; the output is a pure function of (scenario, seed, user_positions)
        user_positions: Optional (U, 3) positions; drawn from the seed when omitted

    Returns:
        ChannelRealization: Links for every (AP, user) pair
    """
    rng = np.random.default_rng(seed)
    if user_positions is None:
        user_positions = sample_user_positions(scenario, rng)
    geometry = scenario.geometry
    boresights = ap_boresights(scenario)

    links = np.empty((scenario.n_aps, scenario.n_users, geometry.n_antennas), dtype=complex)
    for ap in range(scenario.n_aps):
        for user in range(scenario.n_users):
            paths = draw_link_paths(scenario, ap, user_positions[user], rng, boresights)
            links[ap, user] = link_channel(paths, geometry, scenario.bandwidth)
    return ChannelRealization(links=links, user_positions=np.asarray(user_positions, dtype=float))


def calibrate_noise_power(scenario: ScenarioConfig, seed: int, draws: int = 50) -> float:
    """
    Noise power giving the target median single-AP MRT SNR.

    For each draw and user, the SNR of matched-filter transmission from the
    strongest AP alone is tx_power * ||h_{b,u}||^2 / noise; the returned noise
    power puts the median of these at ``target_snr_db``.

    Args:
        scenario: Scenario configuration
        seed: Base seed of the calibration drops
        draws: Number of channel drops

    Returns:
        float: Noise power in watts
    """
    received = []
    for draw in range(draws):
        channel = generate_channel(scenario, derive_seed(seed, 7919, draw))
        energy = np.sum(np.abs(channel.links) ** 2, axis=2)  # (B, U)
        received.extend(scenario.tx_power * energy.max(axis=0))
    noise = float(np.median(received)) / (10.0 ** (scenario.target_snr_db / 10.0))
    logger.info(
        "Calibrated noise power",
        extra={"fields": {"noise_power": noise, "target_snr_db": scenario.target_snr_db, "draws": draws}},
    )
    return noise


def resolve_noise_power(scenario: ScenarioConfig, seed: int) -> float:
    """Configured noise power, or the calibrated one when it is omitted."""
    if scenario.noise_power is not None:
        return scenario.noise_power
    return calibrate_noise_power(scenario, seed)
