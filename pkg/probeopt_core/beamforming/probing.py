"""Probing-beam configurations and probing-beam measurements (PBMs)."""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from probeopt_core.channel.channel_sim import ChannelRealization, dft_codebook
from probeopt_core.config.settings import ArrayGeometry, ProbingLayout
from probeopt_core.errors import ConfigurationError


@lru_cache(maxsize=16)
def _cached_codebook(m_y: int, m_z: int) -> np.ndarray:
    codebook = dft_codebook(ArrayGeometry(m_y=m_y, m_z=m_z))
    codebook.setflags(write=False)
    return codebook


def codebook_for(geometry: ArrayGeometry) -> np.ndarray:
    """Shared read-only DFT codebook of a geometry."""
    return _cached_codebook(geometry.m_y, geometry.m_z)


def condition_vector(codebook: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    """
    Flatten probing codewords into a real condition vector.

    Args:
        codebook: (M, M) codebook
        indices: N_b codebook columns

    Returns:
        np.ndarray: Real parts of the codewords (codeword-major) followed by
        their imaginary parts; length 2 * N_b * M
    """
    words = codebook[:, list(indices)].T
    return np.concatenate([words.real.ravel(), words.imag.ravel()])


@dataclass(frozen=True, eq=False)
class ProbingConfig:
    """The probing codewords every AP sweeps for one combination."""
    combo_index: int  # 1-based
    beam_indices: Tuple[Tuple[int, ...], ...]  # per AP
    geometry: ArrayGeometry
    condition: np.ndarray = field(repr=False)

    def __post_init__(self):
        n_antennas = self.geometry.n_antennas
        sizes = {len(indices) for indices in self.beam_indices}
        if not self.beam_indices or len(sizes) != 1 or 0 in sizes:
            raise ConfigurationError(
                f"combo {self.combo_index}: every AP must sweep the same nonzero number of beams"
            )
        for ap, indices in enumerate(self.beam_indices):
            if len(set(indices)) != len(indices):
                raise ConfigurationError(f"combo {self.combo_index}: AP {ap} repeats a probing beam")
            bad = [i for i in indices if not 0 <= i < n_antennas]
            if bad:
                raise ConfigurationError(
                    f"combo {self.combo_index}: AP {ap} probing indices {bad} outside [0, {n_antennas})"
                )

    @property
    def n_aps(self) -> int:
        return len(self.beam_indices)

    @property
    def beams_per_ap(self) -> int:
        return len(self.beam_indices[0])

    @property
    def total_beams(self) -> int:
        return self.n_aps * self.beams_per_ap

    @property
    def n_antennas(self) -> int:
        return self.geometry.n_antennas


def make_probing_config(
    combo_index: int, beam_indices: Sequence[Sequence[int]], geometry: ArrayGeometry
) -> ProbingConfig:
    """Build a ProbingConfig whose condition vector holds the first AP's codewords."""
    indices = tuple(tuple(int(i) for i in ap_indices) for ap_indices in beam_indices)
    if indices and any(not 0 <= i < geometry.n_antennas for i in indices[0]):
        raise ConfigurationError(f"combo {combo_index}: probing index outside the codebook")
    condition = condition_vector(codebook_for(geometry), indices[0]) if indices else np.zeros(0)
    return ProbingConfig(combo_index=combo_index, beam_indices=indices, geometry=geometry, condition=condition)


def layout_indices(geometry: ArrayGeometry, layout: ProbingLayout) -> np.ndarray:
    """
    Codebook columns in the order combinations consume them.

    LAYERS walks the grid one vertical layer at a time: position p maps to
    i_z = p // m_y and i_y = p % m_y, so with N_b = m_y every combination
    sweeps all horizontal beams of one elevation layer. CONTIGUOUS is the
    plain column order.
    """
    n_antennas = geometry.n_antennas
    if ProbingLayout(layout) == ProbingLayout.CONTIGUOUS:
        return np.arange(n_antennas)
    positions = np.arange(n_antennas)
    i_z, i_y = positions // geometry.m_y, positions % geometry.m_y
    return i_y * geometry.m_z + i_z


def build_probing_configs(
    geometry: ArrayGeometry,
    n_aps: int,
    beams_per_ap: int = 8,
    n_combos: int = 8,
    layout: ProbingLayout = ProbingLayout.LAYERS,
) -> List[ProbingConfig]:
    """
    Disjoint probing combinations over the codebook.

    Combination l (1-based) takes positions (l-1)*N_b, ..., (l-1)*N_b + N_b - 1
    of ``layout_indices`` at every AP.

    Raises:
        ConfigurationError: If n_combos * beams_per_ap exceeds the codebook size
    """
    if n_combos * beams_per_ap > geometry.n_antennas:
        raise ConfigurationError(
            f"{n_combos} combinations of {beams_per_ap} beams exceed the {geometry.n_antennas}-beam codebook"
        )
    order = layout_indices(geometry, layout)
    configs = []
    for combo in range(1, n_combos + 1):
        start = (combo - 1) * beams_per_ap
        beams = tuple(int(i) for i in order[start : start + beams_per_ap])
        configs.append(make_probing_config(combo, [beams] * n_aps, geometry))
    return configs


@dataclass
class PbmVector:
    """PBMs of one channel realization under one probing configuration."""
    values: np.ndarray  # (U * N,), user-major then (AP, beam)
    config: ProbingConfig
    n_users: int

    def as_blocks(self) -> np.ndarray:
        """View of shape (U, B, N_b)."""
        return self.values.reshape(self.n_users, self.config.n_aps, self.config.beams_per_ap)


def compute_pbm(channel: ChannelRealization, config: ProbingConfig) -> PbmVector:
    """
    Received power of every probing codeword at every user.

    Args:
        channel: Channel realization
        config: Probing configuration

    Returns:
        PbmVector: r_{b,u,i} = |f_{b,i}^H h_{b,u}|^2

    Raises:
        ConfigurationError: If the configuration does not match the channel
    """
    if config.n_antennas != channel.n_antennas or config.n_aps != channel.n_aps:
        raise ConfigurationError(
            f"probing config for {config.n_aps} APs x {config.n_antennas} antennas does not match "
            f"channel with {channel.n_aps} APs x {channel.n_antennas} antennas"
        )
    codebook = codebook_for(config.geometry)
    blocks = np.empty((channel.n_users, channel.n_aps, config.beams_per_ap))
    for ap, indices in enumerate(config.beam_indices):
        codewords = codebook[:, list(indices)]
        blocks[:, ap, :] = np.abs(channel.links[ap] @ codewords.conj()) ** 2
    return PbmVector(values=blocks.reshape(-1), config=config, n_users=channel.n_users)
