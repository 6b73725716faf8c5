"""PBM-driven beamspace compression, SBF analog selection, LMMSE precoding and sum rate."""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from probeopt_core.beamforming.probing import PbmVector, ProbingConfig, codebook_for, compute_pbm
from probeopt_core.channel.channel_sim import ChannelRealization
from probeopt_core.config.settings import ArrayGeometry
from probeopt_core.errors import ConfigurationError, InfeasibleCandidatesError, NumericalRankError


@dataclass
class PipelineParams:
    """Knobs of the probing-beam powered hybrid beamforming pipeline."""
    classes: int = 8
    keep: int = 2
    regularizer: Optional[float] = None  # lambda; U * noise / P_total when None
    tx_power: float = 10.0  # W per AP
    noise_power: float = 1.0  # W

    def total_power(self, n_aps: int) -> float:
        return self.tx_power * n_aps

    def user_powers(self, n_aps: int, n_users: int) -> np.ndarray:
        """Equal power split of the total transmit power."""
        return np.full(n_users, self.total_power(n_aps) / n_users)

    def resolve_regularizer(self, n_aps: int, n_users: int) -> float:
        if self.regularizer is not None:
            return self.regularizer
        return n_users * self.noise_power / self.total_power(n_aps)


@dataclass
class HybridBeamformer:
    analog_indices: List[np.ndarray]  # per AP, one beam per user
    f_rf: np.ndarray  # (B*M, B*U) block diagonal
    w_bb: np.ndarray  # (B*U, U)


@dataclass
class LabeledOutcome:
    """PBM and achieved sum rate of one (channel, probing config) pair."""
    pbm: PbmVector
    rate: float
    beamformer: HybridBeamformer


def compress_beamspace(pbm: PbmVector, classes: int, keep: int) -> List[np.ndarray]:
    """
    Keep the sectors of each AP's beamspace that collected the most PBM energy.

    The beamspace is split into ``classes`` contiguous sectors of M / classes
    beams. A probing beam's energy, summed over users, counts toward the
    sector holding its codebook index. Ties go to the lower sector index.

    Args:
        pbm: Measurements and their probing configuration
        classes: Number of sectors C
        keep: Number of sectors kept per AP

    Returns:
        list: Sorted candidate beam indices per AP, keep * M / classes each

    Raises:
        ConfigurationError: If classes does not divide M or keep is outside [1, classes]
    """
    n_antennas = pbm.config.n_antennas
    if classes < 1 or n_antennas % classes != 0:
        raise ConfigurationError(f"classes = {classes} must divide M = {n_antennas}")
    if not 1 <= keep <= classes:
        raise ConfigurationError(f"keep = {keep} must lie in [1, {classes}]")
    width = n_antennas // classes

    blocks = pbm.as_blocks()
    candidates = []
    for ap, indices in enumerate(pbm.config.beam_indices):
        energy = np.zeros(classes)
        np.add.at(energy, np.asarray(indices) // width, blocks[:, ap, :].sum(axis=0))
        kept = np.sort(np.argsort(-energy, kind="stable")[:keep])
        candidates.append(np.concatenate([np.arange(c * width, (c + 1) * width) for c in kept]))
    return candidates


def select_analog_beams_sbf(
    channel: ChannelRealization, candidates: Sequence[Sequence[int]], codebook: np.ndarray
) -> List[np.ndarray]:
    """
    Strongest-beam-first analog beam assignment.

    Users are served in descending order of their strongest candidate gain;
    each takes its best beam not yet taken at that AP. Ties go to the lower
    beam index, then the lower user index.

    Args:
        channel: Channel realization
        candidates: Candidate beam indices per AP
        codebook: (M, M) analog codebook

    Returns:
        list: Per AP, the beam index assigned to each user (length U, distinct)

    Raises:
        InfeasibleCandidatesError: If an AP has fewer candidates than users
    """
    n_users = channel.n_users
    selected = []
    for ap in range(channel.n_aps):
        beams = np.unique(np.asarray(candidates[ap], dtype=int))
        if beams.size < n_users:
            raise InfeasibleCandidatesError(
                f"AP {ap} has {beams.size} candidate beams for {n_users} users",
                {"ap": ap, "candidates": int(beams.size), "users": n_users},
            )
        gains = np.abs(channel.links[ap] @ codebook[:, beams].conj()) ** 2  # (U, |A_b|)
        order = sorted(range(n_users), key=lambda u: (-gains[u].max(), u))
        taken = np.zeros(beams.size, dtype=bool)
        chosen = np.empty(n_users, dtype=int)
        for user in order:
            masked = np.where(taken, -np.inf, gains[user])
            best = int(np.argmax(masked))
            chosen[user] = beams[best]
            taken[best] = True
        selected.append(chosen)
    return selected


def analog_precoder(codebook: np.ndarray, analog_indices: Sequence[Sequence[int]]) -> np.ndarray:
    """Block-diagonal F_RF from per-AP beam indices."""
    return block_diag(*[codebook[:, list(indices)] for indices in analog_indices])


def lmmse_digital(
    f_rf: np.ndarray, channel_matrix: np.ndarray, regularizer: float, powers: np.ndarray
) -> np.ndarray:
    """
    LMMSE digital precoder with per-user power scaling.

    W_BB = Hb (Hb^H Hb + lambda I)^-1 Sigma with Hb = F_RF^H H, where Sigma
    scales column u so that ||F_RF w_u||^2 = P_u.

    Args:
        f_rf: (B*M, B*U) analog precoder
        channel_matrix: (B*M, U) stacked channel H
        regularizer: lambda >= 0
        powers: (U,) per-user powers P_u

    Returns:
        np.ndarray: (B*U, U) digital precoder

    Raises:
        NumericalRankError: If lambda = 0 and Hb lacks full column rank
    """
    h_bar = f_rf.conj().T @ channel_matrix
    n_users = channel_matrix.shape[1]
    if regularizer == 0 and np.linalg.matrix_rank(h_bar) < n_users:
        raise NumericalRankError(
            "effective channel F_RF^H H is rank deficient and lambda = 0",
            {"rank": int(np.linalg.matrix_rank(h_bar)), "users": n_users},
        )
    gram = h_bar.conj().T @ h_bar + regularizer * np.eye(n_users)
    try:
        w_bar = h_bar @ np.linalg.inv(gram)
    except np.linalg.LinAlgError as e:
        raise NumericalRankError(f"LMMSE system is singular: {e}")

    norms = np.linalg.norm(f_rf @ w_bar, axis=0)
    scale = np.divide(
        np.sqrt(np.asarray(powers, dtype=float)), norms, out=np.zeros(n_users), where=norms > 0
    )
    return w_bar * scale[np.newaxis, :]


def sum_rate(channel_matrix: np.ndarray, f_rf: np.ndarray, w_bb: np.ndarray, noise_power: float) -> float:
    """
    Achievable sum rate in bits/s/Hz.

    Args:
        channel_matrix: (B*M, U) stacked channel H
        f_rf: (B*M, B*U) analog precoder
        w_bb: (B*U, U) digital precoder
        noise_power: Receiver noise power sigma^2

    Returns:
        float: sum over users of log2(1 + S_u / (I_u + sigma^2))
    """
    gains = np.abs(channel_matrix.conj().T @ f_rf @ w_bb) ** 2  # [u, v] = |h_u^H F_RF w_v|^2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return float(np.sum(np.log2(1.0 + signal / (interference + noise_power))))


def hybrid_beamform(
    channel: ChannelRealization,
    candidates: Sequence[Sequence[int]],
    params: PipelineParams,
    codebook: np.ndarray,
) -> HybridBeamformer:
    """SBF within the candidate sets followed by LMMSE precoding."""
    analog = select_analog_beams_sbf(channel, candidates, codebook)
    f_rf = analog_precoder(codebook, analog)
    powers = params.user_powers(channel.n_aps, channel.n_users)
    regularizer = params.resolve_regularizer(channel.n_aps, channel.n_users)
    w_bb = lmmse_digital(f_rf, channel.stacked, regularizer, powers)
    return HybridBeamformer(analog_indices=analog, f_rf=f_rf, w_bb=w_bb)


def evaluate_probing_config(
    channel: ChannelRealization, config: ProbingConfig, params: PipelineParams
) -> LabeledOutcome:
    """
    Run the probing-beam powered pipeline for one channel and combination.

    PBMs -> beamspace compression -> SBF -> LMMSE -> sum rate.

    Args:
        channel: Channel realization
        config: Probing configuration
        params: Pipeline parameters

    Returns:
        LabeledOutcome: The PBM vector and its sum-rate label
    """
    pbm = compute_pbm(channel, config)
    candidates = compress_beamspace(pbm, params.classes, params.keep)
    codebook = codebook_for(config.geometry)
    beamformer = hybrid_beamform(channel, candidates, params, codebook)
    rate = sum_rate(channel.stacked, beamformer.f_rf, beamformer.w_bb, params.noise_power)
    return LabeledOutcome(pbm=pbm, rate=rate, beamformer=beamformer)


def full_beamspace_rate(
    channel: ChannelRealization, params: PipelineParams, geometry: ArrayGeometry
) -> float:
    """Sum rate of SBF over the entire codebook (no compression)."""
    codebook = codebook_for(geometry)
    everything = [np.arange(geometry.n_antennas)] * channel.n_aps
    beamformer = hybrid_beamform(channel, everything, params, codebook)
    return sum_rate(channel.stacked, beamformer.f_rf, beamformer.w_bb, params.noise_power)
