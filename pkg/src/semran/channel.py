"""Block-fading link plus the two transport primitives.

One ChannelState models one agent's link. The nominal SNR is the scenario's
operating point; each fading block redraws a log-normal perturbation (Gaussian in
dB) from the state's own stream, so the realized-SNR sequence is a function of the
block index alone, no matter which transport op consumes the blocks.

Two transports share that state. The analog path carries a semantic token as raw
symbols; it always delivers, degrading gracefully as receiver noise grows. The
digital path carries a bit payload under a Shannon-rate rule and fails hard once
the payload stops fitting inside a retransmission budget. Both charge radiated
energy as power times airtime, plus a fixed per-call compute cost for codec work.

Callers composing interference pass a dB offset: the link SINR used by a transmit
is the state's realized SNR plus that offset (see agents.effective_sinr for how
the offset is formed from power, bandwidth, and other agents' activity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ChannelConfig


@dataclass
class TransmissionReport:
    delivered: bool
    attempts: int
    airtime_slots: float
    latency_slots: float
    energy_j: float
    sinr_db: float
    power_capped: bool = False


class ChannelState:
    """Per-link fading tracker; realized SNR changes only at block boundaries."""

    def __init__(self, cfg: ChannelConfig, snr_db_nominal: float,
                 fading_rng: np.random.Generator):
        self.cfg = cfg
        self.snr_db_nominal = float(snr_db_nominal)
        self._rng = fading_rng
        self._block = -1
        self._fading_db = 0.0
        self.advance_to(0)

    @property
    def realized_snr_db(self) -> float:
        return self.snr_db_nominal + self._fading_db

    def advance_to(self, slot: int) -> None:
        """Advance time; draws fading once per newly entered block."""
        block = slot // self.cfg.block_length_slots
        while self._block < block:
            self._block += 1
            self._fading_db = self.cfg.fading_std_db * self._rng.standard_normal()

    def next_block(self) -> None:
        """Jump to the next fading block (used by multi-block retransmission)."""
        self._block += 1
        self._fading_db = self.cfg.fading_std_db * self._rng.standard_normal()


def energy_of(cfg: ChannelConfig, power_w: float, airtime_slots: float,
              compute_ops: int = 0) -> float:
    """Energy of a transmission: radiated power over airtime plus compute cost."""
    return power_w * airtime_slots * cfg.slot_seconds + compute_ops * cfg.joules_per_op


def achievable_bits_per_slot(cfg: ChannelConfig, sinr_db: float, bw_units: int) -> float:
    """Shannon-rate rule: bits deliverable in one slot at the given link SINR."""
    linear = 10.0 ** (sinr_db / 10.0)
    return bw_units * cfg.unit_bw_hz * np.log2(1.0 + linear) * cfg.slot_seconds


def symbols_per_slot(cfg: ChannelConfig, bw_units: int) -> float:
    """Nyquist symbol budget of one slot at the granted bandwidth."""
    return bw_units * cfg.unit_bw_hz * cfg.slot_seconds


def _capped_power(cfg: ChannelConfig, power_w: float) -> tuple[float, bool]:
    if power_w > cfg.power_cap_w:
        return cfg.power_cap_w, True
    return power_w, False


def analog_transmit(state: ChannelState, z: np.ndarray, power_w: float,
                    bw_units: int, noise_rng: np.random.Generator,
                    sinr_offset_db: float = 0.0
                    ) -> tuple[np.ndarray, TransmissionReport]:
    """Send a token as analog symbols; returns (received token, report).

    Unit-signal-power convention: the token is scaled by sqrt(power) on air and
    rescaled at the receiver, so the post-rescale noise variance per component is
    exactly 1/linear_sinr. Delivery never fails; fidelity is the noise.
    """
    cfg = state.cfg
    power_w, capped = _capped_power(cfg, power_w)
    sinr_db = state.realized_snr_db + sinr_offset_db
    linear = 10.0 ** (sinr_db / 10.0)
    z_air = np.sqrt(power_w) * z
    noise = np.sqrt(power_w / linear) * noise_rng.standard_normal(z.shape)
    z_received = (z_air + noise) / np.sqrt(power_w)
    airtime = z.shape[-1] / symbols_per_slot(cfg, bw_units)
    energy = energy_of(cfg, power_w, airtime, compute_ops=2)
    report = TransmissionReport(delivered=True, attempts=1, airtime_slots=airtime,
                                latency_slots=airtime, energy_j=energy,
                                sinr_db=sinr_db, power_capped=capped)
    return z_received, report


def digital_transmit(state: ChannelState, payload_bits: int, power_w: float,
                     bw_units: int, sinr_offset_db: float = 0.0
                     ) -> TransmissionReport:
    """Send a bit payload; retries on fresh fading blocks up to max_attempts.

    An attempt succeeds when the payload fits within one block at the block's
    achievable rate; the final attempt's airtime is the payload's transmission
    time, while each failed attempt burns the whole block in air and latency.
    """
    cfg = state.cfg
    power_w, capped = _capped_power(cfg, power_w)
    latency = 0.0
    energy = 0.0
    attempts = 0
    last_sinr = state.realized_snr_db + sinr_offset_db
    while attempts < cfg.max_attempts:
        attempts += 1
        sinr_db = state.realized_snr_db + sinr_offset_db
        last_sinr = sinr_db
        per_slot = achievable_bits_per_slot(cfg, sinr_db, bw_units)
        if per_slot * cfg.block_length_slots >= payload_bits and per_slot > 0:
            airtime = payload_bits / per_slot
            latency += airtime
            energy += energy_of(cfg, power_w, airtime)
            return TransmissionReport(delivered=True, attempts=attempts,
                                      airtime_slots=airtime, latency_slots=latency,
                                      energy_j=energy, sinr_db=sinr_db,
                                      power_capped=capped)
        latency += cfg.block_length_slots
        energy += energy_of(cfg, power_w, float(cfg.block_length_slots))
        state.next_block()
    return TransmissionReport(delivered=False, attempts=attempts,
                              airtime_slots=float(cfg.block_length_slots),
                              latency_slots=latency, energy_j=energy,
                              sinr_db=last_sinr, power_capped=capped)
