"""Stability monitors: representation drift, non-stationarity, oscillation.

All three metrics are pure functions of histories the engine hands over; the
monitors never mutate engine state themselves. `adapt` turns a reading into at
most one recommended action per check, which the control loop may then apply:

  drift  - mean (1 - cosine) between embeddings of a frozen probe set now and
           one window ago; grows when the codec's representation moves.
  ns     - KL divergence between reward histograms of the two most recent
           windows; grows when the reward distribution is shifting.
  osc    - relative change of the concatenated actor parameters over a window;
           grows when policies are churning rather than settling.

Single breaches map to gentle responses (throttle the slow loop, shrink its step
ratio). A breach that persists across three consecutive checks escalates to a
version rollback. The configured action selects which one of these responses the
control loop is authorized to apply; requests for any other response are logged
as suppressed, and at most one action fires per check (rollback outranks
reduce-c, which outranks throttle-k when several rules fire together).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import MonitorAction, MonitorConfig

PERSISTENCE_CHECKS = 3


def drift(current: np.ndarray, previous: np.ndarray) -> float:
    """Mean chord-form cosine distance between two probe embedding matrices.

    Rows are per-probe embeddings. 0.5*||a/|a| - b/|b|||^2 equals 1 - cos(a, b)
    without the cancellation of subtracting from 1, so tiny drifts stay visible.
    Zero rows compare as unmoved (distance 0) since they carry no direction.
    """
    cn = np.linalg.norm(current, axis=1)
    pn = np.linalg.norm(previous, axis=1)
    ok = (cn > 0) & (pn > 0)
    if not np.any(ok):
        return 0.0
    a = current[ok] / cn[ok][:, None]
    b = previous[ok] / pn[ok][:, None]
    d = a - b
    return float(0.5 * np.mean(np.einsum("ij,ij->i", d, d)))


def ns(recent: np.ndarray, previous: np.ndarray, bins: int, value_range: tuple[float, float],
       laplace_alpha: float) -> float:
    """KL(recent || previous) in nats over Laplace-smoothed reward histograms."""
    lo, hi = value_range
    p_counts, _ = np.histogram(np.clip(recent, lo, hi), bins=bins, range=(lo, hi))
    q_counts, _ = np.histogram(np.clip(previous, lo, hi), bins=bins, range=(lo, hi))
    p = (p_counts + laplace_alpha) / (p_counts.sum() + laplace_alpha * bins)
    q = (q_counts + laplace_alpha) / (q_counts.sum() + laplace_alpha * bins)
    return float(np.sum(p * np.log(p / q)))


def kl_nats(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence between two explicit distributions; zero p-mass terms drop."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def osc(theta_now: np.ndarray, theta_then: np.ndarray) -> float:
    """Relative parameter movement ||now - then|| / ||then|| over one window."""
    base = float(np.linalg.norm(theta_then))
    diff = float(np.linalg.norm(theta_now - theta_then))
    if base == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / base


@dataclass
class MonitorReading:
    slot: int
    drift: float | None = None
    ns: float | None = None
    osc: float | None = None
    drift_breach: bool = False
    ns_breach: bool = False
    osc_breach: bool = False
    action: str | None = None
    suppressed: str | None = None


@dataclass
class MonitorState:
    """Histories and persistence counters between checks."""

    cfg: MonitorConfig
    reward_range: tuple[float, float] = (-5.0, 5.0)
    _embeddings: dict[int, np.ndarray] = field(default_factory=dict)
    _params: dict[int, np.ndarray] = field(default_factory=dict)
    _rewards: deque = field(default_factory=deque)  # (slot, value)
    drift_streak: int = 0
    ns_streak: int = 0
    osc_streak: int = 0

    def record_rewards(self, slot: int, rewards: np.ndarray) -> None:
        for r in np.atleast_1d(rewards):
            self._rewards.append((slot, float(r)))
        horizon = slot - 2 * self.cfg.delta_slots
        while self._rewards and self._rewards[0][0] < horizon:
            self._rewards.popleft()

    def _window(self, lo: int, hi: int) -> np.ndarray:
        return np.array([v for s, v in self._rewards if lo <= s < hi])

    def check(self, slot: int, probe_embeddings: np.ndarray,
              actor_params: np.ndarray) -> MonitorReading:
        """Compute metrics against histories, store snapshots, update streaks."""
        cfg = self.cfg
        delta = cfg.delta_slots
        reading = MonitorReading(slot=slot)

        past_emb = self._embeddings.get(slot - delta)
        if past_emb is not None:
            reading.drift = drift(probe_embeddings, past_emb)
        recent = self._window(slot - delta, slot)
        previous = self._window(slot - 2 * delta, slot - delta)
        if (len(recent) >= cfg.min_window_samples
                and len(previous) >= cfg.min_window_samples):
            reading.ns = ns(recent, previous, cfg.histogram_bins, self.reward_range,
                            cfg.laplace_alpha)
        past_params = self._params.get(slot - delta)
        if past_params is not None:
            reading.osc = osc(actor_params, past_params)

        self._embeddings[slot] = probe_embeddings.copy()
        self._params[slot] = actor_params.copy()
        stale = [s for s in self._embeddings if s < slot - delta]
        for s in stale:
            del self._embeddings[s]
        stale = [s for s in self._params if s < slot - delta]
        for s in stale:
            del self._params[s]

        if slot >= cfg.arm_slot:
            reading.drift_breach = (reading.drift is not None
                                    and reading.drift > cfg.eps_drift)
            reading.ns_breach = reading.ns is not None and reading.ns > cfg.eps_ns
            reading.osc_breach = reading.osc is not None and reading.osc > cfg.eps_osc
        self.drift_streak = self.drift_streak + 1 if reading.drift_breach else 0
        self.ns_streak = self.ns_streak + 1 if reading.ns_breach else 0
        self.osc_streak = self.osc_streak + 1 if reading.osc_breach else 0
        return reading

    def reset_persistence(self) -> None:
        self.drift_streak = 0
        self.ns_streak = 0
        self.osc_streak = 0


def adapt(state: MonitorState, reading: MonitorReading) -> MonitorReading:
    """Pick at most one response for this check and record it on the reading.

    Escalation: a persistent breach (three consecutive checks) of oscillation or
    drift requests a rollback; otherwise an ns breach requests halving the slow
    step ratio and a drift breach requests doubling the slow period; when several
    rules fire at once, rollback outranks reduce-c, which outranks throttle-k.

    The configured action names the one automated response the operator has
    authorized. A rule that requests anything else is recorded as suppressed
    rather than acted on, and LOG_ONLY records flags without acting.

    When rollback is the authorized response, a representation-drift breach
    escalates to it directly instead of passing through the gentler rungs. The
    gentler responses quench parameter movement, which is the very signal a
    persistence-gated rule would wait for; and a one-shot upstream shift
    produces a movement pulse that decays within two checks as the codec
    re-converges, so evidence for a streak can never accumulate. Oscillation
    keeps its three-check persistence requirement in every mode.
    """
    cap = state.cfg.action
    want: str | None = None
    if state.osc_streak >= PERSISTENCE_CHECKS or state.drift_streak >= PERSISTENCE_CHECKS:
        want = "rollback"
    elif reading.drift_breach and cap is MonitorAction.ROLLBACK:
        want = "rollback"
    elif reading.ns_breach:
        want = "reduce_c"
    elif reading.drift_breach:
        want = "throttle_k"
    if want is None:
        return reading
    need = {"rollback": MonitorAction.ROLLBACK,
            "reduce_c": MonitorAction.REDUCE_C,
            "throttle_k": MonitorAction.THROTTLE_K}[want]
    if need is cap:
        reading.action = want
    else:
        reading.suppressed = want
    return reading


def calibrate_thresholds(drifts: list[float], nss: list[float], oscs: list[float],
                         safety: float = 1.5) -> dict[str, float]:
    """Thresholds from clean-run readings: safety factor above the observed max.

    Calibrating above everything a no-shift run produced keeps the false-trigger
    rate near zero by construction while staying far below post-shift readings,
    whose gradients (and hence drift per window) are an order of magnitude larger.
    """
    def level(values: list[float], floor: float) -> float:
        finite = [v for v in values if np.isfinite(v)]
        if not finite:
            return floor
        return max(safety * max(finite), floor)

    return {
        "eps_drift": level(drifts, 1e-12),
        "eps_ns": level(nss, 1e-6),
        "eps_osc": level(oscs, 1e-9),
    }
