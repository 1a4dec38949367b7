"""Scenario configuration: flat key=value files, typed dataclasses, invariants.

A config file is UTF-8 text, one `key = value` per line, `#` starts a comment
(whole-line or trailing). Unknown keys are rejected so typos cannot silently fall
back to defaults. `to_lines` emits the fully resolved config in canonical form;
parsing that text back yields an identical config, and every artifact (CSV, trace,
manifest) embeds this canonical form so results are self-describing.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace

__all__ = [
    "Paradigm",
    "SemanticLevel",
    "MonitorAction",
    "Negotiation",
    "EncoderPlacement",
    "ParseError",
    "ValidationError",
    "ScheduleConfig",
    "PlacementConfig",
    "MonitorConfig",
    "ChannelConfig",
    "TaskConfig",
    "LearnerConfig",
    "ScenarioConfig",
    "step_sizes",
    "load_config",
    "loads_config",
    "make_config",
    "config_hash",
]


class ParseError(ValueError):
    """Raised when a config file is not syntactically `key = value` lines."""


class ValidationError(ValueError):
    """Raised for unknown keys, bad value types, or violated invariants."""


class Paradigm(enum.Enum):
    TR_RAN = "tr_ran"
    AI_O_RAN = "ai_o_ran"
    SEMCOM_ONLY = "semcom_only"
    TWO_TIMESCALE = "two_timescale"

    @property
    def is_semantic(self) -> bool:
        return self in (Paradigm.SEMCOM_ONLY, Paradigm.TWO_TIMESCALE)

    @property
    def is_learning(self) -> bool:
        return self is not Paradigm.TR_RAN


class SemanticLevel(enum.IntEnum):
    """Semantics axis: L0 bit-centric up to L3 fully goal-driven."""

    L0 = 0
    L1 = 1
    L2 = 2
    L3 = 3


class MonitorAction(enum.IntEnum):
    """Escalation cap for the stability monitors, ordered by severity."""

    LOG_ONLY = 0
    THROTTLE_K = 1
    REDUCE_C = 2
    ROLLBACK = 3


class Negotiation(enum.Enum):
    AUTO = "auto"
    ON = "on"
    OFF = "off"


class EncoderPlacement(enum.Enum):
    DEVICE = "device"
    AGENT = "agent"


@dataclass(frozen=True)
class ScheduleConfig:
    """Two-timescale step sizes: fast eta_t, slow gamma_t = c_ratio * eta_t."""

    eta0: float = 0.2
    decay_p: float = 0.6
    decay_t0: float = 5000.0
    c_ratio: float = 0.3
    k_slow: int = 50
    # Warm start: number of offline codec training steps run before slot 0 on a
    # channel-matched synthetic link, and the sample batch size per step. Zero
    # disables it.
    codec_pretrain_steps: int = 0
    codec_pretrain_batch: int = 128
    # Decoupled L2 shrinkage applied to the decoder weights on every slow step
    # (online and warm-start alike). Zero disables it.
    slow_weight_decay: float = 0.0


@dataclass(frozen=True)
class PlacementConfig:
    """Control-loop periods in slots: fast inline, near-real-time, non-real-time."""

    p0_period_slots: int = 1
    p1_period_slots: int = 10
    p2_period_slots: int = 500


@dataclass(frozen=True)
class MonitorConfig:
    delta_slots: int = 200
    eps_drift: float = 0.05
    eps_ns: float = 0.1
    eps_osc: float = 0.2
    histogram_bins: int = 16
    laplace_alpha: float = 0.5
    action: MonitorAction = MonitorAction.LOG_ONLY
    probe_set_size: int = 32
    min_window_samples: int = 30
    # Checks before arm_slot record metric values but report no breaches, so
    # the early-training transient (large drift and oscillation while step
    # sizes are still big) cannot trip responses meant for the settled regime.
    arm_slot: int = 0


@dataclass(frozen=True)
class ChannelConfig:
    slot_seconds: float = 1e-3
    unit_bw_hz: float = 1e6
    fading_std_db: float = 4.0
    block_length_slots: int = 10
    max_attempts: int = 8
    noise_floor_w: float = 1e-4
    coupling: float = 0.05
    reference_power_w: float = 0.1
    power_cap_w: float = 0.2
    joules_per_op: float = 1e-8


@dataclass(frozen=True)
class TaskConfig:
    n_classes: int = 8
    input_dim: int = 32
    class_separation: float = 6.0
    sample_noise_std: float = 0.5
    token_dim: int = 8
    ref_dim: int = 8
    bits_per_dim: int = 8
    tasks_per_agent_per_slot: float = 4.0


@dataclass(frozen=True)
class LearnerConfig:
    entropy_weight: float = 1e-2
    ppo_clip: float = 0.2
    ppo_epochs: int = 1
    discount: float = 0.99
    exploration_floor: float = 1e-4
    reward_clip: float = 5.0
    energy_ref_j: float = 1e-4


@dataclass(frozen=True)
class ScenarioConfig:
    paradigm: Paradigm = Paradigm.TWO_TIMESCALE
    semantic_level: SemanticLevel = SemanticLevel.L2
    n_agents: int = 5
    n_devices_per_agent: int = 15
    snr_db: float = 10.0
    bandwidth_units: int = 10
    energy_budget_j: float = 10.0
    latency_budget_slots: int = 5
    alpha: float = 1.0
    beta: float = 1.0
    lambda_e: float = 0.1
    lambda_l: float = 0.1
    horizon_slots: int = 20000
    seed: int = 1
    negotiation: Negotiation = Negotiation.AUTO
    encoder_placement: EncoderPlacement = EncoderPlacement.DEVICE
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    # Distribution-shift injection: at shift_slot > 0 the task generator translates
    # all class means by a random direction of norm
    # shift_sigma_mult * sample_noise_std * sqrt(input_dim), i.e. the multiplier
    # counts noise standard deviations per input dimension.
    # If shift_revert_slot > 0 the translation is removed again at that slot, which
    # models a transient disturbance the codec should not have chased.
    shift_slot: int = 0
    shift_sigma_mult: float = 2.0
    shift_revert_slot: int = 0
    # Recurring traffic rotation: when shift_period_slots > 0 the same translation
    # (drawn once, same magnitude convention as shift_slot) is applied during every
    # other window of that length, starting clean. Models a workload that alternates
    # between two traffic patterns. Mutually exclusive with shift_slot.
    shift_period_slots: int = 0
    # Engine diagnostics and stopping rule.
    early_stop: bool = True
    stopping_window_slots: int = 500
    stopping_tsr_band: float = 0.01
    grad_tol: float = 0.05
    gradnorm_period_slots: int = 100
    gradnorm_probe_m: int = 64
    tsr_window_tasks: int = 100
    validation_set_size: int = 512
    rapp_margin: float = 0.01
    rollback_cooldown_slots: int = 250

    @property
    def negotiation_enabled(self) -> bool:
        if self.negotiation is Negotiation.AUTO:
            return self.paradigm is Paradigm.TWO_TIMESCALE
        return self.negotiation is Negotiation.ON


def step_sizes(t: int, schedule: ScheduleConfig) -> tuple[float, float]:
    """Step sizes at slot t: eta_t = eta0 / (1 + t/t0)^p and gamma_t = c_ratio * eta_t.

    The constant ratio keeps the slow loop a fixed factor below the fast loop; both
    sequences satisfy the usual divergent-sum / convergent-square-sum conditions for
    decay_p in (0.5, 1]. The timescale divisor t0 sets how many slots pass before
    decay meaningfully bites; it rescales the sequence without changing its exponent.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    eta = schedule.eta0 / (1.0 + t / schedule.decay_t0) ** schedule.decay_p
    return eta, schedule.c_ratio * eta


# Flat key table: key -> (section, field, type). Section "" means ScenarioConfig itself.
_KEYS: dict[str, tuple[str, str, type]] = {
    "paradigm": ("", "paradigm", Paradigm),
    "semantic_level": ("", "semantic_level", SemanticLevel),
    "n_agents": ("", "n_agents", int),
    "n_devices_per_agent": ("", "n_devices_per_agent", int),
    "snr_db": ("", "snr_db", float),
    "bandwidth_units": ("", "bandwidth_units", int),
    "energy_budget_j": ("", "energy_budget_j", float),
    "latency_budget_slots": ("", "latency_budget_slots", int),
    "alpha": ("", "alpha", float),
    "beta": ("", "beta", float),
    "lambda_e": ("", "lambda_e", float),
    "lambda_l": ("", "lambda_l", float),
    "horizon_slots": ("", "horizon_slots", int),
    "seed": ("", "seed", int),
    "negotiation": ("", "negotiation", Negotiation),
    "encoder_placement": ("", "encoder_placement", EncoderPlacement),
    "shift_slot": ("", "shift_slot", int),
    "shift_sigma_mult": ("", "shift_sigma_mult", float),
    "shift_revert_slot": ("", "shift_revert_slot", int),
    "shift_period_slots": ("", "shift_period_slots", int),
    "early_stop": ("", "early_stop", bool),
    "stopping_window_slots": ("", "stopping_window_slots", int),
    "stopping_tsr_band": ("", "stopping_tsr_band", float),
    "grad_tol": ("", "grad_tol", float),
    "gradnorm_period_slots": ("", "gradnorm_period_slots", int),
    "gradnorm_probe_m": ("", "gradnorm_probe_m", int),
    "tsr_window_tasks": ("", "tsr_window_tasks", int),
    "validation_set_size": ("", "validation_set_size", int),
    "rapp_margin": ("", "rapp_margin", float),
    "rollback_cooldown_slots": ("", "rollback_cooldown_slots", int),
    "eta0": ("schedule", "eta0", float),
    "decay_p": ("schedule", "decay_p", float),
    "decay_t0": ("schedule", "decay_t0", float),
    "c_ratio": ("schedule", "c_ratio", float),
    "k_slow": ("schedule", "k_slow", int),
    "codec_pretrain_steps": ("schedule", "codec_pretrain_steps", int),
    "codec_pretrain_batch": ("schedule", "codec_pretrain_batch", int),
    "slow_weight_decay": ("schedule", "slow_weight_decay", float),
    "p0_period_slots": ("placement", "p0_period_slots", int),
    "p1_period_slots": ("placement", "p1_period_slots", int),
    "p2_period_slots": ("placement", "p2_period_slots", int),
    "monitor_delta_slots": ("monitor", "delta_slots", int),
    "monitor_eps_drift": ("monitor", "eps_drift", float),
    "monitor_eps_ns": ("monitor", "eps_ns", float),
    "monitor_eps_osc": ("monitor", "eps_osc", float),
    "monitor_histogram_bins": ("monitor", "histogram_bins", int),
    "monitor_laplace_alpha": ("monitor", "laplace_alpha", float),
    "monitor_action": ("monitor", "action", MonitorAction),
    "monitor_probe_set_size": ("monitor", "probe_set_size", int),
    "monitor_min_window_samples": ("monitor", "min_window_samples", int),
    "monitor_arm_slot": ("monitor", "arm_slot", int),
    "slot_seconds": ("channel", "slot_seconds", float),
    "unit_bw_hz": ("channel", "unit_bw_hz", float),
    "fading_std_db": ("channel", "fading_std_db", float),
    "block_length_slots": ("channel", "block_length_slots", int),
    "max_attempts": ("channel", "max_attempts", int),
    "noise_floor_w": ("channel", "noise_floor_w", float),
    "coupling": ("channel", "coupling", float),
    "reference_power_w": ("channel", "reference_power_w", float),
    "power_cap_w": ("channel", "power_cap_w", float),
    "joules_per_op": ("channel", "joules_per_op", float),
    "n_classes": ("task", "n_classes", int),
    "input_dim": ("task", "input_dim", int),
    "class_separation": ("task", "class_separation", float),
    "sample_noise_std": ("task", "sample_noise_std", float),
    "token_dim": ("task", "token_dim", int),
    "ref_dim": ("task", "ref_dim", int),
    "bits_per_dim": ("task", "bits_per_dim", int),
    "tasks_per_agent_per_slot": ("task", "tasks_per_agent_per_slot", float),
    "entropy_weight": ("learner", "entropy_weight", float),
    "ppo_clip": ("learner", "ppo_clip", float),
    "ppo_epochs": ("learner", "ppo_epochs", int),
    "discount": ("learner", "discount", float),
    "exploration_floor": ("learner", "exploration_floor", float),
    "reward_clip": ("learner", "reward_clip", float),
    "energy_ref_j": ("learner", "energy_ref_j", float),
}

_ENUM_BY_NAME = {
    Paradigm: {m.value: m for m in Paradigm},
    Negotiation: {m.value: m for m in Negotiation},
    EncoderPlacement: {m.value: m for m in EncoderPlacement},
    SemanticLevel: {m.name.lower(): m for m in SemanticLevel},
    MonitorAction: {m.name.lower(): m for m in MonitorAction},
}


def _convert(key: str, raw: str, typ: type):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValidationError(f"{key}: expected boolean, got {raw!r}")
    if typ is int:
        try:
            return int(raw)
        except ValueError:
            raise ValidationError(f"{key}: expected integer, got {raw!r}") from None
    if typ is float:
        try:
            return float(raw)
        except ValueError:
            raise ValidationError(f"{key}: expected number, got {raw!r}") from None
    table = _ENUM_BY_NAME[typ]
    try:
        return table[raw.lower()]
    except KeyError:
        opts = ", ".join(sorted(table))
        raise ValidationError(f"{key}: expected one of {{{opts}}}, got {raw!r}") from None


def _value_str(v) -> str:
    if isinstance(v, Paradigm | Negotiation | EncoderPlacement):
        return v.value
    if isinstance(v, SemanticLevel | MonitorAction):
        return v.name.lower()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_lines(text: str) -> dict[str, str]:
    """Parse `key = value` lines into a raw string map. Syntax errors only."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        if not key or not raw.strip():
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key in out:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        out[key] = raw.strip()
    return out


def _apply(entries: dict[str, str]) -> ScenarioConfig:
    sections: dict[str, dict] = {"": {}, "schedule": {}, "placement": {}, "monitor": {},
                                 "channel": {}, "task": {}, "learner": {}}
    explicit: set[str] = set()
    for key, raw in entries.items():
        if key not in _KEYS:
            raise ValidationError(f"unknown config key: {key!r}")
        section, fname, typ = _KEYS[key]
        sections[section][fname] = _convert(key, raw, typ)
        explicit.add(key)

    cfg = ScenarioConfig(
        schedule=ScheduleConfig(**sections["schedule"]),
        placement=PlacementConfig(**sections["placement"]),
        monitor=MonitorConfig(**sections["monitor"]),
        channel=ChannelConfig(**sections["channel"]),
        task=TaskConfig(**sections["task"]),
        learner=LearnerConfig(**sections["learner"]),
        **sections[""],
    )
    cfg = _resolve_defaults(cfg, explicit)
    validate(cfg)
    return cfg


def _resolve_defaults(cfg: ScenarioConfig, explicit: set[str]) -> ScenarioConfig:
    """Fill paradigm-dependent defaults the user did not set explicitly."""
    if cfg.paradigm in (Paradigm.TR_RAN, Paradigm.AI_O_RAN):
        if "semantic_level" not in explicit:
            cfg = replace(cfg, semantic_level=SemanticLevel.L0)
    if cfg.paradigm is Paradigm.SEMCOM_ONLY:
        sched = cfg.schedule
        if "c_ratio" not in explicit:
            sched = replace(sched, c_ratio=1.0)
        if "k_slow" not in explicit:
            sched = replace(sched, k_slow=1)
        cfg = replace(cfg, schedule=sched)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    """Check cross-field invariants; raises ValidationError with the first failure."""
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ValidationError(msg)

    p = cfg.placement
    need(p.p0_period_slots == 1, "p0_period_slots must be 1 (fast loop runs every slot)")
    need(1 <= p.p1_period_slots <= p.p2_period_slots,
         "placement periods must satisfy 1 <= p1 <= p2")
    s = cfg.schedule
    need(s.eta0 > 0, "eta0 must be positive")
    need(0.5 < s.decay_p <= 1.0, "decay_p must lie in (0.5, 1]")
    need(s.decay_t0 > 0, "decay_t0 must be positive")
    need(0.0 < s.c_ratio <= 1.0, "c_ratio must lie in (0, 1]")
    need(s.k_slow >= 1, "k_slow must be >= 1")
    need(s.codec_pretrain_steps >= 0, "codec_pretrain_steps must be >= 0")
    need(s.codec_pretrain_batch >= 8, "codec_pretrain_batch must be >= 8")
    need(0.0 <= s.slow_weight_decay < 1.0, "slow_weight_decay must be in [0, 1)")
    if cfg.paradigm is Paradigm.SEMCOM_ONLY:
        need(s.c_ratio == 1.0 and s.k_slow == 1,
             "semcom_only is the single-timescale variant: c_ratio = 1, k_slow = 1")
        need(not cfg.negotiation_enabled, "semcom_only has no negotiation side-channel")
    if cfg.paradigm is Paradigm.TR_RAN:
        need(cfg.semantic_level is SemanticLevel.L0, "tr_ran is bit-centric (l0)")
    if cfg.paradigm is Paradigm.AI_O_RAN:
        need(cfg.semantic_level is SemanticLevel.L0, "ai_o_ran is bit-centric (l0)")
        need(not cfg.negotiation_enabled, "ai_o_ran has no negotiation side-channel")
    if cfg.paradigm.is_semantic:
        need(cfg.semantic_level >= SemanticLevel.L1,
             "semantic paradigms require semantic_level >= l1")
    need(cfg.n_agents >= 1, "n_agents must be >= 1")
    need(cfg.n_devices_per_agent >= 1, "n_devices_per_agent must be >= 1")
    need(cfg.bandwidth_units >= 1, "bandwidth_units must be >= 1")
    need(cfg.horizon_slots >= 1, "horizon_slots must be >= 1")
    need(cfg.seed >= 0, "seed must be non-negative")
    need(cfg.latency_budget_slots >= 1, "latency_budget_slots must be >= 1")
    for name in ("alpha", "beta", "lambda_e", "lambda_l"):
        need(getattr(cfg, name) >= 0, f"{name} must be non-negative")
    m = cfg.monitor
    need(m.delta_slots >= p.p1_period_slots, "monitor_delta_slots must be >= p1 period")
    need(m.histogram_bins >= 2, "monitor_histogram_bins must be >= 2")
    need(m.laplace_alpha > 0, "monitor_laplace_alpha must be positive")
    need(m.probe_set_size >= 1, "monitor_probe_set_size must be >= 1")
    for name in ("eps_drift", "eps_ns", "eps_osc"):
        need(getattr(m, name) > 0, f"monitor_{name} must be positive")
    c = cfg.channel
    need(c.slot_seconds > 0 and c.unit_bw_hz > 0, "slot/bandwidth scales must be positive")
    need(c.block_length_slots >= 1, "block_length_slots must be >= 1")
    need(c.max_attempts >= 1, "max_attempts must be >= 1")
    need(c.noise_floor_w > 0, "noise_floor_w must be positive")
    need(c.coupling >= 0, "coupling must be non-negative")
    need(0 < c.reference_power_w <= c.power_cap_w,
         "reference_power_w must be in (0, power_cap_w]")
    t = cfg.task
    need(t.n_classes >= 2, "n_classes must be >= 2")
    need(t.ref_dim >= 1 and t.input_dim >= t.ref_dim,
         "input_dim must be >= ref_dim >= 1")
    need(t.token_dim in (4, 8, 16), "token_dim must be one of {4, 8, 16}")
    need(t.sample_noise_std > 0, "sample_noise_std must be positive")
    need(t.class_separation >= 2.0 * t.sample_noise_std,
         "class means must be at least two noise sigmas apart")
    need(t.bits_per_dim >= 1, "bits_per_dim must be >= 1")
    need(t.tasks_per_agent_per_slot > 0, "tasks_per_agent_per_slot must be positive")
    lr = cfg.learner
    need(lr.ppo_epochs >= 1, "ppo_epochs must be >= 1")
    need(0 < lr.discount <= 1, "discount must lie in (0, 1]")
    need(0 <= lr.exploration_floor < 0.01, "exploration_floor must lie in [0, 0.01)")
    need(lr.reward_clip > 0, "reward_clip must be positive")
    need(lr.energy_ref_j > 0, "energy_ref_j must be positive")
    need(cfg.shift_slot >= 0, "shift_slot must be non-negative (0 disables)")
    need(cfg.shift_revert_slot == 0 or cfg.shift_revert_slot > cfg.shift_slot,
         "shift_revert_slot must be 0 (no revert) or later than shift_slot")
    need(cfg.shift_period_slots >= 0,
         "shift_period_slots must be non-negative (0 disables)")
    need(cfg.shift_period_slots == 0 or cfg.shift_slot == 0,
         "shift_period_slots and shift_slot are mutually exclusive")
    need(cfg.stopping_window_slots >= 1, "stopping_window_slots must be >= 1")
    need(cfg.stopping_tsr_band > 0, "stopping_tsr_band must be positive")
    need(cfg.grad_tol > 0, "grad_tol must be positive")
    need(cfg.gradnorm_period_slots >= 1, "gradnorm_period_slots must be >= 1")
    need(cfg.gradnorm_probe_m >= 1, "gradnorm_probe_m must be >= 1")
    need(cfg.tsr_window_tasks >= 1, "tsr_window_tasks must be >= 1")
    need(cfg.validation_set_size >= 1, "validation_set_size must be >= 1")
    need(cfg.rapp_margin >= 0, "rapp_margin must be non-negative")
    need(cfg.rollback_cooldown_slots >= 0, "rollback_cooldown_slots must be >= 0")


def loads_config(text: str) -> ScenarioConfig:
    return _apply(parse_lines(text))


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read())


def make_config(**overrides) -> ScenarioConfig:
    """Build a validated config from keyword overrides using flat key names."""
    entries = {k: _value_str(v) if not isinstance(v, str) else v
               for k, v in overrides.items()}
    return _apply(entries)


def to_lines(cfg: ScenarioConfig) -> list[str]:
    """Canonical `key = value` lines for the fully resolved config, sorted by key."""
    out = []
    for key in sorted(_KEYS):
        section, fname, _ = _KEYS[key]
        obj = cfg if section == "" else getattr(cfg, section)
        out.append(f"{key} = {_value_str(getattr(obj, fname))}")
    return out


def config_hash(cfg: ScenarioConfig) -> str:
    """Stable short hash of the resolved config, embedded in artifact headers."""
    blob = "\n".join(to_lines(cfg)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
