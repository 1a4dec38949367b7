"""Slot-level closed-loop simulator.

One Engine instance owns everything a single run needs: per-agent traffic
queues, fading channels, linear-softmax actors with their critics, a live
semantic codec with its slow training loop, the stability monitors, and the
model registry with its governance cycle. `run(cfg)` drives it for up to
`horizon_slots` slots and returns a RunSummary of everything the KPI layer and
the scenario drivers consume.

Timing conventions, applied uniformly:
  - Interference seen in slot t comes from transmit duty cycles of slot t-1;
    within a slot agents act simultaneously and cannot observe each other.
  - Control directives resolved at the end of slot t (codec adoption after a
    rollback or a rejected governance cycle) govern slot t+1 onward, because
    slot t's transmissions have already happened.
  - Observations use last slot's realized link quality and intents, this
    slot's queue after deadline drops.
  - Task content (the input vector and its label) is materialized when the
    task arrives, one batched draw per agent per slot from that agent's
    content stream, so stream positions depend only on the arrival process,
    never on scheduling order.

Reward accounting: each agent's slot reward aggregates the tasks it concluded
this slot (served or dropped). Components are averaged per agent first and the
clip is applied once per agent-slot, so the logged objective decomposition in
the trace is exactly recomputable from the logged component sums.

Hot-path layout: per-agent quantities live in stacked arrays and every slot
does one batched pass over agents (action sampling, actor/critic update,
encode/decode, outcome scoring). The stacked update reproduces the reference
per-agent arithmetic of `agents.fast_update` row for row; a unit test holds
the two implementations together. Per-agent random streams are preserved:
draws happen agent by agent in index order exactly as a scalar loop would.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .agents import (ActionSpace, CriticParams, FEATURE_DIM, InfeasibleBudget,
                     PolicyParams, StepSample, allocate_bandwidth,
                     broadcast_intent, effective_sinr, fast_update,
                     greedy_action, heuristic_action, init_policy,
                     select_action)
from .channel import (ChannelState, achievable_bits_per_slot, energy_of,
                      symbols_per_slot)
from .codec import (CodecParams, ReferenceEmbedder, decode, embedding_distance_batch,
                    encode_batch, evaluate_codec, init_codec, quantize_batch,
                    semantic_confidence_batch, slow_train_step, task_outcome_batch)
from .config import Paradigm, ScenarioConfig, ScheduleConfig, step_sizes
from .monitors import MonitorReading, MonitorState, adapt
from .oran import (A1Policy, ModelRegistry, TelemetryRecord,
                   package_telemetry, rapp_cycle)
from .rng import (ACTIONS, CLASS_MEANS, CODEC_INIT, CODEC_PRETRAIN, CONTENT, FADING, NOISE,
                  POLICY_INIT, PROBES, REF_EMBEDDER, SCENARIO, TASKS, VALIDATION,
                  family_stream_id, stream)
from .task import TaskGenerator, draw_class_means

TRACE_SCHEMA = "semran-trace-v1"

# Coarse per-task compute cost model, in multiply-accumulate operations:
# the semantic path runs the encoder and decoder (two matrix products each way),
# the bit-centric path quantizes and dequantizes one value per input dimension.
def _semantic_ops(token_dim: int, input_dim: int) -> int:
    return 4 * token_dim * input_dim


def _digital_ops(input_dim: int) -> int:
    return 2 * input_dim


# Intent side-channel cost when explicit negotiation is on: three symbols at
# unit bandwidth carrying the quantized bid, plus a few ops to pack them.
_INTENT_SYMBOLS = 3

# Row cap on the slow-loop sample buffer; oldest whole slot-chunks fall off
# first. Bounds memory when monitor throttling stretches the slow period.
_SLOW_BUFFER_CAP = 4096

# Fixed step size for the offline warm-start loop. Deliberately below the online
# schedule so the warm start settles into the loss basin instead of bouncing.
_PRETRAIN_GAMMA = 0.1


def _pretrain_codec(codec: CodecParams, embedder: ReferenceEmbedder,
                    task_gen: TaskGenerator, rng: np.random.Generator,
                    steps: int, batch: int, snr_db: float,
                    fading_std_db: float, weight_decay: float) -> CodecParams:
    """Warm-start the codec on synthetic traffic before the run begins.

    Tokens pass through additive noise matched to the link's average quality,
    so the warm start settles at the same stationary point the online slow
    loop would reach, not at the noiseless optimum next to it. Under
    log-normal fading the expected noise energy exceeds the nominal level by
    exp((sigma * ln10 / 10)^2 / 2), so that factor is folded in. The same
    weight decay as the online loop is applied for the same reason. The
    returned params are renumbered to version 0: the warm start produces the
    deployment baseline, not a lineage of online updates.
    """
    fade_mult = math.exp((fading_std_db * math.log(10.0) / 10.0) ** 2 / 2.0)
    scale = math.sqrt(fade_mult / 10.0 ** (snr_db / 10.0))
    # Tail averaging: the returned baseline is the mean of the trajectory over
    # the final quarter of the steps, not the endpoint, so the deployment point
    # sits at the basin center instead of wherever the last stochastic step
    # happened to land.
    tail_from = steps - max(1, steps // 4)
    acc = None
    n_acc = 0
    for k in range(steps):
        x, _ = task_gen.sample(rng, batch)
        z = encode_batch(codec, x)
        z_rec = z + scale * rng.standard_normal(z.shape)
        new, info = slow_train_step(codec, embedder, x, z_rec, _PRETRAIN_GAMMA,
                                    weight_decay=weight_decay)
        if not info.rejected:
            codec = new
        if k >= tail_from:
            cur = (codec.theta, codec.b_enc, codec.phi, codec.b_dec)
            acc = cur if acc is None else tuple(a + c for a, c in zip(acc, cur))
            n_acc += 1
    if acc is not None:
        codec = replace(codec, theta=acc[0] / n_acc, b_enc=acc[1] / n_acc,
                        phi=acc[2] / n_acc, b_dec=acc[3] / n_acc)
    return replace(codec, version=0, parent_version=0)


@dataclass
class EngineHooks:
    """Optional taps for the management shell; all default to no-ops."""

    on_telemetry: Callable[[list[TelemetryRecord]], None] | None = None
    on_monitor: Callable[[MonitorReading], None] | None = None
    on_governance: Callable[[object], None] | None = None


class _Task:
    """One queued task; content is drawn in a batch when the task arrives."""

    __slots__ = ("arrival", "task_id", "x", "label", "bits_done", "energy_j")

    def __init__(self, arrival: int, task_id: int, x: np.ndarray, label: int):
        self.arrival = arrival
        self.task_id = task_id
        self.x = x
        self.label = label
        self.bits_done = 0.0
        self.energy_j = 0.0


class _RingMean:
    """Fixed-capacity ring of floats with an order-free windowed mean."""

    __slots__ = ("buf", "cap", "idx", "n")

    def __init__(self, cap: int):
        self.buf = np.zeros(cap)
        self.cap = cap
        self.idx = 0
        self.n = 0

    def push(self, v: float) -> None:
        self.buf[self.idx] = v
        self.idx += 1
        if self.idx == self.cap:
            self.idx = 0
        if self.n < self.cap:
            self.n += 1

    def mean(self) -> float:
        if self.n == 0:
            return 0.0
        if self.n < self.cap:
            return float(self.buf[:self.n].sum()) / self.n
        return float(self.buf.sum()) / self.cap

    @property
    def full(self) -> bool:
        return self.n == self.cap


class _VecActors:
    """All agents' actors and critics as stacked arrays.

    Semantically identical to holding a list of per-agent PolicyParams and
    calling `select_action` / `fast_update` agent by agent with one sample per
    agent and a single epoch; the stacked form exists purely to amortize call
    overhead on the per-slot hot path. With `ppo_epochs != 1` the update
    delegates to the reference implementation. Uniform draws for sampling come
    from one batched `rng.random(n)` call, which consumes the stream exactly
    like n sequential scalar draws.
    """

    def __init__(self, weights: np.ndarray, shared_critic: bool):
        self.W = weights                       # (n_agents, n_actions, FEATURE_DIM)
        self.n_agents = weights.shape[0]
        self.n_actions = weights.shape[1]
        n_crit = 1 if shared_critic else self.n_agents
        self.C = np.zeros((n_crit, FEATURE_DIM))
        self.shared_critic = shared_critic

    # -- snapshots ---------------------------------------------------------

    def actor_list(self) -> list[PolicyParams]:
        return [PolicyParams(weights=self.W[i].copy()) for i in range(self.n_agents)]

    def critic_list(self) -> list[CriticParams]:
        return [CriticParams(weights=self.C[i].copy()) for i in range(self.C.shape[0])]

    @property
    def n_params(self) -> int:
        return self.W.size

    # -- acting ------------------------------------------------------------

    def _softmax(self, feats: np.ndarray) -> np.ndarray:
        logits = np.einsum("naf,nf->na", self.W, feats)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def distributions(self, feats: np.ndarray, floor: float) -> np.ndarray:
        """Per-agent action distributions; rows match `policy_distribution`."""
        sm = self._softmax(feats)
        lam = floor * self.n_actions
        if lam > 0.0:
            return (1.0 - lam) * sm + floor
        return sm

    def sample(self, feats: np.ndarray, rng: np.random.Generator,
               floor: float) -> tuple[list[int], np.ndarray, np.ndarray]:
        """Sample one action per agent; returns (indices, distributions, softmax).

        The raw softmax is returned alongside so the same-slot update can skip
        recomputing it; weights do not change between sampling and updating.
        """
        sm = self._softmax(feats)
        lam = floor * self.n_actions
        p = (1.0 - lam) * sm + floor if lam > 0.0 else sm
        u = rng.random(self.n_agents)
        cdf = np.cumsum(p, axis=1)
        hi = self.n_actions - 1
        idx = [min(int(np.searchsorted(cdf[i], u[i])), hi)
               for i in range(self.n_agents)]
        return idx, p, sm

    # -- learning ----------------------------------------------------------

    def update(self, feats: np.ndarray, action_idx: np.ndarray,
               probs_old: np.ndarray, rewards: np.ndarray,
               joint: np.ndarray | None, eta: float, entropy_weight: float,
               ppo_clip: float, ppo_epochs: int, floor: float,
               sm: np.ndarray | None = None) -> tuple[float, bool]:
        """One fast step over this slot's n samples; returns (gradnorm_sq, rejected).

        `sm` may pass the softmax already computed while sampling this slot;
        it must come from the current weights.
        """
        if ppo_epochs != 1:
            return self._update_reference(feats, action_idx, probs_old, rewards,
                                          joint, eta, entropy_weight, ppo_clip,
                                          ppo_epochs, floor)
        n = self.n_agents
        rows = np.arange(n)

        if self.shared_critic:
            v = float(self.C[0] @ joint)
            err = rewards - v
        else:
            err = rewards - np.einsum("nf,nf->n", self.C, feats)

        if sm is None:
            sm = self._softmax(feats)
        lam = floor * self.n_actions
        probs = (1.0 - lam) * sm + floor if lam > 0.0 else sm

        coeff = err / probs[rows, action_idx]
        scale = coeff * (1.0 - lam) * sm[rows, action_idx]
        dlogits = -scale[:, None] * sm
        dlogits[rows, action_idx] += scale

        if entropy_weight > 0.0:
            log_probs = np.log(probs)
            inner = -(log_probs + 1.0)
            mean_inner = np.einsum("na,na->n", inner, sm)
            dh = (1.0 - lam) * sm * (inner - mean_inner[:, None])
            dlogits += entropy_weight * dh

        grads = dlogits[:, :, None] * feats[:, None, :]
        m = float(n)
        gsq = float(np.einsum("naf,naf->", grads, grads)) / (m * m)
        if not math.isfinite(gsq):
            return gsq, True

        self.W += (eta / m) * grads
        if self.shared_critic:
            self.C[0] += (eta / m) * (2.0 * float(err.sum())) * joint
        else:
            self.C += (eta / m) * 2.0 * err[:, None] * feats
        return gsq, False

    def _update_reference(self, feats, action_idx, probs_old, rewards, joint,
                          eta, entropy_weight, ppo_clip, ppo_epochs, floor
                          ) -> tuple[float, bool]:
        actors = [PolicyParams(weights=self.W[i].copy()) for i in range(self.n_agents)]
        critics = [CriticParams(weights=self.C[i].copy())
                   for i in range(self.C.shape[0])]
        samples = [StepSample(agent=i, features=feats[i],
                              action_idx=int(action_idx[i]), probs_old=probs_old[i],
                              reward=float(rewards[i]),
                              joint_features=joint if joint is not None else feats[i])
                   for i in range(self.n_agents)]
        info = fast_update(actors, critics, samples, eta, entropy_weight,
                           ppo_clip, ppo_epochs, floor, self.shared_critic)
        if not info.rejected:
            for i, a in enumerate(actors):
                self.W[i] = a.weights
            for i, c in enumerate(critics):
                self.C[i] = c.weights
        return info.actor_grad_norm_sq, info.rejected


@dataclass
class EngineState:
    """Point-in-time view of the run's mutable learning state."""

    t: int
    codec: CodecParams
    policies: list[PolicyParams] | None
    batch_buffer: tuple[np.ndarray, np.ndarray]
    reward_window: np.ndarray
    gradnorm_window: np.ndarray
    tsr_window: np.ndarray


@dataclass
class RunSummary:
    """Everything a run hands to the KPI layer and the scenario drivers."""

    slots_run: int
    stopped_early: bool
    successes: int
    attempted: int
    d_sem_mean: float
    task_latencies: np.ndarray
    energy_total_j: float
    reward_series: np.ndarray
    tsr_series: np.ndarray
    gradnorm_series: list[tuple[int, float]]
    final_gradnorm: float
    final_tsr: float
    codec_loss_series: list[tuple[int, float]]
    codec_version_final: int
    mean_allocated_units: float
    overflow_rate: float
    alloc_fallback_count: int
    rollback_count: int
    monitor_trigger_count: int
    monitor_readings: list[MonitorReading]
    rollback_slots: list[int]
    rapp_accepts: int
    rapp_rejects: int
    a1_log: list[A1Policy]
    audit_log: list[dict]
    rejected_fast_steps: int
    rejected_slow_steps: int
    registry: ModelRegistry | None = None


class Engine:
    def __init__(self, cfg: ScenarioConfig,
                 trace_writer: Callable[[dict], None] | None = None,
                 telemetry_writer: Callable[[TelemetryRecord], None] | None = None,
                 hooks: EngineHooks | None = None):
        self.cfg = cfg
        self.trace_writer = trace_writer
        self.telemetry_writer = telemetry_writer
        self.hooks = hooks or EngineHooks()
        seed = cfg.seed
        n = cfg.n_agents
        tk = cfg.task
        self.paradigm = cfg.paradigm
        self.semantic = cfg.paradigm.is_semantic
        self.learning = cfg.paradigm.is_learning

        means = draw_class_means(stream(seed, family_stream_id(CLASS_MEANS)),
                                 tk.n_classes, tk.input_dim, tk.class_separation)
        self.embedder = ReferenceEmbedder(stream(seed, family_stream_id(REF_EMBEDDER)),
                                          tk.input_dim, tk.ref_dim, means)
        self.task_gen = TaskGenerator(means, tk.sample_noise_std)
        self.probes = self.task_gen.sample(stream(seed, family_stream_id(PROBES)),
                                           cfg.monitor.probe_set_size)[0]
        self.val_x, self.val_labels = self.task_gen.sample(
            stream(seed, family_stream_id(VALIDATION)), cfg.validation_set_size)

        self.codec = init_codec(stream(seed, family_stream_id(CODEC_INIT)),
                                tk.token_dim, tk.input_dim,
                                align_to=self.embedder.projection)
        if cfg.schedule.codec_pretrain_steps > 0:
            self.codec = _pretrain_codec(self.codec, self.embedder, self.task_gen,
                                         stream(seed, family_stream_id(CODEC_PRETRAIN)),
                                         cfg.schedule.codec_pretrain_steps,
                                         cfg.schedule.codec_pretrain_batch,
                                         cfg.snr_db, cfg.channel.fading_std_db,
                                         cfg.schedule.slow_weight_decay)
        genesis_tsr = evaluate_codec(self.codec, self.embedder, self.val_x,
                                     self.val_labels)
        self.registry = ModelRegistry(self.codec, genesis_tsr, slot=0)
        self._version_high = self.codec.version

        self.space = ActionSpace(semantic=self.semantic)
        if self.learning:
            w0 = np.stack([init_policy(stream(seed, family_stream_id(POLICY_INIT, i)),
                                       len(self.space)).weights for i in range(n)])
            self._shared_critic = cfg.paradigm in (Paradigm.TWO_TIMESCALE,
                                                   Paradigm.AI_O_RAN)
            self._vec = _VecActors(w0, self._shared_critic)
        else:
            self._vec = None
            self._shared_critic = False

        ch = cfg.channel
        self.channels = [ChannelState(ch, cfg.snr_db,
                                      stream(seed, family_stream_id(FADING, i)))
                         for i in range(n)]
        self.tasks_rng = [stream(seed, family_stream_id(TASKS, i)) for i in range(n)]
        self.noise_rng = [stream(seed, family_stream_id(NOISE, i)) for i in range(n)]
        self.content_rng = [stream(seed, family_stream_id(CONTENT, i)) for i in range(n)]
        self.actions_rng = stream(seed, family_stream_id(ACTIONS))
        self.scenario_rng = stream(seed, family_stream_id(SCENARIO))
        # The rotation vector is drawn once so the workload alternates between
        # the same two patterns instead of walking randomly. It is drawn inside
        # the reference subspace: a rotation models a change in what the traffic
        # means, and any component orthogonal to the reference projection would
        # leave embeddings and task outcomes untouched.
        self._shift_on = False
        self._periodic_shift = (self._draw_rotation_vector()
                                if cfg.shift_period_slots > 0 else None)

        self.queues: list[deque[_Task]] = [deque() for _ in range(n)]
        self.last_sinr_db = [float(cfg.snr_db)] * n
        self.last_d_mean = [1.0] * n
        self._intents = [(0.0, 0.0, 0.0)] * n
        self.prev_requests = [1] * n
        self.prev_power_w = [0.0] * n
        self.prev_duty = [0.0] * n
        self._offset_db = [0.0] * n

        # Per-action lookup tables (selection resolves to plain floats/ints on
        # the hot path; the cap is already folded into the power column).
        acts = self.space.actions
        self._tbl_power = [min(a.power_w, ch.power_cap_w) for a in acts]
        self._tbl_bid = [a.bw_request for a in acts]
        self._tbl_token = [a.token_dim for a in acts]
        self._tbl_intent = [tuple(broadcast_intent(a)) for a in acts]

        clip = cfg.learner.reward_clip
        self.monitor = MonitorState(cfg.monitor, reward_range=(-clip, clip))
        self.k_cur = cfg.schedule.k_slow
        self.c_cur = cfg.schedule.c_ratio
        self.cooldown_until = -1
        self._slow_chunks: deque[tuple[np.ndarray, np.ndarray]] = deque()
        self._slow_rows = 0
        self.slow_steps_since_adopt = 0
        self._last_slow_gsq = 0.0
        self._had_slow_step = False
        # Distortion weight: bit-centric paradigms optimize throughput and cost
        # only, so the semantic distortion term is absent from their reward.
        self.beta_eff = cfg.beta if cfg.semantic_level.value >= 1 else 0.0

        # Reference link for the relative SINR offset: the nominal SNR is defined
        # at reference power on one bandwidth unit with no interference.
        self._ref_sinr_db = effective_sinr(ch.reference_power_w, 1, 0.0,
                                           ch.noise_floor_w, ch.coupling)
        self._sps_unit = symbols_per_slot(ch, 1)
        self._payload_bits = tk.input_dim * tk.bits_per_dim
        self._ops_semantic = _semantic_ops(tk.token_dim, tk.input_dim)
        self._ops_digital = _digital_ops(tk.input_dim)
        self._proj_t = self.embedder.projection.T.copy()
        # Side-channel energy per intent broadcast, cached by power level.
        self._intent_energy: dict[float, float] = {}

        # Counters and serieses.
        self.successes = 0
        self.attempted = 0
        self.d_sem_sum = 0.0
        self.energy_total_j = 0.0
        self.latencies: list[float] = []
        self.reward_series: list[float] = []
        self.tsr_series: list[float] = []
        self.gradnorm_series: list[tuple[int, float]] = []
        self.codec_loss_series: list[tuple[int, float]] = []
        self.monitor_readings: list[MonitorReading] = []
        self.rollback_slots: list[int] = []
        self.a1_log: list[A1Policy] = []
        self.overflow_count = 0
        self.alloc_fallback_count = 0
        self.rollback_count = 0
        self.monitor_trigger_count = 0
        self.rapp_accepts = 0
        self.rapp_rejects = 0
        self.rejected_fast_steps = 0
        self.rejected_slow_steps = 0
        self.allocated_units_total = 0
        self.slots_run = 0
        self.stopped_early = False

        self.tsr_window = _RingMean(cfg.tsr_window_tasks)
        self.tsr_stop_window: deque[float] = deque(maxlen=cfg.stopping_window_slots)
        n_grad = max(1, cfg.stopping_window_slots // cfg.gradnorm_period_slots)
        self.grad_window: deque[float] = deque(maxlen=n_grad)
        self.actor_gsq_window: deque[float] = deque(maxlen=2048)
        self._last_gradnorm = 0.0
        self._task_counter = 0
        self._last_mf = 0

        # Per-agent telemetry window accumulators, reset at each emission.
        self._tw_concluded = [0] * n
        self._tw_completed = [0] * n
        self._tw_dropped = [0] * n
        self._tw_conf_sum = [0.0] * n
        self._tw_conf_n = [0] * n
        self._tw_last_task = [-1] * n
        self._cur_token_dim = [0] * n
        self._want_telemetry = (telemetry_writer is not None
                                 or self.hooks.on_telemetry is not None)

    # ------------------------------------------------------------------ views

    @property
    def actors(self) -> list[PolicyParams] | None:
        """Per-agent actor snapshots (copies); None for non-learning paradigms."""
        return self._vec.actor_list() if self._vec is not None else None

    @property
    def critics(self) -> list[CriticParams]:
        return self._vec.critic_list() if self._vec is not None else []

    @property
    def state(self) -> EngineState:
        if self._slow_rows > 0:
            bx = np.concatenate([c[0] for c in self._slow_chunks])
            bz = np.concatenate([c[1] for c in self._slow_chunks])
        else:
            bx = np.zeros((0, self.cfg.task.input_dim))
            bz = np.zeros((0, self.codec.token_dim))
        return EngineState(
            t=self.slots_run,
            codec=self.codec,
            policies=self.actors,
            batch_buffer=(bx, bz),
            reward_window=np.asarray(
                self.reward_series[-self.cfg.stopping_window_slots:]),
            gradnorm_window=np.asarray(list(self.grad_window)),
            tsr_window=self.tsr_window.buf[:self.tsr_window.n].copy(),
        )

    # ------------------------------------------------------------------ helpers

    def _n_actor_params(self) -> int:
        return self._vec.n_params if self._vec is not None else 0

    def _adopt_params(self, params: CodecParams) -> None:
        """Make `params` the live codec under a fresh, never-used version number.

        Candidate versions (including rejected ones) live in the registry, so a
        reverted or rolled-back codec must not reuse a number the registry has
        seen; re-stamping above the high-water mark keeps the lineage collision
        free while `parent_version` records where the bytes came from.
        """
        self._version_high += 1
        self.codec = replace(params, version=self._version_high,
                             parent_version=params.version)
        self.slow_steps_since_adopt = 0

    def _clear_slow_buffer(self) -> None:
        self._slow_chunks.clear()
        self._slow_rows = 0

    def _push_slow_chunk(self, x: np.ndarray, z: np.ndarray) -> None:
        self._slow_chunks.append((x, z))
        self._slow_rows += x.shape[0]
        while self._slow_rows > _SLOW_BUFFER_CAP and len(self._slow_chunks) > 1:
            old = self._slow_chunks.popleft()
            self._slow_rows -= old[0].shape[0]

    def _apply_rollback(self, t: int) -> None:
        # The suspect state is the live lineage's unregistered movement, so the
        # rollback target is the newest registered known-good version: Active
        # itself. Stepping back to the version before Active would discard a
        # healthy promotion and can be many hundreds of slots staler.
        params, _entry = self.registry.restore_active(slot=t)
        self._adopt_params(params)
        self._clear_slow_buffer()
        self.k_cur = self.cfg.schedule.k_slow
        self.c_cur = self.cfg.schedule.c_ratio
        self.cooldown_until = t + self.cfg.rollback_cooldown_slots
        # Fresh monitor: post-rollback readings must not be compared against
        # pre-rollback snapshots, or the restoration itself reads as drift.
        clip = self.cfg.learner.reward_clip
        self.monitor = MonitorState(self.cfg.monitor, reward_range=(-clip, clip))
        self.rollback_count += 1
        self.rollback_slots.append(t)

    # ---------------------------------------------------------------- serving

    def _serve_semantic_all(self, t: int, grants: list[int], powers: list[float],
                            tokens: list[int], duties: list[float],
                            concluded: list) -> None:
        """Serve every agent's queue for one slot in a single batched pass."""
        segs = []   # (agent, tasks, token_dim, energy_per)
        xs = []
        ch = self.cfg.channel
        for i in range(self.cfg.n_agents):
            q = self.queues[i]
            grant = grants[i]
            if grant <= 0 or not q:
                continue
            token_dim = tokens[i]
            airtime_per = token_dim / (self._sps_unit * grant)
            n_serve = min(len(q), int((1.0 + 1e-12) / airtime_per))
            if n_serve <= 0:
                continue
            tasks = [q.popleft() for _ in range(n_serve)]
            xs.append(np.array([tk.x for tk in tasks]))
            energy_per = energy_of(ch, powers[i], airtime_per,
                                   compute_ops=self._ops_semantic)
            segs.append((i, tasks, token_dim, energy_per))
            duties[i] = n_serve * airtime_per
        if not segs:
            return

        x_all = xs[0] if len(xs) == 1 else np.concatenate(xs)
        z_all = encode_batch(self.codec, x_all)
        d = self.codec.token_dim

        z_parts = []
        off = 0
        for (i, tasks, token_dim, _energy) in segs:
            m = len(tasks)
            z = z_all[off:off + m]
            off += m

            # Channel noise is drawn with one entry per transmitted symbol, so
            # the stream advance depends only on (m, token_dim), not on how the
            # token is cropped or replicated around the codec width.
            sinr_db = self.channels[i].realized_snr_db + self._offset_db[i]
            linear = 10.0 ** (sinr_db / 10.0)
            scale = math.sqrt(1.0 / linear)
            noise = self.noise_rng[i].standard_normal((m, token_dim))

            if token_dim == d:
                z_rec = z + scale * noise
            elif token_dim < d:
                # Truncated transmission: untouched trailing dims arrive as zero.
                z_rec = np.zeros((m, d))
                z_rec[:, :token_dim] = z[:, :token_dim] + scale * noise
            else:
                # Replicated transmission: receiver averages the copies, which
                # leaves the token plus the mean of the per-copy noise.
                reps = token_dim // d
                z_rec = z + scale * noise.reshape(m, reps, d).mean(axis=1)
            z_parts.append(z_rec)

        z_rec_all = z_parts[0] if len(z_parts) == 1 else np.concatenate(z_parts)
        x_hat = decode(self.codec, z_rec_all)
        preds = task_outcome_batch(self.embedder, x_hat)
        d_sem = embedding_distance_batch(x_all @ self._proj_t, x_hat @ self._proj_t)
        conf = (semantic_confidence_batch(self.embedder, x_hat)
                if self._want_telemetry else None)
        if self.semantic:
            self._push_slow_chunk(x_all, z_rec_all)

        deadline = self.cfg.latency_budget_slots
        off = 0
        for (i, tasks, _token, energy_per) in segs:
            if conf is not None:
                self._tw_conf_sum[i] += float(conf[off:off + len(tasks)].sum())
                self._tw_conf_n[i] += len(tasks)
            for task in tasks:
                latency = float(t - task.arrival + 1)
                success = bool(preds[off] == task.label) and latency <= deadline
                concluded.append((i, task.task_id, success, float(d_sem[off]),
                                  latency, energy_per, True))
                off += 1

    def _serve_digital_all(self, t: int, grants: list[int], powers: list[float],
                           duties: list[float], concluded: list) -> None:
        """Head-of-line bit accumulation per agent; outcomes scored in one batch."""
        ch = self.cfg.channel
        done: list[tuple[int, _Task, float]] = []
        for i in range(self.cfg.n_agents):
            q = self.queues[i]
            grant = grants[i]
            if grant <= 0 or not q:
                continue
            sinr_db = self.channels[i].realized_snr_db + self._offset_db[i]
            bits_per_slot = achievable_bits_per_slot(ch, sinr_db, grant)
            if bits_per_slot <= 0.0:
                continue
            budget = 1.0
            duty = 0.0
            power_w = powers[i]
            while q and budget > 1e-12:
                task = q[0]
                need_bits = self._payload_bits - task.bits_done
                airtime_need = need_bits / bits_per_slot
                if airtime_need <= budget:
                    task.energy_j += energy_of(ch, power_w, airtime_need)
                    budget -= airtime_need
                    duty += airtime_need
                    q.popleft()
                    done.append((i, task, float(t - task.arrival + 1)))
                else:
                    task.bits_done += bits_per_slot * budget
                    task.energy_j += energy_of(ch, power_w, budget)
                    duty += budget
                    budget = 0.0
            duties[i] = duty
        if not done:
            return

        x = np.array([task.x for (_i, task, _lat) in done])
        x_hat = quantize_batch(x, self.cfg.task.bits_per_dim)
        preds = task_outcome_batch(self.embedder, x_hat)
        d_sem = embedding_distance_batch(x @ self._proj_t, x_hat @ self._proj_t)
        conf = (semantic_confidence_batch(self.embedder, x_hat)
                if self._want_telemetry else None)

        deadline = self.cfg.latency_budget_slots
        ops_energy = self._ops_digital * ch.joules_per_op
        for k, (i, task, latency) in enumerate(done):
            success = bool(preds[k] == task.label) and latency <= deadline
            if conf is not None:
                self._tw_conf_sum[i] += float(conf[k])
                self._tw_conf_n[i] += 1
            concluded.append((i, task.task_id, success, float(d_sem[k]), latency,
                              task.energy_j + ops_energy, True))

    # ------------------------------------------------------------- estimators

    def _estimate_gradnorm(self, m: int) -> float:
        """Root of the per-parameter mean-square gradient estimate over recent slots.

        Combines the actor policy-gradient magnitudes of the last `m` recorded
        slots with the most recent slow-loop surrogate gradient, each normalized
        by its parameter count so neither side dominates by dimensionality.
        """
        total = 0.0
        if self.learning and self.actor_gsq_window:
            recent = list(self.actor_gsq_window)[-m:]
            total += (sum(recent) / len(recent)) / max(1, self._n_actor_params())
        if self.semantic and self._had_slow_step:
            total += self._last_slow_gsq / self.codec.n_params()
        return math.sqrt(total)

    def _stopping_check(self) -> bool:
        cfg = self.cfg
        if len(self.tsr_stop_window) < cfg.stopping_window_slots:
            return False
        if not self.grad_window:
            return False
        lo = min(self.tsr_stop_window)
        hi = max(self.tsr_stop_window)
        if hi - lo > cfg.stopping_tsr_band:
            return False
        return (sum(self.grad_window) / len(self.grad_window)) <= cfg.grad_tol

    def _emit_telemetry(self, t: int) -> None:
        cfg = self.cfg
        window_slots = cfg.placement.p1_period_slots
        tsr_proxy = self.tsr_window.mean() if self.tsr_window.full else None
        records = []
        for i in range(cfg.n_agents):
            concluded = self._tw_concluded[i]
            delivered_rate = (self._tw_completed[i] / concluded
                              if concluded > 0 else None)
            confidence = (self._tw_conf_sum[i] / self._tw_conf_n[i]
                          if self._tw_conf_n[i] > 0 else None)
            records.append(package_telemetry(
                slot=t, agent_id=i, task_id=self._tw_last_task[i],
                semantic_token_size=self._cur_token_dim[i],
                semantic_confidence=confidence, tsr_proxy=tsr_proxy,
                sinr_db=float(self.last_sinr_db[i]), delivered_rate=delivered_rate,
                queue_len=len(self.queues[i]),
                throughput_proxy=concluded / window_slots))
            self._tw_concluded[i] = 0
            self._tw_completed[i] = 0
            self._tw_dropped[i] = 0
            self._tw_conf_sum[i] = 0.0
            self._tw_conf_n[i] = 0
        if self.telemetry_writer is not None:
            for rec in records:
                self.telemetry_writer(rec)
        if self.hooks.on_telemetry is not None:
            self.hooks.on_telemetry(records)

    # ------------------------------------------------------------------ main loop

    def _draw_shift_vector(self) -> np.ndarray:
        """Translation applied to every class mean by the shift machinery.

        Magnitude is per dimension: a mult of 2 moves every coordinate by two
        noise standard deviations on average, so the translation norm is
        mult * std * sqrt(dim). A norm of only mult * std would vanish against
        the class geometry in high dimension.
        """
        cfg = self.cfg
        direction = self.scenario_rng.standard_normal(cfg.task.input_dim)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            direction = np.ones(cfg.task.input_dim)
            norm = float(np.linalg.norm(direction))
        magnitude = (cfg.shift_sigma_mult * cfg.task.sample_noise_std
                     * math.sqrt(cfg.task.input_dim))
        return (magnitude / norm) * direction

    def _draw_rotation_vector(self) -> np.ndarray:
        """Translation for the recurring rotation, drawn in the reference subspace.

        Same magnitude convention as _draw_shift_vector, but the direction is a
        random element of the reference projection's row space, so the whole
        translation is semantically visible instead of mostly orthogonal noise.
        """
        cfg = self.cfg
        g = self.scenario_rng.standard_normal(self.embedder.projection.shape[0])
        direction = self.embedder.projection.T @ g
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            direction = self.embedder.projection.T[:, 0]
            norm = float(np.linalg.norm(direction))
        magnitude = (cfg.shift_sigma_mult * cfg.task.sample_noise_std
                     * math.sqrt(cfg.task.input_dim))
        return (magnitude / norm) * direction

    def step(self, t: int) -> None:
        cfg = self.cfg
        n = cfg.n_agents
        ch = cfg.channel
        # Baselines for the per-slot deltas in the trace row; the lifetime KPIs
        # must be recomputable from the trace alone by summing these.
        succ0, att0 = self.successes, self.attempted
        alloc0, e0 = self.allocated_units_total, self.energy_total_j

        if cfg.shift_slot > 0 and t == cfg.shift_slot:
            self.task_gen.apply_shift(self._draw_shift_vector())
        if cfg.shift_revert_slot > 0 and t == cfg.shift_revert_slot:
            self.task_gen.clear_shift()
        if cfg.shift_period_slots > 0:
            on = (t // cfg.shift_period_slots) % 2 == 1
            if on != self._shift_on:
                if on:
                    self.task_gen.apply_shift(self._periodic_shift)
                else:
                    self.task_gen.clear_shift()
                self._shift_on = on

        for state in self.channels:
            state.advance_to(t)

        # Arrivals (content drawn per agent in one batch), then deadline drops
        # (a task waiting its whole budget already cannot conclude in time no
        # matter what happens this slot).
        concluded: list[tuple] = []  # (agent, task_id, success, d_sem, latency, energy, completed)
        deadline = cfg.latency_budget_slots
        lam = cfg.task.tasks_per_agent_per_slot
        for i in range(n):
            n_new = int(self.tasks_rng[i].poisson(lam))
            q = self.queues[i]
            if n_new > 0:
                x_new, labels_new = self.task_gen.sample(self.content_rng[i], n_new)
                base = self._task_counter
                for k in range(n_new):
                    q.append(_Task(t, base + k, x_new[k], int(labels_new[k])))
                self._task_counter = base + n_new
            while q and (t - q[0].arrival) >= deadline:
                task = q.popleft()
                concluded.append((i, task.task_id, False, 2.0,
                                  float(2 * deadline), task.energy_j, False))

        # Observation features, one row per agent, matching Observation.features().
        intents = self._intents
        s0 = s1 = s2 = 0.0
        for ii in intents:
            s0 += ii[0]
            s1 += ii[1]
            s2 += ii[2]
        inv = 1.0 / (n - 1) if n > 1 else 0.0
        rows = []
        for i in range(n):
            b_sinr = math.floor((self.last_sinr_db[i] + 20.0) / 5.0)
            b_d = math.floor(self.last_d_mean[i] / 0.25)
            ii = self._intents[i]
            rows.append([
                min(9.0, max(0.0, b_sinr)) / 10.0,
                min(len(self.queues[i]), 20) / 20.0,
                min(7.0, max(0.0, b_d)) / 8.0,
                (s0 - ii[0]) * inv, (s1 - ii[1]) * inv, (s2 - ii[2]) * inv,
                1.0,
            ])
        feats = np.array(rows)

        if self.learning:
            action_idx, probs_all, sm_all = self._vec.sample(
                feats, self.actions_rng, cfg.learner.exploration_floor)
        else:
            action_idx = [heuristic_action(self.space, len(self.queues[i]))
                          for i in range(n)]
            probs_all = None
            sm_all = None

        tbl_p = self._tbl_power
        tbl_b = self._tbl_bid
        powers = [tbl_p[a] for a in action_idx]
        bids = [tbl_b[a] for a in action_idx]
        negotiation_energy = 0.0
        if cfg.negotiation_enabled:
            requests = []
            prev_sum = sum(self.prev_requests)
            for i in range(n):
                load = bids[i] + (prev_sum - self.prev_requests[i])
                if load > cfg.bandwidth_units:
                    scaled = int(bids[i] * cfg.bandwidth_units / load)
                    requests.append(max(1, scaled))
                else:
                    requests.append(bids[i])
            if sum(requests) > cfg.bandwidth_units:
                self.overflow_count += 1
            for i in range(n):
                p = powers[i]
                e = self._intent_energy.get(p)
                if e is None:
                    e = energy_of(ch, p, _INTENT_SYMBOLS / self._sps_unit,
                                  compute_ops=_INTENT_SYMBOLS)
                    self._intent_energy[p] = e
                negotiation_energy += e
        else:
            requests = bids

        try:
            grants = allocate_bandwidth(requests, cfg.bandwidth_units)
        except InfeasibleBudget:
            grants = [1 if i < cfg.bandwidth_units else 0 for i in range(n)]
            self.alloc_fallback_count += 1
        self.allocated_units_total += sum(grants)

        # Interference offset from last slot's duty cycles; the offset rebases
        # the nominal SNR from the reference link to this slot's actual link.
        # Same formula as effective_sinr, applied agent by agent.
        duty_products = [self.prev_power_w[j] * self.prev_duty[j] for j in range(n)]
        duty_sum = sum(duty_products)
        nf = ch.noise_floor_w
        coup = ch.coupling
        offsets = self._offset_db
        for i in range(n):
            if grants[i] > 0:
                linear = powers[i] / (nf * grants[i]
                                      + coup * (duty_sum - duty_products[i]))
                offsets[i] = 10.0 * math.log10(linear) - self._ref_sinr_db
            else:
                offsets[i] = 0.0

        duties = [0.0] * n
        if self.semantic:
            tbl_t = self._tbl_token
            tokens = [tbl_t[a] for a in action_idx]
            self._cur_token_dim = tokens
            self._serve_semantic_all(t, grants, powers, tokens, duties, concluded)
        else:
            self._serve_digital_all(t, grants, powers, duties, concluded)

        # Per-agent aggregation of everything concluded this slot.
        per_agent: list[list[tuple]] = [[] for _ in range(n)]
        for rec in concluded:
            per_agent[rec[0]].append(rec)
        rewards = [0.0] * n
        u_sum = 0.0
        d_half_sum = 0.0
        e_norm_sum = 0.0
        l_pen_sum = 0.0
        want_trace = self.trace_writer is not None
        slot_d_sum = 0.0
        slot_d_n = 0
        clip = cfg.learner.reward_clip
        tsr_push = self.tsr_window.push
        lat_append = self.latencies.append
        for i in range(n):
            recs = per_agent[i]
            if not recs:
                continue
            m = len(recs)
            n_succ = 0
            d_s = 0.0
            e_s = 0.0
            l_s = 0.0
            tw_completed = 0
            for r in recs:
                if r[2]:
                    n_succ += 1
                d_s += r[3]
                e_s += r[5]
                lat = r[4]
                if lat > deadline:
                    l_s += (lat - deadline) / deadline
                lat_append(lat)
                tsr_push(1.0 if r[2] else 0.0)
                if r[6]:
                    tw_completed += 1
            u_bar = n_succ / m
            d_bar = d_s / m
            d_term = self.beta_eff * (d_bar / 2.0)
            e_term = cfg.lambda_e * (e_s / m / cfg.learner.energy_ref_j)
            l_term = cfg.lambda_l * (l_s / m)
            raw = cfg.alpha * u_bar - d_term - e_term - l_term
            rewards[i] = min(clip, max(-clip, raw))
            u_sum += u_bar
            d_half_sum += d_term
            e_norm_sum += e_term
            l_pen_sum += l_term
            self.last_d_mean[i] = d_bar
            if want_trace:
                slot_d_sum += d_s
                slot_d_n += m
            self._tw_last_task[i] = recs[-1][1]
            self.successes += n_succ
            self.attempted += m
            self.d_sem_sum += d_s
            self.energy_total_j += e_s
            self._tw_concluded[i] += m
            self._tw_completed[i] += tw_completed
            self._tw_dropped[i] += m - tw_completed
        self.energy_total_j += negotiation_energy

        slot_reward = sum(rewards) / n
        self.reward_series.append(slot_reward)
        tsr_now = self.tsr_window.mean()
        self.tsr_series.append(tsr_now)
        self.tsr_stop_window.append(tsr_now)
        self.monitor.record_rewards(t, rewards)

        eta, _gamma = step_sizes(t, cfg.schedule)
        if self.learning:
            joint = feats.mean(axis=0) if self._shared_critic else None
            gsq, rejected = self._vec.update(feats, action_idx, probs_all,
                                             np.asarray(rewards),
                                             joint, eta, cfg.learner.entropy_weight,
                                             cfg.learner.ppo_clip,
                                             cfg.learner.ppo_epochs,
                                             cfg.learner.exploration_floor,
                                             sm=sm_all)
            if rejected:
                self.rejected_fast_steps += 1
            else:
                self.actor_gsq_window.append(gsq)

        if (self.semantic and t > 0 and t % self.k_cur == 0
                and t >= self.cooldown_until and self._slow_rows >= 8):
            chunks = self._slow_chunks
            if len(chunks) == 1:
                x_batch, z_batch = chunks[0]
            else:
                x_batch = np.concatenate([c[0] for c in chunks])
                z_batch = np.concatenate([c[1] for c in chunks])
            gamma = self.c_cur * eta
            new_params, info = slow_train_step(
                self.codec, self.embedder, x_batch, z_batch, gamma,
                weight_decay=self.cfg.schedule.slow_weight_decay)
            if info.rejected:
                self.rejected_slow_steps += 1
            else:
                self.codec = new_params
                self._version_high = max(self._version_high, new_params.version)
                self.slow_steps_since_adopt += 1
                self._last_slow_gsq = info.grad_norm_sq
                self._had_slow_step = True
                self.codec_loss_series.append((t, info.loss))
            self._clear_slow_buffer()

        if (self._want_telemetry and t > 0
                and t % cfg.placement.p1_period_slots == 0):
            self._emit_telemetry(t)

        if t > 0 and t % cfg.monitor.delta_slots == 0:
            probe_emb = encode_batch(self.codec, self.probes)
            if self.learning:
                actor_vec = self._vec.W.ravel()
            else:
                actor_vec = np.zeros(1)
            reading = self.monitor.check(t, probe_emb, actor_vec)
            reading = adapt(self.monitor, reading)
            streaks = [self.monitor.drift_streak, self.monitor.ns_streak,
                       self.monitor.osc_streak]
            self.monitor_readings.append(reading)
            if reading.drift_breach or reading.ns_breach or reading.osc_breach:
                self.monitor_trigger_count += 1
            self._last_mf = (int(reading.drift_breach) | (int(reading.ns_breach) << 1)
                             | (int(reading.osc_breach) << 2))
            if reading.action == "throttle_k":
                self.k_cur = min(self.k_cur * 2, 1 << 20)
            elif reading.action == "reduce_c":
                self.c_cur *= 0.5
            elif reading.action == "rollback":
                self._apply_rollback(t)
            if self.hooks.on_monitor is not None:
                self.hooks.on_monitor(reading)
            if want_trace:
                self.trace_writer({
                    "type": "monitor", "t": t,
                    "drift": reading.drift, "ns": reading.ns, "osc": reading.osc,
                    "breach": [bool(reading.drift_breach), bool(reading.ns_breach),
                               bool(reading.osc_breach)],
                    "action": reading.action, "suppressed": reading.suppressed,
                    "streaks": streaks,
                })

        p2 = cfg.placement.p2_period_slots
        if (t > 0 and t % p2 == 0 and self.paradigm is Paradigm.TWO_TIMESCALE
                and self.slow_steps_since_adopt >= 1):
            result = rapp_cycle(self.registry, self.codec, self.val_x,
                                self.val_labels, self.embedder, cfg.rapp_margin, t)
            if result.accepted:
                self.rapp_accepts += 1
                self.a1_log.append(result.a1)
                self.slow_steps_since_adopt = 0
            else:
                # The candidate stays archived and Active keeps its place as the
                # rollback target; the live lineage trains on. Yanking the live
                # codec back here would inject restoration jumps into the drift
                # monitor's clean baseline.
                self.rapp_rejects += 1
            if self.hooks.on_governance is not None:
                self.hooks.on_governance(result)

        if t > 0 and t % cfg.gradnorm_period_slots == 0:
            estimate = self._estimate_gradnorm(cfg.gradnorm_probe_m)
            self._last_gradnorm = estimate
            self.gradnorm_series.append((t, estimate))
            self.grad_window.append(estimate)
            if (cfg.early_stop and t >= max(2000, 2 * cfg.stopping_window_slots)
                    and self._stopping_check()):
                self.stopped_early = True

        if want_trace:
            j = cfg.alpha * u_sum - d_half_sum - e_norm_sum - l_pen_sum
            self.trace_writer({
                "type": "slot", "t": t,
                "actions": [int(a) for a in action_idx],
                "rewards": [float(r) for r in rewards],
                "u_sum": float(u_sum), "d_term": float(d_half_sum),
                "pen_e": float(e_norm_sum), "pen_l": float(l_pen_sum),
                "j": float(j),
                "d_sem": (slot_d_sum / slot_d_n if slot_d_n else None),
                "succ": self.successes - succ0,
                "att": self.attempted - att0,
                "alloc": self.allocated_units_total - alloc0,
                "en_j": float(self.energy_total_j - e0),
                "tsr_w": tsr_now,
                "gradnorm": float(self._last_gradnorm),
                "codec_v": int(self.codec.version),
                "monitor_flags": self._last_mf,
            })

        self.prev_power_w = powers
        self.prev_duty = duties
        self.prev_requests = requests
        chans = self.channels
        self.last_sinr_db = [chans[i].realized_snr_db + offsets[i] for i in range(n)]
        intents = self._intents
        tbl_i = self._tbl_intent
        for i in range(n):
            intents[i] = tbl_i[action_idx[i]]
        self.slots_run = t + 1

    def run(self) -> RunSummary:
        for t in range(self.cfg.horizon_slots):
            self.step(t)
            if self.stopped_early:
                break
        return self.summary()

    def summary(self) -> RunSummary:
        d_mean = self.d_sem_sum / self.attempted if self.attempted else 0.0
        mean_alloc = (self.allocated_units_total / self.slots_run
                      if self.slots_run else 0.0)
        return RunSummary(
            slots_run=self.slots_run,
            stopped_early=self.stopped_early,
            successes=self.successes,
            attempted=self.attempted,
            d_sem_mean=d_mean,
            task_latencies=np.asarray(self.latencies, dtype=float),
            energy_total_j=self.energy_total_j,
            reward_series=np.asarray(self.reward_series, dtype=float),
            tsr_series=np.asarray(self.tsr_series, dtype=float),
            gradnorm_series=list(self.gradnorm_series),
            final_gradnorm=self._last_gradnorm,
            final_tsr=self.tsr_window.mean(),
            codec_loss_series=list(self.codec_loss_series),
            codec_version_final=self.codec.version,
            mean_allocated_units=mean_alloc,
            overflow_rate=(self.overflow_count / self.slots_run
                           if self.slots_run else 0.0),
            alloc_fallback_count=self.alloc_fallback_count,
            rollback_count=self.rollback_count,
            monitor_trigger_count=self.monitor_trigger_count,
            monitor_readings=list(self.monitor_readings),
            rollback_slots=list(self.rollback_slots),
            rapp_accepts=self.rapp_accepts,
            rapp_rejects=self.rapp_rejects,
            a1_log=list(self.a1_log),
            audit_log=list(self.registry.audit_log()),
            rejected_fast_steps=self.rejected_fast_steps,
            rejected_slow_steps=self.rejected_slow_steps,
            registry=self.registry,
        )


def run(cfg: ScenarioConfig,
        trace_writer: Callable[[dict], None] | None = None,
        telemetry_writer: Callable[[TelemetryRecord], None] | None = None,
        hooks: EngineHooks | None = None) -> RunSummary:
    """Run one configured scenario instance to completion."""
    return Engine(cfg, trace_writer=trace_writer, telemetry_writer=telemetry_writer,
                  hooks=hooks).run()


def estimate_gradnorm(engine: Engine, m: int) -> float:
    """Monte-Carlo style gradient-magnitude estimate from the last m slots."""
    return engine._estimate_gradnorm(m)


def stopping_check(engine: Engine) -> bool:
    """True when the windowed success rate is flat and gradients are small."""
    return engine._stopping_check()


# ----------------------------------------------------------------- matrix game

# Two-agent bimatrix game used as a convergence probe for the fast loop: row
# player payoffs MATRIX_GAME_A, column player payoffs MATRIX_GAME_B. Row 1 is
# strictly dominant for the row player and the column player's best response to
# it is column 2, so (1, 2) is the unique pure equilibrium, with payoffs
# (0.9, 0.8).
MATRIX_GAME_A = np.array([[0.2, 0.3, 0.25],
                          [0.6, 0.7, 0.9],
                          [0.1, 0.5, 0.4]])
MATRIX_GAME_B = np.array([[0.3, 0.2, 0.5],
                          [0.1, 0.4, 0.8],
                          [0.2, 0.6, 0.3]])


def run_matrix_game(seed: int, steps: int = 50_000, eta0: float = 0.5,
                    decay_p: float = 0.6, tail_window: int = 2000) -> dict:
    """Train the package's actors on the frozen bimatrix game.

    The same actor parameterization, sampling, and update rule as the full
    simulator, but with a constant observation, no channel, and frozen payoffs,
    so convergence to the game's equilibrium can be checked in isolation.
    """
    features = np.zeros(FEATURE_DIM)
    features[FEATURE_DIM - 1] = 1.0
    actors = [init_policy(stream(seed, family_stream_id(POLICY_INIT, i)), 3)
              for i in range(2)]
    critics = [CriticParams(np.zeros(FEATURE_DIM)) for _ in range(2)]
    actions_rng = stream(seed, family_stream_id(ACTIONS))
    schedule = ScheduleConfig(eta0=eta0, decay_p=decay_p, c_ratio=1.0, k_slow=1)
    tail_a: deque[float] = deque(maxlen=tail_window)
    tail_b: deque[float] = deque(maxlen=tail_window)
    for t in range(steps):
        ia, _lp_a, pa = select_action(actors[0], features, actions_rng, 0.0)
        ib, _lp_b, pb = select_action(actors[1], features, actions_rng, 0.0)
        ra = float(MATRIX_GAME_A[ia, ib])
        rb = float(MATRIX_GAME_B[ia, ib])
        samples = [
            StepSample(agent=0, features=features, action_idx=ia, probs_old=pa,
                       reward=ra, joint_features=features),
            StepSample(agent=1, features=features, action_idx=ib, probs_old=pb,
                       reward=rb, joint_features=features),
        ]
        eta, _ = step_sizes(t, schedule)
        fast_update(actors, critics, samples, eta, entropy_weight=0.0,
                    ppo_clip=0.2, ppo_epochs=1, exploration_floor=0.0,
                    shared_critic=False)
        tail_a.append(ra)
        tail_b.append(rb)
    greedy = (greedy_action(actors[0], features), greedy_action(actors[1], features))

    def probs_of(actor: PolicyParams) -> np.ndarray:
        logits = actor.weights @ features
        p = np.exp(logits - logits.max())
        return p / p.sum()

    return {
        "greedy": greedy,
        "mean_payoffs": (float(np.mean(tail_a)), float(np.mean(tail_b))),
        "final_probs": (probs_of(actors[0]), probs_of(actors[1])),
    }
