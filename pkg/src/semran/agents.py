"""Multi-agent fast control: discrete policies, bandwidth arbitration, rewards.

Each agent picks a (power level, bandwidth request, token size) tuple every slot
from a softmax policy over a small linear feature map of its local observation.
Training is one-step advantage actor-critic: the advantage is the slot reward
minus a learned linear value baseline over a joint summary. With centralized
training enabled the baseline is shared across agents (central critic, local
actors); otherwise each agent keeps its own. An optional exploration floor mixes
a little uniform mass into every softmax so no action's probability can vanish.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

POWER_LEVELS_W = (0.05, 0.10, 0.15, 0.20)
BW_REQUESTS = (1, 2, 3, 4)
TOKEN_DIMS = (4, 8, 16)
FEATURE_DIM = 7
INTENT_DIM = 3
MID_POWER_IDX = 1


class InfeasibleBudget(ValueError):
    """Raised when the bandwidth budget cannot give every agent one unit."""


@dataclass(frozen=True)
class ActionTuple:
    power_idx: int
    bw_idx: int
    token_idx: int | None

    @property
    def power_w(self) -> float:
        return POWER_LEVELS_W[self.power_idx]

    @property
    def bw_request(self) -> int:
        return BW_REQUESTS[self.bw_idx]

    @property
    def token_dim(self) -> int | None:
        return None if self.token_idx is None else TOKEN_DIMS[self.token_idx]


class ActionSpace:
    """Discrete action grid; token size is only an axis for semantic paradigms."""

    def __init__(self, semantic: bool):
        self.semantic = semantic
        if semantic:
            self.actions = tuple(
                ActionTuple(p, b, k)
                for p, b, k in itertools.product(range(len(POWER_LEVELS_W)),
                                                 range(len(BW_REQUESTS)),
                                                 range(len(TOKEN_DIMS))))
        else:
            self.actions = tuple(
                ActionTuple(p, b, None)
                for p, b in itertools.product(range(len(POWER_LEVELS_W)),
                                              range(len(BW_REQUESTS))))

    def __len__(self) -> int:
        return len(self.actions)

    def index_of(self, power_idx: int, bw_idx: int, token_idx: int | None) -> int:
        if self.semantic:
            return (power_idx * len(BW_REQUESTS) + bw_idx) * len(TOKEN_DIMS) + token_idx
        return power_idx * len(BW_REQUESTS) + bw_idx


@dataclass(frozen=True)
class Observation:
    """Local per-agent view; all fields are cheap link/queue statistics."""

    sinr_bucket: int
    queue_len: int
    distortion_bucket: int
    neighbor_intents: np.ndarray
    bias: float = 1.0

    def features(self) -> np.ndarray:
        f = np.empty(FEATURE_DIM)
        f[0] = self.sinr_bucket / 10.0
        f[1] = min(self.queue_len, 20) / 20.0
        f[2] = self.distortion_bucket / 8.0
        f[3:6] = self.neighbor_intents
        f[6] = self.bias
        return f


def sinr_bucket_of(sinr_db: float) -> int:
    return int(np.clip(np.floor((sinr_db + 20.0) / 5.0), 0, 9))


def distortion_bucket_of(d_sem: float) -> int:
    return int(np.clip(np.floor(d_sem / 0.25), 0, 7))


@dataclass
class PolicyParams:
    """Linear-softmax actor for one agent."""

    weights: np.ndarray  # n_actions x FEATURE_DIM

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]


def init_policy(rng: np.random.Generator, n_actions: int) -> PolicyParams:
    return PolicyParams(weights=0.01 * rng.standard_normal((n_actions, FEATURE_DIM)))


def policy_distribution(policy: PolicyParams, features: np.ndarray,
                        exploration_floor: float) -> np.ndarray:
    """Action distribution: softmax of logits mixed with a uniform floor."""
    logits = policy.weights @ features
    logits = logits - logits.max()
    p = np.exp(logits)
    p /= p.sum()
    lam = exploration_floor * policy.n_actions
    if lam > 0.0:
        p = (1.0 - lam) * p + exploration_floor
    return p


def select_action(policy: PolicyParams, features: np.ndarray,
                  rng: np.random.Generator, exploration_floor: float
                  ) -> tuple[int, float, np.ndarray]:
    """Sample an action; returns (index, log probability, full distribution)."""
    p = policy_distribution(policy, features, exploration_floor)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u))
    idx = min(idx, policy.n_actions - 1)
    return idx, float(np.log(p[idx])), p


def greedy_action(policy: PolicyParams, features: np.ndarray) -> int:
    """Deterministic argmax action; invariant to adding a constant to logits."""
    return int(np.argmax(policy.weights @ features))


def heuristic_action(space: ActionSpace, queue_len: int) -> int:
    """Fixed traffic-reactive rule: more power and bandwidth as the queue grows."""
    power_idx = len(POWER_LEVELS_W) - 1 if queue_len > 2 else MID_POWER_IDX
    bw = min(BW_REQUESTS[-1], 1 + queue_len)
    token_idx = 1 if space.semantic else None
    return space.index_of(power_idx, BW_REQUESTS.index(bw), token_idx)


def effective_sinr(own_power_w: float, own_bw_units: int, others_power_sum_w: float,
                   noise_floor_w: float, coupling: float) -> float:
    """Scalar-coupled SINR in dB: own power over widened noise plus interference."""
    linear = own_power_w / (noise_floor_w * own_bw_units
                            + coupling * others_power_sum_w)
    return 10.0 * np.log10(linear)


def allocate_bandwidth(requests: list[int], budget: int) -> list[int]:
    """Grant integer bandwidth units proportionally to requests.

    If the total request fits the budget every agent gets what it asked for.
    Otherwise units are assigned one at a time to the agent whose grant is
    furthest below its proportional share (ties to the lowest index), starting
    from one unit each, which minimizes the L1 distance to the proportional
    shares among integer allocations granting everyone at least one unit.
    """
    n = len(requests)
    if n == 0:
        return []
    if any(r < 1 for r in requests):
        raise ValueError("bandwidth requests must be >= 1")
    if budget < n:
        raise InfeasibleBudget(f"budget {budget} cannot cover {n} agents")
    total = sum(requests)
    if total <= budget:
        return list(requests)
    shares = [budget * r / total for r in requests]
    grants = [1] * n
    for _ in range(budget - n):
        deficits = [shares[i] - grants[i] for i in range(n)]
        best = max(range(n), key=lambda i: (deficits[i], -i))
        grants[best] += 1
    return grants


@dataclass(frozen=True)
class RewardRecord:
    reward: float
    utility: float
    distortion_term: float
    energy_term: float
    latency_term: float


def assemble_reward(task_success: bool, d_sem: float, energy_j: float,
                    latency_slots: float, deadline_slots: int, alpha: float,
                    beta: float, lambda_e: float, lambda_l: float,
                    energy_ref_j: float, reward_clip: float) -> RewardRecord:
    """Scalar slot reward: utility minus distortion, energy, and lateness terms."""
    utility = 1.0 if task_success else 0.0
    distortion_term = d_sem / 2.0
    energy_term = energy_j / energy_ref_j
    latency_term = max(0.0, latency_slots - deadline_slots) / deadline_slots
    raw = (alpha * utility - beta * distortion_term - lambda_e * energy_term
           - lambda_l * latency_term)
    return RewardRecord(reward=float(np.clip(raw, -reward_clip, reward_clip)),
                        utility=utility, distortion_term=distortion_term,
                        energy_term=energy_term, latency_term=latency_term)


def broadcast_intent(action: ActionTuple) -> np.ndarray:
    """Normalized declaration of the chosen action, shared on the side channel."""
    out = np.zeros(INTENT_DIM)
    out[0] = action.power_idx / (len(POWER_LEVELS_W) - 1)
    out[1] = action.bw_idx / (len(BW_REQUESTS) - 1)
    out[2] = 0.0 if action.token_idx is None else action.token_idx / (len(TOKEN_DIMS) - 1)
    return out


@dataclass(frozen=True)
class StepSample:
    """Everything fast_update needs about one agent-slot."""

    agent: int
    features: np.ndarray
    action_idx: int
    probs_old: np.ndarray
    reward: float
    joint_features: np.ndarray


@dataclass
class CriticParams:
    weights: np.ndarray  # FEATURE_DIM


@dataclass
class FastUpdateInfo:
    actor_grad_norm_sq: float
    critic_loss: float
    rejected: bool = False


def _policy_objective_grad(weights: np.ndarray, features: np.ndarray, action_idx: int,
                           advantage: float, probs_old: np.ndarray,
                           exploration_floor: float, entropy_weight: float,
                           ppo_clip: float, clipping: bool) -> np.ndarray:
    """Gradient of one sample's surrogate objective w.r.t. actor weights.

    Objective (to maximize): advantage-weighted log-prob (or its PPO-clipped ratio
    form when multiple epochs revisit the batch) plus an entropy bonus. The
    distribution includes the exploration floor, so gradients flow through the
    mixed probabilities, keeping the log-prob consistent with how actions were
    actually drawn.
    """
    n_actions = weights.shape[0]
    logits = weights @ features
    logits = logits - logits.max()
    sm = np.exp(logits)
    sm /= sm.sum()
    lam = exploration_floor * n_actions
    probs = (1.0 - lam) * sm + exploration_floor if lam > 0 else sm

    # d probs_j / d logit_k = (1-lam) * sm_j (delta_jk - sm_k)
    if clipping:
        ratio = probs[action_idx] / probs_old[action_idx]
        lo, hi = 1.0 - ppo_clip, 1.0 + ppo_clip
        active = (lo <= ratio <= hi) or (advantage > 0 and ratio < lo) \
            or (advantage < 0 and ratio > hi)
        if active:
            # d/dlogits of ratio*A = (A/p_old) * dprobs[a]/dlogits
            coeff = advantage / probs_old[action_idx]
            dlogits = coeff * (1.0 - lam) * sm[action_idx] \
                * (_one_hot(action_idx, n_actions) - sm)
        else:
            dlogits = np.zeros(n_actions)
    else:
        # d/dlogits of A*log probs[a]
        coeff = advantage / probs[action_idx]
        dlogits = coeff * (1.0 - lam) * sm[action_idx] \
            * (_one_hot(action_idx, n_actions) - sm)

    if entropy_weight > 0.0:
        log_probs = np.log(probs)
        # dH/dlogit_k = -sum_j (log p_j + 1) dp_j/dlogit_k
        inner = -(log_probs + 1.0)
        dh = (1.0 - lam) * sm * (inner - float(inner @ sm))
        dlogits = dlogits + entropy_weight * dh

    return np.outer(dlogits, features)


def _one_hot(idx: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[idx] = 1.0
    return v


def fast_update(actors: list[PolicyParams], critics: list[CriticParams],
                samples: list[StepSample], eta: float, entropy_weight: float,
                ppo_clip: float, ppo_epochs: int, exploration_floor: float,
                shared_critic: bool) -> FastUpdateInfo:
    """One fast-timescale learning step over a slot's samples, in place.

    Actors ascend the advantage-weighted policy objective; the critic descends
    squared error toward the observed rewards on the same batch. A non-finite
    gradient rejects the whole step, leaving parameters untouched.
    """
    if not samples:
        return FastUpdateInfo(actor_grad_norm_sq=0.0, critic_loss=0.0)

    critic_loss = 0.0
    critic_grads = [np.zeros_like(c.weights) for c in critics]
    actor_grads = [np.zeros_like(a.weights) for a in actors]
    clipping = ppo_epochs > 1

    for _ in range(ppo_epochs):
        for g in actor_grads:
            g[:] = 0.0
        for g in critic_grads:
            g[:] = 0.0
        critic_loss = 0.0
        for s in samples:
            ci = 0 if shared_critic else s.agent
            v = float(critics[ci].weights @ s.joint_features)
            err = s.reward - v
            critic_loss += err * err
            critic_grads[ci] += -2.0 * err * s.joint_features
            actor_grads[s.agent] += _policy_objective_grad(
                actors[s.agent].weights, s.features, s.action_idx, err,
                s.probs_old, exploration_floor, entropy_weight, ppo_clip, clipping)
        m = float(len(samples))
        gsq = sum(float((g * g).sum()) for g in actor_grads) / (m * m)
        if not np.isfinite(gsq):
            return FastUpdateInfo(actor_grad_norm_sq=gsq, critic_loss=critic_loss / m,
                                  rejected=True)
        for a, g in zip(actors, actor_grads):
            a.weights = a.weights + (eta / m) * g
        for c, g in zip(critics, critic_grads):
            c.weights = c.weights - (eta / m) * g
    return FastUpdateInfo(actor_grad_norm_sq=gsq, critic_loss=critic_loss / m)
