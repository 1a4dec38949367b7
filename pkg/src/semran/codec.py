"""Semantic codec: task-oriented encoder/decoder pair plus the frozen yardstick.

The encoder maps an input x to a short transmit token z (single tanh layer with
power normalization); the decoder linearly reconstructs x_hat. Fidelity is always
judged in the space of a frozen reference embedder: distortion is one minus the
cosine similarity between reference embeddings of x and x_hat, so it lives in
[0, 2] regardless of input scale. The slow learning loop minimizes a half squared
distance between the two normalized reference embeddings, which equals that
distortion, so the training surrogate and the reported metric agree.

Checkpoint format (little-endian, row-major):
  magic 'SEMC' | u32 format version (1) | u64 codec version | u64 parent version |
  u32 token_dim d | u32 input_dim D | f64 theta[d*D] | f64 b_enc[d] |
  f64 phi[D*d] | f64 b_dec[D]
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"SEMC"
_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when checkpoint bytes do not match the documented layout."""


class NonFiniteGradient(RuntimeError):
    """Raised internally when a training step produces NaN/Inf gradients."""


@dataclass(frozen=True)
class Embedding:
    """A transmit token; degenerate marks an all-zero pre-normalization vector."""

    values: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class CodecParams:
    version: int
    parent_version: int
    theta: np.ndarray   # d x D encoder weights
    b_enc: np.ndarray   # d
    phi: np.ndarray     # D x d decoder weights
    b_dec: np.ndarray   # D

    def __post_init__(self):
        for arr in (self.theta, self.b_enc, self.phi, self.b_dec):
            arr.flags.writeable = False

    @property
    def token_dim(self) -> int:
        return self.theta.shape[0]

    @property
    def input_dim(self) -> int:
        return self.theta.shape[1]

    def n_params(self) -> int:
        return self.theta.size + self.b_enc.size + self.phi.size + self.b_dec.size


@dataclass(frozen=True)
class SlowStepInfo:
    loss: float
    grad_norm_sq: float
    rejected: bool


def init_codec(rng: np.random.Generator, token_dim: int, input_dim: int,
               align_to: np.ndarray | None = None) -> CodecParams:
    """Fresh codec: orthonormal encoder rows, decoder = encoder transpose.

    The transpose pairing makes decode(encode(x)) an approximate projection of
    x onto the encoder's row space from the very first slot, so early-run
    distortion reflects the bottleneck rather than an arbitrary random map.

    `align_to` (rows x input_dim, orthonormal rows) seeds the leading encoder
    rows; in the engine this is the frozen reference projection, which the
    slow loop's surrogate loss targets anyway — starting inside the yardstick's
    subspace removes a long cold-start transient without touching what
    training has to learn (channel robustness, tanh scaling, residual rows).
    Extra rows beyond `align_to` are drawn from `rng` and orthonormalized
    against the rows already placed.
    """
    if align_to is not None:
        lead = align_to[:token_dim]
    else:
        lead = np.zeros((0, input_dim))
    extra = token_dim - lead.shape[0]
    if extra > 0:
        raw = rng.standard_normal((input_dim, extra))
        # Remove the span of the leading rows, then orthonormalize the rest.
        if lead.shape[0] > 0:
            raw = raw - lead.T @ (lead @ raw)
        q, r = np.linalg.qr(raw)
        q = q * np.sign(np.diag(r))
        theta = np.vstack([lead, q.T])
    else:
        theta = lead.copy()
    b_enc = np.zeros(token_dim)
    phi = theta.T.copy()                    # input_dim x token_dim
    b_dec = np.zeros(input_dim)
    return CodecParams(version=0, parent_version=0, theta=theta, b_enc=b_enc,
                       phi=phi, b_dec=b_dec)


class ReferenceEmbedder:
    """Frozen random projection with orthonormal rows; the shared yardstick.

    Immutable for the lifetime of a scenario: the projection, the embedded class
    means used by the task oracle, and the digest never change after construction.
    """

    def __init__(self, rng: np.random.Generator, input_dim: int, ref_dim: int,
                 class_means: np.ndarray):
        raw = rng.standard_normal((input_dim, ref_dim))
        q, r = np.linalg.qr(raw)
        # Fix the QR sign ambiguity so the projection is a pure function of the draw.
        q = q * np.sign(np.diag(r))
        self._proj = q.T.copy()            # ref_dim x input_dim, orthonormal rows
        self._proj.flags.writeable = False
        means_embedded = class_means @ self._proj.T
        self._class_means_embedded = means_embedded.copy()
        self._class_means_embedded.flags.writeable = False

    @property
    def projection(self) -> np.ndarray:
        return self._proj

    @property
    def class_means_embedded(self) -> np.ndarray:
        return self._class_means_embedded

    @property
    def ref_dim(self) -> int:
        return self._proj.shape[0]

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Project inputs; accepts a single vector or a batch (n x D)."""
        return x @ self._proj.T

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self._proj.tobytes())
        h.update(self._class_means_embedded.tobytes())
        return h.hexdigest()


def embedding_distance(u: np.ndarray, v: np.ndarray) -> float:
    """One minus cosine similarity, computed as half the squared chord length.

    The chord form 0.5*||u/|u| - v/|v|||^2 is algebraically identical to 1 - cos
    but avoids the catastrophic cancellation of `1.0 - dot` when the vectors are
    nearly aligned, which matters for detecting slow codec drift. Identical inputs
    give exactly 0.0; for a zero vector the direction is undefined and the neutral
    value 1.0 is returned.
    """
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 1.0
    diff = u / nu - v / nv
    return 0.5 * float(diff @ diff)


def semantic_distortion(embedder: ReferenceEmbedder, x: np.ndarray,
                        x_hat: np.ndarray) -> float:
    """Distortion of a reconstruction, measured in the reference embedding space."""
    return embedding_distance(embedder.embed(x), embedder.embed(x_hat))


def encode(params: CodecParams, x: np.ndarray) -> Embedding:
    z, degenerate = _encode_batch(params, x[None, :])
    return Embedding(values=z[0], degenerate=bool(degenerate[0]))


def _encode_batch(params: CodecParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized encoder: returns (z: n x d, degenerate flags: n)."""
    u = np.tanh(x @ params.theta.T + params.b_enc)
    norms = np.linalg.norm(u, axis=1)
    degenerate = norms == 0.0
    safe = np.where(degenerate, 1.0, norms)
    z = u * (np.sqrt(params.token_dim) / safe)[:, None]
    z[degenerate] = 0.0
    return z, degenerate


def encode_batch(params: CodecParams, x: np.ndarray) -> np.ndarray:
    return _encode_batch(params, x)[0]


def decode(params: CodecParams, z: np.ndarray) -> np.ndarray:
    """Linear reconstruction; accepts a single token or a batch (n x d)."""
    if z.ndim == 1:
        return params.phi @ z + params.b_dec
    return z @ params.phi.T + params.b_dec


def task_outcome(embedder: ReferenceEmbedder, x_hat: np.ndarray) -> int:
    """Task oracle: nearest embedded class mean; ties break to the lowest index."""
    e = embedder.embed(x_hat)
    d = np.linalg.norm(embedder.class_means_embedded - e, axis=1)
    return int(np.argmin(d))


def task_outcome_batch(embedder: ReferenceEmbedder, x_hat: np.ndarray) -> np.ndarray:
    e = x_hat @ embedder.projection.T
    diff = e[:, None, :] - embedder.class_means_embedded[None, :, :]
    return np.argmin(np.einsum("ncd,ncd->nc", diff, diff), axis=1)


def semantic_confidence(embedder: ReferenceEmbedder, e: np.ndarray) -> float:
    """Softmax (unit temperature) over negative distances to embedded class means."""
    d = np.linalg.norm(embedder.class_means_embedded - e, axis=1)
    logits = -d
    p = np.exp(logits - logits.max())
    return float(p.max() / p.sum())


def semantic_confidence_batch(embedder: ReferenceEmbedder, x_hat: np.ndarray
                              ) -> np.ndarray:
    """Per-row confidence of a batch of reconstructions (n x D)."""
    e = x_hat @ embedder.projection.T
    diff = e[:, None, :] - embedder.class_means_embedded[None, :, :]
    d = np.sqrt(np.einsum("ncd,ncd->nc", diff, diff))
    logits = -d
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p.max(axis=1) / p.sum(axis=1)


def embedding_distance_batch(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise embedding_distance over two (n x dE) matrices.

    Matches the scalar form exactly, including the neutral value 1.0 for rows
    whose direction is undefined (zero norm on either side).
    """
    nu = np.sqrt(np.einsum("ij,ij->i", u, u))
    nv = np.sqrt(np.einsum("ij,ij->i", v, v))
    ok = (nu > 0.0) & (nv > 0.0)
    if ok.all():
        d = u / nu[:, None] - v / nv[:, None]
        return 0.5 * np.einsum("ij,ij->i", d, d)
    out = np.ones(u.shape[0])
    if np.any(ok):
        a = u[ok] / nu[ok][:, None]
        b = v[ok] / nv[ok][:, None]
        d = a - b
        out[ok] = 0.5 * np.einsum("ij,ij->i", d, d)
    return out


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    norms = np.where(norms == 0.0, 1.0, norms)
    return a / norms


def surrogate_loss_and_grads(params: CodecParams, embedder: ReferenceEmbedder,
                             x: np.ndarray, z_received: np.ndarray
                             ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean surrogate loss over a batch and its gradients w.r.t. codec params.

    Loss per sample: 0.5 * || e(x) - e(decode(z_received)) ||^2 with e(.) the
    normalized reference embedding. The encoder receives gradient through a
    straight-through view of the channel: the additive noise n = z_received -
    encode(x) is held fixed while z_received is re-expressed as encode(x) + n.
    """
    n = x.shape[0]
    proj = embedder.projection
    d = params.token_dim
    sqrt_d = np.sqrt(d)

    # Forward pass, batched.
    a = x @ params.theta.T + params.b_enc            # n x d
    u = np.tanh(a)
    s = np.linalg.norm(u, axis=1)                    # n
    degenerate = s == 0.0
    s_safe = np.where(degenerate, 1.0, s)
    z_enc = u * (sqrt_d / s_safe)[:, None]
    noise = z_received - z_enc                       # held fixed for the backward pass
    x_hat = (z_enc + noise) @ params.phi.T + params.b_dec
    v = x_hat @ proj.T                               # n x dE
    v_norm = np.linalg.norm(v, axis=1)
    v_safe = np.where(v_norm == 0.0, 1.0, v_norm)
    w = v / v_safe[:, None]
    e = _normalize_rows(x @ proj.T)
    diff = w - e
    loss = 0.5 * float(np.einsum("ij,ij->", diff, diff)) / n

    # Backward pass (mean loss, so every sample contributes 1/n).
    g_w = diff / n
    g_v = (g_w - w * np.einsum("ij,ij->i", w, g_w)[:, None]) / v_safe[:, None]
    g_xhat = g_v @ proj                              # n x D
    zr = z_enc + noise
    g_phi = g_xhat.T @ zr                            # D x d
    g_bdec = g_xhat.sum(axis=0)
    g_z = g_xhat @ params.phi                        # n x d  (gradient into z_enc)
    u_hat = u / s_safe[:, None]
    g_u = (g_z - u_hat * np.einsum("ij,ij->i", u_hat, g_z)[:, None]) \
        * (sqrt_d / s_safe)[:, None]
    g_u[degenerate] = 0.0
    g_a = g_u * (1.0 - u * u)
    g_theta = g_a.T @ x                              # d x D
    g_benc = g_a.sum(axis=0)

    grads = {"theta": g_theta, "b_enc": g_benc, "phi": g_phi, "b_dec": g_bdec}
    return loss, grads


def slow_train_step(params: CodecParams, embedder: ReferenceEmbedder, x: np.ndarray,
                    z_received: np.ndarray, gamma: float,
                    weight_decay: float = 0.0
                    ) -> tuple[CodecParams, SlowStepInfo]:
    """One plain SGD step on the surrogate loss; returns (params, info).

    A step whose gradients are not finite is rejected: the returned params are the
    input object, version unchanged, and info.rejected is set so the caller can log
    the event.

    `weight_decay` applies decoupled L2 shrinkage to the decoder weight matrix
    only. The encoder output is normalized to a fixed token norm, so its weight
    scale is a near-flat direction of the loss: decaying it would shrink the
    weights steadily without changing behavior. The decoder scale is opposed by
    the reconstruction objective, so decay there bounds the parameter wander
    without introducing a drift.
    """
    loss, grads = surrogate_loss_and_grads(params, embedder, x, z_received)
    gsq = sum(float((g * g).sum()) for g in grads.values())
    if not np.isfinite(gsq) or not np.isfinite(loss):
        return params, SlowStepInfo(loss=loss, grad_norm_sq=gsq, rejected=True)
    phi_scale = 1.0 - gamma * weight_decay
    new = CodecParams(
        version=params.version + 1,
        parent_version=params.version,
        theta=params.theta - gamma * grads["theta"],
        b_enc=params.b_enc - gamma * grads["b_enc"],
        phi=params.phi * phi_scale - gamma * grads["phi"],
        b_dec=params.b_dec - gamma * grads["b_dec"],
    )
    return new, SlowStepInfo(loss=loss, grad_norm_sq=gsq, rejected=False)


def evaluate_codec(params: CodecParams, embedder: ReferenceEmbedder, x: np.ndarray,
                   labels: np.ndarray) -> float:
    """Noiseless validation TSR: encode, decode, oracle, fraction correct."""
    z = encode_batch(params, x)
    x_hat = decode(params, z)
    pred = task_outcome_batch(embedder, x_hat)
    return float(np.mean(pred == labels))


def quantize_batch(x: np.ndarray, bits_per_dim: int, clip_range: float = 8.0
                   ) -> np.ndarray:
    """Mid-rise uniform quantizer used by the bit-centric payload path."""
    levels = 1 << bits_per_dim
    step = 2.0 * clip_range / levels
    idx = np.clip(np.floor((x + clip_range) / step), 0, levels - 1)
    return (idx + 0.5) * step - clip_range


def to_bytes(params: CodecParams) -> bytes:
    head = struct.pack("<4sIQQII", _MAGIC, _FORMAT_VERSION, params.version,
                       params.parent_version, params.token_dim, params.input_dim)
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes()
                    for arr in (params.theta, params.b_enc, params.phi, params.b_dec))
    return head + body


def from_bytes(blob: bytes) -> CodecParams:
    head_size = struct.calcsize("<4sIQQII")
    if len(blob) < head_size:
        raise CheckpointError("checkpoint truncated")
    magic, fmt, version, parent, d, input_dim = struct.unpack("<4sIQQII",
                                                              blob[:head_size])
    if magic != _MAGIC:
        raise CheckpointError(f"bad magic: {magic!r}")
    if fmt != _FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version: {fmt}")
    sizes = [d * input_dim, d, input_dim * d, input_dim]
    expected = head_size + 8 * sum(sizes)
    if len(blob) != expected:
        raise CheckpointError(f"checkpoint length {len(blob)} != expected {expected}")
    offset = head_size
    arrays = []
    shapes = [(d, input_dim), (d,), (input_dim, d), (input_dim,)]
    for size, shape in zip(sizes, shapes):
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        arrays.append(arr.reshape(shape).copy())
        offset += 8 * size
    return CodecParams(version=version, parent_version=parent, theta=arrays[0],
                       b_enc=arrays[1], phi=arrays[2], b_dec=arrays[3])
