"""Closed-loop management shell: telemetry, model registry, rApp governance.

The fast control loop runs inline every slot; this module holds the slower
machinery around it. At the near-real-time cadence, agents' link statistics are
packaged into telemetry records (cheap scalars only, never raw task content).
At the non-real-time cadence, an rApp cycle evaluates the live codec lineage
against the registered Active version on a frozen validation set and either
promotes it (issuing a policy directive naming the new version) or rejects it,
reverting the live codec. A registry tracks every version with its checkpoint
bytes, keeps exactly one version Active at all times, appends every event to an
audit trail, and can roll back to the previously active version bit-for-bit.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, asdict

from . import codec as codec_mod
from .codec import CodecParams

TELEMETRY_SCHEMA = "semran-telemetry-v1"
AUDIT_SCHEMA = "semran-audit-v1"


@dataclass(frozen=True)
class RadioKpis:
    """Link-level statistics attached to every telemetry record."""

    sinr_db: float
    delivered_rate: float | None
    queue_len: int
    throughput_proxy: float


@dataclass(frozen=True)
class TelemetryRecord:
    """Near-real-time report for one agent: link and task statistics only.

    `tsr_proxy` is a sliding mean over recently concluded tasks; it is None
    until enough tasks have concluded to fill a meaningful window (cold start).
    `semantic_confidence` and `delivered_rate` are likewise None when the
    reporting window held no concluded task. All populated numeric fields are
    finite.
    """

    slot: int
    agent_id: int
    task_id: int
    semantic_token_size: int
    semantic_confidence: float | None
    tsr_proxy: float | None
    radio_kpis: RadioKpis

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "TelemetryRecord":
        d = json.loads(line)
        d["radio_kpis"] = RadioKpis(**d["radio_kpis"])
        return TelemetryRecord(**d)


def package_telemetry(slot: int, agent_id: int, task_id: int,
                      semantic_token_size: int,
                      semantic_confidence: float | None,
                      tsr_proxy: float | None, sinr_db: float,
                      delivered_rate: float | None, queue_len: int,
                      throughput_proxy: float) -> TelemetryRecord:
    return TelemetryRecord(slot=slot, agent_id=agent_id, task_id=task_id,
                           semantic_token_size=semantic_token_size,
                           semantic_confidence=semantic_confidence,
                           tsr_proxy=tsr_proxy,
                           radio_kpis=RadioKpis(sinr_db=sinr_db,
                                                delivered_rate=delivered_rate,
                                                queue_len=queue_len,
                                                throughput_proxy=throughput_proxy))


@dataclass(frozen=True)
class A1Policy:
    """Non-real-time directive: which codec version the fast loop should run."""

    issued_slot: int
    effective_from_slot: int
    target_codec_version: int
    reward_weights: dict | None = None


class ModelStatus(enum.Enum):
    ACTIVE = "active"
    CANDIDATE = "candidate"
    RETIRED = "retired"


@dataclass
class ModelRegistryEntry:
    version: int
    parent_version: int
    status: ModelStatus
    checkpoint: bytes
    sha256: str
    validation_tsr: float
    slot_registered: int


class RegistryError(RuntimeError):
    pass


class ModelRegistry:
    """Versioned codec store with a single-Active invariant and an audit trail."""

    def __init__(self, genesis: CodecParams, validation_tsr: float, slot: int = 0):
        self._entries: dict[int, ModelRegistryEntry] = {}
        self._audit: list[dict] = []
        self._activation_history: list[int] = []
        entry = self._make_entry(genesis, ModelStatus.ACTIVE, validation_tsr, slot)
        self._entries[entry.version] = entry
        self._active_version = entry.version
        self._log(slot, "register", entry)
        self._log(slot, "activate", entry)

    def _make_entry(self, params: CodecParams, status: ModelStatus,
                    validation_tsr: float, slot: int) -> ModelRegistryEntry:
        blob = codec_mod.to_bytes(params)
        return ModelRegistryEntry(version=params.version,
                                  parent_version=params.parent_version,
                                  status=status, checkpoint=blob,
                                  sha256=hashlib.sha256(blob).hexdigest(),
                                  validation_tsr=validation_tsr,
                                  slot_registered=slot)

    def _log(self, slot: int, event: str, entry: ModelRegistryEntry) -> None:
        self._audit.append({"slot": slot, "event": event, "version": entry.version,
                            "sha256": entry.sha256})

    @property
    def active_version(self) -> int:
        return self._active_version

    @property
    def active_entry(self) -> ModelRegistryEntry:
        return self._entries[self._active_version]

    def entry(self, version: int) -> ModelRegistryEntry:
        return self._entries[version]

    def versions(self) -> list[int]:
        return sorted(self._entries)

    def audit_log(self) -> list[dict]:
        return list(self._audit)

    def active_params(self) -> CodecParams:
        return codec_mod.from_bytes(self.active_entry.checkpoint)

    def n_active(self) -> int:
        return sum(1 for e in self._entries.values() if e.status is ModelStatus.ACTIVE)

    def register_candidate(self, params: CodecParams, validation_tsr: float,
                           slot: int) -> ModelRegistryEntry:
        if params.version in self._entries:
            raise RegistryError(f"version {params.version} already registered")
        entry = self._make_entry(params, ModelStatus.CANDIDATE, validation_tsr, slot)
        self._entries[entry.version] = entry
        self._log(slot, "register", entry)
        return entry

    def promote(self, version: int, slot: int) -> ModelRegistryEntry:
        """Make a registered version Active; the old Active is retired."""
        if version not in self._entries:
            raise RegistryError(f"unknown version {version}")
        if version == self._active_version:
            return self._entries[version]
        old = self._entries[self._active_version]
        old.status = ModelStatus.RETIRED
        self._activation_history.append(old.version)
        new = self._entries[version]
        new.status = ModelStatus.ACTIVE
        self._active_version = version
        self._log(slot, "retire", old)
        self._log(slot, "activate", new)
        return new

    def restore_active(self, slot: int) -> tuple[CodecParams, ModelRegistryEntry]:
        """Hand back the Active version's bytes for a live-lineage rollback.

        Used when the deployed (unregistered) parameter state is suspect: the
        last registered known-good version is re-deserialized so the restored
        parameters hash identically to what was promoted. The Active entry keeps
        its place; only the audit log records the restoration.
        """
        entry = self.active_entry
        self._log(slot, "restore_active", entry)
        return codec_mod.from_bytes(entry.checkpoint), entry

    def rollback(self, slot: int) -> tuple[CodecParams, ModelRegistryEntry]:
        """Reactivate the previously active version; bytes restored exactly.

        The current Active is retired, the most recent previously active version
        becomes Active again, and its checkpoint is deserialized from the stored
        bytes so the restored parameters hash identically to what was registered.
        """
        if not self._activation_history:
            raise RegistryError("no previous version to roll back to")
        target = self._activation_history.pop()
        old = self._entries[self._active_version]
        old.status = ModelStatus.RETIRED
        entry = self._entries[target]
        entry.status = ModelStatus.ACTIVE
        self._active_version = target
        self._log(slot, "rollback", entry)
        return codec_mod.from_bytes(entry.checkpoint), entry


@dataclass(frozen=True)
class RappResult:
    accepted: bool
    candidate_version: int
    candidate_tsr: float
    active_tsr: float
    a1: A1Policy | None


def rapp_cycle(registry: ModelRegistry, candidate: CodecParams,
               validation_x, validation_labels, embedder, margin: float,
               slot: int) -> RappResult:
    """Validate a candidate codec against the Active version's recorded score.

    Acceptance rule: the candidate's validation TSR may trail the Active's by at
    most `margin`. Accepted candidates are registered and promoted, and an A1
    directive is issued taking effect next slot; rejected ones stay stored as
    Candidates so the lineage remains auditable.
    """
    cand_tsr = codec_mod.evaluate_codec(candidate, embedder, validation_x,
                                        validation_labels)
    active_tsr = registry.active_entry.validation_tsr
    entry = registry.register_candidate(candidate, cand_tsr, slot)
    if cand_tsr >= active_tsr - margin:
        registry.promote(entry.version, slot)
        a1 = A1Policy(issued_slot=slot, effective_from_slot=slot + 1,
                      target_codec_version=entry.version)
        return RappResult(accepted=True, candidate_version=entry.version,
                          candidate_tsr=cand_tsr, active_tsr=active_tsr, a1=a1)
    return RappResult(accepted=False, candidate_version=entry.version,
                      candidate_tsr=cand_tsr, active_tsr=active_tsr, a1=None)
