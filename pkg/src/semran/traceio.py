"""Deterministic on-disk formats: JSON-lines traces, KPI CSV, manifests.

Byte-for-byte reproducibility is a hard requirement, so every writer here is
deliberate about ordering and number formatting:
  - JSON rows use sorted keys, compact separators, and reject non-finite
    numbers (Python's float repr is shortest-round-trip, so values survive a
    write/read cycle exactly).
  - CSV rows are sorted on a fixed key before writing; floats are written with
    repr so re-parsing yields the identical double.
  - Comment headers embed the resolved configuration and a build tag, making
    every artifact self-describing.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from .kpis import CORE_COLUMNS, KPI_SCHEMA, KpiRecord
from .oran import AUDIT_SCHEMA, TELEMETRY_SCHEMA, TelemetryRecord

MANIFEST_SCHEMA = "semran-manifest-v1"
REWARD_CURVE_SCHEMA = "semran-rewards-v1"


def build_tag() -> str:
    """Describe-style tag of the working tree, or the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags", "--dirty"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        from importlib.metadata import version
        return "semran-" + version("semran")
    except Exception:
        return "semran-unversioned"


def format_value(v) -> str:
    """Canonical scalar formatting shared by the CSV writer and tests."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        # The float() hop matters: numpy scalars pass the isinstance check but
        # repr as 'np.float64(x)', which would corrupt the CSV.
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


class JsonLinesWriter:
    """Streamed JSONL file whose first row is a schema header.

    Usable as a callable so the engine can treat it as a plain row sink, and as
    a context manager so drivers close it deterministically.
    """

    def __init__(self, path: str | Path, schema: str, meta: dict | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        header = {"type": "header", "schema": schema}
        if meta:
            header.update(meta)
        self.write(header)

    def write(self, row: dict) -> None:
        self._fh.write(json.dumps(row, sort_keys=True, separators=(",", ":"),
                                  allow_nan=False))
        self._fh.write("\n")

    __call__ = write

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonLinesWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def trace_writer(path: str | Path, config_lines: list[str], seed: int,
                 schema: str) -> JsonLinesWriter:
    return JsonLinesWriter(path, schema, meta={"config": config_lines, "seed": seed})


def telemetry_sink(writer: JsonLinesWriter):
    """Adapt a JsonLinesWriter into a TelemetryRecord sink for the engine."""
    def sink(rec: TelemetryRecord) -> None:
        writer.write(json.loads(rec.to_json()))
    return sink


def write_audit_log(path: str | Path, audit: list[dict], config_lines: list[str],
                    seed: int) -> None:
    with JsonLinesWriter(path, AUDIT_SCHEMA,
                         meta={"config": config_lines, "seed": seed}) as w:
        for event in audit:
            w.write(event)


def kpi_sort_key(rec: KpiRecord):
    return (rec.scenario, rec.paradigm, rec.sweep_key, rec.sweep_value, rec.seed)


def write_kpi_csv(path: str | Path, records: list[KpiRecord], scenario: str,
                  config_lines: list[str], tag: str,
                  extra_columns: dict[str, list] | None = None,
                  config_hash: str | None = None) -> None:
    """Write the KPI table with a self-describing comment header.

    `extra_columns` lets a scenario append columns (values aligned with
    `records` BEFORE sorting); rows are then sorted on the canonical key so
    output order never depends on execution order.
    """
    extra = extra_columns or {}
    for name, vals in extra.items():
        if len(vals) != len(records):
            raise ValueError(f"extra column {name!r} length mismatch")
    order = sorted(range(len(records)), key=lambda i: kpi_sort_key(records[i]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = CORE_COLUMNS + list(extra.keys())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema: {KPI_SCHEMA}\n")
        fh.write(f"# build: {tag}\n")
        fh.write(f"# scenario: {scenario}\n")
        if config_hash is not None:
            fh.write(f"# config-hash: {config_hash}\n")
        for line in config_lines:
            fh.write(f"# config: {line}\n")
        fh.write(",".join(cols) + "\n")
        for i in order:
            rec = records[i]
            vals = [format_value(getattr(rec, c)) for c in CORE_COLUMNS]
            vals += [format_value(extra[name][i]) for name in extra]
            fh.write(",".join(vals) + "\n")


def read_kpi_csv(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse a KPI CSV back into (metadata, typed row dicts)."""
    meta: dict = {"config": []}
    rows: list[dict] = []
    header: list[str] | None = None
    str_cols = {"scenario", "paradigm", "sweep_key"}
    int_cols = {"seed", "energy_budget_exceeded", "slots_run", "stopped_early",
                "codec_version_final", "rollback_count", "monitor_trigger_count",
                "oscillation_count", "is_frontier"}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("# "):
                body = line[2:]
                key, _, val = body.partition(": ")
                if key == "config":
                    meta["config"].append(val)
                else:
                    meta[key] = val
                continue
            if header is None:
                header = line.split(",")
                continue
            parts = line.split(",")
            row: dict = {}
            for col, cell in zip(header, parts):
                if cell == "":
                    row[col] = None
                elif col in str_cols:
                    row[col] = cell
                elif col in int_cols:
                    row[col] = int(cell)
                else:
                    row[col] = float(cell)
            rows.append(row)
    return meta, rows


def write_manifest(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    body.setdefault("schema", MANIFEST_SCHEMA)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(body, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
