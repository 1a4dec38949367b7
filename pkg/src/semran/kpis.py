"""Run-level key performance indicators and trend statistics.

Definitions used throughout:
  tsr                  successes / attempted tasks (attempted = concluded tasks,
                       i.e. completed or dropped at deadline)
  sbe                  tsr per allocated bandwidth unit (per-slot mean allocation)
  energy_per_success   total energy / successes; +inf when nothing succeeded
  slots_to_stabilize   first slot after which a moving average of the series
                       stays within a band around its final value
  oscillation_count    sign changes of the smoothed series' slope
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KPI_SCHEMA = "semran-kpi-v1"


@dataclass(frozen=True)
class StabilityStats:
    final_third_variance: float
    slope_per_slot: float
    oscillation_count: int


def stability_stats(series: np.ndarray, smooth_window: int = 100) -> StabilityStats:
    """Variance of the final third, least-squares slope, and oscillation count.

    The oscillation count smooths the series with a moving average before
    differencing, so slot-level jitter does not register; what remains are
    macroscopic swings of the learning curve.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n == 0:
        return StabilityStats(0.0, 0.0, 0)
    tail = x[-max(1, n // 3):]
    var = float(np.var(tail))
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    denom = float(tc @ tc)
    slope = float(tc @ (x - x.mean()) / denom) if denom > 0 else 0.0
    if n > smooth_window:
        kernel = np.ones(smooth_window) / smooth_window
        smoothed = np.convolve(x, kernel, mode="valid")
        deriv = np.diff(smoothed)
        signs = np.sign(deriv)
        signs = signs[signs != 0]
        flips = int(np.sum(signs[1:] != signs[:-1])) if signs.size > 1 else 0
    else:
        flips = 0
    return StabilityStats(final_third_variance=var, slope_per_slot=slope,
                          oscillation_count=flips)


def slots_to_stabilize(series: np.ndarray, window: int = 500,
                       band: float = 0.02) -> int | None:
    """First slot index from which the windowed mean stays near its final value.

    The band is relative to the final moving-average value (absolute when that
    value is zero). Returns the slot at which the qualifying window ends, or
    None when the series is shorter than one window.
    """
    x = np.asarray(series, dtype=float)
    if x.size < window:
        return None
    kernel = np.ones(window) / window
    ma = np.convolve(x, kernel, mode="valid")
    final = ma[-1]
    tol = band * abs(final) if final != 0.0 else band
    inside = np.abs(ma - final) <= tol
    # Find the earliest index from which every later window stays inside.
    bad = np.where(~inside)[0]
    start = 0 if bad.size == 0 else int(bad[-1]) + 1
    if start >= ma.size:
        return None
    return start + window - 1


def pareto_frontier(points: np.ndarray) -> np.ndarray:
    """Non-dominated flags for 2-D points where lower is better in both axes.

    A point is dominated when some other point is at least as good in both
    coordinates and strictly better in one. Exact duplicates do not dominate
    each other. Flags are returned aligned with the input order.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    flags = np.ones(n, dtype=bool)
    if n == 0:
        return flags
    order = sorted(range(n), key=lambda i: (pts[i, 0], pts[i, 1], i))
    best_y = np.inf
    prev_key: tuple[float, float] | None = None
    group: list[int] = []
    for i in order:
        key = (float(pts[i, 0]), float(pts[i, 1]))
        if prev_key is not None and key == prev_key:
            group.append(i)
            flags[i] = flags[group[0]]
            continue
        # Dominated iff a strictly-better-or-equal point with strictly smaller y
        # appeared earlier in the sweep (earlier means x <= current x).
        flags[i] = not (pts[i, 1] >= best_y)
        if pts[i, 1] < best_y:
            best_y = pts[i, 1]
        prev_key = key
        group = [i]
    return flags


@dataclass(frozen=True)
class KpiRecord:
    """One CSV row: a (scenario, paradigm, seed, sweep point) cell's KPIs."""

    scenario: str
    paradigm: str
    seed: int
    sweep_key: str
    sweep_value: float
    tsr: float
    sbe: float
    d_sem_mean: float
    mean_latency_slots: float
    p95_latency_slots: float
    energy_total_j: float
    energy_per_success_j: float
    energy_budget_exceeded: int
    reward_mean: float
    reward_var_final_third: float
    reward_slope: float
    oscillation_count: int
    slots_to_stabilize: int | None
    slots_run: int
    stopped_early: int
    final_gradnorm: float
    codec_version_final: int
    rollback_count: int
    monitor_trigger_count: int
    overflow_rate: float
    mean_allocated_units: float


CORE_COLUMNS = [
    "scenario", "paradigm", "seed", "sweep_key", "sweep_value", "tsr", "sbe",
    "d_sem_mean", "mean_latency_slots", "p95_latency_slots", "energy_total_j",
    "energy_per_success_j", "energy_budget_exceeded", "reward_mean",
    "reward_var_final_third", "reward_slope", "oscillation_count",
    "slots_to_stabilize", "slots_run", "stopped_early", "final_gradnorm",
    "codec_version_final", "rollback_count", "monitor_trigger_count",
    "overflow_rate", "mean_allocated_units",
]


def compute_kpis(scenario: str, paradigm: str, seed: int, sweep_key: str,
                 sweep_value: float, summary, energy_budget_j: float) -> KpiRecord:
    """Derive a KpiRecord from an engine RunSummary."""
    successes = summary.successes
    attempted = summary.attempted
    tsr = successes / attempted if attempted > 0 else 0.0
    mean_alloc = summary.mean_allocated_units
    sbe = tsr / mean_alloc if mean_alloc > 0 else 0.0
    lat = np.asarray(summary.task_latencies, dtype=float)
    mean_lat = float(lat.mean()) if lat.size else 0.0
    p95_lat = float(np.percentile(lat, 95)) if lat.size else 0.0
    eps = (summary.energy_total_j / successes) if successes > 0 else float("inf")
    rewards = np.asarray(summary.reward_series, dtype=float)
    stats = stability_stats(rewards)
    stab = slots_to_stabilize(np.asarray(summary.tsr_series, dtype=float))
    return KpiRecord(
        scenario=scenario, paradigm=paradigm, seed=seed, sweep_key=sweep_key,
        sweep_value=float(sweep_value), tsr=float(tsr), sbe=float(sbe),
        d_sem_mean=float(summary.d_sem_mean),
        mean_latency_slots=mean_lat, p95_latency_slots=p95_lat,
        energy_total_j=float(summary.energy_total_j),
        energy_per_success_j=float(eps),
        energy_budget_exceeded=int(summary.energy_total_j > energy_budget_j),
        reward_mean=float(rewards.mean()) if rewards.size else 0.0,
        reward_var_final_third=stats.final_third_variance,
        reward_slope=stats.slope_per_slot,
        oscillation_count=stats.oscillation_count,
        slots_to_stabilize=stab,
        slots_run=summary.slots_run, stopped_early=int(summary.stopped_early),
        final_gradnorm=float(summary.final_gradnorm),
        codec_version_final=summary.codec_version_final,
        rollback_count=summary.rollback_count,
        monitor_trigger_count=summary.monitor_trigger_count,
        overflow_rate=float(summary.overflow_rate),
        mean_allocated_units=float(mean_alloc),
    )
