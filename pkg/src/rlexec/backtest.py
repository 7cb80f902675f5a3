"""Day-by-day execution of the static and Q-modulated strategies.

Each test day supplies one window of bars at the configured hour. The static
strategy replays the rounded trade list through the execution engine; the
adaptive strategy re-sizes each child order as greedy-beta times the trade
list's remaining weight applied to the inventory still planned (cap carry is
re-requested by the engine mechanics, not re-scaled, so an all-beta-1 policy
reproduces the static runs fill for fill). Runs are scored by implementation
shortfall and compared by medians and dispersion.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .agent import ActionGrid, QTable, StateTuple, _inventory_bucket, greedy_beta, bucket_of
from .execution import Fill, ISRecord, LiquidationError, implementation_shortfall, walk_book, execute_schedule
from .market_data import (
    DayWindow,
    HistoricalDistribution,
    IntervalBar,
    Side,
    arrival_reference,
    day_windows,
)

REPORT_HOURS = tuple(range(9, 17))


@dataclass
class RunConfig:
    """One experiment: program size, horizon, hour, state dims, and engine knobs."""

    total_shares: int
    periods: int
    hour: int
    inv_buckets: int = 5
    spread_buckets: int = 5
    vol_buckets: int = 5
    grid: ActionGrid = field(default_factory=ActionGrid.from_bounds)
    lam: float = 0.01
    tau: float = 300.0  # bar length in seconds
    cap: float = 0.2
    side: Side = Side.BUY
    reference: str = "mid"  # arrival benchmark: mid | ask

    def __post_init__(self) -> None:
        if self.total_shares <= 0:
            raise ValueError("total shares must be > 0")
        if self.periods < 1:
            raise ValueError("periods must be >= 1")
        if not 0 <= self.hour <= 23:
            raise ValueError("hour outside the trading day")
        if min(self.inv_buckets, self.spread_buckets, self.vol_buckets) < 2:
            raise ValueError("bucket counts must be >= 2")
        if not 0.0 < self.cap <= 1.0:
            raise ValueError("cap must be in (0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.reference not in ("mid", "ask"):
            raise ValueError("reference must be mid or ask")


@dataclass
class StrategyRuns:
    records: dict[date, ISRecord]
    skipped: list[tuple[date, str]]


def run_ac(cfg: RunConfig, test_bars: list[IntervalBar], schedule_shares: np.ndarray) -> StrategyRuns:
    """Replay the static trade list on every test day at the configured hour."""
    windows, skipped = day_windows(test_bars, cfg.hour, cfg.periods, cfg.tau)
    records: dict[date, ISRecord] = {}
    for window in windows:
        try:
            records[window.day] = execute_schedule(
                list(window.bars),
                schedule_shares,
                cfg.cap,
                cfg.side,
                reference=arrival_reference(window, cfg.side, cfg.reference),
            )
        except LiquidationError as exc:
            skipped.append((window.day, str(exc)))
    return StrategyRuns(records=records, skipped=skipped)


def run_rl(
    cfg: RunConfig,
    test_bars: list[IntervalBar],
    schedule_shares: np.ndarray,
    q: QTable,
    dists: dict[int, HistoricalDistribution],
) -> StrategyRuns:
    """Execute the Q-modulated trade list on every test day."""
    windows, skipped = day_windows(test_bars, cfg.hour, cfg.periods, cfg.tau)
    records: dict[date, ISRecord] = {}
    for window in windows:
        try:
            records[window.day] = _execute_adaptive(cfg, window, schedule_shares, q, dists)
        except LiquidationError as exc:
            skipped.append((window.day, str(exc)))
        except ValueError as exc:  # e.g. missing distribution for an hour
            skipped.append((window.day, str(exc)))
    return StrategyRuns(records=records, skipped=skipped)


def _execute_adaptive(
    cfg: RunConfig,
    window: DayWindow,
    schedule_shares: np.ndarray,
    q: QTable,
    dists: dict[int, HistoricalDistribution],
) -> ISRecord:
    sched = np.asarray(schedule_shares, dtype=np.int64)
    periods = cfg.periods
    if len(sched) != periods:
        raise ValueError("trade list length does not match the horizon")
    total = int(sched.sum())
    suffix = np.cumsum(sched[::-1])[::-1]
    ref = arrival_reference(window, cfg.side, cfg.reference)
    planned_remaining = total  # inventory net of carried residual
    actual_remaining = total
    carry = 0.0
    fills: list[tuple[int, Fill]] = []
    for period in range(1, periods + 1):
        bar = window.bars[period - 1]
        prices, volumes = bar.levels(cfg.side)
        if period == periods:
            planned = planned_remaining  # terminal order takes everything
        else:
            t_remaining = periods - period + 1
            dist = dists.get(bar.hour)
            if dist is None:
                raise ValueError(f"no historical distribution for hour {bar.hour}")
            x = StateTuple(
                t=t_remaining,
                i=_inventory_bucket(actual_remaining, total, cfg.inv_buckets),
                s=bucket_of(dist, "spread", bar.spread, cfg.spread_buckets),
                v=bucket_of(dist, "volume", bar.quote_volume, cfg.vol_buckets),
            )
            beta = greedy_beta(q, x, cfg.grid)
            weight = sched[period - 1] / suffix[period - 1] if suffix[period - 1] > 0 else 0.0
            child = planned_remaining * weight
            planned = min(max(int(round(beta * child)), 0), planned_remaining)
        request = float(planned) + carry
        fill = walk_book(prices, volumes, request, cap=1.0 if period == periods else cfg.cap)
        carry = fill.residual
        planned_remaining -= planned
        actual_remaining -= fill.executed
        fills.append((period, fill))
    if carry > 0.0:
        raise LiquidationError(f"{carry:g} shares unexecuted after the terminal order")
    return ISRecord(
        reference_price=ref,
        total_volume=total,
        fills=fills,
        shortfall_bps=implementation_shortfall(ref, fills, total),
    )


@dataclass
class ISStatistics:
    """Paired per-day shortfalls with medians and dispersion for both models."""

    dates: list[date]
    ac_bps: list[float]
    rl_bps: list[float]
    median_ac: float
    median_rl: float
    median_improvement_pct: float | None
    std_ac_pct: float
    std_rl_pct: float
    n_days: int


def compare(ac: dict[date, ISRecord], rl: dict[date, ISRecord]) -> ISStatistics:
    """Pairwise statistics over the days both strategies completed.

    Improvement is (median_rl - median_ac) / |median_ac| * 100: positive means
    the adaptive shortfall is less negative (a cost reduction). Standard
    deviations are reported in percent of the reference (bps / 100).
    """
    common = sorted(set(ac) & set(rl))
    if not common:
        raise ValueError("no common days to compare")
    ac_bps = [ac[d].shortfall_bps for d in common]
    rl_bps = [rl[d].shortfall_bps for d in common]
    median_ac = float(np.median(ac_bps))
    median_rl = float(np.median(rl_bps))
    improvement = None
    if median_ac != 0.0:
        improvement = (median_rl - median_ac) / abs(median_ac) * 100.0
    return ISStatistics(
        dates=common,
        ac_bps=ac_bps,
        rl_bps=rl_bps,
        median_ac=median_ac,
        median_rl=median_rl,
        median_improvement_pct=improvement,
        std_ac_pct=_std_pct(ac_bps),
        std_rl_pct=_std_pct(rl_bps),
        n_days=len(common),
    )


def _std_pct(bps: list[float]) -> float:
    if len(bps) < 2:
        return 0.0
    return float(np.std(bps, ddof=1)) / 100.0


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------


def _ibw_label(cfg: RunConfig) -> str:
    if cfg.inv_buckets == cfg.spread_buckets == cfg.vol_buckets:
        return str(cfg.inv_buckets)
    return f"{cfg.inv_buckets}/{cfg.spread_buckets}/{cfg.vol_buckets}"


def _config_comment_lines(config_echo: dict | None) -> list[str]:
    if not config_echo:
        return []
    return [f"# config {key}={config_echo[key]}" for key in sorted(config_echo)]


def write_runs_csv(path: str | Path, cfg: RunConfig, runs_by_model: dict[str, StrategyRuns]) -> None:
    """Per-run rows: id, date, hour, model, shortfall, per-period fills."""
    periods = cfg.periods
    header = ["run_id", "date", "hour", "model", "shortfall_bps"]
    header += [f"executed_{p}" for p in range(1, periods + 1)]
    header += [f"vwap_{p}" for p in range(1, periods + 1)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for model in sorted(runs_by_model):
            runs = runs_by_model[model]
            for day in sorted(runs.records):
                record = runs.records[day]
                by_period = {p: f for p, f in record.fills}
                row = [
                    f"{model}-{day.isoformat()}",
                    day.isoformat(),
                    cfg.hour,
                    model,
                    repr(record.shortfall_bps),
                ]
                row += [repr(by_period[p].executed) for p in range(1, periods + 1)]
                row += [repr(by_period[p].vwap) for p in range(1, periods + 1)]
                writer.writerow(row)


def write_report(
    out_dir: str | Path,
    entries: list[tuple[RunConfig, ISStatistics]],
    trace: list[tuple[int, float | None]] | None = None,
    config_echo: dict | None = None,
) -> dict[str, Path]:
    """Write table1.csv, table2.csv, and fig2_trace.csv under `out_dir`.

    table1 pivots median-IS improvement over the hour dimension (all eight
    session hours are emitted, blank when absent); table2 reports standard
    deviations with an aggregate `average` row; the trace file lists the
    correct-action fraction per tuple visit, skipping undefined points.
    Ordering is deterministic, and the resolved config is embedded as comment
    lines for provenance.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    comments = _config_comment_lines(config_echo)

    grouped: dict[tuple, dict[int, ISStatistics]] = {}
    for cfg, stats in entries:
        key = (cfg.total_shares, cfg.periods, _ibw_label(cfg))
        grouped.setdefault(key, {})[cfg.hour] = stats

    def fmt(value: float | None) -> str:
        return "NA" if value is None else f"{value:.4f}"

    table1 = out_dir / "table1.csv"
    with open(table1, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["V", "T", "IBW", *(str(h) for h in REPORT_HOURS), "average"])
        for key in sorted(grouped):
            by_hour = grouped[key]
            cells = []
            defined = []
            for hour in REPORT_HOURS:
                stats = by_hour.get(hour)
                if stats is None:
                    cells.append("")
                    continue
                cells.append(fmt(stats.median_improvement_pct))
                if stats.median_improvement_pct is not None:
                    defined.append(stats.median_improvement_pct)
            average = fmt(float(np.mean(defined))) if defined else ""
            writer.writerow([*key, *cells, average])

    table2 = out_dir / "table2.csv"
    with open(table2, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["V", "T", "IBW", "std_ac_pct", "std_rl_pct", "improvement_pct"])
        col_ac: list[float] = []
        col_rl: list[float] = []
        col_imp: list[float] = []
        for key in sorted(grouped):
            stats_list = [grouped[key][h] for h in sorted(grouped[key])]
            std_ac = float(np.mean([s.std_ac_pct for s in stats_list]))
            std_rl = float(np.mean([s.std_rl_pct for s in stats_list]))
            imps = [
                s.median_improvement_pct
                for s in stats_list
                if s.median_improvement_pct is not None
            ]
            imp = float(np.mean(imps)) if imps else None
            writer.writerow([*key, f"{std_ac:.4f}", f"{std_rl:.4f}", fmt(imp)])
            col_ac.append(std_ac)
            col_rl.append(std_rl)
            if imp is not None:
                col_imp.append(imp)
        writer.writerow(
            [
                "average",
                "",
                "",
                f"{float(np.mean(col_ac)):.4f}" if col_ac else "",
                f"{float(np.mean(col_rl)):.4f}" if col_rl else "",
                fmt(float(np.mean(col_imp)) if col_imp else None) if col_imp else "",
            ]
        )

    fig2 = out_dir / "fig2_trace.csv"
    with open(fig2, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["tuple_visit_index", "pct_correct_actions"])
        for visit_index, fraction in trace or []:
            if fraction is None:
                continue  # undefined point: absent from the trace
            writer.writerow([visit_index, f"{fraction:.6f}"])

    return {"table1": table1, "table2": table2, "fig2_trace": fig2}
