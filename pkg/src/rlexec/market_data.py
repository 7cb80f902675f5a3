"""Order book market data: depth-CSV ingestion, interval bars, synthetic books.

Raw 5-level depth snapshots are aggregated into fixed-length interval bars
(average level prices and volumes). The bars are the time grid for everything
downstream: hour-conditioned spread/volume percentile distributions for state
encoding, calibration inputs, and the execution substrate for book walks.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

N_LEVELS = 5

#: Canonical depth CSV schema: timestamp, five bid (price, volume) pairs from
#: the best bid down, five ask (price, volume) pairs from the best ask up.
DEPTH_CSV_COLUMNS = (
    "ts",
    *(f"{name}{lvl}" for lvl in range(1, N_LEVELS + 1) for name in ("bp", "bv")),
    *(f"{name}{lvl}" for lvl in range(1, N_LEVELS + 1) for name in ("ap", "av")),
)


class Side(Enum):
    BUY = "buy"
    SELL = "sell"


@dataclass
class BookSnapshot:
    """One timestamped 5-level depth observation, best level first per side."""

    timestamp: datetime
    bid_prices: np.ndarray
    bid_volumes: np.ndarray
    ask_prices: np.ndarray
    ask_volumes: np.ndarray

    def __post_init__(self) -> None:
        if self.timestamp.tzinfo is None:
            raise ValueError("naive timestamp")
        self.bid_prices = np.asarray(self.bid_prices, dtype=float)
        self.bid_volumes = np.asarray(self.bid_volumes, dtype=float)
        self.ask_prices = np.asarray(self.ask_prices, dtype=float)
        self.ask_volumes = np.asarray(self.ask_volumes, dtype=float)
        for name in ("bid_prices", "bid_volumes", "ask_prices", "ask_volumes"):
            if getattr(self, name).shape != (N_LEVELS,):
                raise ValueError(f"{name} must hold exactly {N_LEVELS} levels")
        if np.any(self.bid_volumes < 0) or np.any(self.ask_volumes < 0):
            raise ValueError("negative volume")
        if np.any(self.bid_prices <= 0) or np.any(self.ask_prices <= 0):
            raise ValueError("non-positive price")
        if not np.all(np.diff(self.bid_prices) < 0):
            raise ValueError("bid prices not strictly descending")
        if not np.all(np.diff(self.ask_prices) > 0):
            raise ValueError("ask prices not strictly ascending")
        if not self.ask_prices[0] > self.bid_prices[0]:
            raise ValueError("crossed book")

    @property
    def mid(self) -> float:
        return 0.5 * (self.ask_prices[0] + self.bid_prices[0])

    def levels(self, side: Side) -> tuple[np.ndarray, np.ndarray]:
        """Price/volume levels of the side a `side` order consumes, in order."""
        if side is Side.BUY:
            return self.ask_prices, self.ask_volumes
        return self.bid_prices, self.bid_volumes


@dataclass
class IntervalBar:
    """A tau-length aggregate of snapshots: per-level mean prices and volumes."""

    start: datetime
    duration: float
    avg_bid_prices: np.ndarray
    avg_bid_volumes: np.ndarray
    avg_ask_prices: np.ndarray
    avg_ask_volumes: np.ndarray
    spread: float
    quote_volume: float
    hour: int
    n_snapshots: int

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("non-positive duration")
        if self.spread <= 0:
            raise ValueError("non-positive spread")
        if not 0 <= self.hour <= 23:
            raise ValueError("hour outside 0..23")

    @property
    def mid(self) -> float:
        return 0.5 * (self.avg_ask_prices[0] + self.avg_bid_prices[0])

    def levels(self, side: Side) -> tuple[np.ndarray, np.ndarray]:
        if side is Side.BUY:
            return self.avg_ask_prices, self.avg_ask_volumes
        return self.avg_bid_prices, self.avg_bid_volumes


@dataclass
class HistoricalDistribution:
    """Sorted spread/volume samples for one trading hour of the training set."""

    hour: int
    spread_samples: np.ndarray
    volume_samples: np.ndarray

    def __post_init__(self) -> None:
        self.spread_samples = np.sort(np.asarray(self.spread_samples, dtype=float))
        self.volume_samples = np.sort(np.asarray(self.volume_samples, dtype=float))

    def samples(self, field_name: str) -> np.ndarray:
        if field_name == "spread":
            return self.spread_samples
        if field_name == "volume":
            return self.volume_samples
        raise ValueError(f"unknown field {field_name!r}")


def percentile_of(dist: HistoricalDistribution, field_name: str, value: float) -> float:
    """Inclusive empirical percentile (count <= value)/n, clamped into (0, 1].

    The clamp below at 1/n keeps ceil(p * buckets) a total map onto 1..buckets.
    """
    samples = dist.samples(field_name)
    n = len(samples)
    if n == 0:
        raise ValueError(f"empty {field_name} distribution for hour {dist.hour}")
    count = int(np.searchsorted(samples, value, side="right"))
    return max(count, 1) / n


def bucket_of(dist: HistoricalDistribution, field_name: str, value: float, buckets: int) -> int:
    """Percentile bucket ceil(p * buckets) in 1..buckets, computed exactly.

    Uses integer arithmetic on the sample count so bucket boundaries never
    shift by a float rounding of the percentile.
    """
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    samples = dist.samples(field_name)
    n = len(samples)
    if n == 0:
        raise ValueError(f"empty {field_name} distribution for hour {dist.hour}")
    count = max(int(np.searchsorted(samples, value, side="right")), 1)
    return (count * buckets + n - 1) // n


@dataclass
class DataSplit:
    """Chronological train/test partition of interval bars."""

    training: list[IntervalBar]
    testing: list[IntervalBar]

    def __post_init__(self) -> None:
        if self.training and self.testing:
            if max(b.start for b in self.training) >= min(b.start for b in self.testing):
                raise ValueError("training bars must strictly pre-date testing bars")

    @classmethod
    def at_boundary(cls, bars: list[IntervalBar], boundary: datetime) -> "DataSplit":
        """Bars starting before `boundary` train; the rest test."""
        training = [b for b in bars if b.start < boundary]
        testing = [b for b in bars if b.start >= boundary]
        return cls(training=training, testing=testing)


@dataclass
class IngestResult:
    snapshots: list[BookSnapshot]
    rejected_rows: int
    row_errors: Counter

    def __len__(self) -> int:
        return len(self.snapshots)


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError("naive timestamp")
    return ts


def ingest_csv(path: str | Path, columns: tuple[str, ...] = DEPTH_CSV_COLUMNS) -> IngestResult:
    """Read a depth CSV into validated snapshots sorted by timestamp.

    Rows that fail parsing or book invariants are skipped and tallied per
    reason in ``row_errors``; a file with a bad header or zero valid rows is
    an error.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [cell.strip() for cell in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, no header") from None
        if header != list(columns):
            raise ValueError(f"{path}: malformed header {header!r}")
        snapshots: list[BookSnapshot] = []
        errors: Counter = Counter()
        for row in reader:
            if not row:
                continue
            if len(row) != len(columns):
                errors["wrong column count"] += 1
                continue
            try:
                ts = _parse_timestamp(row[0])
                values = [float(cell) for cell in row[1:]]
            except ValueError:
                errors["unparseable row"] += 1
                continue
            bid = values[: 2 * N_LEVELS]
            ask = values[2 * N_LEVELS :]
            try:
                snapshots.append(
                    BookSnapshot(
                        timestamp=ts,
                        bid_prices=bid[0::2],
                        bid_volumes=bid[1::2],
                        ask_prices=ask[0::2],
                        ask_volumes=ask[1::2],
                    )
                )
            except ValueError as exc:
                errors[str(exc)] += 1
    if not snapshots:
        raise ValueError(f"{path}: no valid rows")
    snapshots.sort(key=lambda s: s.timestamp)
    return IngestResult(snapshots=snapshots, rejected_rows=sum(errors.values()), row_errors=errors)


def write_snapshots_csv(path: str | Path, snapshots: list[BookSnapshot]) -> None:
    """Write snapshots in the canonical depth CSV schema (volumes as integers
    when integral, prices in shortest round-trip form)."""

    def num(x: float) -> str:
        return str(int(x)) if float(x).is_integer() else repr(float(x))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEPTH_CSV_COLUMNS)
        for snap in snapshots:
            row = [snap.timestamp.isoformat()]
            for prices, volumes in ((snap.bid_prices, snap.bid_volumes), (snap.ask_prices, snap.ask_volumes)):
                for lvl in range(N_LEVELS):
                    row.append(num(prices[lvl]))
                    row.append(num(volumes[lvl]))
            writer.writerow(row)


def aggregate_intervals(
    snapshots: list[BookSnapshot], tau: float, side: Side = Side.BUY
) -> list[IntervalBar]:
    """Aggregate snapshots into tau-second bars aligned to the epoch grid.

    Each bar holds the simple mean of per-level prices and volumes over the
    snapshots whose timestamps fall in [start, start + tau); empty intervals
    are omitted. ``quote_volume`` is the averaged level-1 volume of the side a
    `side` order consumes.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not snapshots:
        raise ValueError("no snapshots to aggregate")
    groups: dict[float, list[BookSnapshot]] = defaultdict(list)
    for snap in snapshots:
        start_epoch = math.floor(snap.timestamp.timestamp() / tau) * tau
        groups[start_epoch].append(snap)
    bars: list[IntervalBar] = []
    for start_epoch in sorted(groups):
        members = groups[start_epoch]
        start = datetime.fromtimestamp(start_epoch, tz=members[0].timestamp.tzinfo)
        bid_p = np.mean([m.bid_prices for m in members], axis=0)
        bid_v = np.mean([m.bid_volumes for m in members], axis=0)
        ask_p = np.mean([m.ask_prices for m in members], axis=0)
        ask_v = np.mean([m.ask_volumes for m in members], axis=0)
        bars.append(
            IntervalBar(
                start=start,
                duration=tau,
                avg_bid_prices=bid_p,
                avg_bid_volumes=bid_v,
                avg_ask_prices=ask_p,
                avg_ask_volumes=ask_v,
                spread=float(ask_p[0] - bid_p[0]),
                quote_volume=float(ask_v[0] if side is Side.BUY else bid_v[0]),
                hour=start.hour,
                n_snapshots=len(members),
            )
        )
    return bars


def build_distributions(bars: list[IntervalBar]) -> dict[int, HistoricalDistribution]:
    """Per-hour sorted spread and quote-volume samples from training bars."""
    if not bars:
        raise ValueError("no bars")
    spreads: dict[int, list[float]] = defaultdict(list)
    volumes: dict[int, list[float]] = defaultdict(list)
    for bar in bars:
        spreads[bar.hour].append(bar.spread)
        volumes[bar.hour].append(bar.quote_volume)
    return {
        hour: HistoricalDistribution(
            hour=hour,
            spread_samples=np.asarray(spreads[hour]),
            volume_samples=np.asarray(volumes[hour]),
        )
        for hour in sorted(spreads)
    }


@dataclass(frozen=True)
class DayWindow:
    """T consecutive bars of one day, anchored at the trading hour."""

    day: date
    bars: tuple[IntervalBar, ...]

    @property
    def reference_price(self) -> float:
        """Arrival price: mid of the first bar of the window."""
        return self.bars[0].mid


def arrival_reference(window: DayWindow, side: Side, kind: str = "mid") -> float:
    """Benchmark price at t=0 of a run: the arrival mid, or with kind="ask"
    the level-1 price of the consumed side (the stricter buy benchmark)."""
    if kind == "mid":
        return window.bars[0].mid
    if kind == "ask":
        prices, _ = window.bars[0].levels(side)
        return float(prices[0])
    raise ValueError(f"unknown reference kind {kind!r}")


def day_windows(
    bars: list[IntervalBar], hour: int, periods: int, tau: float
) -> tuple[list[DayWindow], list[tuple[date, str]]]:
    """Per-day windows of `periods` consecutive bars starting at `hour`.

    Days without a bar at the hour, or with a gap inside the window, are
    skipped and reported with a reason.
    """
    by_day: dict[date, list[IntervalBar]] = defaultdict(list)
    for bar in bars:
        by_day[bar.start.date()].append(bar)
    windows: list[DayWindow] = []
    skipped: list[tuple[date, str]] = []
    step = timedelta(seconds=tau)
    for day in sorted(by_day):
        day_bars = sorted(by_day[day], key=lambda b: b.start)
        anchor = next((k for k, b in enumerate(day_bars) if b.hour == hour), None)
        if anchor is None:
            skipped.append((day, f"no bars at hour {hour}"))
            continue
        if anchor + periods > len(day_bars):
            skipped.append((day, f"fewer than {periods} bars from hour {hour}"))
            continue
        window = day_bars[anchor : anchor + periods]
        gaps = [
            k
            for k in range(1, periods)
            if window[k].start != window[k - 1].start + step
        ]
        if gaps:
            skipped.append((day, "gap inside window"))
            continue
        windows.append(DayWindow(day=day, bars=tuple(window)))
    return windows, skipped


# ---------------------------------------------------------------------------
# Synthetic depth generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BookRegime:
    """Book shape for one interval: L1 spread, per-level depth, level spacing."""

    spread: float
    level_volume: float
    level_step: float
    spread_jitter: float = 0.0  # uniform +/- absolute on the spread
    volume_jitter: float = 0.0  # uniform +/- relative on level volumes


@dataclass(frozen=True)
class MixedRegime:
    """Hour whose tau-intervals flip between two regimes at random.

    The first `lead_in` intervals of the hour keep the surrounding regime, so
    a window anchored at the hour opens on a representative book before the
    alternation starts.
    """

    favorable: BookRegime
    unfavorable: BookRegime
    p_favorable: float = 0.5
    lead_in: int = 0


@dataclass
class SyntheticConfig:
    """Synthetic market: arithmetic random-walk mid plus per-hour book regimes."""

    base_price: float = 100.0
    walk_sigma: float = 0.02  # mid-price std per tau interval
    tau: float = 300.0
    snapshots_per_interval: int = 5
    session_start_hour: int = 9
    session_end_hour: int = 17
    start_day: date = date(2024, 1, 1)
    default_regime: BookRegime = field(
        default_factory=lambda: BookRegime(spread=0.12, level_volume=8000.0, level_step=0.06)
    )
    hourly: dict[int, BookRegime] = field(default_factory=dict)
    mixed_hours: dict[int, MixedRegime] = field(default_factory=dict)


def planted_regime_config(hour: int = 10) -> SyntheticConfig:
    """Alternating favorable (tight/deep) and unfavorable (wide/thin) intervals
    planted at one hour; the rest of the session runs the default regime.

    The first interval of the planted hour keeps the default book, so a run
    anchored there prices its arrival benchmark off a representative spread
    sitting strictly between the two regimes. The unfavorable book stays deep
    enough (5 levels x 3500) that a full terminal order for the default demo
    volume always liquidates.
    """
    favorable = BookRegime(
        spread=0.04, level_volume=30000.0, level_step=0.02,
        spread_jitter=0.004, volume_jitter=0.05,
    )
    unfavorable = BookRegime(
        spread=0.60, level_volume=3000.0, level_step=0.30,
        spread_jitter=0.05, volume_jitter=0.05,
    )
    return SyntheticConfig(
        walk_sigma=0.015,
        default_regime=BookRegime(spread=0.16, level_volume=8000.0, level_step=0.08),
        mixed_hours={hour: MixedRegime(favorable, unfavorable, p_favorable=0.5, lead_in=1)},
    )


def _interval_regime(
    config: SyntheticConfig, hour: int, interval: int, rng: np.random.Generator
) -> BookRegime:
    mixed = config.mixed_hours.get(hour)
    if mixed is not None and interval >= mixed.lead_in:
        return mixed.favorable if rng.random() < mixed.p_favorable else mixed.unfavorable
    return config.hourly.get(hour, config.default_regime)


def generate_synthetic(
    seed: int, days: int, config: SyntheticConfig | None = None
) -> list[BookSnapshot]:
    """Deterministic synthetic depth stream: same seed, same snapshots.

    The mid price follows a discrete arithmetic random walk; each tau-interval
    draws a book regime from the schedule and renders snapshots around the
    walking mid.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    cfg = config if config is not None else SyntheticConfig()
    rng = np.random.default_rng(seed)
    intervals_per_hour = int(round(3600.0 / cfg.tau))
    snap_step = cfg.tau / cfg.snapshots_per_interval
    step_sigma = cfg.walk_sigma / math.sqrt(cfg.snapshots_per_interval)
    offsets = np.arange(N_LEVELS, dtype=float)
    mid = cfg.base_price
    snapshots: list[BookSnapshot] = []
    for d in range(days):
        day_start = datetime.combine(
            cfg.start_day + timedelta(days=d), time(0), tzinfo=timezone.utc
        )
        for hour in range(cfg.session_start_hour, cfg.session_end_hour):
            for k in range(intervals_per_hour):
                regime = _interval_regime(cfg, hour, k, rng)
                t0 = day_start + timedelta(hours=hour, seconds=k * cfg.tau)
                for s in range(cfg.snapshots_per_interval):
                    mid = max(mid + rng.normal(0.0, step_sigma), 1.0)
                    spread = max(
                        regime.spread + regime.spread_jitter * rng.uniform(-1.0, 1.0),
                        0.01,
                    )
                    half = 0.5 * spread
                    bid_v = regime.level_volume * (
                        1.0 + regime.volume_jitter * rng.uniform(-1.0, 1.0, size=N_LEVELS)
                    )
                    ask_v = regime.level_volume * (
                        1.0 + regime.volume_jitter * rng.uniform(-1.0, 1.0, size=N_LEVELS)
                    )
                    snapshots.append(
                        BookSnapshot(
                            timestamp=t0 + timedelta(seconds=s * snap_step),
                            bid_prices=mid - half - regime.level_step * offsets,
                            bid_volumes=np.maximum(np.rint(bid_v), 1.0),
                            ask_prices=mid + half + regime.level_step * offsets,
                            ask_volumes=np.maximum(np.rint(ask_v), 1.0),
                        )
                    )
    return snapshots
