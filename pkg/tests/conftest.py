"""Shared builders: the two worked-example books and quick bar/snapshot factories."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from rlexec.market_data import BookSnapshot, IntervalBar

# Five-level ask books from the worked reward example: walking 10000 shares
# through BOOK_A gives VWAP 100.89 (displayed 100.9 at source precision) and
# through BOOK_B gives 100.12; at reference 99.5 the two-period schedule
# [10000, 10000] runs -101 bps.
BOOK_A = (
    np.array([100.00, 100.50, 102.30, 103.00, 105.50]),
    np.array([3000.0, 4000.0, 5000.0, 6000.0, 2000.0]),
)
BOOK_B = (
    np.array([99.80, 99.90, 101.30, 107.00, 108.50]),
    np.array([6000.0, 2000.0, 7000.0, 3000.0, 1000.0]),
)
PAPER_REFERENCE = 99.5

T0 = datetime(2024, 3, 4, 10, 0, tzinfo=timezone.utc)


def make_snapshot(
    ts: datetime = T0,
    mid: float = 100.0,
    spread: float = 0.10,
    level_volume: float = 5000.0,
    step: float = 0.05,
) -> BookSnapshot:
    offsets = step * np.arange(5)
    return BookSnapshot(
        timestamp=ts,
        bid_prices=mid - spread / 2 - offsets,
        bid_volumes=np.full(5, level_volume),
        ask_prices=mid + spread / 2 + offsets,
        ask_volumes=np.full(5, level_volume),
    )


def make_bar(
    start: datetime = T0,
    duration: float = 300.0,
    mid: float = 100.0,
    spread: float = 0.10,
    level_volume: float = 5000.0,
    step: float = 0.05,
    ask_levels: tuple[np.ndarray, np.ndarray] | None = None,
) -> IntervalBar:
    offsets = step * np.arange(5)
    bid_p = mid - spread / 2 - offsets
    bid_v = np.full(5, float(level_volume))
    if ask_levels is None:
        ask_p = mid + spread / 2 + offsets
        ask_v = np.full(5, float(level_volume))
    else:
        ask_p = np.asarray(ask_levels[0], dtype=float)
        ask_v = np.asarray(ask_levels[1], dtype=float)
    return IntervalBar(
        start=start,
        duration=duration,
        avg_bid_prices=bid_p,
        avg_bid_volumes=bid_v,
        avg_ask_prices=ask_p,
        avg_ask_volumes=ask_v,
        spread=float(ask_p[0] - bid_p[0]),
        quote_volume=float(ask_v[0]),
        hour=start.hour,
        n_snapshots=1,
    )


def make_bar_sequence(n: int, start: datetime = T0, tau: float = 300.0, **kwargs) -> list[IntervalBar]:
    return [make_bar(start=start + timedelta(seconds=k * tau), duration=tau, **kwargs) for k in range(n)]


@pytest.fixture
def paper_bars() -> list[IntervalBar]:
    """Two periods whose ask sides are the worked-example books."""
    return [
        make_bar(start=T0, ask_levels=BOOK_A),
        make_bar(start=T0 + timedelta(seconds=300), mid=99.75, ask_levels=BOOK_B),
    ]
