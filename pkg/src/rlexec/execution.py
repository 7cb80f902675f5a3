"""Market-order execution against visible depth.

Child orders walk the book level by level under a participation cap; residual
volume rolls into the next period and a cap-free terminal order guarantees
complete liquidation. Scoring is Perold-style implementation shortfall against
the arrival price, in signed basis points (negative = cost for a buy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market_data import IntervalBar, Side


class LiquidationError(RuntimeError):
    """The run could not execute its full volume (terminal book too thin)."""


@dataclass(frozen=True)
class Fill:
    requested: float
    executed: float
    vwap: float
    residual: float
    levels_consumed: int


@dataclass
class ISRecord:
    """Per-run implementation shortfall with its fill breakdown."""

    reference_price: float
    total_volume: int
    fills: list[tuple[int, Fill]]
    shortfall_bps: float

    @property
    def executed_total(self) -> float:
        return math.fsum(fill.executed for _, fill in self.fills)


def walk_book(prices: np.ndarray, volumes: np.ndarray, volume: float, cap: float = 1.0) -> Fill:
    """Fill a market order by consuming levels in price order.

    Executable volume is min(volume, floor(cap * total visible depth)) in
    whole shares; whatever the cap or depth withholds comes back as residual,
    never as an exception.
    """
    if volume < 0:
        raise ValueError("negative volume")
    if not 0.0 < cap <= 1.0:
        raise ValueError("cap must be in (0, 1]")
    prices = np.asarray(prices, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    total_depth = float(volumes.sum())
    executable = min(float(volume), float(math.floor(cap * total_depth)))
    remaining = executable
    value = 0.0
    levels = 0
    for price, avail in zip(prices, volumes):
        if remaining <= 0.0:
            break
        take = min(remaining, float(avail))
        if take > 0.0:
            value += take * float(price)
            levels += 1
            remaining -= take
    if 0.0 < remaining < 1e-9:  # dust from fractional averaged depth
        remaining = 0.0
    executed = executable - remaining
    return Fill(
        requested=float(volume),
        executed=executed,
        vwap=value / executed if executed > 0.0 else 0.0,
        residual=float(volume) - executed,
        levels_consumed=levels,
    )


def implementation_shortfall(
    reference: float, fills: list[tuple[int, Fill]], total: float
) -> float:
    """(V * S_ref - sum executed * vwap) / (V * S_ref) in basis points.

    The sign convention is fixed to the buy side: paying above the reference
    comes out negative. Mirroring the book and flipping the side negates it.
    """
    if reference <= 0:
        raise ValueError("reference price must be positive")
    if total <= 0:
        raise ValueError("total volume must be positive")
    cost = math.fsum(fill.executed * fill.vwap for _, fill in fills)
    target = total * reference
    return (target - cost) / target * 1e4


def execute_schedule(
    bars: list[IntervalBar],
    schedule: np.ndarray,
    cap: float,
    side: Side = Side.BUY,
    reference: float | None = None,
) -> ISRecord:
    """Execute a per-period share schedule against per-period books.

    Each period walks its bar for the scheduled volume plus any carried
    residual, capped at `cap` of visible depth; the final period lifts the cap
    (terminal market order). If the final book cannot absorb what remains the
    run has failed its liquidation guarantee and raises LiquidationError.
    """
    schedule = np.asarray(schedule)
    if len(schedule) != len(bars):
        raise ValueError("schedule length must match the number of periods")
    if len(bars) == 0:
        raise ValueError("no periods")
    if np.any(schedule < 0):
        raise ValueError("negative scheduled volume")
    total = int(schedule.sum())
    if total <= 0:
        raise ValueError("empty schedule")
    ref = bars[0].mid if reference is None else float(reference)
    last = len(bars)
    carry = 0.0
    fills: list[tuple[int, Fill]] = []
    for period, (bar, planned) in enumerate(zip(bars, schedule), start=1):
        request = float(planned) + carry
        prices, volumes = bar.levels(side)
        fill = walk_book(prices, volumes, request, cap=1.0 if period == last else cap)
        carry = fill.residual
        fills.append((period, fill))
    if carry > 0.0:
        raise LiquidationError(f"{carry:g} shares unexecuted after the terminal order")
    return ISRecord(
        reference_price=ref,
        total_volume=total,
        fills=fills,
        shortfall_bps=implementation_shortfall(ref, fills, total),
    )
