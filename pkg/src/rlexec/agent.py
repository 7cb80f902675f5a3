"""Tabular finite-horizon Q-learning over <time, inventory, spread, volume>.

The agent modulates a static trade list: at each period the greedy action is a
multiplier beta applied to the list's child volume rescaled to the remaining
inventory. States discretize remaining periods, remaining inventory, and the
percentile bucket of the current bar's spread and level-1 volume against the
training-set distribution for that hour.

The horizon is handled by an artificial reward-free absorbing state after the
final period: interior updates bootstrap off max_b Q(next, b), final-period
updates regress straight onto the reward. With the per-pair harmonic learning
rate alpha0 / (1 + visits) the Robbins-Monro conditions hold, and a
final-period pair's Q value is exactly the running mean of its rewards.

Rewards are the fill's signed contribution to implementation shortfall in
basis points (costs negative), so the greedy argmax minimizes total IS.
Training sweeps every inventory bucket and every action at each period of
each training window, the exploration scheme that guarantees every reachable
pair keeps being visited.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .execution import walk_book
from .market_data import (
    DayWindow,
    HistoricalDistribution,
    IntervalBar,
    Side,
    arrival_reference,
    bucket_of,
)


class StateTuple(NamedTuple):
    """1-based indices: remaining periods, inventory, spread, volume buckets."""

    t: int
    i: int
    s: int
    v: int


@dataclass(frozen=True)
class ActionGrid:
    """Strictly increasing beta multipliers applied to the child volume."""

    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.betas:
            raise ValueError("empty action grid")
        if any(b < 0 for b in self.betas):
            raise ValueError("negative beta")
        if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
            raise ValueError("betas must be strictly increasing")

    @classmethod
    def from_bounds(cls, lower: float = 0.0, upper: float = 2.0, incr: float = 0.25) -> "ActionGrid":
        if incr <= 0 or upper < lower:
            raise ValueError("bad beta bounds")
        count = int(round((upper - lower) / incr)) + 1
        return cls(betas=tuple(lower + k * incr for k in range(count)))

    def __len__(self) -> int:
        return len(self.betas)


@dataclass
class LearningSchedule:
    """Per-pair harmonic rate alpha0 / (1 + visits); gamma fixed at 1."""

    alpha0: float = 1.0
    gamma: float = 1.0

    def alpha(self, visits: int) -> float:
        return self.alpha0 / (1.0 + visits)


@dataclass
class QTable:
    """Dense action values and visit counts over T x I x B x W x A."""

    values: np.ndarray
    visit_counts: np.ndarray

    @classmethod
    def zeros(cls, periods: int, inv_buckets: int, spread_buckets: int, vol_buckets: int, n_actions: int) -> "QTable":
        shape = (periods, inv_buckets, spread_buckets, vol_buckets, n_actions)
        return cls(values=np.zeros(shape), visit_counts=np.zeros(shape, dtype=np.int64))

    def state_index(self, x: StateTuple) -> tuple[int, int, int, int]:
        return (x.t - 1, x.i - 1, x.s - 1, x.v - 1)


def _inventory_bucket(remaining: float, total: int, buckets: int) -> int:
    """ceil(remaining / total * buckets) in integer arithmetic; zero shares
    map to bucket 1 by convention."""
    shares = int(round(remaining))
    if shares <= 0:
        return 1
    return min(buckets, (shares * buckets + total - 1) // total)


def encode_state(
    remaining_periods: int,
    remaining_shares: float,
    bar: IntervalBar,
    dist: HistoricalDistribution | None,
    *,
    total_shares: int,
    inv_buckets: int,
    spread_buckets: int,
    vol_buckets: int,
) -> StateTuple:
    """Bucket the live execution state against the hour's historical samples."""
    if remaining_periods < 1:
        raise ValueError("remaining periods must be >= 1")
    if not 0 <= remaining_shares <= total_shares:
        raise ValueError("remaining shares outside [0, total]")
    if dist is None:
        raise ValueError(f"no historical distribution for hour {bar.hour}")
    return StateTuple(
        t=remaining_periods,
        i=_inventory_bucket(remaining_shares, int(total_shares), inv_buckets),
        s=bucket_of(dist, "spread", bar.spread, spread_buckets),
        v=bucket_of(dist, "volume", bar.quote_volume, vol_buckets),
    )


def q_update(
    q: QTable,
    x: StateTuple,
    action: int,
    reward: float,
    next_state: StateTuple | None,
    schedule: LearningSchedule,
) -> QTable:
    """One Q-learning step; `next_state` None means the absorbing state.

    The learning rate is read from the pair's visit count before the count is
    incremented, so a fresh pair takes the full reward.
    """
    idx = (*q.state_index(x), action)
    alpha = schedule.alpha(int(q.visit_counts[idx]))
    current = q.values[idx]
    if next_state is None:
        update = reward - current  # absorbing state carries zero value
    else:
        future = q.values[q.state_index(next_state)].max()
        update = reward + schedule.gamma * future - current
    q.values[idx] = current + alpha * update
    q.visit_counts[idx] += 1
    return q


def _greedy_action(row: np.ndarray, betas: tuple[float, ...]) -> int:
    """Argmax with deterministic ties: closest to beta = 1, then smaller beta."""
    top = row.max()
    candidates = np.flatnonzero(row == top)
    return int(min(candidates, key=lambda a: (abs(betas[a] - 1.0), betas[a])))


def greedy_beta(q: QTable, x: StateTuple, grid: ActionGrid) -> float:
    row = q.values[q.state_index(x)]
    return grid.betas[_greedy_action(row, grid.betas)]


def extract_policy(q: QTable, grid: ActionGrid) -> np.ndarray:
    """Greedy beta per state, shape (T, I, B, W). Unvisited rows fall back to
    beta = 1 through the tie-break."""
    periods, inv, spread, vol, _ = q.values.shape
    policy = np.empty((periods, inv, spread, vol))
    for t in range(periods):
        for i in range(inv):
            for s in range(spread):
                for v in range(vol):
                    policy[t, i, s, v] = grid.betas[
                        _greedy_action(q.values[t, i, s, v], grid.betas)
                    ]
    return policy


def correct_action_fraction(q: QTable, grid: ActionGrid) -> float | None:
    """Share of visited states where the greedy beta points the right way.

    Qualifying states have the spread bucket strictly above the median bucket
    with the volume bucket strictly below (correct: beta < 1), or the reverse
    (correct: beta > 1). Final-period states are excluded: there the terminal
    clean-up order makes every action equivalent. Returns None when no
    qualifying state has been visited.
    """
    periods, inv, spread, vol, _ = q.values.shape
    s_mid = (spread + 1) / 2
    v_mid = (vol + 1) / 2
    correct = 0
    total = 0
    for t in range(1, periods):  # 0-based index: skips t=1 (final period)
        for i in range(inv):
            for s in range(spread):
                for v in range(vol):
                    trim = (s + 1) > s_mid and (v + 1) < v_mid
                    add = (s + 1) < s_mid and (v + 1) > v_mid
                    if not (trim or add):
                        continue
                    if q.visit_counts[t, i, s, v].sum() == 0:
                        continue
                    beta = grid.betas[_greedy_action(q.values[t, i, s, v], grid.betas)]
                    if (trim and beta < 1.0) or (add and beta > 1.0):
                        correct += 1
                    total += 1
    return correct / total if total else None


@dataclass
class TrainingResult:
    trace: list[tuple[int, float | None]] = field(default_factory=list)
    updates: int = 0
    episodes_trained: int = 0
    episodes_skipped: int = 0


def train(
    q: QTable,
    episodes: list[DayWindow],
    schedule_shares: np.ndarray,
    grid: ActionGrid,
    dists: dict[int, HistoricalDistribution],
    *,
    total_shares: int,
    cap: float,
    side: Side = Side.BUY,
    learning: LearningSchedule | None = None,
    trace_stride: int = 0,
    reference_kind: str = "mid",
) -> TrainingResult:
    """Sweep-train the Q table over the training windows.

    Per episode, periods run from the horizon down to 1 and every inventory
    bucket and action are visited. The hypothetical inventory for bucket i is
    the bucket midpoint; the child volume is that inventory rescaled by the
    trade list's remaining-weight for the period. The final period walks the
    whole remaining inventory cap-free, mirroring the terminal market order.

    The correct-action trace records (cumulative tuple visits, fraction) after
    every episode, when the table holds a consistent policy; trace_stride > 0
    additionally samples inside the sweep.
    """
    periods, inv_buckets, spread_buckets, vol_buckets, n_actions = q.values.shape
    if n_actions != len(grid):
        raise ValueError("action grid size does not match the Q table")
    sched = np.asarray(schedule_shares, dtype=np.int64)
    if len(sched) != periods:
        raise ValueError("trade list length does not match the horizon")
    learning = learning if learning is not None else LearningSchedule()
    total = int(total_shares)
    suffix = np.cumsum(sched[::-1])[::-1]  # shares still planned from period j on
    midpoints = [
        int(round(total * (2 * b - 1) / (2 * inv_buckets)))
        for b in range(1, inv_buckets + 1)
    ]
    result = TrainingResult()
    for episode in episodes:
        if len(episode.bars) != periods:
            result.episodes_skipped += 1
            continue
        buckets = []
        for bar in episode.bars:
            dist = dists.get(bar.hour)
            if dist is None:
                break
            buckets.append(
                (
                    bucket_of(dist, "spread", bar.spread, spread_buckets),
                    bucket_of(dist, "volume", bar.quote_volume, vol_buckets),
                )
            )
        if len(buckets) != periods:
            result.episodes_skipped += 1
            continue
        result.episodes_trained += 1
        ref = arrival_reference(episode, side, reference_kind)
        for t in range(periods, 0, -1):
            j = periods - t  # 0-based period index
            bar = episode.bars[j]
            prices, volumes = bar.levels(side)
            s, v = buckets[j]
            weight = sched[j] / suffix[j] if suffix[j] > 0 else 0.0
            for i in range(1, inv_buckets + 1):
                remaining = midpoints[i - 1]
                child = remaining * weight
                x = StateTuple(t, i, s, v)
                for action, beta in enumerate(grid.betas):
                    if t == 1:
                        # liquidation guarantee: the last period executes all
                        # remaining inventory cap-free, whatever beta says
                        fill = walk_book(prices, volumes, remaining, cap=1.0)
                        reward = _period_reward(fill, ref, total)
                        q_update(q, x, action, reward, None, learning)
                    else:
                        volume = min(max(int(round(beta * child)), 0), remaining)
                        fill = walk_book(prices, volumes, volume, cap=cap)
                        reward = _period_reward(fill, ref, total)
                        nxt = StateTuple(
                            t - 1,
                            _inventory_bucket(remaining - fill.executed, total, inv_buckets),
                            buckets[j + 1][0],
                            buckets[j + 1][1],
                        )
                        q_update(q, x, action, reward, nxt, learning)
                    result.updates += 1
                    if trace_stride and result.updates % trace_stride == 0:
                        result.trace.append(
                            (result.updates, correct_action_fraction(q, grid))
                        )
        result.trace.append((result.updates, correct_action_fraction(q, grid)))
    return result


def _period_reward(fill, reference: float, total: int) -> float:
    """Signed IS contribution of one fill, in basis points of the run."""
    if fill.executed <= 0:
        return 0.0
    return fill.executed * (reference - fill.vwap) / (total * reference) * 1e4


# ---------------------------------------------------------------------------
# Q-table persistence (versioned CSV, exact float round-trip)
# ---------------------------------------------------------------------------

QTABLE_FORMAT = 1


def save_qtable(path: str | Path, q: QTable, grid: ActionGrid, learning: LearningSchedule) -> None:
    periods, inv, spread, vol, n_actions = q.values.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# rlexec-qtable: {QTABLE_FORMAT}\n")
        fh.write(f"# dims: {periods} {inv} {spread} {vol}\n")
        fh.write("# betas: " + " ".join(repr(b) for b in grid.betas) + "\n")
        fh.write(f"# alpha0: {learning.alpha0!r}\n")
        fh.write(f"# gamma: {learning.gamma!r}\n")
        writer = csv.writer(fh)
        writer.writerow(("t", "i", "s", "v", "action", "beta", "q", "visits"))
        for t in range(periods):
            for i in range(inv):
                for s in range(spread):
                    for v in range(vol):
                        for a in range(n_actions):
                            writer.writerow(
                                (
                                    t + 1,
                                    i + 1,
                                    s + 1,
                                    v + 1,
                                    a,
                                    repr(grid.betas[a]),
                                    repr(float(q.values[t, i, s, v, a])),
                                    int(q.visit_counts[t, i, s, v, a]),
                                )
                            )


def load_qtable(path: str | Path) -> tuple[QTable, ActionGrid, LearningSchedule]:
    header: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        position = fh.tell()
        while True:
            line = fh.readline()
            if not line.startswith("#"):
                fh.seek(position)
                break
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            position = fh.tell()
        if header.get("rlexec-qtable") != str(QTABLE_FORMAT):
            raise ValueError(f"{path}: not a version-{QTABLE_FORMAT} q-table file")
        dims = tuple(int(tok) for tok in header["dims"].split())
        betas = tuple(float(tok) for tok in header["betas"].split())
        grid = ActionGrid(betas=betas)
        learning = LearningSchedule(
            alpha0=float(header.get("alpha0", "1.0")),
            gamma=float(header.get("gamma", "1.0")),
        )
        q = QTable.zeros(*dims, len(betas))
        reader = csv.DictReader(fh)
        for row in reader:
            idx = (
                int(row["t"]) - 1,
                int(row["i"]) - 1,
                int(row["s"]) - 1,
                int(row["v"]) - 1,
                int(row["action"]),
            )
            q.values[idx] = float(row["q"])
            q.visit_counts[idx] = int(row["visits"])
    return q, grid, learning
