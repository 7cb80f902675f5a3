"""Book walks, shortfall arithmetic, and schedule execution mechanics."""

from __future__ import annotations

import math
from datetime import timedelta

import numpy as np
import pytest

from rlexec.execution import (
    Fill,
    LiquidationError,
    execute_schedule,
    implementation_shortfall,
    walk_book,
)
from rlexec.market_data import Side

from conftest import BOOK_A, BOOK_B, PAPER_REFERENCE, T0, make_bar


class TestWalkBook:
    def test_worked_example_first_book(self):
        fill = walk_book(*BOOK_A, 10000)
        # (3000*100 + 4000*100.5 + 3000*102.3)/10000; displayed as 100.9 at
        # one decimal in the source example
        assert fill.vwap == pytest.approx(100.89, abs=1e-12)
        assert fill.executed == 10000
        assert fill.residual == 0
        assert fill.levels_consumed == 3

    def test_worked_example_second_book(self):
        fill = walk_book(*BOOK_B, 10000)
        assert fill.vwap == pytest.approx(100.12, abs=1e-12)
        assert fill.levels_consumed == 3

    def test_zero_volume(self):
        fill = walk_book(*BOOK_A, 0)
        assert fill.executed == 0
        assert fill.residual == 0
        assert fill.vwap == 0.0

    def test_worked_example_8000(self):
        fill = walk_book(*BOOK_A, 8000)
        assert fill.vwap == pytest.approx(100.5375, abs=1e-12)  # displayed 100.54

    def test_participation_cap(self):
        # 20% of the 20000 total depth: 4000 shares, L1 then 1000 of L2
        fill = walk_book(*BOOK_A, 25000, cap=0.20)
        assert fill.executed == 4000
        assert fill.vwap == pytest.approx((3000 * 100.0 + 1000 * 100.5) / 4000, abs=1e-12)
        assert fill.residual == 21000

    def test_empty_side_returns_residual(self):
        fill = walk_book(np.array([100.0, 100.1, 100.2, 100.3, 100.4]), np.zeros(5), 500)
        assert fill.executed == 0
        assert fill.residual == 500

    def test_vwap_monotone_in_volume(self):
        vols = np.arange(500, 20001, 500)
        vwaps = [walk_book(*BOOK_A, v).vwap for v in vols]
        assert all(b >= a for a, b in zip(vwaps, vwaps[1:]))

    def test_cap_dominance_random(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            volumes = rng.integers(0, 5000, size=5).astype(float)
            prices = 100 + np.cumsum(rng.uniform(0.01, 0.5, size=5))
            cap = float(rng.uniform(0.05, 1.0))
            vol = int(rng.integers(0, 30000))
            fill = walk_book(prices, volumes, vol, cap=cap)
            assert fill.executed <= cap * volumes.sum() + 1e-9
            assert fill.executed + fill.residual == fill.requested
            assert fill.executed == int(fill.executed)  # whole shares

    def test_validation(self):
        with pytest.raises(ValueError):
            walk_book(*BOOK_A, -1)
        with pytest.raises(ValueError):
            walk_book(*BOOK_A, 10, cap=0.0)
        with pytest.raises(ValueError):
            walk_book(*BOOK_A, 10, cap=1.5)


class TestImplementationShortfall:
    def test_worked_example(self):
        fills = [
            (1, walk_book(*BOOK_A, 10000)),
            (2, walk_book(*BOOK_B, 10000)),
        ]
        bps = implementation_shortfall(PAPER_REFERENCE, fills, 20000)
        assert bps == pytest.approx(-101.0, abs=0.5)

    def test_worked_example_shifted_schedule(self):
        fills = [
            (1, walk_book(*BOOK_A, 8000)),
            (2, walk_book(*BOOK_B, 12000)),
        ]
        bps = implementation_shortfall(PAPER_REFERENCE, fills, 20000)
        assert bps == pytest.approx(-91.0, abs=0.5)

    def test_zero_at_reference(self):
        fills = [(1, Fill(requested=100, executed=100, vwap=50.0, residual=0, levels_consumed=1))]
        assert implementation_shortfall(50.0, fills, 100) == 0.0

    def test_validation(self):
        fills = [(1, Fill(100, 100, 50.0, 0, 1))]
        with pytest.raises(ValueError):
            implementation_shortfall(0.0, fills, 100)
        with pytest.raises(ValueError):
            implementation_shortfall(50.0, fills, 0)


class TestExecuteSchedule:
    def test_worked_example_two_periods(self, paper_bars):
        record = execute_schedule(paper_bars, [10000, 10000], cap=1.0, reference=PAPER_REFERENCE)
        assert record.shortfall_bps == pytest.approx(-101.0, abs=0.5)
        assert record.executed_total == 20000

    def test_single_period_full_depth(self, paper_bars):
        record = execute_schedule(paper_bars[:1], [15000], cap=1.0)
        (period, fill), = record.fills
        assert period == 1
        assert fill.executed == 15000
        assert fill.residual == 0

    def test_residual_rolls_forward(self, paper_bars):
        # period-1 cap 0.3 of 20000 depth = 6000 executed; 2000 rolls into the
        # terminal order, total executed stays 20000
        record = execute_schedule(paper_bars, [8000, 12000], cap=0.3, reference=PAPER_REFERENCE)
        fills = dict(record.fills)
        assert fills[1].executed == 6000
        assert fills[1].residual == 2000
        assert fills[2].requested == 14000
        assert fills[2].executed == 14000
        assert record.executed_total == 20000

    def test_default_reference_is_first_bar_mid(self, paper_bars):
        record = execute_schedule(paper_bars, [10000, 10000], cap=1.0)
        assert record.reference_price == paper_bars[0].mid

    def test_conservation_over_random_runs(self):
        rng = np.random.default_rng(31)
        for _ in range(60):
            periods = int(rng.integers(1, 8))
            bars = [
                make_bar(
                    start=T0 + timedelta(seconds=300 * k),
                    mid=float(rng.uniform(95, 105)),
                    spread=float(rng.uniform(0.02, 0.5)),
                    level_volume=float(rng.integers(2000, 30000)),
                )
                for k in range(periods)
            ]
            total = int(rng.integers(1, 20000))
            cuts = np.sort(rng.integers(0, total + 1, size=periods - 1))
            schedule = np.diff(np.concatenate(([0], cuts, [total])))
            cap = float(rng.uniform(0.1, 1.0))
            record = execute_schedule(bars, schedule, cap=cap)
            assert record.executed_total == total
            for period, fill in record.fills[:-1]:
                _, volumes = bars[period - 1].levels(Side.BUY)
                assert fill.executed <= cap * volumes.sum() + 1e-9

    def test_terminal_shortage_fails_run(self):
        thin = make_bar(level_volume=100.0)
        with pytest.raises(LiquidationError):
            execute_schedule([thin], [10000], cap=1.0)

    def test_sign_symmetry_under_book_mirror(self):
        rng = np.random.default_rng(77)
        for _ in range(20):
            mid = float(rng.uniform(90, 110))
            spread = float(rng.uniform(0.02, 0.4))
            vols = rng.integers(1000, 9000, size=5).astype(float)
            ask_p = mid + spread / 2 + np.cumsum(np.full(5, 0.07)) - 0.07
            buy_bar = make_bar(mid=mid, spread=spread, ask_levels=(ask_p, vols))
            # mirror: bids at prices symmetric to the asks around the mid
            sell_bar = make_bar(mid=mid, spread=spread)
            sell_bar.avg_bid_prices = 2 * mid - ask_p
            sell_bar.avg_bid_volumes = vols.copy()
            buy = execute_schedule([buy_bar], [4000], cap=1.0, side=Side.BUY, reference=mid)
            sell = execute_schedule([sell_bar], [4000], cap=1.0, side=Side.SELL, reference=mid)
            assert buy.shortfall_bps == pytest.approx(-sell.shortfall_bps, abs=1e-9)

    def test_validation(self, paper_bars):
        with pytest.raises(ValueError):
            execute_schedule(paper_bars, [100], cap=1.0)
        with pytest.raises(ValueError):
            execute_schedule(paper_bars, [-5, 105], cap=1.0)
        with pytest.raises(ValueError):
            execute_schedule(paper_bars, [0, 0], cap=1.0)
