"""Interval building, illiquidity extraction, and additivity checks."""
import datetime as dt
import math

import numpy as np
import pytest

from fluxscale.aggregate import (build_intervals, check_additivity,
                                 illiquidity, illiquidity_series,
                                 mean_variance_points)
from fluxscale.errors import EmptySeriesError, MismatchError
from fluxscale.model import (CN_SESSION_WINDOWS, BarSeries, SessionCalendar)

from conftest import DAY0, bars_from_rows, dense_bars


def minute_of(iv, minute):
    return int(np.nonzero(iv.timestamps % 1440 == minute)[0][0])


class TestBuildIntervals:
    def test_one_minute_log_return(self, one_day_calendar):
        bars = bars_from_rows("000016", [
            (DAY0, 571, 10.00, 500.0),
            (DAY0, 572, 10.10, 700.0),
        ])
        iv = build_intervals(bars, 1, one_day_calendar)
        k = minute_of(iv, 572)
        assert iv.returns[k] == pytest.approx(0.0099503, abs=5e-8)
        assert iv.returns[k] == pytest.approx(math.log(10.10) - math.log(10.00),
                                              abs=0)
        assert iv.complete[k]

    def test_constant_price_zero_return(self, one_day_calendar):
        bars = bars_from_rows("000016", [
            (DAY0, 571, 10.0, 1.0), (DAY0, 572, 10.0, 2.0), (DAY0, 573, 10.0, 3.0),
        ])
        iv = build_intervals(bars, 1, one_day_calendar)
        assert iv.returns[minute_of(iv, 572)] == 0.0
        assert iv.returns[minute_of(iv, 573)] == 0.0

    def test_block_volume_is_sum(self, one_day_calendar):
        bars = bars_from_rows("000016", [
            (DAY0, 571, 10.0, 300.0), (DAY0, 572, 10.1, 700.0),
            (DAY0, 573, 10.1, 50.0), (DAY0, 574, 10.2, 70.0),
        ])
        iv = build_intervals(bars, 2, one_day_calendar)
        assert iv.volumes[minute_of(iv, 572)] == 1000.0
        k = minute_of(iv, 574)
        assert iv.volumes[k] == 120.0 and iv.complete[k]

    def test_first_block_of_each_window_incomplete(self, one_day_calendar):
        bars = dense_bars("000016", one_day_calendar, seed=1)
        for delta_t in (1, 5, 30):
            iv = build_intervals(bars, delta_t, one_day_calendar)
            for window_open in (570, 780):
                k = minute_of(iv, window_open + delta_t)
                assert not iv.complete[k], (delta_t, window_open)
            # everything else on dense data is complete
            assert int((~iv.complete).sum()) == 2

    def test_blocks_never_cross_lunch(self, one_day_calendar):
        bars = dense_bars("000016", one_day_calendar, seed=2)
        iv = build_intervals(bars, 7, one_day_calendar)
        # 120 = 17*7 + 1: each window ends with a 1-minute truncated block
        mins = iv.timestamps % 1440
        assert (690 in mins) and (900 in mins)
        trailing_morning = minute_of(iv, 690)
        assert not iv.complete[trailing_morning]
        # afternoon restart: first afternoon block is anchored inside the
        # afternoon window, not on the morning close
        k = minute_of(iv, 787)
        assert not iv.complete[k]
        k2 = minute_of(iv, 794)
        p_794 = bars.closes[np.nonzero(bars.minutes == 794)[0][0]]
        p_787 = bars.closes[np.nonzero(bars.minutes == 787)[0][0]]
        assert iv.returns[k2] == pytest.approx(math.log(p_794) - math.log(p_787),
                                               abs=0)

    def test_missing_minute_marks_block_incomplete(self, one_day_calendar):
        rows = [(DAY0, m, 10.0 + 0.001 * m, 10.0) for m in range(571, 631)]
        rows = [r for r in rows if r[1] != 600]  # drop one bar
        iv = build_intervals(bars_from_rows("000016", rows), 5, one_day_calendar)
        assert not iv.complete[minute_of(iv, 600)]
        # the following block's boundary falls back to the last close <= 600
        k = minute_of(iv, 605)
        assert iv.complete[k]
        assert iv.returns[k] == pytest.approx(
            math.log(10.0 + 0.001 * 605) - math.log(10.0 + 0.001 * 599), abs=0)

    def test_bad_delta_t(self, one_day_calendar):
        bars = bars_from_rows("000016", [(DAY0, 571, 10.0, 1.0)])
        for bad in (0, -3):
            with pytest.raises(ValueError):
                build_intervals(bars, bad, one_day_calendar)

    def test_bars_outside_calendar_rejected(self, one_day_calendar):
        bars = bars_from_rows("000016", [(DAY0 + dt.timedelta(days=3), 571, 10.0, 1.0)])
        with pytest.raises(MismatchError):
            build_intervals(bars, 1, one_day_calendar)

    def test_telescoping_over_windows(self, cn_calendar):
        bars = dense_bars("000016", cn_calendar, seed=7)
        em = bars.epoch_minutes
        for delta_t in (1, 2, 4, 8, 24, 40, 60):
            assert 120 % delta_t == 0
            iv = build_intervals(bars, delta_t, cn_calendar)
            for day in cn_calendar.days:
                for o, c in cn_calendar.windows(day):
                    base = day.toordinal() * 1440
                    sel = (iv.timestamps > base + o) & (iv.timestamps <= base + c)
                    comp = sel & iv.complete
                    total = float(np.sum(iv.returns[comp]))
                    p_end = bars.closes[np.searchsorted(em, base + c)]
                    p_first = bars.closes[np.searchsorted(em, base + o + delta_t)]
                    expect = math.log(p_end) - math.log(p_first)
                    assert total == pytest.approx(expect, rel=1e-10, abs=1e-12)

    def test_volume_conservation_exact(self, cn_calendar):
        # integer volumes: block sums and day totals are exact in binary
        bars = dense_bars("000016", cn_calendar, seed=8)
        for delta_t in (1, 3, 10, 120):
            iv = build_intervals(bars, delta_t, cn_calendar)
            assert float(np.sum(iv.volumes)) == float(np.sum(bars.volumes))

    def test_debug_dump(self, one_day_calendar):
        bars = bars_from_rows("000016", [(DAY0, 571, 10.0, 1.0), (DAY0, 572, 10.2, 2.0)])
        dump = build_intervals(bars, 1, one_day_calendar).to_csv()
        assert dump.startswith("timestamp,r,v,complete\n")
        assert "2020-01-06 09:32," in dump


class TestIlliquidity:
    def test_ratio_and_magnitude(self, one_day_calendar):
        bars = bars_from_rows("000016", [
            (DAY0, 571, 10.00, 1.0), (DAY0, 572, 10.10, 1_000_000.0),
        ])
        ser = illiquidity_series(bars, 1, one_day_calendar)
        assert ser.defined_count == 1
        assert ser.values[0] == pytest.approx(9.9503e-9, rel=1e-4)

    def test_zero_return_retained(self, one_day_calendar):
        bars = bars_from_rows("000016", [
            (DAY0, 571, 10.0, 500.0), (DAY0, 572, 10.0, 500.0),
        ])
        ser = illiquidity_series(bars, 1, one_day_calendar)
        assert ser.defined_count == 1 and ser.values[0] == 0.0

    def test_zero_volume_omitted(self, one_day_calendar):
        bars = bars_from_rows("000016", [
            (DAY0, 571, 10.0, 500.0), (DAY0, 572, 10.1, 0.0),
            (DAY0, 573, 10.2, 400.0),
        ])
        ser = illiquidity_series(bars, 1, one_day_calendar)
        # minute 572 has v=0 -> omitted, not stored as 0
        assert ser.defined_count == 1
        assert (ser.timestamps % 1440).tolist() == [573]

    def test_values_match_recomputation(self, cn_calendar):
        bars = dense_bars("000016", cn_calendar, seed=9)
        iv = build_intervals(bars, 5, cn_calendar)
        ser = illiquidity(iv)
        lut = {int(t): (r, v) for t, r, v in
               zip(iv.timestamps, iv.returns, iv.volumes)}
        for t, f in zip(ser.timestamps, ser.values):
            r, v = lut[int(t)]
            assert f == pytest.approx(abs(r) / v, rel=1e-12)

    def test_mean_variance_points_skips_empty(self, one_day_calendar):
        bars = {
            "000016": dense_bars("000016", one_day_calendar, seed=1),
            # a single bar yields no complete block at all
            "600000": bars_from_rows("600000", [(DAY0, 571, 10.0, 1.0)]),
        }
        pts = mean_variance_points(bars, 1, one_day_calendar)
        assert [p.instrument_id for p in pts] == ["000016"]
        with pytest.raises(EmptySeriesError):
            mean_variance_points(bars, 1, one_day_calendar, skip_empty=False)


class TestAdditivity:
    def test_spec_witness_block(self, one_day_calendar):
        p0 = 10.0
        p1, p2 = p0, p0
        p3 = p2 * math.exp(0.01)
        p4 = p3 * math.exp(-0.01)
        bars = bars_from_rows("000016", [
            (DAY0, 571, p1, 50.0), (DAY0, 572, p2, 50.0),
            (DAY0, 573, p3, 100.0), (DAY0, 574, p4, 100.0),
        ])
        s1 = build_intervals(bars, 1, one_day_calendar)
        s2 = build_intervals(bars, 2, one_day_calendar)
        rep = check_additivity(s1, 2, one_day_calendar, direct=s2)
        assert rep.returns_additive and rep.volumes_additive
        assert not rep.illiquidity_additive
        assert rep.witness is not None
        _, f_direct, f_summed = rep.witness
        assert f_direct == pytest.approx(0.0, abs=1e-18)
        assert f_summed == pytest.approx(2e-4, rel=1e-9)

    def test_random_data_r_and_v_additive(self, cn_calendar):
        bars = dense_bars("000016", cn_calendar, seed=13)
        s1 = build_intervals(bars, 1, cn_calendar)
        for delta_t in (2, 5, 15, 60):
            direct = build_intervals(bars, delta_t, cn_calendar)
            rep = check_additivity(s1, delta_t, cn_calendar, direct=direct)
            assert rep.blocks_checked > 0
            assert rep.returns_additive and rep.volumes_additive
            assert rep.max_return_discrepancy < 1e-14
            assert rep.max_volume_discrepancy == 0.0

    def test_illiquidity_generically_non_additive(self, cn_calendar):
        bars = dense_bars("000016", cn_calendar, seed=14)
        s1 = build_intervals(bars, 1, cn_calendar)
        rep = check_additivity(s1, 10, cn_calendar,
                               direct=build_intervals(bars, 10, cn_calendar))
        assert not rep.illiquidity_additive
        assert rep.max_illiquidity_discrepancy > 0
        assert rep.witness is not None

    def test_without_direct_series_sums_define_blocks(self, cn_calendar):
        bars = dense_bars("000016", cn_calendar, seed=15)
        s1 = build_intervals(bars, 1, cn_calendar)
        rep = check_additivity(s1, 5, cn_calendar)
        assert rep.returns_additive and rep.volumes_additive
        assert rep.max_return_discrepancy == 0.0
        assert not rep.illiquidity_additive

    def test_mismatches_raise(self, cn_calendar, one_day_calendar):
        bars = dense_bars("000016", cn_calendar, seed=16)
        other = dense_bars("600000", cn_calendar, seed=17)
        s1 = build_intervals(bars, 1, cn_calendar)
        with pytest.raises(MismatchError):
            check_additivity(build_intervals(bars, 5, cn_calendar), 5, cn_calendar)
        with pytest.raises(MismatchError):
            check_additivity(s1, 5, cn_calendar,
                             direct=build_intervals(other, 5, cn_calendar))
        with pytest.raises(MismatchError):
            check_additivity(s1, 5, cn_calendar,
                             direct=build_intervals(bars, 10, cn_calendar))
        with pytest.raises(MismatchError):
            check_additivity(s1, 5, one_day_calendar)
