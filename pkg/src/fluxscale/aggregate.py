"""Interval return/volume/illiquidity aggregation from minute bars.

Each trading day's session windows are partitioned independently into
consecutive delta_t-minute blocks starting at the window open; blocks never
cross the lunch break or a day boundary. The block ending at label t carries
the log return ln P(t) - ln P(t - delta_t), with boundary prices taken as
the last close at or before the boundary within the window. The first block
of every window has no pre-open boundary price and is incomplete by
construction, as is any block missing a constituent minute bar or truncated
by the window close.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptySeriesError, MismatchError
from .model import (MINUTES_PER_DAY, BarSeries, IlliquiditySeries,
                    MeanVariancePoint, SessionCalendar)
from .taylor import mean_variance

# Relative tolerance for the additivity verdicts; sums and directly built
# values that differ by less than this (or by < ADDITIVITY_ATOL absolutely,
# for values at zero) count as equal.
ADDITIVITY_RTOL = 1e-10
ADDITIVITY_ATOL = 1e-15


class IntervalSeries:
    """Per-block (timestamp, return, volume, complete) arrays for one instrument."""

    __slots__ = ("instrument_id", "delta_t", "timestamps", "returns", "volumes",
                 "complete")

    def __init__(self, instrument_id: str, delta_t: int, timestamps, returns,
                 volumes, complete):
        self.instrument_id = instrument_id
        self.delta_t = int(delta_t)
        self.timestamps = np.ascontiguousarray(timestamps, dtype=np.int64)
        self.returns = np.ascontiguousarray(returns, dtype=np.float64)
        self.volumes = np.ascontiguousarray(volumes, dtype=np.float64)
        self.complete = np.ascontiguousarray(complete, dtype=bool)
        n = len(self.timestamps)
        if not (len(self.returns) == len(self.volumes) == len(self.complete) == n):
            raise ValueError("column length mismatch")
        for name in ("timestamps", "returns", "volumes", "complete"):
            getattr(self, name).flags.writeable = False

    def __len__(self) -> int:
        return len(self.timestamps)

    def to_csv(self) -> str:
        """Debug dump: timestamp,r,v,complete rows."""
        from .model import format_minute, split_epoch_minute
        lines = ["timestamp,r,v,complete"]
        for ts, r, v, comp in zip(self.timestamps, self.returns, self.volumes,
                                  self.complete):
            day, minute = split_epoch_minute(ts)
            lines.append(f"{day.isoformat()} {format_minute(minute)},{r!r},{v!r},"
                         f"{int(comp)}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Block construction
# ---------------------------------------------------------------------------


def _day_window_slices(series: BarSeries, calendar: SessionCalendar):
    """(day_ordinal, open, close, lo, hi) for every calendar window of every
    day on which the instrument has bars; verifies every bar is covered."""
    em = series.epoch_minutes
    present_days = np.unique(series.day_ordinals)
    out = []
    covered = 0
    cal_days = {d.toordinal(): d for d in calendar.days}
    for day_ord in present_days:
        day = cal_days.get(int(day_ord))
        if day is None:
            raise MismatchError(
                f"{series.instrument_id} has bars on {day_ord} outside the calendar")
        base = int(day_ord) * MINUTES_PER_DAY
        for o, c in calendar.windows(day):
            lo = int(np.searchsorted(em, base + o + 1))
            hi = int(np.searchsorted(em, base + c, side="right"))
            out.append((int(day_ord), o, c, lo, hi))
            covered += hi - lo
    if covered != len(series):
        raise MismatchError(
            f"{series.instrument_id} has {len(series) - covered} bars outside "
            "session windows")
    return out


def _window_blocks(series: BarSeries, day_ord: int, o: int, c: int,
                   lo: int, hi: int, delta_t: int):
    """Aggregate one session window into delta_t blocks.

    Returns (timestamps, returns, volumes, complete); blocks with an
    undefined boundary price carry r = 0 and complete = False.
    """
    w = c - o
    nb = -(-w // delta_t)  # ceil
    wp = nb * delta_t
    offs = (series.minutes[lo:hi] - (o + 1)).astype(np.int64)

    present = np.zeros(wp, dtype=bool)
    present[offs] = True
    closes = np.full(wp, np.nan)
    closes[offs] = series.closes[lo:hi]
    vols = np.zeros(wp, dtype=np.float64)
    vols[offs] = series.volumes[lo:hi]

    # forward-fill index of the last present bar at or before each position
    idx = np.where(present, np.arange(wp), -1)
    ffill = np.maximum.accumulate(idx)
    bidx = ffill[delta_t - 1::delta_t]          # boundary index per block
    defined = bidx >= 0
    bprice = np.where(defined, closes[np.maximum(bidx, 0)], np.nan)

    if hi > lo:
        anchor = series.closes[lo]              # window's first bar's close
    else:
        anchor = np.nan
    prev = np.empty(nb, dtype=np.float64)
    prev[0] = anchor
    prev[1:] = bprice[:-1]

    with np.errstate(invalid="ignore"):
        r = np.log(bprice) - np.log(prev)
    bad = ~np.isfinite(r)
    r[bad] = 0.0

    starts = np.arange(nb) * delta_t
    v = np.add.reduceat(vols, starts)  # left-to-right accumulation per block
    all_present = present.reshape(nb, delta_t).all(axis=1)
    complete = all_present & ~bad
    complete[0] = False                          # no pre-open boundary price

    ts = day_ord * MINUTES_PER_DAY + np.minimum(o + (np.arange(nb) + 1) * delta_t, c)
    return ts, r, v, complete


def build_intervals(bars, delta_t: int, calendar: SessionCalendar,
                    _slices=None) -> IntervalSeries:
    """Partition an instrument's bars into delta_t blocks over the calendar.

    ``bars`` may be a BarSeries or any iterable of MinuteBar. A trailing
    block shorter than delta_t is emitted incomplete, never an error;
    delta_t < 1 is an error.
    """
    if delta_t < 1 or int(delta_t) != delta_t:
        raise ValueError(f"delta_t must be a positive integer, got {delta_t}")
    delta_t = int(delta_t)
    series = bars if isinstance(bars, BarSeries) else BarSeries.from_bars(bars)
    slices = _slices if _slices is not None else _day_window_slices(series, calendar)
    ts_all, r_all, v_all, c_all = [], [], [], []
    for day_ord, o, c, lo, hi in slices:
        ts, r, v, comp = _window_blocks(series, day_ord, o, c, lo, hi, delta_t)
        ts_all.append(ts)
        r_all.append(r)
        v_all.append(v)
        c_all.append(comp)
    if ts_all:
        out = (np.concatenate(ts_all), np.concatenate(r_all),
               np.concatenate(v_all), np.concatenate(c_all))
    else:
        out = (np.empty(0, np.int64), np.empty(0), np.empty(0), np.empty(0, bool))
    return IntervalSeries(series.instrument_id, delta_t, *out)


def illiquidity(series: IntervalSeries) -> IlliquiditySeries:
    """|r|/v over the complete, positive-volume blocks of an IntervalSeries.

    Blocks with zero traded volume or an incomplete flag are omitted from
    the result entirely; a zero return with positive volume is a retained
    zero sample.
    """
    mask = series.complete & (series.volumes > 0)
    values = np.abs(series.returns[mask]) / series.volumes[mask]
    return IlliquiditySeries(series.instrument_id, series.delta_t,
                             series.timestamps[mask], values, validate=False)


def illiquidity_series(bars, delta_t: int, calendar: SessionCalendar) -> IlliquiditySeries:
    """build_intervals followed by illiquidity extraction."""
    return illiquidity(build_intervals(bars, delta_t, calendar))


def mean_variance_points(bars_by_id: Mapping[str, BarSeries], delta_t: int,
                         calendar: SessionCalendar,
                         skip_empty: bool = True) -> list[MeanVariancePoint]:
    """One (mean, variance) point per instrument at the given resolution.

    Instruments whose series end up with zero defined samples are skipped
    when ``skip_empty`` (they cannot carry a point), in instrument-id order.
    """
    points = []
    for iid in sorted(bars_by_id):
        ser = illiquidity_series(bars_by_id[iid], delta_t, calendar)
        if ser.defined_count == 0:
            if skip_empty:
                continue
            raise EmptySeriesError(f"no defined samples for {iid} at dt={delta_t}")
        points.append(mean_variance(ser))
    return points


# ---------------------------------------------------------------------------
# Additivity check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdditivityReport:
    """Block-level comparison of direct delta_t aggregation vs 1-min sums."""

    delta_t: int
    blocks_checked: int
    returns_additive: bool
    volumes_additive: bool
    illiquidity_additive: bool
    max_return_discrepancy: float
    max_volume_discrepancy: float
    max_illiquidity_discrepancy: float
    # (epoch_minute, direct value, summed value) at the largest illiquidity
    # discrepancy; None when every checked block is additive.
    witness: Optional[tuple[int, float, float]] = None


def _within(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    return (diff <= ADDITIVITY_RTOL * scale) | (diff <= ADDITIVITY_ATOL)


def check_additivity(series_1min: IntervalSeries, delta_t: int,
                     calendar: SessionCalendar,
                     direct: Optional[IntervalSeries] = None) -> AdditivityReport:
    """Verify returns/volumes add across blocks and measure how far
    illiquidity deviates from additivity.

    ``series_1min`` must be a 1-minute IntervalSeries. Block sums of its
    returns and volumes are compared against ``direct`` (the delta_t series
    built independently from the same bars) when given, else against the
    sums themselves. Illiquidity is compared as |R|/V of the block versus
    the sum of per-minute |r|/v, which is generically non-additive.
    """
    if series_1min.delta_t != 1:
        raise MismatchError(f"need a 1-minute series, got delta_t={series_1min.delta_t}")
    if delta_t < 1:
        raise ValueError("delta_t must be >= 1")
    if direct is not None:
        if direct.instrument_id != series_1min.instrument_id:
            raise MismatchError("instrument mismatch between series")
        if direct.delta_t != delta_t:
            raise MismatchError(f"direct series is at delta_t={direct.delta_t}, "
                                f"expected {delta_t}")
    direct_by_ts = ({int(t): i for i, t in enumerate(direct.timestamps)}
                    if direct is not None else None)

    sum_r, sum_v, sum_f, dir_r, dir_v, dir_f, block_ts = [], [], [], [], [], [], []

    ts = series_1min.timestamps
    day_ords = ts // MINUTES_PER_DAY
    minutes = ts % MINUTES_PER_DAY
    cal_days = {d.toordinal(): d for d in calendar.days}
    for day_ord in np.unique(day_ords):
        day = cal_days.get(int(day_ord))
        if day is None:
            raise MismatchError(f"series has samples on day {day_ord} outside the calendar")
        sel = day_ords == day_ord
        mins_d = minutes[sel]
        r_d = series_1min.returns[sel]
        v_d = series_1min.volumes[sel]
        comp_d = series_1min.complete[sel]
        for o, c in calendar.windows(day):
            in_w = (mins_d > o) & (mins_d <= c)
            if not np.any(in_w):
                continue
            offs = mins_d[in_w] - (o + 1)
            if np.any(offs >= c - o):
                raise MismatchError("sample minute outside its session window")
            w = c - o
            nb = w // delta_t  # truncated blocks can never be fully covered
            if nb == 0:
                continue
            cover = np.zeros(nb * delta_t, dtype=bool)
            rw = np.zeros(nb * delta_t)
            vw = np.zeros(nb * delta_t)
            keep = offs < nb * delta_t
            cover[offs[keep]] = comp_d[in_w][keep]
            rw[offs[keep]] = r_d[in_w][keep]
            vw[offs[keep]] = v_d[in_w][keep]
            full = cover.reshape(nb, delta_t).all(axis=1)
            if not np.any(full):
                continue
            starts = np.arange(nb) * delta_t
            r_sums = np.add.reduceat(rw, starts)
            v_sums = np.add.reduceat(vw, starts)
            vpos = (vw > 0).reshape(nb, delta_t).all(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                f_sums = np.add.reduceat(np.where(vw > 0, np.abs(rw) / np.where(vw > 0, vw, 1.0), 0.0), starts)
            base = int(day_ord) * MINUTES_PER_DAY
            ends = base + o + (np.arange(nb) + 1) * delta_t
            for k in np.nonzero(full)[0]:
                if direct_by_ts is not None:
                    i = direct_by_ts.get(int(ends[k]))
                    if i is None or not direct.complete[i]:
                        continue
                    dr = float(direct.returns[i])
                    dv = float(direct.volumes[i])
                else:
                    dr = float(r_sums[k])
                    dv = float(v_sums[k])
                block_ts.append(int(ends[k]))
                sum_r.append(float(r_sums[k]))
                sum_v.append(float(v_sums[k]))
                dir_r.append(dr)
                dir_v.append(dv)
                if vpos[k] and dv > 0:
                    sum_f.append(float(f_sums[k]))
                    dir_f.append(abs(dr) / dv)
                else:
                    sum_f.append(np.nan)
                    dir_f.append(np.nan)

    if not block_ts:
        return AdditivityReport(delta_t, 0, True, True, True, 0.0, 0.0, 0.0)

    sr, svol = np.array(sum_r), np.array(sum_v)
    dr_, dv_ = np.array(dir_r), np.array(dir_v)
    r_ok = _within(sr, dr_)
    v_ok = _within(svol, dv_)
    sf, df_ = np.array(sum_f), np.array(dir_f)
    have_f = np.isfinite(sf)
    f_ok = _within(sf[have_f], df_[have_f])

    max_r = float(np.max(np.abs(sr - dr_))) if len(sr) else 0.0
    max_v = float(np.max(np.abs(svol - dv_))) if len(svol) else 0.0
    witness = None
    max_f = 0.0
    if np.any(have_f):
        fdiff = np.abs(sf[have_f] - df_[have_f])
        j = int(np.argmax(fdiff))
        max_f = float(fdiff[j])
        if not bool(f_ok[j]):
            ts_f = np.array(block_ts)[have_f]
            witness = (int(ts_f[j]), float(df_[have_f][j]), float(sf[have_f][j]))

    return AdditivityReport(
        delta_t=delta_t,
        blocks_checked=len(block_ts),
        returns_additive=bool(np.all(r_ok)),
        volumes_additive=bool(np.all(v_ok)),
        illiquidity_additive=bool(np.all(f_ok)),
        max_return_discrepancy=max_r,
        max_volume_discrepancy=max_v,
        max_illiquidity_discrepancy=max_f,
        witness=witness,
    )
