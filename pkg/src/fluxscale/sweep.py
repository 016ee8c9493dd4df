"""Dependence of the scaling exponent on the aggregation interval.

For each delta_t in a grid the pipeline is rerun (intervals, illiquidity,
mean-variance points, fit) and the fitted exponents are assembled into a
SweepCurve with three descriptors: the peak location dt_max, the slope of
b against log10(delta_t) over the pre-peak regime, and the mean exponent
over the tail plateau detected after the peak.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .aggregate import _day_window_slices, build_intervals, illiquidity
from .errors import (DegenerateAbscissaError, EmptySeriesError,
                     InsufficientPointsError)
from .groups import _market_of
from .model import (BarSeries, InstrumentMeta, MeanVariancePoint,
                    SessionCalendar, SweepCurve, SweepEntry)
from .taylor import LineFit, fit_taylor, linefit, mean_variance

# All divisors of the 240-minute session day.
DEFAULT_GRID = (1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 16, 20, 24, 30, 40, 48, 60,
                80, 120, 240)

DEFAULT_PLATEAU_EPSILON = 0.05

SCOPE_ALL = "all"
SCOPE_PER_MARKET = "per-market"


@dataclass(frozen=True)
class PeakPlateau:
    dt_max: int
    stable_level: float
    no_plateau: bool


def _peak_index(entries: Sequence[SweepEntry]) -> int:
    return max(range(len(entries)),
               key=lambda i: (entries[i].fit.b, -entries[i].delta_t))


def _peak_plateau(entries: Sequence[SweepEntry], eps: float) -> PeakPlateau:
    bs = [e.fit.b for e in entries]
    n = len(entries)
    i_max = _peak_index(entries)
    start = n - 1
    while start - 1 > i_max and abs(bs[start] - bs[start - 1]) < eps:
        start -= 1
    run = n - start
    if i_max < n - 1 and run >= 2:
        return PeakPlateau(entries[i_max].delta_t, float(np.mean(bs[start:])), False)
    return PeakPlateau(entries[i_max].delta_t, float(bs[-1]), True)


def find_peak_and_plateau(curve, plateau_epsilon: float = DEFAULT_PLATEAU_EPSILON
                          ) -> PeakPlateau:
    """Peak location and tail plateau level of a sweep curve.

    The plateau is the longest suffix of entries strictly after the peak in
    which every successive exponent change is below ``plateau_epsilon``;
    when no such suffix of length >= 2 exists, the last entry's exponent is
    reported with ``no_plateau`` set. Requires at least 4 entries.
    """
    entries = curve.entries if isinstance(curve, SweepCurve) else tuple(curve)
    if len(entries) < 4:
        raise InsufficientPointsError(
            f"peak/plateau detection needs >= 4 entries, got {len(entries)}",
            usable=len(entries))
    return _peak_plateau(entries, plateau_epsilon)


def fit_log_regime(curve, regime_end: Optional[int] = None) -> LineFit:
    """OLS of the exponent against log10(delta_t) over delta_t <= regime_end.

    ``regime_end`` defaults to the curve's dt_max (the pre-peak rise).
    Requires at least 3 entries inside the regime.
    """
    if isinstance(curve, SweepCurve):
        entries = curve.entries
        if regime_end is None:
            regime_end = curve.dt_max
    else:
        entries = tuple(curve)
        if regime_end is None:
            regime_end = _peak_plateau(entries, DEFAULT_PLATEAU_EPSILON).dt_max \
                if entries else 0
    regime = [e for e in entries if e.delta_t <= regime_end]
    if len(regime) < 3:
        raise InsufficientPointsError(
            f"log-regime fit needs >= 3 entries at delta_t <= {regime_end}, "
            f"got {len(regime)}", usable=len(regime))
    x = np.log10([e.delta_t for e in regime])
    y = np.array([e.fit.b for e in regime])
    return linefit(x, y)


# ---------------------------------------------------------------------------
# Sweep driver
# ---------------------------------------------------------------------------


def normalize_grid(grid: Iterable[int]) -> tuple[int, ...]:
    out = sorted({int(g) for g in grid})
    if not out:
        raise ValueError("empty delta_t grid")
    if out[0] < 1:
        raise ValueError(f"grid values must be >= 1, got {out[0]}")
    return tuple(out)


def assemble_curve(entries: Sequence[SweepEntry],
                   omitted: Sequence[tuple[int, str]] = (),
                   plateau_epsilon: float = DEFAULT_PLATEAU_EPSILON) -> SweepCurve:
    """Attach peak, log-regime, and plateau descriptors to fitted entries."""
    entries = tuple(sorted(entries, key=lambda e: e.delta_t))
    if not entries:
        raise InsufficientPointsError("no sweep entries survived", usable=0)
    if len(entries) >= 4:
        peak = _peak_plateau(entries, plateau_epsilon)
    else:
        i_max = _peak_index(entries)
        peak = PeakPlateau(entries[i_max].delta_t, entries[-1].fit.b, True)
    try:
        log_slope = float(fit_log_regime(entries, regime_end=peak.dt_max).slope)
    except (InsufficientPointsError, DegenerateAbscissaError):
        log_slope = None
    return SweepCurve(entries=entries, dt_max=peak.dt_max, log_slope=log_slope,
                      stable_level=peak.stable_level, no_plateau=peak.no_plateau,
                      omitted=tuple(omitted))


def sweep_points(bars, grid: Sequence[int], calendar: SessionCalendar,
                 ) -> dict[int, list[MeanVariancePoint]]:
    """Mean-variance points for every grid delta_t, one pass over the bars.

    ``bars`` is a mapping or an id-sorted iterable of (id, BarSeries); each
    instrument is loaded once and aggregated at every delta_t, which matches
    per-delta_t pipeline runs bit for bit.
    """
    grid = normalize_grid(grid)
    pairs = (sorted(bars.items()) if isinstance(bars, Mapping) else bars)
    points: dict[int, list[MeanVariancePoint]] = {g: [] for g in grid}
    for iid, series in pairs:
        slices = _day_window_slices(series, calendar)
        for g in grid:
            ser = illiquidity(build_intervals(series, g, calendar, _slices=slices))
            if ser.defined_count:
                points[g].append(mean_variance(ser))
    return points


def sweep_dt(bars, grid: Sequence[int], calendar: SessionCalendar,
             scope: str = SCOPE_ALL,
             metas: Optional[Iterable[InstrumentMeta]] = None,
             plateau_epsilon: float = DEFAULT_PLATEAU_EPSILON
             ) -> dict[str, SweepCurve]:
    """Sweep curves keyed by scope label ("all", or one label per market).

    Grid values whose fit preconditions fail are omitted from the curve and
    recorded in ``omitted`` with the reason.
    """
    if scope not in (SCOPE_ALL, SCOPE_PER_MARKET):
        raise ValueError(f"unknown scope {scope!r}")
    grid = normalize_grid(grid)
    points = sweep_points(bars, grid, calendar)

    if scope == SCOPE_ALL:
        split: dict[str, dict[int, list[MeanVariancePoint]]] = {SCOPE_ALL: points}
    else:
        meta_by_code = {m.code: m for m in (metas or [])}
        split = {}
        for g, pts in points.items():
            for p in pts:
                market = _market_of(p.instrument_id,
                                    meta_by_code.get(p.instrument_id))
                if market is None:
                    continue
                split.setdefault(market.value, {g2: [] for g2 in grid})[g].append(p)

    curves: dict[str, SweepCurve] = {}
    for label in sorted(split):
        entries: list[SweepEntry] = []
        omitted: list[tuple[int, str]] = []
        for g in grid:
            try:
                entries.append(SweepEntry(g, fit_taylor(split[label][g])))
            except (InsufficientPointsError, DegenerateAbscissaError) as exc:
                omitted.append((g, str(exc)))
        if entries:
            curves[label] = assemble_curve(entries, omitted, plateau_epsilon)
    return curves


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

CURVE_HEADER = ("delta_t", "b", "se_b", "log_a", "adj_r2", "n")


def curve_to_tsv(curve: SweepCurve, full_precision: bool = False) -> str:
    fmt = (lambda v: f"{v:.17g}") if full_precision else (lambda v: f"{v:.6g}")
    lines = ["\t".join(CURVE_HEADER)]
    for e in curve.entries:
        f = e.fit
        lines.append("\t".join([str(e.delta_t), fmt(f.b), fmt(f.se_b),
                                fmt(f.log_a), fmt(f.adj_r2), str(f.n)]))
    return "\n".join(lines) + "\n"


def curve_sidecar(curve: SweepCurve) -> dict:
    """JSON-ready descriptor block accompanying the curve TSV."""
    return {
        "dt_max": curve.dt_max,
        "log_slope": curve.log_slope,
        "stable_level": curve.stable_level,
        "flags": {"no_plateau": curve.no_plateau},
        "omitted": [{"delta_t": g, "reason": r} for g, r in curve.omitted],
    }
