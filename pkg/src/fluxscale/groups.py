"""Cross-sectional grouping of mean-variance points and grouped fits.

A GroupFitTable is a flat list of cells: one per (group label, market
column) pair, where the market column is "All" plus one column per market
in the optional filter. Cells with fewer instruments than ``min_n`` (or
whose usable points cannot support a regression) carry no fit and are
rendered as "/" in the TSV emission. Instruments lacking the metadata field
of the active key are excluded from the table and counted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import DegenerateAbscissaError, InsufficientPointsError
from .ingest import classify_market
from .model import (MARKET_ORDER, REGION_NAMES, SECTOR_NAMES, InstrumentMeta,
                    Market, MeanVariancePoint, TaylorFit)
from .taylor import fit_taylor

GROUP_KEYS = ("all", "market", "category", "sector", "region")

DEFAULT_MIN_N = 3

ALL_LABEL = "All"


@dataclass(frozen=True)
class GroupCell:
    """One table cell: a group restricted to one market column."""

    group: str
    market: str           # market column label, ALL_LABEL for the pooled column
    n: int                # instruments in the cell
    fit: Optional[TaylorFit]
    reason: Optional[str] = None  # why the cell has no fit
    points: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class GroupFitTable:
    key: str
    cells: tuple[GroupCell, ...]
    excluded: int        # instruments lacking the grouping metadata
    total_points: int

    def cell(self, group: str, market: str = ALL_LABEL) -> GroupCell:
        for c in self.cells:
            if c.group == group and c.market == market:
                return c
        raise KeyError((group, market))


def _market_of(code: str, meta: Optional[InstrumentMeta]) -> Optional[Market]:
    if meta is not None and meta.market is not None:
        return meta.market
    try:
        return classify_market(code)
    except ValueError:
        return None


def _group_value(key: str, code: str, meta: Optional[InstrumentMeta]):
    if key == "all":
        return ALL_LABEL
    if key == "market":
        market = _market_of(code, meta)
        return market.value if market else None
    if meta is None:
        return None
    return getattr(meta, key)


def _group_order(key: str, present: set) -> list[str]:
    if key == "market":
        return [m.value for m in MARKET_ORDER if m.value in present]
    if key == "sector":
        return [s for s in SECTOR_NAMES if s in present]
    if key == "region":
        return [r for r in REGION_NAMES if r in present]
    return sorted(present)


def group_fit(points: Iterable[MeanVariancePoint],
              metas: Iterable[InstrumentMeta],
              key: str,
              market_filter: Optional[Sequence[Market]] = None,
              min_n: int = DEFAULT_MIN_N) -> GroupFitTable:
    """Fit the scaling law per metadata group, optionally split by market.

    ``key`` is one of ``all | market | category | sector | region``. The
    market key falls back to code-prefix classification when metadata is
    missing; other keys exclude (and count) instruments without the field.
    A whole-sample row labelled "All" is prepended for the market key.
    """
    if key not in GROUP_KEYS:
        raise ValueError(f"unknown grouping key {key!r}; choose from {GROUP_KEYS}")
    pts = list(points)
    meta_by_code: Mapping[str, InstrumentMeta] = {m.code: m for m in metas}

    grouped: dict[str, list[MeanVariancePoint]] = {}
    markets: dict[str, Optional[Market]] = {}
    excluded = 0
    for p in pts:
        meta = meta_by_code.get(p.instrument_id)
        label = _group_value(key, p.instrument_id, meta)
        if label is None:
            excluded += 1
            continue
        grouped.setdefault(label, []).append(p)
        markets[p.instrument_id] = _market_of(p.instrument_id, meta)

    columns: list[tuple[str, Optional[Market]]] = [(ALL_LABEL, None)]
    if market_filter:
        wanted = set(market_filter)
        columns += [(m.value, m) for m in MARKET_ORDER if m in wanted]

    def make_cell(group: str, column: str, cell_points: list) -> GroupCell:
        n = len(cell_points)
        if n < min_n:
            return GroupCell(group, column, n, None, reason=f"n < {min_n}",
                             points=tuple(cell_points))
        try:
            fit = fit_taylor(cell_points)
        except InsufficientPointsError as exc:
            return GroupCell(group, column, n, None, reason=str(exc),
                             points=tuple(cell_points))
        except DegenerateAbscissaError as exc:
            return GroupCell(group, column, n, None, reason=str(exc),
                             points=tuple(cell_points))
        return GroupCell(group, column, n, fit, points=tuple(cell_points))

    cells: list[GroupCell] = []
    if key == "market":
        cells.append(make_cell(ALL_LABEL, ALL_LABEL, pts[:]))
    for group in _group_order(key, set(grouped)):
        members = grouped[group]
        for column, market in columns:
            if market is None:
                sub = members
            else:
                sub = [p for p in members if markets.get(p.instrument_id) is market]
            cells.append(make_cell(group, column, sub))

    return GroupFitTable(key=key, cells=tuple(cells), excluded=excluded,
                         total_points=len(pts))


# ---------------------------------------------------------------------------
# Market comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossMarketReport:
    """Classification of per-market exponents against the b = 2 threshold."""

    above_two: tuple[str, ...]
    below_two: tuple[str, ...]
    boundary: tuple[str, ...]
    a_share_above_two: Optional[bool]   # None when no A-share market has a fit
    b_share_below_two: Optional[bool]


def cross_market_comparison(table: GroupFitTable) -> CrossMarketReport:
    """Compare each market's point estimate of b against 2."""
    if table.key != "market":
        raise ValueError("cross_market_comparison needs a market-keyed table")
    above, below, boundary = [], [], []
    a_flags, b_flags = [], []
    for cell in table.cells:
        if cell.group == ALL_LABEL or cell.market != ALL_LABEL or cell.fit is None:
            continue
        b = cell.fit.b
        if b > 2.0:
            above.append(cell.group)
        elif b < 2.0:
            below.append(cell.group)
        else:
            boundary.append(cell.group)
        market = Market(cell.group)
        if market.is_a_share:
            a_flags.append(b > 2.0)
        else:
            b_flags.append(b < 2.0)
    return CrossMarketReport(
        above_two=tuple(above),
        below_two=tuple(below),
        boundary=tuple(boundary),
        a_share_above_two=all(a_flags) if a_flags else None,
        b_share_below_two=all(b_flags) if b_flags else None,
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

TSV_HEADER = ("group", "market", "n", "b", "se_b", "p_b", "log_a", "se_log_a",
              "p_a", "adj_r2")


def _fmt(value: float, full: bool) -> str:
    return f"{value:.17g}" if full else f"{value:.6g}"


def table_to_tsv(table: GroupFitTable, full_precision: bool = False) -> str:
    """Render a GroupFitTable with '/' markers for insufficient cells."""
    lines = ["\t".join(TSV_HEADER)]
    for cell in table.cells:
        if cell.fit is None:
            stats = ["/"] * 7
        else:
            f = cell.fit
            stats = [_fmt(v, full_precision) for v in
                     (f.b, f.se_b, f.p_b, f.log_a, f.se_log_a, f.p_a, f.adj_r2)]
        lines.append("\t".join([cell.group, cell.market, str(cell.n)] + stats))
    return "\n".join(lines) + "\n"


def scatter_rows(cell: GroupCell, full_precision: bool = False
                 ) -> tuple[str, Optional[str]]:
    """(scatter TSV, fitted-line TSV or None) for one table cell.

    The scatter lists log10 mean / log10 variance for every usable point;
    the line file holds the fitted segment's two endpoints on the same
    scale, enough to redraw the fit over the cloud.
    """
    import math

    pts = [p for p in cell.points if p.mean > 0 and p.variance > 0]
    lines = ["log10_m\tlog10_V"]
    xs = []
    for p in pts:
        x = math.log10(p.mean)
        xs.append(x)
        lines.append(f"{_fmt(x, full_precision)}\t"
                     f"{_fmt(math.log10(p.variance), full_precision)}")
    scatter = "\n".join(lines) + "\n"
    if cell.fit is None or not xs:
        return scatter, None
    x0, x1 = min(xs), max(xs)
    f = cell.fit
    seg = ["log10_m\tlog10_V_fit"]
    for x in (x0, x1):
        seg.append(f"{_fmt(x, full_precision)}\t"
                   f"{_fmt(f.log_a + f.b * x, full_precision)}")
    return scatter, "\n".join(seg) + "\n"
