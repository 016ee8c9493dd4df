"""Parsing and validation of bar, metadata, and calendar CSV files.

File schemas (all UTF-8 CSV with a header row):

* bars:     ``instrument_id,date,minute,close,dollar_volume``
            date ISO-8601, minute HH:MM exchange local, close > 0,
            dollar_volume >= 0. Bar timestamps are interval END labels.
* metadata: ``code,category,sector,region,market,listing_date,delisting_date``
            every field but code may be empty.
* calendar: ``date,open1,close1,open2,close2`` (second window optional).

Malformed rows are rejected and counted per reason, not fatal, unless the
overall rejection rate exceeds the configured threshold. A malformed header
is always a hard SchemaError.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional, Union

import numpy as np
import pandas as pd

from .errors import RejectionRateError, SchemaError
from .model import (CATEGORY_LETTERS, MINUTES_PER_DAY, REGION_NAMES,
                    SECTOR_NAMES, BarSeries, InstrumentMeta, Market,
                    SessionCalendar, is_valid_code, parse_minute)

BAR_COLUMNS = ("instrument_id", "date", "minute", "close", "dollar_volume")
META_COLUMNS = ("code", "category", "sector", "region", "market",
                "listing_date", "delisting_date")
CALENDAR_COLUMNS = ("date", "open1", "close1", "open2", "close2")

DEFAULT_REJECTION_THRESHOLD = 0.10
# The rate test is skipped for tiny files where a single bad row would trip
# it; isolated rejections there are still counted, just not fatal.
REJECTION_RATE_MIN_ROWS = 20

# Venue assignment by leading digits of the 6-digit code; longest prefix
# wins. Configurable because the SME-board/second-board assignment differs
# between data vendors.
DEFAULT_PREFIX_MAP: Mapping[str, Market] = {
    "000": Market.SZMB,
    "001": Market.SZMB,
    "300": Market.SZSMEB,
    "002": Market.SZSB,
    "600": Market.SHA,
    "200": Market.SZB,
    "9009": Market.SHB,
}

_MARKET_NAMES = {m.value: m for m in Market}


@dataclass
class IngestReport:
    """Row accounting for one parse run; read = accepted + rejected."""

    rows_read: int = 0
    rows_accepted: int = 0
    rows_rejected: int = 0
    reasons: Counter = field(default_factory=Counter)

    def reject(self, reason: str, count: int = 1):
        self.rows_rejected += count
        self.reasons[reason] += count

    def merge(self, other: "IngestReport") -> "IngestReport":
        merged = IngestReport(
            self.rows_read + other.rows_read,
            self.rows_accepted + other.rows_accepted,
            self.rows_rejected + other.rows_rejected,
            self.reasons + other.reasons,
        )
        return merged

    def check(self):
        if self.rows_read != self.rows_accepted + self.rows_rejected:
            raise AssertionError("ingest accounting violated: "
                                 f"{self.rows_read} != {self.rows_accepted} + "
                                 f"{self.rows_rejected}")

    def as_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "rows_rejected": self.rows_rejected,
            "reasons": dict(sorted(self.reasons.items())),
        }


# ---------------------------------------------------------------------------
# Market classification
# ---------------------------------------------------------------------------


def classify_market(code: str, prefix_map: Optional[Mapping[str, Market]] = None
                    ) -> Optional[Market]:
    """Market of a 6-digit code by longest matching prefix; None = unclassified."""
    if not is_valid_code(code):
        raise ValueError(f"not a 6-digit code: {code!r}")
    pmap = DEFAULT_PREFIX_MAP if prefix_map is None else prefix_map
    for prefix in sorted(pmap, key=len, reverse=True):
        if code.startswith(prefix):
            return pmap[prefix]
    return None


# ---------------------------------------------------------------------------
# Bar files
# ---------------------------------------------------------------------------


def _as_text(source) -> IO[str]:
    if isinstance(source, (str, bytes)):
        return io.StringIO(source.decode("utf-8") if isinstance(source, bytes) else source)
    if isinstance(source, io.BufferedIOBase) or (hasattr(source, "mode") and "b" in source.mode):
        return io.TextIOWrapper(source, encoding="utf-8")
    return source


def _check_header(actual: Iterable[str], expected: tuple[str, ...], what: str):
    actual = [a.strip() for a in actual]
    if sorted(actual) != sorted(expected):
        raise SchemaError(f"{what} header mismatch: expected {list(expected)}, "
                          f"got {actual}")


_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_MINUTE_RE = re.compile(r"^([01]\d|2[0-3]):[0-5]\d$")


def _parse_date_column(raw: pd.Series) -> np.ndarray:
    """Day ordinals (int64), -1 where unparseable. Vectorized over uniques."""
    uniq, inverse = np.unique(raw.to_numpy(dtype=object), return_inverse=True)
    ords = np.empty(len(uniq), dtype=np.int64)
    for i, s in enumerate(uniq):
        if isinstance(s, str) and _DATE_RE.match(s):
            try:
                ords[i] = dt.date.fromisoformat(s).toordinal()
                continue
            except ValueError:
                pass
        ords[i] = -1
    return ords[inverse]


def _parse_minute_column(raw: pd.Series) -> np.ndarray:
    uniq, inverse = np.unique(raw.to_numpy(dtype=object), return_inverse=True)
    mins = np.empty(len(uniq), dtype=np.int64)
    for i, s in enumerate(uniq):
        mins[i] = (parse_minute(s) if isinstance(s, str) and _MINUTE_RE.match(s)
                   else -1)
    return mins[inverse]


def _parse_float_column(raw: pd.Series) -> np.ndarray:
    """Correctly rounded string-to-float conversion, NaN where unparseable.

    pandas' fast to_numeric parser can be a ULP off, which would break the
    exact serialize/re-parse round-trip, so valid entries are reconverted
    through numpy's strtod.
    """
    coerced = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
    ok = ~np.isnan(coerced)
    if np.any(ok):
        exact = np.asarray(raw.to_numpy(dtype=object)[ok], dtype=np.float64)
        coerced[ok] = exact
    return coerced


def parse_bars(source, calendar: SessionCalendar, *,
               rejection_threshold: float = DEFAULT_REJECTION_THRESHOLD
               ) -> tuple[dict[str, BarSeries], IngestReport]:
    """Parse a bar CSV into per-instrument, timestamp-sorted series.

    Rows are rejected (with a per-reason count) for unparseable fields,
    non-positive prices, negative volumes, timestamps outside the calendar's
    session windows, and duplicated (instrument, timestamp) keys — the first
    occurrence in file order wins. A rejection rate above
    ``rejection_threshold`` raises RejectionRateError; a bad header raises
    SchemaError.
    """
    text = _as_text(source)
    header_line = text.readline()
    if not header_line:
        raise SchemaError("bar file is empty (no header)")
    _check_header(header_line.rstrip("\r\n").split(","), BAR_COLUMNS, "bar file")

    body = text.read()
    report = IngestReport()
    rows_total = body.count("\n") + (0 if body.endswith("\n") or not body else 1)
    report.rows_read = rows_total
    if rows_total == 0:
        return {}, report

    df = pd.read_csv(
        io.StringIO(header_line + body),
        dtype={"instrument_id": str, "date": str, "minute": str,
               "close": str, "dollar_volume": str},
        keep_default_na=False, on_bad_lines="skip", engine="c",
    )
    n_malformed = rows_total - len(df)
    if n_malformed:
        report.reject("malformed", n_malformed)

    ids = df["instrument_id"].to_numpy(dtype=object)
    id_ok = np.array([isinstance(s, str) and is_valid_code(s) for s in ids])
    day_ords = _parse_date_column(df["date"])
    mins = _parse_minute_column(df["minute"])
    closes = _parse_float_column(df["close"])
    vols = _parse_float_column(df["dollar_volume"])

    bad_code = ~id_ok
    bad_ts = (day_ords < 0) | (mins < 0)
    bad_price = ~(np.isfinite(closes) & (closes > 0))
    bad_volume = ~(np.isfinite(vols) & (vols >= 0))
    in_sess = np.zeros(len(df), dtype=bool)
    ts_ok = ~bad_ts
    if np.any(ts_ok):
        in_sess[ts_ok] = calendar.session_mask(day_ords[ts_ok], mins[ts_ok])
    out_of_session = ts_ok & ~in_sess

    # one reason per row, first matching in this order
    reason_masks = (("bad code", bad_code),
                    ("bad timestamp", bad_ts),
                    ("bad price", bad_price),
                    ("bad volume", bad_volume),
                    ("out of session", out_of_session))
    rejected = np.zeros(len(df), dtype=bool)
    for name, mask in reason_masks:
        fresh = mask & ~rejected
        if np.any(fresh):
            report.reject(name, int(np.sum(fresh)))
            rejected |= fresh

    valid = ~rejected
    epoch = day_ords * MINUTES_PER_DAY + mins
    keys = pd.DataFrame({"id": ids[valid], "em": epoch[valid]})
    dup = keys.duplicated(keep="first").to_numpy()
    if np.any(dup):
        report.reject("duplicate", int(np.sum(dup)))
        keep_idx = np.nonzero(valid)[0][~dup]
    else:
        keep_idx = np.nonzero(valid)[0]

    report.rows_accepted = len(keep_idx)
    report.check()
    if (report.rows_read >= REJECTION_RATE_MIN_ROWS
            and report.rows_rejected / report.rows_read > rejection_threshold):
        raise RejectionRateError(
            f"rejection rate {report.rows_rejected / report.rows_read:.1%} exceeds "
            f"threshold {rejection_threshold:.1%}", report=report)

    out: dict[str, BarSeries] = {}
    if len(keep_idx):
        kid = ids[keep_idx]
        kem = epoch[keep_idx]
        order = np.lexsort((kem, kid))
        kid, kem = kid[order], kem[order]
        kd = day_ords[keep_idx][order]
        km = mins[keep_idx][order]
        kc = closes[keep_idx][order]
        kv = vols[keep_idx][order]
        uniq_ids, starts = np.unique(kid, return_index=True)
        bounds = np.append(starts, len(kid))
        for i, iid in enumerate(uniq_ids):
            lo, hi = bounds[i], bounds[i + 1]
            out[str(iid)] = BarSeries(str(iid), kd[lo:hi], km[lo:hi],
                                      kc[lo:hi], kv[lo:hi], validate=False)
    return out, report


def bars_to_csv(series: BarSeries) -> str:
    """Serialize one instrument back onto the bar schema (exact round-trip).

    Floats are printed with 17 significant digits, which parse back to the
    identical double.
    """
    uniq_days, inv_d = np.unique(series.day_ordinals, return_inverse=True)
    date_strs = np.array([dt.date.fromordinal(int(d)).isoformat() for d in uniq_days])
    uniq_mins, inv_m = np.unique(series.minutes, return_inverse=True)
    minute_strs = np.array([f"{int(m) // 60:02d}:{int(m) % 60:02d}" for m in uniq_mins])

    closes = np.char.mod("%.17g", series.closes)
    v = series.volumes
    if len(v) and np.all(v == v[0]):
        vols = np.full(len(v), repr(float(v[0])))
    else:
        vols = np.char.mod("%.17g", v)

    prefix = series.instrument_id + ","
    body = np.char.add(np.char.add(date_strs[inv_d], ","), minute_strs[inv_m])
    body = np.char.add(np.char.add(body, ","), closes)
    body = np.char.add(np.char.add(body, ","), vols)
    lines = [",".join(BAR_COLUMNS)]
    lines.extend(np.char.add(prefix, body).tolist())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Metadata files
# ---------------------------------------------------------------------------


def _opt_date(value: str, row_errors: list):
    if not value:
        return None
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        row_errors.append("bad date")
        return None


def parse_metadata(source, prefix_map: Optional[Mapping[str, Market]] = None
                   ) -> tuple[list[InstrumentMeta], IngestReport]:
    """Parse the instrument metadata CSV.

    Empty fields other than ``code`` are allowed. An absent market is filled
    from the code prefix via classify_market; a declared market conflicting
    with the prefix classification rejects the row. Unknown category,
    sector, or region values reject the row with a reason.
    """
    text = _as_text(source)
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("metadata file is empty (no header)") from None
    _check_header(header, META_COLUMNS, "metadata file")
    col = {name: header.index(name) for name in META_COLUMNS}

    metas: list[InstrumentMeta] = []
    report = IngestReport()
    for row in reader:
        if not row:
            continue
        report.rows_read += 1
        if len(row) != len(META_COLUMNS):
            report.reject("malformed")
            continue
        code = row[col["code"]].strip()
        if not is_valid_code(code):
            report.reject("bad code")
            continue
        category = row[col["category"]].strip() or None
        if category is not None and category not in CATEGORY_LETTERS:
            report.reject("unknown category")
            continue
        sector = row[col["sector"]].strip() or None
        if sector is not None and sector not in SECTOR_NAMES:
            report.reject("unknown sector")
            continue
        region = row[col["region"]].strip() or None
        if region is not None and region not in REGION_NAMES:
            report.reject("unknown region")
            continue
        market_raw = row[col["market"]].strip()
        classified = classify_market(code, prefix_map)
        if not market_raw:
            market = classified
        elif market_raw not in _MARKET_NAMES:
            report.reject("unknown market")
            continue
        else:
            market = _MARKET_NAMES[market_raw]
            if classified is not None and market is not classified:
                report.reject("market mismatch")
                continue
        errs: list = []
        listing = _opt_date(row[col["listing_date"]].strip(), errs)
        delisting = _opt_date(row[col["delisting_date"]].strip(), errs)
        if errs:
            report.reject("bad date")
            continue
        metas.append(InstrumentMeta(code=code, market=market, category=category,
                                    sector=sector, region=region,
                                    listing_date=listing, delisting_date=delisting))
        report.rows_accepted += 1
    report.check()
    return metas, report


def metadata_to_csv(metas: Iterable[InstrumentMeta]) -> str:
    rows = [",".join(META_COLUMNS)]
    for m in metas:
        rows.append(",".join([
            m.code,
            m.category or "",
            m.sector or "",
            m.region or "",
            m.market.value if m.market else "",
            m.listing_date.isoformat() if m.listing_date else "",
            m.delisting_date.isoformat() if m.delisting_date else "",
        ]))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Calendar files
# ---------------------------------------------------------------------------


def parse_calendar(source) -> SessionCalendar:
    """Parse the trading-day calendar CSV into a SessionCalendar."""
    text = _as_text(source)
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("calendar file is empty (no header)") from None
    _check_header(header, CALENDAR_COLUMNS, "calendar file")
    col = {name: header.index(name) for name in CALENDAR_COLUMNS}
    sessions: dict[dt.date, list[tuple[int, int]]] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != len(CALENDAR_COLUMNS):
            raise SchemaError(f"calendar row has {len(row)} fields: {row!r}")
        try:
            day = dt.date.fromisoformat(row[col["date"]].strip())
            windows = [(parse_minute(row[col["open1"]].strip()),
                        parse_minute(row[col["close1"]].strip()))]
            o2, c2 = row[col["open2"]].strip(), row[col["close2"]].strip()
            if o2 or c2:
                if not (o2 and c2):
                    raise ValueError("open2/close2 must both be present or both empty")
                windows.append((parse_minute(o2), parse_minute(c2)))
        except ValueError as exc:
            raise SchemaError(f"bad calendar row {row!r}: {exc}") from None
        if day in sessions:
            raise SchemaError(f"duplicate calendar date {day}")
        sessions[day] = windows
    if not sessions:
        raise SchemaError("calendar has no trading days")
    try:
        return SessionCalendar(sessions)
    except ValueError as exc:
        raise SchemaError(f"bad calendar: {exc}") from None


def calendar_to_csv(calendar: SessionCalendar) -> str:
    rows = [",".join(CALENDAR_COLUMNS)]
    for day in calendar.days:
        wins = calendar.windows(day)
        fields = [day.isoformat()]
        for o, c in wins:
            fields += [f"{o // 60:02d}:{o % 60:02d}", f"{c // 60:02d}:{c % 60:02d}"]
        if len(wins) == 1:
            fields += ["", ""]
        elif len(wins) != 2:
            raise ValueError("calendar CSV supports at most two windows per day")
        rows.append(",".join(fields))
    return "\n".join(rows) + "\n"
