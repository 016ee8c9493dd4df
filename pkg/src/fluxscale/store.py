"""Persisted intermediate store: per-instrument bar CSVs plus a manifest.

Layout under one directory:

* ``manifest.json``  instrument list with row counts and date ranges
* ``calendar.csv``   trading days and session windows (ingest schema)
* ``meta.csv``       instrument metadata (ingest schema)
* ``bars/<id>.csv``  validated bars of one instrument (ingest schema)

Everything is plain CSV/JSON so other tooling can read or regenerate it;
the writer is deterministic (no wall-clock fields), so identical inputs
produce byte-identical stores.
"""
from __future__ import annotations

import datetime as dt
import json
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np
import pandas as pd

from .errors import SchemaError
from .ingest import (BAR_COLUMNS, bars_to_csv, calendar_to_csv, metadata_to_csv,
                     parse_calendar, parse_metadata)
from .model import BarSeries, InstrumentMeta, SessionCalendar

MANIFEST_NAME = "manifest.json"
CALENDAR_NAME = "calendar.csv"
META_NAME = "meta.csv"
BARS_DIR = "bars"
SCHEMA_VERSION = 1


def write_store(path, bars_by_id,
                calendar: SessionCalendar, metas: Iterable[InstrumentMeta],
                extra: Optional[dict] = None) -> dict:
    """Write a complete store; returns the manifest dict.

    ``bars_by_id`` may be a mapping or an id-sorted iterable of
    (instrument_id, BarSeries) pairs; the latter is streamed, one
    instrument in memory at a time.
    """
    root = Path(path)
    (root / BARS_DIR).mkdir(parents=True, exist_ok=True)
    if isinstance(bars_by_id, Mapping):
        pairs = ((iid, bars_by_id[iid]) for iid in sorted(bars_by_id))
    else:
        pairs = bars_by_id
    entries = []
    total = 0
    for iid, series in pairs:
        fname = f"{BARS_DIR}/{iid}.csv"
        (root / fname).write_text(bars_to_csv(series), encoding="utf-8")
        first = dt.date.fromordinal(int(series.day_ordinals[0])).isoformat()
        last = dt.date.fromordinal(int(series.day_ordinals[-1])).isoformat()
        entries.append({"id": iid, "file": fname, "rows": len(series),
                        "first_date": first, "last_date": last})
        total += len(series)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "instrument_count": len(entries),
        "total_rows": total,
        "calendar": CALENDAR_NAME,
        "metadata": META_NAME,
        "instruments": entries,
    }
    if extra:
        manifest.update(extra)
    (root / CALENDAR_NAME).write_text(calendar_to_csv(calendar), encoding="utf-8")
    (root / META_NAME).write_text(metadata_to_csv(metas), encoding="utf-8")
    (root / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_manifest(path) -> dict:
    root = Path(path)
    mf = root / MANIFEST_NAME
    if not mf.is_file():
        raise SchemaError(f"not a store (no {MANIFEST_NAME}): {root}")
    manifest = json.loads(mf.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported store schema_version in {mf}")
    return manifest


def load_calendar(path) -> SessionCalendar:
    manifest = read_manifest(path)
    with open(Path(path) / manifest["calendar"], encoding="utf-8") as fh:
        return parse_calendar(fh)


def load_metadata(path) -> list[InstrumentMeta]:
    manifest = read_manifest(path)
    with open(Path(path) / manifest["metadata"], encoding="utf-8") as fh:
        metas, report = parse_metadata(fh)
    if report.rows_rejected:
        raise SchemaError(f"store metadata has {report.rows_rejected} bad rows: "
                          f"{dict(report.reasons)}")
    return metas


def _read_bar_file(path: Path, iid: str) -> BarSeries:
    df = pd.read_csv(path, dtype={"instrument_id": str, "date": str, "minute": str,
                                  "close": np.float64, "dollar_volume": np.float64},
                     float_precision="round_trip")
    if tuple(df.columns) != BAR_COLUMNS:
        raise SchemaError(f"{path}: unexpected columns {list(df.columns)}")
    inv_d, uniq_dates = pd.factorize(df["date"].to_numpy())
    day_ords = np.array([dt.date.fromisoformat(s).toordinal() for s in uniq_dates],
                        dtype=np.int64)[inv_d]
    inv_m, uniq_mins = pd.factorize(df["minute"].to_numpy())
    mins = np.array([int(s[:2]) * 60 + int(s[3:]) for s in uniq_mins],
                    dtype=np.int64)[inv_m]
    closes = df["close"].to_numpy()
    vols = df["dollar_volume"].to_numpy()
    em = day_ords * 1440 + mins
    if len(em) == 0:
        raise SchemaError(f"{path}: no rows")
    if np.any(np.diff(em) <= 0):
        raise SchemaError(f"{path}: bars unsorted or duplicated; re-run ingest")
    if not (np.all(closes > 0) and np.all(vols >= 0)):
        raise SchemaError(f"{path}: invalid price/volume; re-run ingest")
    return BarSeries(iid, day_ords, mins, closes, vols, validate=False)


def iter_bars(path, ids: Optional[Iterable[str]] = None
              ) -> Iterator[tuple[str, BarSeries]]:
    """Yield (instrument_id, BarSeries) in manifest order."""
    root = Path(path)
    manifest = read_manifest(root)
    wanted = set(ids) if ids is not None else None
    for entry in manifest["instruments"]:
        iid = entry["id"]
        if wanted is not None and iid not in wanted:
            continue
        yield iid, _read_bar_file(root / entry["file"], iid)


def load_bars(path, ids: Optional[Iterable[str]] = None) -> dict[str, BarSeries]:
    return dict(iter_bars(path, ids))
