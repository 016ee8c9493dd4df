"""Shared fixtures and builders for the test suite."""
from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from fluxscale.model import (CN_SESSION_WINDOWS, BarSeries, SessionCalendar)

DAY0 = dt.date(2020, 1, 6)


@pytest.fixture
def cn_calendar():
    """Five consecutive days on the dual-session 240-minute schedule."""
    days = [DAY0 + dt.timedelta(days=i) for i in range(5)]
    return SessionCalendar.uniform(days, CN_SESSION_WINDOWS)


@pytest.fixture
def one_day_calendar():
    return SessionCalendar.uniform([DAY0], CN_SESSION_WINDOWS)


def dense_bars(instrument_id: str, calendar: SessionCalendar, closes=None,
               volumes=None, seed: int = 0) -> BarSeries:
    """A bar for every session minute; random-walk closes unless given."""
    day_ords, mins = [], []
    for day in calendar.days:
        for o, c in calendar.windows(day):
            lab = np.arange(o + 1, c + 1, dtype=np.int64)
            mins.append(lab)
            day_ords.append(np.full(len(lab), day.toordinal(), dtype=np.int64))
    day_ords = np.concatenate(day_ords)
    mins = np.concatenate(mins)
    n = len(mins)
    rng = np.random.default_rng(seed)
    if closes is None:
        closes = 10.0 * np.exp(np.cumsum(rng.normal(0.0, 1e-3, n)))
    if volumes is None:
        volumes = np.round(rng.uniform(100, 10_000, n))
    return BarSeries(instrument_id, day_ords, mins, np.asarray(closes, float),
                     np.asarray(volumes, float))


def bars_from_rows(instrument_id, rows):
    """rows: iterable of (date, minute, close, volume)."""
    day_ords = [r[0].toordinal() for r in rows]
    mins = [r[1] for r in rows]
    closes = [r[2] for r in rows]
    vols = [r[3] for r in rows]
    return BarSeries(instrument_id, day_ords, mins, closes, vols)
