"""Domain types shared by every stage of the pipeline.

Everything here is immutable after construction and safe to share across
worker threads. Bulk containers (BarSeries, IlliquiditySeries,
IntervalSeries in :mod:`fluxscale.aggregate`) keep their payload in
read-only numpy arrays; scalar records are frozen dataclasses.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

MINUTES_PER_DAY = 1440


# ---------------------------------------------------------------------------
# Markets and metadata vocabularies
# ---------------------------------------------------------------------------


class Market(Enum):
    """The six mainland Chinese equity markets, keyed by listing venue/board."""

    SZMB = "SZMB"      # Shenzhen Main Board
    SZSMEB = "SZSMEB"  # Shenzhen Small & Medium Enterprise Board
    SZSB = "SZSB"      # Shenzhen Second Board
    SHA = "SHA"        # Shanghai A-share Main Board
    SZB = "SZB"        # Shenzhen B-share
    SHB = "SHB"        # Shanghai B-share

    @property
    def is_a_share(self) -> bool:
        return self in (Market.SZMB, Market.SZSMEB, Market.SZSB, Market.SHA)

    @property
    def is_b_share(self) -> bool:
        return not self.is_a_share


MARKET_ORDER = (Market.SZMB, Market.SZSMEB, Market.SZSB, Market.SHA,
                Market.SZB, Market.SHB)

# Industry category letters; O and P are defined by the classification
# guideline but carry no listed stocks in this universe.
CATEGORY_LETTERS = tuple("ABCDEFGHIJKLMNQRS")

SECTOR_NAMES = (
    "Agriculture",
    "Architectural ornament",
    "Automobile",
    "Bank",
    "Building material",
    "Catering & tourism",
    "Chemical",
    "Commerce & trade",
    "Computer",
    "Electrical equipment",
    "Electrical household appliances",
    "Electronic component",
    "Ferrous metal",
    "Financial",
    "Food & beverage",
    "Light industry manufacturing",
    "Mechanical equipment",
    "Medias",
    "Medical biology",
    "Mining",
    "Miscellaneous",
    "Nonferrous metal",
    "Property",
    "Public utility",
    "Telecommunication",
    "Textile & clothing",
    "Transportation & infrastructure",
    "War industry",
)

REGION_NAMES = (
    "Anhui", "Beijing", "Chongqing", "Fujian", "Gansu", "Guangdong",
    "Guangxi", "Guizhou", "Hainan", "Hebei", "Heilongjiang", "Henan",
    "Hubei", "Hunan", "Inner Mongolia", "Jiangsu", "Jiangxi", "Jilin",
    "Liaoning", "Ningxia", "Qinghai", "Shaanxi", "Shandong", "Shanghai",
    "Shanxi", "Sichuan", "Tianjin", "Tibet", "Xijiang", "Yunnan", "Zhejiang",
)


def is_valid_code(code: str) -> bool:
    """True when ``code`` is exactly six decimal digits."""
    return len(code) == 6 and code.isdigit()


# ---------------------------------------------------------------------------
# Time helpers
# ---------------------------------------------------------------------------


def epoch_minute(date: dt.date, minute: int) -> int:
    """Absolute minute index: proleptic-Gregorian day ordinal * 1440 + minute."""
    return date.toordinal() * MINUTES_PER_DAY + minute


def split_epoch_minute(em: int) -> tuple[dt.date, int]:
    day, minute = divmod(int(em), MINUTES_PER_DAY)
    return dt.date.fromordinal(day), minute


def format_minute(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


def parse_minute(text: str) -> int:
    """Parse ``HH:MM`` into a minute-of-day integer. Raises ValueError."""
    if len(text) != 5 or text[2] != ":":
        raise ValueError(f"not an HH:MM time: {text!r}")
    h, m = int(text[:2]), int(text[3:])
    if not (0 <= h < 24 and 0 <= m < 60):
        raise ValueError(f"time out of range: {text!r}")
    return h * 60 + m


# ---------------------------------------------------------------------------
# Session calendar
# ---------------------------------------------------------------------------


class SessionCalendar:
    """Trading days and their intraday session windows.

    A window ``(open, close)`` covers the bars labelled ``open+1 .. close``:
    bar timestamps are interval END times, the bar spanning ``(t-1, t]``
    carries label ``t``, so the label equal to the window open itself is not
    a tradable minute.
    """

    __slots__ = ("_days", "_windows", "_day_ordinals")

    def __init__(self, sessions: Mapping[dt.date, Sequence[tuple[int, int]]]):
        days = sorted(sessions)
        windows = {}
        for day in days:
            wins = tuple((int(o), int(c)) for o, c in sessions[day])
            if not wins:
                raise ValueError(f"calendar day {day} has no session window")
            prev_close = -1
            for o, c in wins:
                if not (0 <= o < c < MINUTES_PER_DAY):
                    raise ValueError(f"bad session window {o}-{c} on {day}")
                if o < prev_close:
                    raise ValueError(f"overlapping session windows on {day}")
                prev_close = c
            windows[day] = wins
        self._days = tuple(days)
        self._windows = windows
        self._day_ordinals = np.array([d.toordinal() for d in days], dtype=np.int64)

    @classmethod
    def uniform(cls, days: Iterable[dt.date],
                windows: Sequence[tuple[int, int]]) -> "SessionCalendar":
        """Same session windows on every listed trading day."""
        wins = tuple(windows)
        return cls({day: wins for day in days})

    @property
    def days(self) -> tuple[dt.date, ...]:
        return self._days

    def windows(self, day: dt.date) -> tuple[tuple[int, int], ...]:
        return self._windows[day]

    def session_length(self, day: dt.date) -> int:
        return sum(c - o for o, c in self._windows[day])

    def __contains__(self, day: dt.date) -> bool:
        return day in self._windows

    def __len__(self) -> int:
        return len(self._days)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SessionCalendar):
            return NotImplemented
        return self._windows == other._windows

    def in_session(self, day: dt.date, minute: int) -> bool:
        wins = self._windows.get(day)
        if wins is None:
            return False
        return any(o < minute <= c for o, c in wins)

    def session_mask(self, day_ordinals: np.ndarray, minutes: np.ndarray) -> np.ndarray:
        """Vectorized in_session over parallel arrays of day ordinals and minutes."""
        day_ordinals = np.asarray(day_ordinals, dtype=np.int64)
        minutes = np.asarray(minutes, dtype=np.int64)
        ok = np.zeros(len(day_ordinals), dtype=bool)
        for day_ord in np.unique(day_ordinals):
            wins = self._windows.get(dt.date.fromordinal(int(day_ord)))
            if wins is None:
                continue
            sel = day_ordinals == day_ord
            m = minutes[sel]
            hit = np.zeros(len(m), dtype=bool)
            for o, c in wins:
                hit |= (m > o) & (m <= c)
            ok[sel] = hit
        return ok


# The venue schedule the real data follows: 09:30-11:30 and 13:00-15:00,
# 240 session minutes per day.
CN_SESSION_WINDOWS = ((9 * 60 + 30, 11 * 60 + 30), (13 * 60, 15 * 60))


# ---------------------------------------------------------------------------
# Bars
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinuteBar:
    """One price/volume observation for one instrument at one minute label."""

    instrument_id: str
    date: dt.date
    minute: int  # minute-of-day label, interval end convention
    close: float
    dollar_volume: float

    def __post_init__(self):
        if not is_valid_code(self.instrument_id):
            raise ValueError(f"instrument_id must be 6 digits: {self.instrument_id!r}")
        if not self.close > 0:
            raise ValueError(f"close must be positive: {self.close}")
        if self.dollar_volume < 0:
            raise ValueError(f"dollar_volume must be non-negative: {self.dollar_volume}")
        if not 0 <= self.minute < MINUTES_PER_DAY:
            raise ValueError(f"minute out of range: {self.minute}")

    @property
    def timestamp(self) -> dt.datetime:
        return dt.datetime.combine(self.date, dt.time(self.minute // 60, self.minute % 60))

    @property
    def epoch_minute(self) -> int:
        return epoch_minute(self.date, self.minute)


class BarSeries(Sequence):
    """Timestamp-sorted minute bars of one instrument, stored columnar.

    Behaves as a read-only ``Sequence[MinuteBar]`` while keeping the payload
    in numpy arrays so aggregation can stay vectorized.
    """

    __slots__ = ("instrument_id", "day_ordinals", "minutes", "closes", "volumes")

    def __init__(self, instrument_id: str, day_ordinals, minutes, closes, volumes,
                 validate: bool = True):
        self.instrument_id = instrument_id
        self.day_ordinals = np.ascontiguousarray(day_ordinals, dtype=np.int64)
        self.minutes = np.ascontiguousarray(minutes, dtype=np.int64)
        self.closes = np.ascontiguousarray(closes, dtype=np.float64)
        self.volumes = np.ascontiguousarray(volumes, dtype=np.float64)
        n = len(self.day_ordinals)
        if not (len(self.minutes) == len(self.closes) == len(self.volumes) == n):
            raise ValueError("column length mismatch")
        if validate and n:
            em = self.epoch_minutes
            if np.any(np.diff(em) <= 0):
                raise ValueError(f"bars of {instrument_id} not strictly increasing in time")
            if np.any(self.closes <= 0) or np.any(self.volumes < 0):
                raise ValueError(f"bars of {instrument_id} violate price/volume bounds")
        for name in ("day_ordinals", "minutes", "closes", "volumes"):
            getattr(self, name).flags.writeable = False

    @classmethod
    def from_bars(cls, bars: Iterable[MinuteBar]) -> "BarSeries":
        bars = sorted(bars, key=lambda b: b.epoch_minute)
        if not bars:
            raise ValueError("empty bar sequence")
        iid = bars[0].instrument_id
        if any(b.instrument_id != iid for b in bars):
            raise ValueError("mixed instruments in one BarSeries")
        return cls(
            iid,
            [b.date.toordinal() for b in bars],
            [b.minute for b in bars],
            [b.close for b in bars],
            [b.dollar_volume for b in bars],
        )

    @property
    def epoch_minutes(self) -> np.ndarray:
        return self.day_ordinals * MINUTES_PER_DAY + self.minutes

    def __len__(self) -> int:
        return len(self.day_ordinals)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return MinuteBar(
            self.instrument_id,
            dt.date.fromordinal(int(self.day_ordinals[i])),
            int(self.minutes[i]),
            float(self.closes[i]),
            float(self.volumes[i]),
        )

    def __iter__(self) -> Iterator[MinuteBar]:
        for i in range(len(self)):
            yield self[i]

    def with_volumes(self, volumes) -> "BarSeries":
        """Copy of this series with the volume column replaced."""
        return BarSeries(self.instrument_id, self.day_ordinals, self.minutes,
                         self.closes, volumes)


# ---------------------------------------------------------------------------
# Instrument metadata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstrumentMeta:
    """Static descriptors of one instrument; optional fields may be None."""

    code: str
    market: Optional[Market] = None
    category: Optional[str] = None
    sector: Optional[str] = None
    region: Optional[str] = None
    listing_date: Optional[dt.date] = None
    delisting_date: Optional[dt.date] = None

    def __post_init__(self):
        if not is_valid_code(self.code):
            raise ValueError(f"code must be 6 digits: {self.code!r}")
        if self.category is not None and self.category not in CATEGORY_LETTERS:
            raise ValueError(f"unknown category: {self.category!r}")
        if self.sector is not None and self.sector not in SECTOR_NAMES:
            raise ValueError(f"unknown sector: {self.sector!r}")
        if self.region is not None and self.region not in REGION_NAMES:
            raise ValueError(f"unknown region: {self.region!r}")


# ---------------------------------------------------------------------------
# Derived series and statistics
# ---------------------------------------------------------------------------


class IlliquiditySeries:
    """Interval illiquidity |r|/v for one instrument at one resolution.

    Only defined samples are stored: intervals with zero traded volume or
    missing constituent bars are absent, not recorded as zero.
    """

    __slots__ = ("instrument_id", "delta_t", "timestamps", "values")

    def __init__(self, instrument_id: str, delta_t: int, timestamps, values,
                 validate: bool = True):
        self.instrument_id = instrument_id
        self.delta_t = int(delta_t)
        self.timestamps = np.ascontiguousarray(timestamps, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if self.delta_t < 1:
            raise ValueError("delta_t must be a positive integer")
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps/values length mismatch")
        if validate and len(self.values):
            if np.any(self.values < 0):
                raise ValueError("illiquidity values must be non-negative")
            if np.any(np.diff(self.timestamps) <= 0):
                raise ValueError("timestamps must be strictly increasing")
        self.timestamps.flags.writeable = False
        self.values.flags.writeable = False

    @property
    def defined_count(self) -> int:
        return len(self.values)

    def scaled(self, factor: float) -> "IlliquiditySeries":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return IlliquiditySeries(self.instrument_id, self.delta_t,
                                 self.timestamps, self.values * factor,
                                 validate=False)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class MeanVariancePoint:
    """Sample mean and population variance of one illiquidity series."""

    instrument_id: str
    delta_t: int
    mean: float
    variance: float
    sample_count: int

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.variance < 0:
            raise ValueError("variance must be non-negative")
        if self.sample_count == 1 and self.variance != 0:
            raise ValueError("single-sample variance must be 0")


@dataclass(frozen=True)
class TaylorFit:
    """Log-log OLS fit of variance against mean with full inference.

    ``b`` is the slope (scaling exponent), ``log_a`` the base-10 intercept.
    Standard errors are the plain OLS errors; p-values are two-sided from
    the t distribution with ``n - 2`` degrees of freedom. On an exact
    (zero-residual) fit both standard errors and p-values are reported as 0.
    """

    n: int
    b: float
    se_b: float
    p_b: float
    log_a: float
    se_log_a: float
    p_a: float
    adj_r2: float
    excluded: int = 0  # points dropped for mean <= 0 or variance <= 0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("a fit needs at least 3 points")
        if self.se_b < 0 or self.se_log_a < 0:
            raise ValueError("standard errors must be non-negative")
        if self.adj_r2 > 1 + 1e-12:
            raise ValueError("adjusted R^2 cannot exceed 1")


@dataclass(frozen=True)
class SummaryStats:
    """Distribution summary of a pooled illiquidity sample.

    ``median`` is the lower median for even counts. ``std`` is the
    population standard deviation; ``skewness``/``kurtosis`` are the third
    and fourth standardized moments (kurtosis is raw, Normal -> 3); both are
    NaN when the standard deviation is zero.
    """

    count: int
    max: float
    min: float
    mean: float
    median: float
    std: float
    skewness: float
    kurtosis: float

    def __post_init__(self):
        if not (self.min <= self.median <= self.max):
            raise ValueError("min <= median <= max violated")
        if self.std < 0:
            raise ValueError("std must be non-negative")


@dataclass(frozen=True)
class SweepEntry:
    delta_t: int
    fit: TaylorFit


@dataclass(frozen=True)
class SweepCurve:
    """Scaling exponent as a function of the aggregation interval.

    ``dt_max`` is the interval with the maximal fitted exponent (ties go to
    the smallest interval). ``log_slope`` is the slope of b against
    log10(delta_t) over the pre-peak regime (None when fewer than 3 entries
    fall in the regime). ``stable_level`` is the mean exponent over the
    detected tail plateau; when no plateau of length >= 2 exists it falls
    back to the last entry's exponent and ``no_plateau`` is set.
    """

    entries: tuple[SweepEntry, ...]
    dt_max: int
    log_slope: Optional[float]
    stable_level: float
    no_plateau: bool = False
    omitted: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        dts = [e.delta_t for e in self.entries]
        if any(b >= a for a, b in zip(dts[1:], dts)):
            raise ValueError("entries must be sorted by increasing delta_t, no duplicates")
        if self.entries:
            best = max(self.entries, key=lambda e: (e.fit.b, -e.delta_t))
            if self.dt_max != best.delta_t:
                raise ValueError("dt_max must be the delta_t of the maximal-b entry")

    @property
    def exponents(self) -> np.ndarray:
        return np.array([e.fit.b for e in self.entries])
