"""Synthetic universes with analytically known variance-mean scaling.

Value families draw i.i.d. interval illiquidity samples per instrument with
the instrument mean placed log-uniformly in [m_lo, m_hi]:

* ``poisson-flux``        f ~ Poisson(mu)            V = mu        (b=1, a=1)
* ``gamma-fixed-shape``   f ~ Gamma(k, mu/k)         V = mu^2/k    (b=2, a=1/k)
* ``lognormal-power-law`` log-variance solved from
                          s^2 = ln(1 + a mu^(b-2))   V = a mu^b    (given a, b)

``bar-level-market`` generates generic random-walk minute bars (with
optional injected pathologies) to exercise ingestion and aggregation
end to end.

Value families can also be materialized as minute bars: each drawn value x
becomes a log-price increment of x * v0 with constant per-minute dollar
volume v0, signed coherently within each session window, so that the
aggregated illiquidity at ANY block size delta_t equals the block sum of
the drawn values divided by delta_t. Sums of Poisson stay Poisson, so this
encoding preserves the family's scaling law across the whole sweep grid.

All randomness comes from numpy's PCG64 seeded via SeedSequence(seed,
spawn_key=(instrument_index, stream)), so per-instrument generation is
reproducible and order-independent.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (CATEGORY_LETTERS, CN_SESSION_WINDOWS, MINUTES_PER_DAY,
                    REGION_NAMES, SECTOR_NAMES, BarSeries, IlliquiditySeries,
                    InstrumentMeta, SessionCalendar)
from .ingest import classify_market

VALUE_FAMILIES = ("poisson-flux", "gamma-fixed-shape", "lognormal-power-law")
BAR_FAMILY = "bar-level-market"
FAMILIES = VALUE_FAMILIES + (BAR_FAMILY,)

START_DATE = dt.date(2020, 1, 6)

# Value-family bar emission uses one long session so that every divisor of
# 240 in the default sweep grid also divides the window length (after the
# per-window anchor block is excluded, a window equal to delta_t would
# otherwise yield no samples at all).
VALUE_SESSION_WINDOWS = ((9 * 60 + 30, 17 * 60 + 30),)  # 480 minutes

# bar-level-market per-instrument parameter ranges (log-uniform)
BAR_SIGMA_RANGE = (3e-4, 3e-3)
BAR_VOLUME_RANGE = (1e4, 1e6)

_PREFIX_CYCLE = (("000", 1000), ("300", 1000), ("002", 1000),
                 ("600", 1000), ("200", 1000), ("9009", 100))


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic universe."""

    family: str
    instrument_count: int
    samples_per_instrument: int
    m_lo: float = 1e-8
    m_hi: float = 1e-6
    seed: int = 0
    gamma_shape: Optional[float] = None
    target_b: Optional[float] = None
    target_log_a: Optional[float] = None
    duplicate_rate: float = 0.0
    zero_volume_rate: float = 0.0
    missing_rate: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.instrument_count < 3:
            raise ValueError("instrument_count must be >= 3")
        if self.samples_per_instrument < 1:
            raise ValueError("samples_per_instrument must be >= 1")
        if not (self.m_lo > 0 and self.m_hi > self.m_lo):
            raise ValueError("need 0 < m_lo < m_hi")
        if self.family == "gamma-fixed-shape":
            if self.gamma_shape is None or self.gamma_shape <= 0:
                raise ValueError("gamma-fixed-shape needs gamma_shape > 0")
        if self.family == "lognormal-power-law":
            if self.target_b is None or self.target_log_a is None:
                raise ValueError("lognormal-power-law needs target_b and target_log_a")
        for name in ("duplicate_rate", "zero_volume_rate", "missing_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 0.5:
                raise ValueError(f"{name} must be in [0, 0.5]")
        if any((self.duplicate_rate, self.zero_volume_rate, self.missing_rate)) \
                and self.family != BAR_FAMILY:
            raise ValueError("pathology rates apply to bar-level-market only")

    @property
    def is_value_family(self) -> bool:
        return self.family in VALUE_FAMILIES


# ---------------------------------------------------------------------------
# Deterministic naming and seeding
# ---------------------------------------------------------------------------


def instrument_codes(n: int) -> list[str]:
    """n distinct 6-digit codes cycling over the market prefixes."""
    if n < 1:
        raise ValueError("need n >= 1")
    counters = {p: 0 for p, _ in _PREFIX_CYCLE}
    caps = dict(_PREFIX_CYCLE)
    codes = []
    slot = 0
    while len(codes) < n:
        prefix, _ = _PREFIX_CYCLE[slot % len(_PREFIX_CYCLE)]
        slot += 1
        if counters[prefix] >= caps[prefix]:
            if all(counters[p] >= caps[p] for p in counters):
                raise ValueError(f"cannot mint {n} distinct codes")
            continue
        suffix_len = 6 - len(prefix)
        codes.append(prefix + f"{counters[prefix]:0{suffix_len}d}")
        counters[prefix] += 1
    return codes


def _rng(seed: int, instrument_index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(instrument_index, stream)))


def _mean_of(spec: SynthSpec, rng: np.random.Generator) -> float:
    lo, hi = math.log10(spec.m_lo), math.log10(spec.m_hi)
    return 10.0 ** rng.uniform(lo, hi)


def _draw_values(spec: SynthSpec, rng: np.random.Generator, mu: float,
                 n: int) -> np.ndarray:
    if spec.family == "poisson-flux":
        return rng.poisson(mu, n).astype(np.float64)
    if spec.family == "gamma-fixed-shape":
        return rng.gamma(spec.gamma_shape, mu / spec.gamma_shape, n)
    if spec.family == "lognormal-power-law":
        a = 10.0 ** spec.target_log_a
        s2 = math.log1p(a * mu ** (spec.target_b - 2.0))
        return rng.lognormal(math.log(mu) - s2 / 2.0, math.sqrt(s2), n)
    raise ValueError(f"{spec.family} is not a value family")


def default_calendar(spec: SynthSpec) -> SessionCalendar:
    """Enough consecutive trading days to hold samples_per_instrument."""
    windows = VALUE_SESSION_WINDOWS if spec.is_value_family else CN_SESSION_WINDOWS
    usable = sum(c - o - 1 for o, c in windows)
    n_days = -(-spec.samples_per_instrument // usable)
    days = [START_DATE + dt.timedelta(days=i) for i in range(n_days)]
    return SessionCalendar.uniform(days, windows)


def _grid_labels(calendar: SessionCalendar) -> tuple[np.ndarray, np.ndarray]:
    """(day_ordinals, minutes) of every session minute label, in time order."""
    days, mins = [], []
    for day in calendar.days:
        for o, c in calendar.windows(day):
            lab = np.arange(o + 1, c + 1, dtype=np.int64)
            mins.append(lab)
            days.append(np.full(len(lab), day.toordinal(), dtype=np.int64))
    return np.concatenate(days), np.concatenate(mins)


def synth_metadata(codes: list[str]) -> list[InstrumentMeta]:
    """Deterministic metadata: market from the code prefix, category/sector/
    region cycling through the canonical vocabularies."""
    metas = []
    for i, code in enumerate(codes):
        metas.append(InstrumentMeta(
            code=code,
            market=classify_market(code),
            category=CATEGORY_LETTERS[i % len(CATEGORY_LETTERS)],
            sector=SECTOR_NAMES[i % len(SECTOR_NAMES)],
            region=REGION_NAMES[i % len(REGION_NAMES)],
        ))
    return metas


# ---------------------------------------------------------------------------
# Value ensembles (in-memory oracle)
# ---------------------------------------------------------------------------


def gen_value_ensemble(spec: SynthSpec) -> list[IlliquiditySeries]:
    """One IlliquiditySeries of i.i.d. draws per synthetic instrument."""
    if not spec.is_value_family:
        raise ValueError("gen_value_ensemble needs a value family")
    calendar = default_calendar(spec)
    day_ords, mins = _grid_labels(calendar)
    ts = (day_ords * MINUTES_PER_DAY + mins)[:spec.samples_per_instrument]
    if len(ts) < spec.samples_per_instrument:
        raise AssertionError("calendar shorter than requested sample count")
    codes = instrument_codes(spec.instrument_count)
    out = []
    for i, code in enumerate(codes):
        rng = _rng(spec.seed, i)
        mu = _mean_of(spec, rng)
        values = _draw_values(spec, rng, mu, spec.samples_per_instrument)
        out.append(IlliquiditySeries(code, 1, ts, values, validate=False))
    return out


# ---------------------------------------------------------------------------
# Value families materialized as minute bars
# ---------------------------------------------------------------------------


def value_volume_unit(spec: SynthSpec) -> float:
    """Constant per-minute dollar volume for the value-bar encoding.

    Chosen so a session window's worth of log-price increments stays near
    1e-3, keeping prices bounded; rounded to one significant digit so the
    CSV representation is short.
    """
    raw = 1e-3 / (480.0 * spec.m_hi)
    return float(f"{raw:.0e}")


def _value_bar_series(spec: SynthSpec, code: str, index: int,
                      calendar: SessionCalendar, v0: float) -> BarSeries:
    rng = _rng(spec.seed, index)
    mu = _mean_of(spec, rng)
    day_ords, mins = _grid_labels(calendar)
    n = len(day_ords)
    x = _draw_values(spec, rng, mu, n)

    lnp0 = math.log(10.0)
    lnp = lnp0
    log_path = np.empty(n)
    k = 0
    for day in calendar.days:
        for o, c in calendar.windows(day):
            w = c - o
            sign = 1.0 if lnp <= lnp0 else -1.0
            seg = lnp + sign * v0 * np.cumsum(x[k:k + w])
            log_path[k:k + w] = seg
            lnp = float(seg[-1])
            k += w
    closes = np.exp(log_path)
    volumes = np.full(n, v0)
    return BarSeries(code, day_ords, mins, closes, volumes, validate=False)


# ---------------------------------------------------------------------------
# Bar-level market simulator
# ---------------------------------------------------------------------------


def _bar_level_series(spec: SynthSpec, code: str, index: int,
                      calendar: SessionCalendar) -> Optional[BarSeries]:
    rng = _rng(spec.seed, index)
    sigma = 10.0 ** rng.uniform(math.log10(BAR_SIGMA_RANGE[0]),
                                math.log10(BAR_SIGMA_RANGE[1]))
    vscale = 10.0 ** rng.uniform(math.log10(BAR_VOLUME_RANGE[0]),
                                 math.log10(BAR_VOLUME_RANGE[1]))
    day_ords, mins = _grid_labels(calendar)
    n = len(day_ords)
    closes = 10.0 * np.exp(sigma * np.cumsum(rng.standard_normal(n)))
    volumes = vscale * rng.lognormal(0.0, 1.0, n)

    path_rng = _rng(spec.seed, index, stream=1)
    if spec.zero_volume_rate > 0:
        volumes = np.where(path_rng.random(n) < spec.zero_volume_rate, 0.0, volumes)

    day_ords = day_ords.copy()
    mins = mins.copy()
    if spec.duplicate_rate > 0:
        # feed-style resends: identical rows repeated right after the original
        dup = np.nonzero(path_rng.random(n) < spec.duplicate_rate)[0]
        if len(dup):
            insert_at = dup + 1
            day_ords = np.insert(day_ords, insert_at, day_ords[dup])
            mins = np.insert(mins, insert_at, mins[dup])
            closes = np.insert(closes, insert_at, closes[dup])
            volumes = np.insert(volumes, insert_at, volumes[dup])
            n = len(day_ords)
    if spec.missing_rate > 0:
        keep = path_rng.random(n) >= spec.missing_rate
        day_ords, mins = day_ords[keep], mins[keep]
        closes, volumes = closes[keep], volumes[keep]
    if len(day_ords) == 0:
        return None
    return BarSeries(code, day_ords, mins, closes, volumes, validate=False)


def gen_bar_level_market(spec: SynthSpec,
                         calendar: Optional[SessionCalendar] = None):
    """(bars_by_id, metas, calendar) for the bar-level-market family."""
    if spec.family != BAR_FAMILY:
        raise ValueError("gen_bar_level_market needs family bar-level-market")
    calendar = calendar or default_calendar(spec)
    codes = instrument_codes(spec.instrument_count)
    bars = {}
    for i, code in enumerate(codes):
        series = _bar_level_series(spec, code, i, calendar)
        if series is not None:
            bars[code] = series
    return bars, synth_metadata(codes), calendar


# ---------------------------------------------------------------------------
# Dataset emission
# ---------------------------------------------------------------------------


def iter_synth_bars(spec: SynthSpec, calendar: Optional[SessionCalendar] = None):
    """Yield (code, BarSeries) in code order plus (metas, calendar) context.

    Returns a tuple (iterator, metas, calendar); the iterator generates one
    instrument at a time so large universes never sit in memory whole.
    """
    calendar = calendar or default_calendar(spec)
    codes = instrument_codes(spec.instrument_count)
    indexed = sorted(zip(codes, range(len(codes))))
    metas = synth_metadata(codes)

    if spec.is_value_family:
        v0 = value_volume_unit(spec)

        def gen():
            for code, idx in indexed:
                yield code, _value_bar_series(spec, code, idx, calendar, v0)
    else:
        def gen():
            for code, idx in indexed:
                series = _bar_level_series(spec, code, idx, calendar)
                if series is not None:
                    yield code, series

    return gen(), metas, calendar


def write_synth_dataset(spec: SynthSpec, out_dir,
                        calendar: Optional[SessionCalendar] = None) -> dict:
    """Materialize a synthetic universe as a complete store directory."""
    from .store import write_store

    bars_iter, metas, calendar = iter_synth_bars(spec, calendar)
    extra = {"synth": {
        "family": spec.family,
        "seed": spec.seed,
        "instrument_count": spec.instrument_count,
        "samples_per_instrument": spec.samples_per_instrument,
        "pathology_rates": {
            "duplicate": spec.duplicate_rate,
            "zero_volume": spec.zero_volume_rate,
            "missing": spec.missing_rate,
        },
    }}
    return write_store(out_dir, bars_iter, calendar, metas, extra=extra)
