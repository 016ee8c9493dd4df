"""Interval illiquidity aggregation and variance-mean scaling analysis.

Pipeline: minute bars -> delta_t interval returns/volumes -> interval
illiquidity |r|/v -> per-instrument (mean, variance) -> log-log power-law
fits, grouped tables, and exponent-versus-interval sweeps, validated
against seeded synthetic universes with analytically known exponents.
"""

from .aggregate import (AdditivityReport, IntervalSeries, build_intervals,
                        check_additivity, illiquidity, illiquidity_series,
                        mean_variance_points)
from .errors import (DegenerateAbscissaError, EmptySeriesError, FluxscaleError,
                     InsufficientPointsError, MismatchError,
                     RejectionRateError, SchemaError)
from .groups import (CrossMarketReport, GroupCell, GroupFitTable,
                     cross_market_comparison, group_fit, table_to_tsv)
from .ingest import (DEFAULT_PREFIX_MAP, IngestReport, classify_market,
                     parse_bars, parse_calendar, parse_metadata)
from .model import (BarSeries, IlliquiditySeries, InstrumentMeta, Market,
                    MeanVariancePoint, MinuteBar, SessionCalendar,
                    SummaryStats, SweepCurve, SweepEntry, TaylorFit)
from .sweep import (DEFAULT_GRID, find_peak_and_plateau, fit_log_regime,
                    sweep_dt)
from .synth import (SynthSpec, gen_bar_level_market, gen_value_ensemble,
                    write_synth_dataset)
from .taylor import LineFit, fit_taylor, linefit, mean_variance, summary_stats

__version__ = "0.1.0"

__all__ = [
    "AdditivityReport", "BarSeries", "CrossMarketReport", "DEFAULT_GRID",
    "DEFAULT_PREFIX_MAP", "DegenerateAbscissaError", "EmptySeriesError",
    "FluxscaleError", "GroupCell", "GroupFitTable", "IlliquiditySeries",
    "IngestReport", "InstrumentMeta", "InsufficientPointsError",
    "IntervalSeries", "LineFit", "Market", "MeanVariancePoint", "MinuteBar",
    "MismatchError", "RejectionRateError", "SchemaError", "SessionCalendar",
    "SummaryStats", "SweepCurve", "SweepEntry", "SynthSpec", "TaylorFit",
    "build_intervals", "check_additivity", "classify_market",
    "cross_market_comparison", "find_peak_and_plateau", "fit_log_regime",
    "fit_taylor", "gen_bar_level_market", "gen_value_ensemble", "group_fit",
    "illiquidity", "illiquidity_series", "linefit", "mean_variance",
    "mean_variance_points", "parse_bars", "parse_calendar", "parse_metadata",
    "summary_stats", "sweep_dt", "table_to_tsv", "write_synth_dataset",
]
