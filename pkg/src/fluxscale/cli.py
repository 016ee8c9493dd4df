"""Command-line surface: synth / ingest / fit / stats / sweep.

Exit codes: 0 success, 1 generic failure (including usage errors), 2 schema
error, 3 data-quality threshold exceeded, 4 insufficient data for the
requested computation. The FLUXSCALE_THREADS environment variable caps the
internal worker count; results are identical at any setting.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import aggregate, groups, ingest, store, sweep, synth
from .errors import (EmptySeriesError, FluxscaleError, InsufficientPointsError,
                     MismatchError, RejectionRateError, SchemaError)
from .model import BarSeries, Market
from .parallel import ordered_map, worker_count
from .taylor import fit_taylor, mean_variance, summary_stats

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_SCHEMA = 2
EXIT_QUALITY = 3
EXIT_INSUFFICIENT = 4

FAMILY_ALIASES = {
    "poisson": "poisson-flux",
    "gamma": "gamma-fixed-shape",
    "lognormal": "lognormal-power-law",
    "bar-market": "bar-level-market",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _fmt(value: float, full: bool) -> str:
    return f"{value:.17g}" if full else f"{value:.6g}"


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.-]+", "_", label)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    family = FAMILY_ALIASES.get(args.family, args.family)
    spec = synth.SynthSpec(
        family=family,
        instrument_count=args.instruments,
        samples_per_instrument=args.samples,
        m_lo=args.mean_lo,
        m_hi=args.mean_hi,
        seed=args.seed,
        gamma_shape=args.k,
        target_b=args.target_b,
        target_log_a=args.target_log_a,
        duplicate_rate=args.dup_rate,
        zero_volume_rate=args.zero_volume_rate,
        missing_rate=args.missing_rate,
    )
    manifest = synth.write_synth_dataset(spec, args.out)
    print(f"wrote {manifest['instrument_count']} instruments, "
          f"{manifest['total_rows']} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def _merge_bars(maps: list[dict[str, BarSeries]], report: ingest.IngestReport
                ) -> dict[str, BarSeries]:
    """Union per-file bar maps; cross-file duplicate timestamps keep the
    first file's row and count as rejections."""
    if len(maps) == 1:
        return maps[0]
    merged: dict[str, BarSeries] = {}
    for bar_map in maps:
        for iid, series in bar_map.items():
            if iid not in merged:
                merged[iid] = series
                continue
            a, b = merged[iid], series
            em = np.concatenate([a.epoch_minutes, b.epoch_minutes])
            arrival = np.arange(len(em))
            order = np.lexsort((arrival, em))
            em_sorted = em[order]
            dup = np.zeros(len(em), dtype=bool)
            dup[1:] = em_sorted[1:] == em_sorted[:-1]
            n_dup = int(dup.sum())
            if n_dup:
                report.reject("duplicate", n_dup)
                report.rows_accepted -= n_dup
            keep = order[~dup]
            cols = [np.concatenate([getattr(a, c), getattr(b, c)])[keep]
                    for c in ("day_ordinals", "minutes", "closes", "volumes")]
            merged[iid] = BarSeries(iid, *cols, validate=False)
    return merged


def cmd_ingest(args) -> int:
    with open(args.calendar, encoding="utf-8") as fh:
        calendar = ingest.parse_calendar(fh)
    with open(args.meta, encoding="utf-8") as fh:
        metas, meta_report = ingest.parse_metadata(fh)

    report = ingest.IngestReport()
    maps = []
    for path in args.bars:
        with open(path, encoding="utf-8") as fh:
            bar_map, file_report = ingest.parse_bars(
                fh, calendar, rejection_threshold=args.rejection_threshold)
        report = report.merge(file_report)
        maps.append(bar_map)
    bars = _merge_bars(maps, report)
    report.check()

    store.write_store(args.out, bars, calendar, metas)
    (Path(args.out) / "ingest_report.json").write_text(
        json.dumps({"bars": report.as_dict(), "metadata": meta_report.as_dict()},
                   indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"ingested {report.rows_accepted}/{report.rows_read} rows "
          f"({len(bars)} instruments) into {args.out}")
    if report.rows_rejected:
        print(f"rejected {report.rows_rejected}: {dict(sorted(report.reasons.items()))}")
    if meta_report.rows_rejected:
        print(f"metadata rows rejected {meta_report.rows_rejected}: "
              f"{dict(sorted(meta_report.reasons.items()))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _load_points(store_dir, delta_t):
    calendar = store.load_calendar(store_dir)
    manifest = store.read_manifest(store_dir)
    entries = manifest["instruments"]
    if not entries:
        raise EmptySeriesError(f"store {store_dir} holds no instruments")
    root = Path(store_dir)

    def one(entry):
        series = store._read_bar_file(root / entry["file"], entry["id"])
        ser = aggregate.illiquidity_series(series, delta_t, calendar)
        return mean_variance(ser) if ser.defined_count else None

    return [p for p in ordered_map(one, entries) if p is not None]


def cmd_fit(args) -> int:
    market_filter = [Market(m) for m in args.market_filter] if args.market_filter else None
    points = _load_points(args.store, args.dt)
    if not points:
        raise EmptySeriesError("no instrument produced a defined illiquidity sample")
    metas = store.load_metadata(args.store)
    table = groups.group_fit(points, metas, args.group,
                             market_filter=market_filter, min_n=args.min_n)
    full = args.precision == "full"
    tsv = groups.table_to_tsv(table, full_precision=full)
    sys.stdout.write(tsv)
    if table.excluded:
        print(f"# excluded {table.excluded} instruments lacking {args.group} metadata",
              file=sys.stderr)

    out_dir = Path(args.out) if args.out else Path(args.store) / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"fit_{args.group}_dt{args.dt}.tsv").write_text(tsv, encoding="utf-8")
    for cell in table.cells:
        label = _slug(f"{cell.group}_{cell.market}_dt{args.dt}")
        scatter, line = groups.scatter_rows(cell, full_precision=full)
        (out_dir / f"scatter_{label}.tsv").write_text(scatter, encoding="utf-8")
        if line is not None:
            (out_dir / f"line_{label}.tsv").write_text(line, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

STATS_HEADER = ("market", "n", "max", "min", "mean", "median", "std",
                "skewness", "kurtosis")


def cmd_stats(args) -> int:
    calendar = store.load_calendar(args.store)
    manifest = store.read_manifest(args.store)
    entries = manifest["instruments"]
    if not entries:
        raise EmptySeriesError(f"store {args.store} holds no instruments")
    metas = store.load_metadata(args.store)
    meta_by_code = {m.code: m for m in metas}
    root = Path(args.store)

    def one(entry):
        series = store._read_bar_file(root / entry["file"], entry["id"])
        ser = aggregate.illiquidity_series(series, args.dt, calendar)
        market = groups._market_of(entry["id"], meta_by_code.get(entry["id"]))
        return market.value if market else None, ser.values

    pools: dict[str, list[np.ndarray]] = {}
    for label, values in ordered_map(one, entries):
        if label is None or not len(values):
            continue
        pools.setdefault(label, []).append(values)
    if not pools:
        raise EmptySeriesError("no market produced a non-empty illiquidity pool")

    full = args.precision == "full"
    lines = ["\t".join(STATS_HEADER)]
    ordered = [m.value for m in groups.MARKET_ORDER if m.value in pools]
    for label in ordered:
        s = summary_stats(np.concatenate(pools[label]))
        cells = [label, str(s.count)]
        for v in (s.max, s.min, s.mean, s.median, s.std, s.skewness, s.kurtosis):
            cells.append("/" if isinstance(v, float) and np.isnan(v) else _fmt(v, full))
        lines.append("\t".join(cells))
    tsv = "\n".join(lines) + "\n"
    sys.stdout.write(tsv)
    out_dir = Path(args.out) if args.out else Path(args.store) / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"stats_market_dt{args.dt}.tsv").write_text(tsv, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_grid(text: str):
    if text == "default":
        return sweep.DEFAULT_GRID
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise _UsageError(f"bad grid: {text!r}") from None
    return sweep.normalize_grid(values)


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    calendar = store.load_calendar(args.store)
    manifest = store.read_manifest(args.store)
    if not manifest["instruments"]:
        raise EmptySeriesError(f"store {args.store} holds no instruments")
    metas = store.load_metadata(args.store)
    bars_iter = store.iter_bars(args.store)
    curves = sweep.sweep_dt(bars_iter, grid, calendar, scope=args.scope,
                            metas=metas, plateau_epsilon=args.plateau_eps)
    if not curves:
        raise InsufficientPointsError("no scope produced a sweep curve")

    full = args.precision == "full"
    out_dir = Path(args.out) if args.out else Path(args.store) / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)
    for label, curve in curves.items():
        slug = _slug(label)
        tsv = sweep.curve_to_tsv(curve, full_precision=full)
        (out_dir / f"sweep_{slug}.tsv").write_text(tsv, encoding="utf-8")
        (out_dir / f"sweep_{slug}.json").write_text(
            json.dumps(sweep.curve_sidecar(curve), indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        print(f"[{label}] dt_max={curve.dt_max} "
              f"log_slope={'NA' if curve.log_slope is None else _fmt(curve.log_slope, full)} "
              f"stable_level={_fmt(curve.stable_level, full)}"
              f"{' (no plateau)' if curve.no_plateau else ''}")
        for g, reason in curve.omitted:
            print(f"# [{label}] delta_t={g} omitted: {reason}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluxscale",
                     description="Interval illiquidity scaling analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic universe")
    p.add_argument("--family", required=True,
                   choices=sorted(set(synth.FAMILIES) | set(FAMILY_ALIASES)))
    p.add_argument("--instruments", type=int, default=100)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--mean-lo", type=float, default=1e-8)
    p.add_argument("--mean-hi", type=float, default=1e-6)
    p.add_argument("--k", type=float, default=None, help="gamma shape")
    p.add_argument("--target-b", type=float, default=None)
    p.add_argument("--target-log-a", type=float, default=None)
    p.add_argument("--dup-rate", type=float, default=0.0)
    p.add_argument("--zero-volume-rate", type=float, default=0.0)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate bar files into a store")
    p.add_argument("--bars", nargs="+", required=True)
    p.add_argument("--calendar", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejection-threshold", type=float,
                   default=ingest.DEFAULT_REJECTION_THRESHOLD)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="grouped scaling-law fits")
    p.add_argument("--store", required=True)
    p.add_argument("--dt", type=int, default=1)
    p.add_argument("--group", default="all", choices=groups.GROUP_KEYS)
    p.add_argument("--market-filter", nargs="+", default=None,
                   choices=[m.value for m in Market])
    p.add_argument("--min-n", type=int, default=groups.DEFAULT_MIN_N)
    p.add_argument("--out", default=None)
    p.add_argument("--precision", choices=("compact", "full"), default="compact")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("stats", help="pooled illiquidity summary per market")
    p.add_argument("--store", required=True)
    p.add_argument("--dt", type=int, default=1)
    p.add_argument("--group", default="market", choices=("market",))
    p.add_argument("--out", default=None)
    p.add_argument("--precision", choices=("compact", "full"), default="compact")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="exponent versus aggregation interval")
    p.add_argument("--store", required=True)
    p.add_argument("--grid", default="default",
                   help='comma-separated minutes or "default"')
    p.add_argument("--scope", default=sweep.SCOPE_ALL,
                   choices=(sweep.SCOPE_ALL, sweep.SCOPE_PER_MARKET))
    p.add_argument("--plateau-eps", type=float, default=sweep.DEFAULT_PLATEAU_EPSILON)
    p.add_argument("--out", default=None)
    p.add_argument("--precision", choices=("compact", "full"), default="compact")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        worker_count()  # fail fast on a malformed FLUXSCALE_THREADS
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_FAILURE
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except RejectionRateError as exc:
        print(f"rejection threshold exceeded: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(json.dumps(exc.report.as_dict(), indent=1, sort_keys=True),
                  file=sys.stderr)
        return EXIT_QUALITY
    except (InsufficientPointsError, EmptySeriesError) as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (FluxscaleError, MismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
