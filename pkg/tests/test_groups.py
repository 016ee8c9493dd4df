"""Grouped fits, the market comparison, and TSV emission."""
import math

import numpy as np
import pytest

from fluxscale.groups import (ALL_LABEL, cross_market_comparison, group_fit,
                              scatter_rows, table_to_tsv)
from fluxscale.model import InstrumentMeta, Market, MeanVariancePoint
from fluxscale.taylor import fit_taylor

PREFIX = {Market.SZMB: "000", Market.SZSMEB: "300", Market.SZSB: "002",
          Market.SHA: "600", Market.SZB: "200", Market.SHB: "9009"}


def market_points(market, b, n=5, log_a=1.0, seed=1):
    """n points lying exactly on V = 10^log_a * m^b, coded for the market."""
    rng = np.random.default_rng(seed)
    pts = []
    prefix = PREFIX[market]
    for i in range(n):
        code = prefix + f"{i:0{6 - len(prefix)}d}"
        m = 10 ** rng.uniform(-8, -6)
        pts.append(MeanVariancePoint(code, 1, m, 10 ** log_a * m ** b, 100))
    return pts


def metas_for(points, **overrides):
    return [InstrumentMeta(code=p.instrument_id, **overrides) for p in points]


class TestGroupFit:
    def test_market_table_has_all_plus_six_rows(self):
        points = []
        for i, (market, b) in enumerate(zip(Market, (2.4, 2.8, 2.64, 2.28, 1.96, 1.61))):
            points += market_points(market, b, seed=i)
        table = group_fit(points, [], key="market")
        labels = [(c.group, c.market) for c in table.cells]
        assert labels[0] == (ALL_LABEL, ALL_LABEL)
        assert [g for g, _ in labels[1:]] == [m.value for m in Market]
        assert len(labels) == 7
        # each market row recovers its exact exponent
        for cell, b in zip(table.cells[1:], (2.4, 2.8, 2.64, 2.28, 1.96, 1.61)):
            assert cell.fit.b == pytest.approx(b, abs=1e-9)

    def test_market_falls_back_to_code_prefix(self):
        # no metadata at all: market classification still works
        points = market_points(Market.SHA, 2.3)
        table = group_fit(points, [], key="market")
        assert table.cell("SHA").n == 5
        assert table.excluded == 0

    def test_small_cells_marked_insufficient(self):
        points = market_points(Market.SZSB, 2.5, n=2)
        points += market_points(Market.SHA, 2.2, n=4)
        metas = metas_for(points, category="G")
        table = group_fit(points, metas, key="category",
                          market_filter=[Market.SZSB, Market.SHA])
        cell = table.cell("G", "SZSB")
        assert cell.n == 2 and cell.fit is None and "3" in cell.reason
        assert table.cell("G", "SHA").fit.b == pytest.approx(2.2, abs=1e-9)
        assert table.cell("G", ALL_LABEL).n == 6

    def test_empty_filter_cell_has_n_zero(self):
        points = market_points(Market.SHA, 2.2, n=4)
        metas = metas_for(points, category="C")
        table = group_fit(points, metas, key="category", market_filter=[Market.SZB])
        cell = table.cell("C", "SZB")
        assert cell.n == 0 and cell.fit is None

    def test_missing_metadata_excluded_and_counted(self):
        points = market_points(Market.SHA, 2.2, n=6)
        metas = metas_for(points[:4], sector="Chemical")
        table = group_fit(points, metas, key="sector")
        assert table.excluded == 2
        assert table.cell("Chemical").n == 4

    def test_single_group_matches_direct_fit(self):
        points = market_points(Market.SZMB, 2.33, n=40, seed=5)
        # perturb off the exact law so the fit is non-degenerate
        rng = np.random.default_rng(2)
        points = [MeanVariancePoint(p.instrument_id, 1, p.mean,
                                    p.variance * math.exp(rng.normal(0, 0.2)),
                                    p.sample_count) for p in points]
        table = group_fit(points, [], key="market")
        direct = fit_taylor(points)
        assert table.cell("SZMB").fit == direct

    def test_grouping_never_alters_points(self):
        points = market_points(Market.SZSMEB, 2.1, n=8)
        table = group_fit(points, metas_for(points, region="Anhui"), key="region")
        assert set(table.cell("Anhui").points) == set(points)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            group_fit([], [], key="constellation")

    def test_log_undefined_points_do_not_count_toward_fit(self):
        points = market_points(Market.SHA, 2.2, n=3)
        dead = [MeanVariancePoint("600900", 1, 0.0, 0.0, 1),
                MeanVariancePoint("600901", 1, 1e-7, 0.0, 1)]
        table = group_fit(points + dead, [], key="market")
        cell = table.cell("SHA")
        assert cell.n == 5 and cell.fit.n == 3 and cell.fit.excluded == 2


class TestCrossMarket:
    def test_a_above_b_below(self):
        points = []
        for i, (market, b) in enumerate(zip(Market, (2.40, 2.80, 2.64, 2.28, 1.96, 1.61))):
            points += market_points(market, b, seed=10 + i)
        report = cross_market_comparison(group_fit(points, [], key="market"))
        assert set(report.above_two) == {"SZMB", "SZSMEB", "SZSB", "SHA"}
        assert set(report.below_two) == {"SZB", "SHB"}
        assert report.a_share_above_two is True
        assert report.b_share_below_two is True
        assert report.boundary == ()

    def test_exact_two_is_boundary(self):
        points = market_points(Market.SHA, 2.0, n=5)
        report = cross_market_comparison(group_fit(points, [], key="market"))
        assert report.above_two == () and report.below_two == ()
        assert report.boundary == ("SHA",)

    def test_single_market(self):
        points = market_points(Market.SZB, 1.5, n=5)
        report = cross_market_comparison(group_fit(points, [], key="market"))
        assert report.below_two == ("SZB",)
        assert report.a_share_above_two is None
        assert report.b_share_below_two is True

    def test_needs_market_table(self):
        points = market_points(Market.SHA, 2.2, n=4)
        with pytest.raises(ValueError):
            cross_market_comparison(group_fit(points, [], key="all"))


class TestEmission:
    def test_tsv_shape_and_slash_markers(self):
        points = market_points(Market.SHA, 2.2, n=4) + market_points(Market.SZB, 1.9, n=2)
        table = group_fit(points, [], key="market")
        tsv = table_to_tsv(table)
        lines = tsv.strip().split("\n")
        assert lines[0].split("\t") == ["group", "market", "n", "b", "se_b", "p_b",
                                        "log_a", "se_log_a", "p_a", "adj_r2"]
        szb = next(l for l in lines if l.startswith("SZB"))
        assert szb.split("\t")[2:] == ["2"] + ["/"] * 7
        sha = next(l for l in lines if l.startswith("SHA"))
        assert float(sha.split("\t")[3]) == pytest.approx(2.2, abs=1e-6)

    def test_scatter_and_line_emission(self):
        points = market_points(Market.SHA, 2.2, n=6)
        table = group_fit(points, [], key="all")
        scatter, line = scatter_rows(table.cells[0])
        srows = scatter.strip().split("\n")
        assert srows[0] == "log10_m\tlog10_V"
        assert len(srows) == 7
        lrows = line.strip().split("\n")
        assert len(lrows) == 3
        x, y = map(float, lrows[1].split("\t"))
        fit = table.cells[0].fit
        assert y == pytest.approx(fit.log_a + fit.b * x, abs=1e-5)

    def test_full_precision_mode(self):
        points = market_points(Market.SHA, 2.2, n=6)
        tsv = table_to_tsv(group_fit(points, [], key="all"), full_precision=True)
        value = tsv.strip().split("\n")[1].split("\t")[3]
        assert len(value) > 10
