import math

import pytest

from brwdev import rates, report
from brwdev.errors import OutOfRange, ValidationError


class TestScheduleGrammar:
    def test_linear_forms(self):
        s = report.parse_ell_schedule("0.5*n")
        assert s.kind == "linear" and s.coefficient == 0.5
        assert s.at(40) == 20.0
        # exponent exactly one folds into the linear kind
        assert report.parse_ell_schedule("0.5*n^1").kind == "linear"

    def test_power_and_log_forms(self):
        s = report.parse_ell_schedule("3*n^0.5")
        assert s.kind == "power"
        assert s.at(100) == pytest.approx(30.0, abs=1e-12)
        t = report.parse_ell_schedule("2*log(n)")
        assert t.kind == "log"
        assert t.at(10) == pytest.approx(2.0 * math.log(10.0), abs=1e-12)

    def test_explicit_list(self):
        s = report.parse_ell_schedule("list:20,40,80")
        assert s.kind == "list" and s.values == (20.0, 40.0, 80.0)
        with pytest.raises(ValidationError):
            s.at(40)  # lists have no closed form at a single n

    def test_rejections(self):
        for bad in ("n^2", "2*n^1.5", "list:", "list:a,b", "banana"):
            with pytest.raises(ValidationError):
                report.parse_ell_schedule(bad)


class TestSchedulePairs:
    def test_closed_forms_broadcast(self):
        s = report.parse_ell_schedule("0.25*n")
        assert s.pairs([40, 80]) == [(40, 10.0), (80, 20.0)]

    def test_list_broadcast_and_zip(self):
        s = report.parse_ell_schedule("list:10,20")
        assert s.pairs([100]) == [(100, 10.0), (100, 20.0)]
        assert s.pairs([100, 200]) == [(100, 10.0), (200, 20.0)]
        with pytest.raises(ValidationError):
            s.pairs([100, 200, 300])

    def test_positivity_gates(self):
        with pytest.raises(OutOfRange):
            report.parse_ell_schedule("list:-3").pairs([10])
        with pytest.raises(OutOfRange):
            report.parse_ell_schedule("0.5*n").pairs([0])
        with pytest.raises(OutOfRange):
            report.parse_ell_schedule("0.5*n").pairs([])

    def test_sup_ratio(self):
        assert report.parse_ell_schedule("0.5*n").sup_ratio([10]) == 0.5
        assert report.parse_ell_schedule("2*log(n)").sup_ratio([10]) == 0.0
        assert report.parse_ell_schedule("3*n^0.5").sup_ratio([10]) == 0.0
        s = report.parse_ell_schedule("list:10,5")
        assert s.sup_ratio([100, 200]) == pytest.approx(0.1)


class TestModerateReport:
    def test_fixed_n_depth_sweep(self, b2l):
        rep = report.build_moderate_report(
            b2l, [120], report.parse_ell_schedule("list:10,20,30"))
        assert [r[:2] for r in rep.rows] == [(120, 10.0), (120, 20.0), (120, 30.0)]
        for n, ell, g, y, yol in rep.rows:
            assert g > 0.0
            assert y == math.log(g)
            assert yol == y / ell
        assert rep.fit_points == 2  # depths at or above the midpoint
        assert abs(rep.fit_slope - rep.beta) / rep.beta < 0.05
        assert rep.beta == rates.beta_moderate(b2l)

    def test_csv_shapes(self, b2l):
        rep = report.build_moderate_report(
            b2l, [60], report.parse_ell_schedule("list:8,16"))
        lines = rep.csv_lines()
        assert lines[0] == "n,ell,G,y,y_over_ell,beta_target"
        assert len(lines) == 3
        fit = rep.fit_csv_lines()
        assert fit[0] == "fit_slope,beta_target,rel_gap,points_used"

    def test_hypothesis_gate(self, b2l, sch):
        with pytest.raises(OutOfRange, match="limsup"):
            report.build_moderate_report(
                b2l, [40], report.parse_ell_schedule("1.9*n"))
        with pytest.raises(OutOfRange, match="b >= 2"):
            report.build_moderate_report(
                sch, [40], report.parse_ell_schedule("0.25*n"))


class TestLinearReport:
    def test_boettcher_rows(self, b2l):
        rep = report.build_linear_report(b2l, [120], [0.0, -0.5])
        assert rep.regime == "boettcher"
        for n, x, emp, ana, gap in rep.rows:
            assert ana == rates.rate_bounded(b2l, x)
            assert gap < 0.05

    def test_schroeder_rows(self, sch):
        rep = report.build_linear_report(sch, [100], [0.5])
        assert rep.regime == "schroeder"
        ((n, x, emp, ana, gap),) = rep.rows
        assert ana == rates.schroder_H(sch, 0.5).value
        assert emp < 0.0
        assert gap < 0.12

    def test_schroeder_needs_positive_depth(self, sch):
        with pytest.raises(OutOfRange):
            report.build_linear_report(sch, [50], [-0.2])

    def test_figures_are_png_bytes(self, b2l):
        rep = report.build_linear_report(b2l, [40], [0.0])
        png = report.render_linear_figure(rep)
        assert png.startswith(b"\x89PNG")
        assert report.render_linear_figure(rep) == png
