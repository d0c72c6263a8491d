import math
from fractions import Fraction

import numpy as np
import pytest

from brwdev import oracle
from brwdev.errors import (
    DegenerateBoundary,
    GridOverflow,
    NotSchroeder,
    OutOfRange,
    ValidationError,
)
from brwdev.model import LatticePMF, Model, OffspringLaw, WeibullTail

from bruteforce import (
    brute_conditioned_cdf,
    brute_max_cdf,
    extinction_seq,
    fraction_conditioned_cdf,
    fraction_gw_pmf,
    fraction_max_cdf,
)
from conftest import B2L_OFF_FRAC, B2L_STEP_FRAC, SCH_OFF_FRAC


class TestMaxCdfRecursion:
    def test_frozen_small_n(self, b2l):
        g1 = oracle.max_cdf_recursion(b2l, 1)
        assert math.exp(-g1.G_at(0.0)) == pytest.approx(9.0 / 16.0, abs=1e-15)
        g2 = oracle.max_cdf_recursion(b2l, 2)
        assert math.exp(-g2.G_at(0.0)) == pytest.approx(1225.0 / 4096.0, abs=1e-15)
        # the probability-domain twin carries the same numbers where it lives
        assert g1.F_direct[0 - g1.lo] == pytest.approx(9.0 / 16.0, abs=1e-16)

    def test_full_grid_against_enumeration_b2l(self, b2l):
        grid = oracle.max_cdf_recursion(b2l, 2)
        for j in range(grid.lo, grid.hi + 1):
            want = brute_max_cdf(B2L_OFF_FRAC, B2L_STEP_FRAC, 2, j)
            got = math.exp(-grid.G_at(float(j)))
            assert got == pytest.approx(float(want), abs=1e-14), f"x = {j}"

    def test_full_grid_against_enumeration_schroder(self, sch):
        grid = oracle.max_cdf_recursion(sch, 2)
        for j in range(grid.lo, grid.hi + 1):
            want = brute_max_cdf(SCH_OFF_FRAC, B2L_STEP_FRAC, 2, j)
            got = math.exp(-grid.G_at(float(j)))
            assert got == pytest.approx(float(want), abs=1e-14), f"x = {j}"

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_fraction_recursion_b2l(self, b2l, n):
        grid = oracle.max_cdf_recursion(b2l, n)
        exact = fraction_max_cdf(B2L_OFF_FRAC, {-1: Fraction(1, 4), 0: Fraction(1, 2),
                                                1: Fraction(1, 4)}, n)
        for j, frac in exact.items():
            got = math.exp(-grid.G_at(float(j)))
            want = float(frac)
            assert got == pytest.approx(want, rel=1e-11, abs=1e-300), f"x = {j}"

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_fraction_recursion_schroder(self, sch, n):
        grid = oracle.max_cdf_recursion(sch, n)
        exact = fraction_max_cdf(SCH_OFF_FRAC, {-1: Fraction(1, 4), 0: Fraction(1, 2),
                                                1: Fraction(1, 4)}, n)
        for j, frac in exact.items():
            got = math.exp(-grid.G_at(float(j)))
            assert got == pytest.approx(float(frac), rel=1e-11), f"x = {j}"
        # the below-grid constant is the extinction probability at time n
        want_below = float(extinction_seq(SCH_OFF_FRAC, n)[n])
        assert math.exp(-grid.below_G) == pytest.approx(want_below, rel=1e-13)

    def test_out_of_grid_reads(self, b2l):
        grid = oracle.max_cdf_recursion(b2l, 4)
        assert grid.G_at(1e9) == 0.0
        assert grid.G_at(-1e9) == grid.below_G
        assert grid.below_G == math.inf  # extinction impossible for b = 2

    def test_monotone_and_clean(self, b2l):
        grid = oracle.max_cdf_recursion(b2l, 12)
        finite = grid.G[np.isfinite(grid.G)]
        assert np.all(np.diff(finite) <= 1e-12)  # G = -log cdf falls as x grows
        assert np.all(grid.G >= 0.0)
        assert np.nanmax(grid.F_direct) <= 1.0

    def test_rejects_bad_inputs(self, b2l, weib):
        with pytest.raises(OutOfRange):
            oracle.max_cdf_recursion(b2l, 0)
        with pytest.raises(ValidationError):
            oracle.max_cdf_recursion(weib, 3)
        with pytest.raises(GridOverflow):
            oracle.max_cdf_recursion(b2l, 50, memory_budget=64)


class TestConditionedCdf:
    def test_hand_values_n1(self, sch):
        grid = oracle.conditioned_cdf(sch, 1)
        i0 = -grid.lo
        assert math.exp(-grid.G[i0]) == pytest.approx(23.0 / 32.0, abs=1e-15)
        assert math.exp(-grid.ext_G[i0]) == pytest.approx(53.0 / 128.0, abs=1e-15)
        assert math.exp(-grid.conditioned_G_at(0.0)) == pytest.approx(
            39.0 / 64.0, abs=1e-15)

    def test_full_grid_against_enumeration(self, sch):
        grid = oracle.conditioned_cdf(sch, 2)
        for j in range(grid.lo, grid.hi + 1):
            want = brute_conditioned_cdf(SCH_OFF_FRAC, B2L_STEP_FRAC, 2, j,
                                         Fraction(1, 2))
            got = math.exp(-grid.conditioned_G_at(float(j)))
            assert got == pytest.approx(float(want), abs=1e-14), f"x = {j}"

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_fraction_recursion(self, sch, n):
        grid = oracle.conditioned_cdf(sch, n)
        exact = fraction_conditioned_cdf(SCH_OFF_FRAC, {-1: Fraction(1, 4),
                                                        0: Fraction(1, 2),
                                                        1: Fraction(1, 4)}, n)
        for j, frac in exact.items():
            got = math.exp(-grid.conditioned_G_at(float(j)))
            assert got == pytest.approx(float(frac), rel=1e-10, abs=1e-15), f"x = {j}"

    def test_sandwich_identity(self, sch):
        # P(M <= x) = P(M <= x, die out) + (1 - q) P(M <= x | survive)
        q = sch.consts.q
        grid = oracle.conditioned_cdf(sch, 5)
        f = np.exp(-grid.G)
        fx = np.exp(-grid.ext_G)
        delta = (1.0 - q) * np.exp(-grid.conditioned_G)
        assert np.max(np.abs(f - (fx + delta))) <= 1e-13

    def test_survivors_never_below_floor(self, sch):
        grid = oracle.conditioned_cdf(sch, 4)
        assert grid.conditioned_G_at(-1e9) == math.inf
        assert grid.conditioned_G_at(1e9) == 0.0

    def test_boettcher_refused(self, b2l):
        with pytest.raises(NotSchroeder):
            oracle.conditioned_cdf(b2l, 3)


class TestDerivativeMartingale:
    def test_mean_vanishes(self, b2l):
        for n in (1, 5):
            mean, pos = oracle.derivative_martingale_mean(b2l, n, return_parts=True)
            assert pos > 0.0
            assert abs(mean) <= 1e-12 * pos

    def test_schroder_model_too(self, sch):
        mean, pos = oracle.derivative_martingale_mean(sch, 4, return_parts=True)
        assert abs(mean) <= 1e-12 * pos

    def test_edge_cases(self, b2l):
        assert oracle.derivative_martingale_mean(b2l, 0) == 0.0
        deg = Model.build(OffspringLaw({8: 1.0}), LatticePMF(1.0, {-1: 0.5, 1: 0.5}))
        with pytest.raises(DegenerateBoundary):
            oracle.derivative_martingale_mean(deg, 3)


class TestDiscretizeStep:
    def test_second_moment_converges_quadratically(self):
        w = WeibullTail(2.0, 1.0)
        errs = []
        for h in (0.2, 0.1, 0.05):
            d = oracle.discretize_step(w, h, 1e-9)
            pos = d.step.positions
            second = float(np.dot(pos * pos, d.step.probs))
            errs.append(abs(second - 1.0))  # E[X^2] = 1 for this tail
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)

    def test_diagnostics(self):
        w = WeibullTail(2.0, 1.0)
        d = oracle.discretize_step(w, 0.05, 1e-9)
        assert d.step.span == 0.05
        assert d.lost_tail_mass <= 2e-9
        assert d.mean_correction == 0.0  # mirrored bins cancel exactly
        assert abs(d.step.mean) <= 1e-15  # np.dot reorders; one ulp of slack

    def test_rejections(self, b2l):
        w = WeibullTail(2.0, 1.0)
        with pytest.raises(ValidationError):
            oracle.discretize_step(b2l.step, 0.1, 1e-9)
        with pytest.raises(OutOfRange):
            oracle.discretize_step(w, 0.1, 0.5)
        with pytest.raises(OutOfRange):
            oracle.discretize_step(w, -0.1, 1e-9)
        with pytest.raises(GridOverflow):
            oracle.discretize_step(w, 1e-9, 1e-9)

    def test_twin_grid_stays_clean_at_depth(self):
        # regression: per-generation rounding in the flat region used to
        # compound under the pgf and blow up the direct column by mid grid
        w = WeibullTail(2.0, 1.0)
        twin = oracle.discretize_step(w, 0.1, 1e-9).step
        model = Model.build(OffspringLaw({2: 1.0}), twin)
        g40 = oracle.max_cdf_recursion(model, 40)
        g80 = oracle.max_cdf_recursion(model, 80)
        assert np.nanmax(g40.F_direct) <= 1.0
        assert np.nanmax(g80.F_direct) <= 1.0
        xs = model.consts.x_star
        v40 = g40.G_at(xs * 40)
        v80 = g80.G_at(xs * 80)
        assert 0.0 < v80 < v40 < 1.0  # centered cdf value drifts up, G down


class TestGwPmf:
    @pytest.mark.parametrize("n", [1, 4, 12])
    def test_matches_fraction_composition(self, n):
        got = oracle.gw_pmf(OffspringLaw({0: 0.25, 1: 0.25, 2: 0.5}), n, 10)
        want = fraction_gw_pmf(SCH_OFF_FRAC, n, 10)
        for k in range(11):
            assert got.coefficients[k] == pytest.approx(float(want[k]), rel=1e-12,
                                                        abs=1e-300), f"k = {k}"
        assert got.tail_mass >= 0.0

    def test_deterministic_doubling(self, b2l):
        s = oracle.gw_pmf(b2l.off, 3, 8)
        assert s.coefficients[8] == pytest.approx(1.0, abs=1e-15)
        assert float(np.sum(s.coefficients[:8])) == 0.0
        assert s.tail_mass == pytest.approx(0.0, abs=1e-15)
        truncated = oracle.gw_pmf(b2l.off, 3, 7)
        assert truncated.tail_mass == pytest.approx(1.0, abs=1e-15)

    def test_identity_and_validation(self, sch):
        s0 = oracle.gw_pmf(sch.off, 0, 4)
        assert s0.coefficients[1] == 1.0
        assert float(np.sum(s0.coefficients)) == 1.0
        with pytest.raises(OutOfRange):
            oracle.gw_pmf(sch.off, -1, 4)
        with pytest.raises(OutOfRange):
            oracle.gw_pmf(sch.off, 2, -1)


class TestWalkPmf:
    def test_three_step_convolution(self, b2l):
        wp = oracle.walk_pmf(b2l.step, 3)
        base = np.array([0.25, 0.5, 0.25])
        want = np.convolve(np.convolve(base, base), base)
        assert wp.lo == -3
        assert np.allclose(wp.probs, want, rtol=1e-15, atol=0.0)
        assert float(np.sum(wp.probs)) == pytest.approx(1.0, abs=1e-15)

    def test_zero_steps(self, b2l):
        wp = oracle.walk_pmf(b2l.step, 0)
        assert wp.lo == 0
        assert list(wp.probs) == [1.0]


class TestCsvLines:
    def test_shape_and_blanks(self, b2l, sch):
        g = oracle.max_cdf_recursion(b2l, 3)
        lines = oracle.log_cdf_csv_lines([g])
        assert lines[0] == "n,x,G,F_direct_if_representable,conditioned_G"
        assert len(lines) == 1 + (g.hi - g.lo + 1)
        # plain grid: conditioned column empty everywhere
        assert all(line.endswith(",") for line in lines[1:])
        cg = oracle.conditioned_cdf(sch, 3)
        cond_lines = oracle.log_cdf_csv_lines([cg])
        assert not any(line.endswith(",") for line in cond_lines[1:])

    def test_direct_column_blank_when_underflowed(self, b2l):
        g = oracle.max_cdf_recursion(b2l, 40)
        lines = oracle.log_cdf_csv_lines([g])
        # the far-left cells sit beyond the representable direct domain,
        # and so does x = 0 at this depth; near the right edge F is ~1
        first = lines[1].split(",")
        assert first[3] == ""
        center = lines[1 + (0 - g.lo)].split(",")
        assert center[3] == ""
        right = lines[1 + (g.hi - 2 - g.lo)].split(",")
        assert right[3] != ""
