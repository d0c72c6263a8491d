import json
import math

import numpy as np
import pytest

from brwdev.errors import (
    EmptySupport,
    NonZeroMean,
    NotSchroeder,
    SubcriticalModel,
    ValidationError,
)
from brwdev.model import (
    GumbelTail,
    LatticePMF,
    Model,
    OffspringLaw,
    WeibullTail,
    floor_to_lattice,
    load_model_file,
    model_from_config,
    validate_model,
)

from conftest import B2L_OFF, B2L_STEP, SCH_OFF


class TestOffspringLaw:
    def test_b2l_constants(self):
        off = OffspringLaw(B2L_OFF)
        assert off.m == 2.0
        assert off.b == 2
        assert off.b_1 == 1.0
        assert off.q == 0.0

    def test_schroder_constants(self):
        off = OffspringLaw(SCH_OFF)
        assert off.m == 1.25
        assert off.b == 0
        assert off.q == pytest.approx(0.5, abs=1e-14)
        assert off.gamma == pytest.approx(math.log(0.75), abs=1e-14)

    def test_gamma_refused_for_boettcher(self):
        from brwdev.model import schroder_gamma

        with pytest.raises(NotSchroeder):
            schroder_gamma(OffspringLaw(B2L_OFF))
        # the raw property marks the thin-tree channel as closed instead
        assert OffspringLaw(B2L_OFF).gamma == -math.inf

    def test_pgf_matches_direct_sum(self):
        off = OffspringLaw(SCH_OFF)
        for s in (0.0, 0.3, 1.0):
            assert off.pgf(s) == pytest.approx(0.25 + 0.25 * s + 0.5 * s * s, abs=1e-15)
            assert off.pgf_prime(s) == pytest.approx(0.25 + s, abs=1e-15)

    def test_rejects_bad_pmfs(self):
        with pytest.raises(ValidationError):
            OffspringLaw({2: 0.9})  # does not sum to 1
        with pytest.raises(ValidationError):
            OffspringLaw({-1: 0.5, 2: 0.5})
        with pytest.raises(EmptySupport):
            OffspringLaw({})


class TestLatticePMF:
    def test_basic_constants(self):
        step = LatticePMF(1.0, B2L_STEP)
        assert step.L == 1.0
        assert step.R == 1.0
        assert step.mean == 0.0
        assert np.array_equal(step.positions, np.array([-1.0, 0.0, 1.0]))

    def test_cdf_and_atoms(self):
        step = LatticePMF(0.5, {-2: 0.25, 0: 0.5, 2: 0.25})
        assert step.cdf(-1.0) == pytest.approx(0.25)
        assert step.cdf(-0.999) == pytest.approx(0.25)
        assert step.cdf(-1.001) == 0.0  # below the lowest atom
        assert step.atom_at(1.0) == pytest.approx(0.25)
        assert step.atom_at(0.7) == 0.0
        assert step.log_cdf(-1.0) == pytest.approx(math.log(0.25), abs=1e-12)
        assert step.log_cdf(-1.5) == -math.inf

    def test_rejects_off_center_and_one_sided(self):
        with pytest.raises(NonZeroMean):
            LatticePMF(1.0, {-1: 0.2, 0: 0.5, 1: 0.3})
        with pytest.raises(EmptySupport):
            LatticePMF(1.0, {0: 0.5, 1: 0.5})

    def test_sampling_hits_atoms_only(self):
        step = LatticePMF(1.0, B2L_STEP)
        draws = step.sample(np.random.default_rng(7), 4096)
        assert set(np.unique(draws)) <= {-1.0, 0.0, 1.0}
        assert abs(draws.mean()) < 0.05


class TestParametricTails:
    def test_weibull_tail_shape(self):
        step = WeibullTail(2.0, 1.0)
        assert step.L == math.inf
        assert step.mean == 0.0
        # two-sided symmetric tail: P(X <= -z) = exp(-lam z^alpha) / 2
        assert step.log_cdf(-2.0) == pytest.approx(-4.0 + math.log(0.5), abs=1e-12)
        assert step.cdf(0.0) == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            WeibullTail(0.9, 1.0)
        with pytest.raises(ValidationError):
            WeibullTail(2.0, -1.0)

    def test_gumbel_tail_shape(self):
        step = GumbelTail(2.0)
        # P(X <= -z) = 0.5 exp(1 - e^{z^alpha})
        assert step.log_cdf(-2.0) == pytest.approx(
            math.log(0.5) + 1.0 - math.exp(4.0), rel=1e-12)
        assert step.cdf(0.0) == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            GumbelTail(0.0)

    def test_weibull_sampling_matches_cdf(self):
        step = WeibullTail(2.0, 1.0)
        draws = step.sample(np.random.default_rng(3), 20000)
        assert abs(draws.mean()) < 0.02
        emp = float(np.mean(draws <= -1.0))
        assert emp == pytest.approx(math.exp(-1.0) / 2.0, abs=0.01)


class TestFloorToLattice:
    def test_plain_floor(self):
        assert floor_to_lattice(2.7, 1.0) == 2
        assert floor_to_lattice(-2.7, 1.0) == -3
        assert floor_to_lattice(3.9, 0.5) == 7

    def test_near_hits_snap(self):
        # 0.3 * 3 is not exactly 0.9 in binary; the snap keeps the atom
        assert floor_to_lattice(0.8999999999999999, 0.3) == 3
        assert floor_to_lattice(1.0 + 1e-12, 0.5) == 2
        assert floor_to_lattice(1.0 - 1e-12, 0.5) == 2


class TestValidateModel:
    def test_b2l_constants(self, b2l):
        c = b2l.consts
        assert c.b == 2
        assert c.m == 2.0
        assert c.log_m == pytest.approx(math.log(2.0), abs=1e-15)
        assert c.x_star == pytest.approx(0.7799442711232809, abs=1e-12)
        assert c.theta_star == pytest.approx(2.0904565070882892, abs=1e-12)
        assert not c.degenerate
        assert all(f.ok for f in c.flags.values())

    def test_schroder_constants(self, sch):
        c = sch.consts
        assert c.q == pytest.approx(0.5, abs=1e-12)
        assert c.gamma == pytest.approx(math.log(0.75), abs=1e-14)
        assert c.x_star == pytest.approx(0.4633705666141774, abs=1e-12)
        assert c.theta_star == pytest.approx(1.0031898731134865, abs=1e-12)

    def test_as_dict_flag_keys(self, b2l):
        d = b2l.consts.as_dict()
        assert set(d["assumption_flags"]) == {"A11", "A12", "A13", "A14"}
        for v in d["assumption_flags"].values():
            assert set(v) == {"ok", "why"}

    def test_subcritical_refused(self):
        with pytest.raises(SubcriticalModel):
            validate_model(OffspringLaw({1: 1.0}), LatticePMF(1.0, B2L_STEP))

    def test_degenerate_edge_speed(self):
        # two heavy outer atoms push the speed onto the support edge
        off = OffspringLaw({8: 1.0})
        step = LatticePMF(1.0, {-1: 0.5, 1: 0.5})
        c = validate_model(off, step)
        assert c.degenerate
        assert c.x_star == pytest.approx(1.0)
        assert c.theta_star == math.inf
        assert not c.flags["A13"].ok
        assert not c.flags["A14"].ok


class TestConfigLoading:
    def test_round_trip(self, b2l_config, b2l):
        loaded = load_model_file(b2l_config)
        assert loaded.consts.x_star == b2l.consts.x_star
        assert loaded.consts.theta_star == b2l.consts.theta_star

    def test_parametric_kinds(self):
        m = model_from_config({"offspring": {"2": 1.0},
                               "step": {"kind": "weibull", "alpha": 2.0, "lambda": 1.0}})
        assert m.step.kind == "weibull"
        g = model_from_config({"offspring": {"2": 1.0},
                               "step": {"kind": "gumbel", "alpha": 1.0}})
        assert g.step.kind == "gumbel"

    def test_bad_configs(self, tmp_path):
        with pytest.raises(ValidationError):
            model_from_config({"offspring": {"2": 1.0}})
        with pytest.raises(ValidationError):
            model_from_config({"offspring": {"2": 1.0}, "step": {"kind": "nope"}})
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ValidationError):
            load_model_file(str(bad))

    def test_subcritical_config_raises(self, tmp_path):
        cfg = tmp_path / "sub.json"
        cfg.write_text(json.dumps({
            "offspring": {"1": 1.0},
            "step": {"kind": "lattice", "span": 1.0,
                     "pmf": {"-1": 0.25, "0": 0.5, "1": 0.25}},
        }))
        with pytest.raises(SubcriticalModel):
            load_model_file(str(cfg))
