"""Single-barrier first-passage distribution tests.

The series values are checked against an independent mpmath reference table
and a bridge-corrected path simulation (tests/data/reference_values.json).
"""

import json
import math
import os
import warnings

import numpy as np
import pytest

from oux import eigen, fpt
from oux.errors import NotEnoughRoots

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

with open(os.path.join(DATA, "reference_values.json")) as _fh:
    REF = json.load(_fh)

STD = fpt.OUParams(0.0, 1.0, 1.0)


class TestStandardize:
    def test_affine_map(self):
        """x maps through sqrt(lam)/sigma * (x - mu/lam), time through lam."""
        params = fpt.OUParams(1.2, 4.0, 0.5)
        sp = fpt.standardize(params, 0.8, 1.55)
        assert sp.x_tilde == pytest.approx((0.8 - 0.3) * 4.0)
        assert sp.b_tilde == pytest.approx((1.55 - 0.3) * 4.0)
        assert sp.time_scale == 4.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            fpt.OUParams(0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            fpt.OUParams(0.0, 1.0, -2.0)

    def test_survival_invariant_under_rescaling(self):
        """Any parameter set with the same standardized coordinates gives
        the same survival curve on the rescaled clock."""
        rng = np.random.default_rng(42)
        base = fpt.fpt_survival(STD, 0.0, 1.5, 0.8, K=24).prob
        for _ in range(12):
            lam = rng.uniform(0.3, 4.0)
            sigma = rng.uniform(0.3, 2.0)
            mu = rng.uniform(-1.5, 1.5)
            shift = mu / lam
            scale = math.sqrt(lam) / sigma
            params = fpt.OUParams(mu, lam, sigma)
            got = fpt.fpt_survival(params, shift, shift + 1.5 / scale,
                                   0.8 / lam, K=24).prob
            assert got == pytest.approx(base, abs=1e-10)


class TestSurvivalSeries:
    def test_reference_points(self):
        ref = REF["truncation_reference"]
        es = eigen.build_eigensystem(ref["b_tilde"], 60)
        for t, want in zip(ref["t"], ref["survival"]):
            got = fpt.survival_series(es, ref["x_tilde"], t)
            # the reference spectrum was refined with higher-precision
            # arithmetic; agreement is limited by the float64 root solve
            assert got == pytest.approx(want, abs=5e-10)

    def test_partial_sums_match_reference(self):
        """Each truncation level reproduces the independent partial sums."""
        ref = REF["truncation_reference"]
        sums = ref["partial_sums_t0.5"]
        for K in (1, 2, 5, 10, 20, 40, 60):
            es = eigen.build_eigensystem(ref["b_tilde"], K)
            got = fpt.survival_series(es, ref["x_tilde"], 0.5)
            assert got == pytest.approx(sums[K - 1], abs=5e-10)

    def test_extra_points(self):
        for case in REF["extra_survival"]:
            es = eigen.build_eigensystem(case["b_tilde"], case["K"])
            got = fpt.survival_series(es, case["x_tilde"], case["t"])
            assert got == pytest.approx(case["survival"], abs=5e-10)
            got_d = fpt.density_series(es, case["x_tilde"], case["t"])
            assert got_d == pytest.approx(case["density"], abs=5e-10)

    def test_against_path_simulation(self):
        """Survival through t=1 sits inside three simulation errors."""
        mc = REF["mc"]["path_survival"]
        got = fpt.fpt_survival(STD, mc["x0"], mc["b"], mc["T"], K=40)
        assert abs(got.prob - mc["value"]) <= 3.0 * mc["stderr"]


class TestFptSurvival:
    def test_time_zero_is_one(self):
        assert fpt.fpt_survival(STD, 0.0, 1.5, 0.0).prob == 1.0

    def test_started_at_barrier_is_zero(self):
        assert fpt.fpt_survival(STD, 1.5, 1.5, 0.4).prob == 0.0
        assert fpt.fpt_survival(STD, 2.0, 1.5, 0.4).prob == 0.0

    def test_monotone_in_time(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            b = rng.uniform(0.5, 2.5)
            x = b - rng.uniform(0.3, 2.0)
            ts = np.sort(rng.uniform(0.05, 4.0, 6))
            vals = [fpt.fpt_survival(STD, x, b, float(t), K=30).prob for t in ts]
            assert np.all(np.diff(vals) <= 1e-10)

    def test_clamps_early_time_overshoot(self):
        """Coarse truncations overshoot 1 near t=0; the result is clamped
        and flagged."""
        res = fpt.fpt_survival(STD, -2.0, 1.5, 0.05, K=3)
        assert res.prob == 1.0
        assert res.clamped

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            fpt.fpt_survival(STD, 0.0, 1.5, -0.1)

    def test_error_field_bounds_truncation(self):
        """The reported error dominates the distance to a long reference."""
        ref = fpt.fpt_survival(STD, 0.0, 1.5, 0.5, K=60).prob
        for K in (8, 12, 20, 30):
            res = fpt.fpt_survival(STD, 0.0, 1.5, 0.5, K=K)
            assert abs(res.prob - ref) <= res.err


class TestFptDensity:
    def test_mass_identity(self):
        """The density over (0, T] integrates to one minus the survival."""
        ts = np.linspace(1e-3, 3.0, 3001)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            dens = np.array([fpt.fpt_density(STD, 0.0, 1.5, float(t), K=40)
                             for t in ts])
        surv = fpt.fpt_survival(STD, 0.0, 1.5, 3.0, K=40).prob
        assert np.trapezoid(dens, ts) == pytest.approx(1.0 - surv, abs=1e-4)

    def test_reference_points(self):
        ref = REF["truncation_reference"]
        for t, want in zip(ref["t"], ref["density"]):
            got = fpt.fpt_density(STD, 0.0, 1.5, t, K=60)
            assert got == pytest.approx(want, abs=1e-9)

    def test_rejects_bad_domains(self):
        with pytest.raises(ValueError):
            fpt.fpt_density(STD, 0.0, 1.5, 0.0)
        with pytest.raises(ValueError):
            fpt.fpt_density(STD, 1.6, 1.5, 0.5)

    def test_time_scaling(self):
        """Densities pick up the reversion-speed Jacobian."""
        params = fpt.OUParams(0.0, 2.0, 1.0)
        got = fpt.fpt_density(params, 0.0, 1.5 / math.sqrt(2.0), 0.25, K=30)
        base = fpt.fpt_density(STD, 0.0, 1.5, 0.5, K=30)
        assert got == pytest.approx(2.0 * base, rel=1e-10)


class TestReflectedDensity:
    def test_reference_point(self):
        ref = REF["reflected"]
        pt = ref["density_point"]
        got = fpt.fpt_density_reflected(pt["x_tilde"], ref["b_tilde"],
                                        ref["a_tilde"], pt["t"], pt["K"])
        assert got == pytest.approx(pt["density"], rel=1e-7)

    def test_survival_reference_point(self):
        ref = REF["reflected"]
        pt = ref["density_point"]
        es = eigen.build_reflected_eigensystem(ref["b_tilde"], ref["a_tilde"],
                                               pt["K"])
        got = fpt.survival_series(es, pt["x_tilde"], pt["t"])
        assert got == pytest.approx(pt["survival"], rel=1e-9)

    def test_deep_reflection_approaches_free_case(self):
        """Pushing the reflecting level far down recovers the unreflected
        density."""
        free = fpt.fpt_density(STD, 0.0, 1.5, 1.0, K=20)
        prev = None
        for a in (-2.0, -3.0, -4.0):
            es_terms = 14
            got = fpt.fpt_density_reflected(0.0, 1.5, a, 1.0, es_terms)
            gap = abs(got - free)
            if prev is not None:
                assert gap <= prev + 1e-12
            prev = gap
        assert prev <= 5e-4

    def test_ordering_validation(self):
        with pytest.raises(ValueError):
            fpt.fpt_density_reflected(0.0, 1.5, 0.5, 1.0, 8)


class TestTruncationControl:
    def test_bound_positive_and_decreasing(self):
        rng = np.random.default_rng(42)
        for _ in range(8):
            x = rng.uniform(-1.0, 0.8)
            b = rng.uniform(1.0, 2.5)
            t = rng.uniform(0.2, 1.5)
            vals = [fpt.truncation_error_bound(x, b, 1.0, t, aK)
                    for aK in (5.0, 10.0, 20.0, 40.0)]
            assert all(v > 0 for v in vals)
            assert np.all(np.diff(vals) < 0)

    def test_bound_rejects_mean_level_barrier(self):
        with pytest.raises(ValueError):
            fpt.truncation_error_bound(-1.0, 0.0, 1.0, 0.5, 10.0)

    def test_select_truncation_reference(self):
        for case in REF["select_truncation"]:
            n = fpt.select_truncation(case["x_tilde"], case["b_tilde"],
                                      case["quantile"], case["rel_tol"],
                                      case["alpha_max"])
            assert n == case["n"]

    def test_select_truncation_tightens_with_tolerance(self):
        loose = fpt.select_truncation(1.0, 1.5, 0.5, 0.05, 60.0)
        tight = fpt.select_truncation(1.0, 1.5, 0.5, 0.001, 60.0)
        assert tight >= loose

    def test_select_truncation_validation(self):
        with pytest.raises(ValueError):
            fpt.select_truncation(0.0, 1.5, 1.5, 0.05, 60.0)
        with pytest.raises(ValueError):
            fpt.select_truncation(2.0, 1.5, 0.5, 0.05, 60.0)


class TestHazardRate:
    def test_long_time_limit(self):
        """The hazard settles at reversion speed times the smallest
        eigenvalue, for any parameter set."""
        alpha1 = REF["truncation_reference"]["alpha1"]
        for mu, lam, sigma in ((0.0, 1.0, 1.0), (1.0, 2.0, 0.5),
                               (-0.3, 0.7, 1.3)):
            params = fpt.OUParams(mu, lam, sigma)
            b = mu / lam + 1.5 * sigma / math.sqrt(lam)
            hz = fpt.hazard_rate(params, mu / lam, b, 10.0 / lam)
            assert hz == pytest.approx(lam * alpha1, rel=1e-4)

    def test_hazard_is_density_over_survival(self):
        t = 0.8
        dens = fpt.fpt_density(STD, 0.0, 1.5, t, K=30)
        surv = fpt.fpt_survival(STD, 0.0, 1.5, t, K=30).prob
        assert fpt.hazard_rate(STD, 0.0, 1.5, t, K=30) == pytest.approx(
            dens / surv, rel=1e-12)
