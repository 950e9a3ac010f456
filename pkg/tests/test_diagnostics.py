import math

import numpy as np
import pytest

from kgdg.diagnostics import (
    DCV_MODES,
    MINUS_INFINITY,
    ConvergenceRecord,
    DiagnosticsConfig,
    StabilityRecord,
    convergence_deviation_dcv,
    expected_cv_gap,
    first_divergence_time,
    first_instability_time,
    relative_error_cv,
    stability_count,
    stability_ratio,
)
from kgdg.lattice import Field, GridSpec


def field1d(values, dx=None):
    n = len(values)
    return Field(GridSpec(1, (n,), (dx or 1.0 / n,), 0.01), np.asarray(values, float))


class TestConfig:
    def test_rejects_bad_thresholds(self):
        with pytest.raises(ValueError):
            DiagnosticsConfig(eps_stability=0.0)
        with pytest.raises(ValueError):
            DiagnosticsConfig(eps_stability=1.5)
        with pytest.raises(ValueError):
            DiagnosticsConfig(eps_convergence=-0.1)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            DiagnosticsConfig(dcv_mode="cubic")
        assert set(DCV_MODES) == {"as-written", "doubling", "richardson"}


class TestStabilityCount:
    def test_monotone_field_has_no_flips(self):
        # periodic wrap gives exactly 2 flips for a single ramp... unless the
        # field is constant
        assert stability_count(field1d([0, 0, 0, 0, 0])) == 0

    def test_single_ramp_wraps_to_two(self):
        # differences: +1 +1 +1 +1 -4; flips at the two ends of the drop
        assert stability_count(field1d([0, 1, 2, 3, 4])) == 2

    def test_sawtooth_flips_everywhere(self):
        v = [0, 1] * 8
        assert stability_count(field1d(v)) == 16

    def test_zero_difference_never_counts(self):
        # plateaus make the neighboring products zero; strict < excludes them
        assert stability_count(field1d([0, 1, 1, 0, 0, 0])) == 0
        # same shape with genuine flips on either side of the plateau
        assert stability_count(field1d([0, 2, 1, 1, 2, 0])) == 2

    def test_smooth_mode_counts_two_extrema(self):
        n = 64
        v = np.cos(2 * np.pi * np.arange(n) / n)
        assert stability_count(field1d(v)) == 2

    def test_rejects_2d(self):
        g = GridSpec(2, (8, 8), (0.1, 0.1), 0.01)
        with pytest.raises(ValueError):
            stability_count(Field.zeros(g))

    def test_invariances(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            v = rng.normal(size=40)
            base = stability_count(field1d(v))
            assert stability_count(field1d(np.roll(v, rng.integers(1, 40)))) == base
            assert stability_count(field1d(3.7 * v)) == base
            assert stability_count(field1d(-v)) == base
            # reflection reverses every difference pairwise; count is preserved
            assert stability_count(field1d(v[::-1].copy())) == base

    def test_ratio_and_record(self):
        f = field1d([0, 1] * 8)
        assert stability_ratio(f) == 1.0
        rec = StabilityRecord(time=0.5, sn_count=4, grid_points=16)
        assert rec.ratio == 0.25
        with pytest.raises(ValueError):
            StabilityRecord(time=0.0, sn_count=17, grid_points=16)


class TestFirstInstabilityTime:
    def test_reports_first_crossing(self):
        smooth = field1d(np.cos(2 * np.pi * np.arange(32) / 32))
        rough = field1d(np.resize([0.0, 1.0], 32))
        series = [(0.0, smooth), (1.0, smooth), (2.0, rough), (3.0, rough)]
        assert first_instability_time(series, 0.1) == 2.0

    def test_none_when_stable(self):
        smooth = field1d(np.cos(2 * np.pi * np.arange(32) / 32))
        assert first_instability_time([(0.0, smooth)], 0.1) is None

    def test_threshold_is_strict(self):
        # ratio exactly eps_s does not trip the detector
        f = field1d(np.resize([0.0, 1.0], 32))  # ratio 1.0
        assert first_instability_time([(0.0, f)], 1.0) is None
        assert first_instability_time([(0.0, f)], 0.999) == 0.0

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            first_instability_time([], 0.1)


class TestRelativeErrorCV:
    def test_scaled_copy_closed_form(self):
        # coarse = alpha * restriction  =>  CV = log10 |alpha - 1|
        fine = field1d(np.sin(2 * np.pi * np.arange(64) / 64), dx=1 / 64)
        for alpha in (1.01, 0.9, 2.0):
            coarse = field1d(alpha * fine.values[::2], dx=1 / 32)
            assert relative_error_cv(coarse, fine) == pytest.approx(
                math.log10(abs(alpha - 1.0)), abs=1e-12
            )

    def test_exact_match_sentinel(self):
        fine = field1d(np.sin(2 * np.pi * np.arange(64) / 64), dx=1 / 64)
        coarse = field1d(fine.values[::4].copy(), dx=1 / 16)
        assert relative_error_cv(coarse, fine) == MINUS_INFINITY

    def test_non_nested_rejected(self):
        with pytest.raises(ValueError):
            relative_error_cv(field1d(np.ones(12)), field1d(np.ones(64)))

    def test_zero_reference_rejected(self):
        fine = field1d(np.zeros(32))
        with pytest.raises(ValueError):
            relative_error_cv(field1d(np.ones(16)), fine)

    def test_restriction_is_by_index(self):
        # node k of the coarse grid maps to node r*k of the fine grid
        fine = field1d(np.arange(16.0), dx=1 / 16)
        coarse_vals = np.arange(0.0, 16.0, 2.0)
        coarse_vals[-1] += 1.0
        coarse = field1d(coarse_vals, dx=1 / 8)
        # only the last node differs, by 1
        expect = math.log10(1.0 / np.linalg.norm(np.arange(0.0, 16.0, 2.0)))
        assert relative_error_cv(coarse, fine) == pytest.approx(expect, abs=1e-13)


class TestExpectedGapAndDCV:
    def test_as_written_gap(self):
        assert expected_cv_gap(2000, 4000, "as-written") == pytest.approx(
            2.0 * math.log10(4.0)
        )

    def test_doubling_gap(self):
        assert expected_cv_gap(2000, 4000, "doubling") == pytest.approx(math.log10(4.0))
        assert expected_cv_gap(1000, 4000, "doubling") == pytest.approx(
            2 * math.log10(4.0)
        )

    def test_richardson_gap_paper_ladder(self):
        # g=2000, gbar=4000, G=8000: (h_g^2-h_G^2)/(h_b^2-h_G^2) = 5 exactly
        assert expected_cv_gap(2000, 4000, "richardson", 8000) == pytest.approx(
            math.log10(5.0), abs=1e-14
        )

    def test_richardson_default_reference(self):
        assert expected_cv_gap(16, 32, "richardson") == pytest.approx(
            expected_cv_gap(16, 32, "richardson", 64)
        )

    def test_dcv_zero_for_exact_second_order(self):
        # manufactured CV values with error = C h^2 against an exact reference
        g, gb = 100, 200
        cvg = math.log10(3.0 / g**2)
        cvb = math.log10(3.0 / gb**2)
        assert convergence_deviation_dcv(cvg, cvb, g, gb, "doubling") < 1e-12

    def test_dcv_richardson_exact_with_finite_reference(self):
        # error vs finite reference: C (h^2 - h_G^2); richardson nails it
        C = 2.5
        g, gb, G = 2000, 4000, 8000
        cvg = math.log10(C * (1 / g**2 - 1 / G**2))
        cvb = math.log10(C * (1 / gb**2 - 1 / G**2))
        assert (
            convergence_deviation_dcv(cvg, cvb, g, gb, "richardson", G) < 1e-12
        )
        # the as-written reading penalizes the same data
        assert convergence_deviation_dcv(cvg, cvb, g, gb, "as-written") > 0.4

    def test_dcv_flags_first_order(self):
        # error = C h: deviation log10 2 under the doubling reading
        g, gb = 100, 200
        cvg, cvb = math.log10(1.0 / g), math.log10(1.0 / gb)
        assert convergence_deviation_dcv(cvg, cvb, g, gb, "doubling") == pytest.approx(
            math.log10(2.0), abs=1e-12
        )

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            convergence_deviation_dcv(-1.0, -2.0, 200, 100)
        with pytest.raises(ValueError):
            convergence_deviation_dcv(MINUS_INFINITY, -2.0, 100, 200)


class TestFirstDivergenceTime:
    def test_first_crossing(self):
        recs = [
            ConvergenceRecord(0.0, 100, -3.0, 0.01),
            ConvergenceRecord(1.0, 100, -3.0, 0.10),
            ConvergenceRecord(2.0, 100, -2.0, 0.30),
            ConvergenceRecord(3.0, 100, -1.0, 0.90),
        ]
        assert first_divergence_time(recs, 0.15) == 2.0
        assert first_divergence_time(recs, 0.95) is None
        # strict: 0.10 does not trip eps_c = 0.10
        assert first_divergence_time(recs[:2], 0.10) is None

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            first_divergence_time([], 0.1)

    def test_record_validation(self):
        with pytest.raises(ValueError):
            ConvergenceRecord(0.0, 100, -3.0, -0.1)
