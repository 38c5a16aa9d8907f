import numpy as np
import pytest

from helpers import random_scale
from tsvar.timescale import (
    PointClass,
    TimeScaleError,
    from_points,
    h_integers,
    kappa2_range,
    kappa2_sub_range,
    kappa_range,
    kappa_sub_range,
    mu,
    nu,
    point_class,
    q_scale,
    rho,
    sigma,
    uniform,
)


class TestConstruction:
    def test_three_point_scale(self):
        ts = from_points([0, 0.5, 1])
        np.testing.assert_array_equal(ts.points, [0, 0.5, 1])

    def test_integer_scale(self):
        ts = from_points([0, 1, 2, 3])
        assert ts.a == 0 and ts.b == 3

    def test_geometric_points(self):
        ts = from_points([1, 2, 4, 8])
        assert sigma(ts, 2) == 4 and rho(ts, 2) == 1

    def test_too_few_points(self):
        with pytest.raises(TimeScaleError):
            from_points([0, 1])

    def test_non_monotone(self):
        with pytest.raises(TimeScaleError):
            from_points([0, 2, 1])

    def test_exact_duplicates_rejected(self):
        with pytest.raises(TimeScaleError):
            from_points([0, 1, 1, 2])

    def test_nonfinite_rejected(self):
        with pytest.raises(TimeScaleError):
            from_points([0, 1, np.inf])


class TestGenerators:
    def test_uniform_three_points(self):
        np.testing.assert_array_equal(uniform(0, 1, 3).points, [0, 0.5, 1])

    def test_uniform_needs_three(self):
        with pytest.raises(TimeScaleError):
            uniform(0, 1, 2)

    def test_uniform_needs_increasing_span(self):
        with pytest.raises(TimeScaleError):
            uniform(1, 0, 5)

    def test_h_must_be_positive(self):
        with pytest.raises(TimeScaleError):
            h_integers(0, 6, -1)

    def test_h_integers_step_two(self):
        ts = h_integers(0, 6, 2)
        np.testing.assert_array_equal(ts.points, [0, 2, 4, 6])
        assert sigma(ts, 4) == 6
        assert mu(ts, 4) == 2

    def test_h_integers_requires_integer_steps(self):
        with pytest.raises(TimeScaleError):
            h_integers(0, 5, 2)
        with pytest.raises(TimeScaleError):
            h_integers(0, 2, 2)  # only one step

    def test_q_scale_values(self):
        ts = q_scale(2, 0, 3)
        np.testing.assert_array_equal(ts.points, [1, 2, 4, 8])
        assert sigma(ts, 2) == 4
        assert rho(ts, 2) == 1
        assert mu(ts, 2) == 2
        assert nu(ts, 2) == 1

    def test_q_scale_needs_three_points(self):
        with pytest.raises(TimeScaleError):
            q_scale(2, 0, 1)
        with pytest.raises(TimeScaleError):
            q_scale(0.5, 0, 3)

    def test_generators_match_from_points_bit_exactly(self):
        for ts in (uniform(0, 1, 17), h_integers(-3, 3, 1.5), q_scale(1.5, -2, 4)):
            rebuilt = from_points(list(ts.points))
            assert rebuilt == ts
            np.testing.assert_array_equal(rebuilt.points, ts.points)


class TestJumpOperators:
    def test_endpoint_conventions(self):
        ts = from_points([0, 0.5, 1])
        assert sigma(ts, 1) == 1 and mu(ts, 1) == 0
        assert rho(ts, 0) == 0 and nu(ts, 0) == 0

    def test_interior_neighbors(self):
        ts = from_points([0, 0.5, 1])
        assert sigma(ts, 0.5) == 1
        assert rho(ts, 0.5) == 0

    def test_unknown_point_rejected(self):
        ts = from_points([0, 0.5, 1])
        with pytest.raises(TimeScaleError):
            sigma(ts, 0.25)

    def test_jump_inverses_on_random_scales(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            ts = random_scale(rng)
            for t in ts.points[:-1]:
                assert rho(ts, sigma(ts, t)) == t
            for t in ts.points[1:]:
                assert sigma(ts, rho(ts, t)) == t

    def test_graininess_signs(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            ts = random_scale(rng)
            assert np.all(ts.mu_values[:-1] > 0) and ts.mu_values[-1] == 0
            assert np.all(ts.nu_values[1:] > 0) and ts.nu_values[0] == 0


class TestClassification:
    def test_interior_points_are_isolated(self):
        ts = from_points([0, 1, 2, 3])
        cls = point_class(ts, 1)
        assert PointClass.ISOLATED in cls
        assert PointClass.RIGHT_SCATTERED in cls
        assert PointClass.LEFT_SCATTERED in cls

    def test_endpoints_clamp_to_dense_side(self):
        ts = from_points([0, 1, 2, 3])
        assert PointClass.LEFT_DENSE in point_class(ts, 0)
        assert PointClass.RIGHT_SCATTERED in point_class(ts, 0)
        assert PointClass.RIGHT_DENSE in point_class(ts, 3)
        assert PointClass.LEFT_SCATTERED in point_class(ts, 3)
        assert PointClass.DENSE not in point_class(ts, 0)


class TestIndexRanges:
    def test_integer_scale_ranges(self):
        ts = from_points([0, 1, 2, 3])
        assert list(kappa_range(ts)) == [0, 1, 2]
        assert list(kappa_sub_range(ts)) == [1, 2, 3]
        assert list(kappa2_range(ts)) == [0, 1]
        assert list(kappa2_sub_range(ts)) == [2, 3]

    def test_three_point_intersection(self):
        ts = from_points([0, 0.5, 1])
        both = set(kappa_range(ts)) & set(kappa_sub_range(ts))
        assert both == {1}
