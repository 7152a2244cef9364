import math

import numpy as np
import pytest

import tangentgraph as tg
from tangentgraph import Inconclusive, InvalidParams, PreconditionViolated

from conftest import cached_max_radius, circle_r1


class TestLambdaCap:
    # threshold values stated with the regularity theorem
    @pytest.mark.parametrize("m,expected", [(1, 1e-5), (2, 2.5e-6), (10, 1e-7)])
    def test_values(self, m, expected):
        assert tg.lambda_cap(m) == pytest.approx(expected, rel=1e-12)

    def test_rejects_dimension_zero(self):
        with pytest.raises(ValueError):
            tg.lambda_cap(0)


class TestIterationConstants:
    def test_holds(self):
        assert tg.iteration_constant_check() is True

    def test_ratio_exact(self):
        assert (7.0 / 4.0) ** 3 == 5.359375
        assert (7.0 / 4.0) ** 3 > 5.0

    @pytest.mark.parametrize("m", [1, 2, 3, 10])
    def test_slope_lift_cancels(self, m):
        lift = (8.0 * math.sqrt(m)) ** 3 * 8.0 ** -3 * m ** -1.5
        assert abs(lift - 1.0) <= 1e-12


class TestMainTheorem:
    def test_circle_at_threshold(self, circle):
        Q = circle.sample_points(per_axis=4)
        v = tg.verify_main_theorem(circle, 1e-5, Q)
        assert v.holds
        assert v.cap == pytest.approx(1e-5)
        # height radius about 2e-5, slope radius about 1/sqrt(2)
        assert v.r0.r_hi == pytest.approx(2e-5, rel=0.05)
        assert v.r1_scaled.r_lo == pytest.approx(1 / math.sqrt(2), rel=5e-3)
        assert v.margin == pytest.approx(1 / math.sqrt(2), rel=1e-2)

    def test_flat_unbounded_convention(self):
        f = tg.zoo_build("flat", {"m": 1, "k": 1})
        v = tg.verify_main_theorem(f, 1e-5, f.sample_points(per_axis=3))
        assert v.holds and math.isinf(v.margin)
        assert v.r0.unbounded and v.r1_scaled.unbounded

    def test_rejects_large_height_bound(self, circle):
        with pytest.raises(PreconditionViolated):
            tg.verify_main_theorem(circle, 1.0, circle.sample_points(per_axis=2))

    def test_torus_positive_margin_at_threshold(self, torus, radius_cache):
        Q = [torus.point(0, [0.0, math.pi]), torus.point(0, [0.0, 0.0])]
        v = tg.verify_main_theorem(torus, tg.lambda_cap(2), Q)
        assert v.holds and v.margin > 0


class TestEnlargement:
    def test_circle_closed_form_case(self, circle):
        # base radius 0.9 * r1(0.1); the lifted pair is (0.1567, 0.8) and the
        # slope radius at 0.8 is 0.8/sqrt(1.64), comfortably larger
        Q = circle.sample_points(per_axis=4)
        r = 0.9 * circle_r1(0.1)
        assert tg.check_enlargement(circle, r, 0.1, Q) is True
        assert 1.75 * r < 0.8 / math.sqrt(1.64)

    def test_flat(self):
        f = tg.zoo_build("flat", {"m": 2, "k": 1})
        Q = f.sample_points(per_axis=3)
        assert tg.check_enlargement(f, 2.0, 1.0 / (8 * math.sqrt(2)), Q)

    def test_slope_bound_hypothesis_enforced(self, circle):
        Q = circle.sample_points(per_axis=2)
        with pytest.raises(PreconditionViolated):
            tg.check_enlargement(circle, 0.01, 0.2, Q)

    def test_base_property_hypothesis_enforced(self, circle):
        Q = circle.sample_points(per_axis=2)
        with pytest.raises(PreconditionViolated):
            tg.check_enlargement(circle, 0.9, 0.1, Q)


class TestDistanceBound:
    def test_flat_exact(self):
        f = tg.zoo_build("flat", {"m": 1, "k": 1})
        assert tg.check_distance_bound(f, f.point(0, [0.2]), 0.1, 0.2, 0.1)

    def test_circle_chords(self, circle):
        q = circle.point(0, [0.3])
        assert tg.check_distance_bound(circle, q, 0.19, 0.19, 0.1)

    def test_wiggle_micro_window(self):
        # at the resolution correction's certifiable scale: heights stay in
        # the 2 eps band, so chords beat rho + r * lam with room to spare
        w = tg.zoo_build("wiggle", {})
        q = w.point(0, [2.5e-8])  # a crest of the oscillation
        assert tg.check_distance_bound(w, q, 1e-6, 2e-6, 2.0)

    def test_rho_validation(self, circle):
        with pytest.raises(ValueError):
            tg.check_distance_bound(circle, circle.point(0, [0.0]), 0.3, 0.2,
                                    0.1)


class TestInclusion:
    def test_flat_triangle_inequality(self):
        f = tg.zoo_build("flat", {"m": 1, "k": 1})
        assert tg.check_inclusion(f, f.point(0, [0.1]), 0.5, 0.1)

    def test_circle(self, circle):
        assert tg.check_inclusion(circle, circle.point(0, [0.3]), 0.19, 0.1)

    def test_sphere(self, sphere):
        q = sphere.point(4, [0.0, 0.0])
        assert tg.check_inclusion(sphere, q, 0.1, 0.05)

    def test_slope_cap_enforced(self, circle):
        with pytest.raises(PreconditionViolated):
            tg.check_inclusion(circle, circle.point(0, [0.0]), 0.19, 0.2)


class TestDuCertifier:
    def test_flat_probes_exact(self):
        f = tg.zoo_build("flat", {"m": 2, "k": 1})
        cert = tg.certify_du_bound(f, f.point(0, [0.1, 0.0]), 0.5,
                                   tg.lambda_cap(2))
        assert cert.max_actual() == 0.0
        assert all(c == pytest.approx(0.0, abs=1e-12) for _, c, _ in
                   cert.per_node)

    def test_circle_micro_scale(self, circle):
        cert = tg.certify_du_bound(circle, circle.point(0, [0.0]), 1.9e-5,
                                   1e-5)
        assert cert.global_bound == 8.0 ** -3  # slope ratio is exactly one
        assert cert.rho == pytest.approx(1.9e-5 / 5, rel=1e-8)
        for _, certified, actual in cert.per_node:
            assert actual <= certified + 1e-15
            assert certified <= cert.global_bound + 1e-15
        assert cert.max_actual() <= 4e-6

    def test_sphere_micro_scale(self, sphere):
        cert = tg.certify_du_bound(sphere, sphere.point(4, [0.0, 0.0]), 4e-6,
                                   2.5e-6)
        assert cert.global_bound == pytest.approx(8.0 ** -3 * 2 ** -1.5,
                                                  rel=1e-12)
        for _, certified, actual in cert.per_node:
            assert actual <= certified + 1e-15
            assert certified <= cert.global_bound + 1e-15

    def test_rejects_large_height_bound(self, circle):
        with pytest.raises(PreconditionViolated):
            tg.certify_du_bound(circle, circle.point(0, [0.0]), 0.1, 0.5)

    def test_precondition_check_runs(self, circle):
        # the height bound fails at this radius, so the hypothesis is refused
        with pytest.raises(PreconditionViolated):
            tg.certify_du_bound(circle, circle.point(0, [0.0]), 0.5, 1e-5)

    def test_csv(self, tmp_path, circle):
        cert = tg.certify_du_bound(circle, circle.point(0, [0.0]), 1.9e-5,
                                   1e-5)
        path = tmp_path / "cert.csv"
        cert.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "x1,certified_bound,actual_lip"
        assert len(rows) == len(cert.per_node) + 1


class TestCounterexample:
    def test_reference_parameters(self):
        rep = tg.analyze_counterexample(1e-6, 1e-7, 0.2, angle_grid=1024)
        assert rep.verdict is True
        assert rep.lambda_gen <= 1e-5 * (1 + 1e-12)
        assert rep.lambda_gen >= 0.9e-5
        assert rep.min_over_angles_max_slope == pytest.approx(
            2 * math.pi * 1e-6 / 1e-7, rel=1e-4
        )

    def test_flat_line_is_no_counterexample(self):
        rep = tg.analyze_counterexample(0.0, 1e-7, 0.2, angle_grid=256)
        assert rep.verdict is False
        assert rep.min_over_angles_max_slope == 0.0

    def test_halving_period_doubles_slope(self):
        base = tg.analyze_counterexample(1e-6, 1e-7, 0.2, angle_grid=256)
        ratio = 1.0
        prev = base
        for _ in range(3):
            nxt = tg.analyze_counterexample(1e-6, prev.delta / 2, 0.2,
                                            angle_grid=256)
            ratio = nxt.min_over_angles_max_slope / prev.min_over_angles_max_slope
            assert ratio == pytest.approx(2.0, rel=0.01)
            prev = nxt

    def test_height_band_invariant(self):
        rep = tg.analyze_counterexample(2e-6, 1e-7, 0.1, angle_grid=256)
        assert rep.lambda_gen <= 2 * 2e-6 / 0.1 + 1e-12

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            tg.analyze_counterexample(1e-6, -1e-7, 0.2)
        with pytest.raises(InvalidParams):
            tg.analyze_counterexample(1e-6, 0.1, 0.2)
