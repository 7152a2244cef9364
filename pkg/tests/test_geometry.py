import math

import numpy as np
import pytest

from tangentgraph import (
    GraphMatrixResult,
    Isometry,
    PreconditionViolated,
    Subspace,
    graph_matrix_from_probes,
    is_admissible,
    make_admissible_isometry,
    matrix_norm,
    project_to_first_m,
    random_rotation,
    randomize_admissible,
    subspace_graph_matrix,
)


def power_iteration_norm(a, iters=60, seed=0):
    """Operator-norm oracle, independent of any library norm routine."""
    a = np.asarray(a, dtype=float)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = a.T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return float(np.linalg.norm(a @ v))


class TestMatrixNorm:
    def test_zero_matrix(self):
        assert matrix_norm(np.zeros((3, 2))) == 0.0
        assert matrix_norm(np.zeros((1, 1))) == 0.0

    def test_pythagorean_columns(self):
        assert matrix_norm(np.array([[3.0, 4.0]])) == pytest.approx(5.0)

    def test_identity_block_dominates_operator_norm(self):
        a = np.eye(2)
        assert matrix_norm(a) == pytest.approx(math.sqrt(2.0))
        assert power_iteration_norm(a) <= matrix_norm(a)

    def test_operator_norm_domination_random(self):
        rng = np.random.default_rng(42)
        for _ in range(10_000):
            k = rng.integers(1, 7)
            m = rng.integers(1, 7)
            a = rng.standard_normal((k, m)) * rng.uniform(0.1, 10.0)
            assert power_iteration_norm(a, iters=40, seed=1) <= matrix_norm(a) + 1e-12


class TestSubspace:
    def test_orthonormality_enforced(self):
        with pytest.raises(ValueError):
            Subspace(np.array([[1.0], [1.0]]))

    def test_span_equality_under_orthogonal_remix(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, n))
            e = Subspace.from_span(rng.standard_normal((n, m)))
            q = random_rotation(m, rng)
            assert e == Subspace(e.basis @ q)

    def test_distinct_spans_not_equal(self):
        e1 = Subspace(np.array([[1.0], [0.0]]))
        e2 = Subspace(np.array([[0.0], [1.0]]))
        assert e1 != e2


class TestIsometry:
    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            Isometry(np.diag([1.0, -1.0]), np.zeros(2))

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        iso = Isometry(random_rotation(4, rng), rng.standard_normal(4))
        x = rng.standard_normal((10, 4))
        assert np.allclose(iso.inverse_apply(iso.apply(x)), x, atol=1e-12)
        inv = iso.inverse()
        assert np.allclose(inv.apply(iso.apply(x)), x, atol=1e-12)

    def test_composition_stays_orthonormal(self):
        rng = np.random.default_rng(12)
        a = Isometry(random_rotation(5, rng), rng.standard_normal(5))
        b = Isometry(random_rotation(5, rng), rng.standard_normal(5))
        c = a.compose(b)
        assert np.allclose(c.rotation.T @ c.rotation, np.eye(5), atol=1e-12)


class TestAdmissibleIsometry:
    def test_aligned_plane_gives_aligned_frame(self):
        plane = Subspace(np.eye(4)[:, :2])
        iso = make_admissible_isometry(np.zeros(4), plane)
        assert np.allclose(iso.translation, 0.0)
        # the frame fixes the horizontal subspace setwise
        image = iso.rotation[:, :2]
        assert Subspace(image) == plane

    def test_line_in_plane(self):
        plane = Subspace(np.array([[0.0], [1.0]]))
        iso = make_admissible_isometry(np.array([1.0, 2.0]), plane)
        assert is_admissible(iso, np.array([1.0, 2.0]), plane)
        assert abs(abs(iso.rotation[1, 0]) - 1.0) < 1e-12

    def test_diagonal_line_in_space(self):
        direction = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)
        plane = Subspace(direction[:, None])
        iso = make_admissible_isometry(np.zeros(3), plane)
        assert np.allclose(np.abs(iso.rotation[:, 0]), np.abs(direction),
                           atol=1e-12)
        assert np.linalg.det(iso.rotation) == pytest.approx(1.0, abs=1e-9)
        assert is_admissible(iso, np.zeros(3), plane)

    def test_identity_admissible_at_origin(self):
        plane = Subspace(np.eye(3)[:, :2])
        iso = Isometry(np.eye(3), np.zeros(3))
        assert is_admissible(iso, np.zeros(3), plane)
        assert not is_admissible(iso, np.eye(3)[2], plane)

    def test_round_trip_property(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, n))
            plane = Subspace.from_span(rng.standard_normal((n, m)))
            base = rng.standard_normal(n) * 3.0
            iso = make_admissible_isometry(base, plane)
            assert is_admissible(iso, base, plane)

    def test_randomized_admissible_stays_admissible(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, n))
            plane = Subspace.from_span(rng.standard_normal((n, m)))
            base = rng.standard_normal(n)
            iso = randomize_admissible(make_admissible_isometry(base, plane),
                                       m, rng)
            assert is_admissible(iso, base, plane)


class TestProjection:
    def test_basic(self):
        assert np.allclose(project_to_first_m(np.array([1.0, 2.0, 3.0]), 2),
                           [1.0, 2.0])
        assert np.allclose(project_to_first_m(np.array([0.0, 5.0]), 1), [0.0])

    def test_requires_m_below_n(self):
        with pytest.raises(ValueError):
            project_to_first_m(np.array([1.0, 2.0]), 2)

    def test_base_point_maps_to_origin(self):
        # frame-composed projection sends the base point to 0 by admissibility
        rng = np.random.default_rng(8)
        for _ in range(100):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, n))
            plane = Subspace.from_span(rng.standard_normal((n, m)))
            base = rng.standard_normal(n)
            iso = make_admissible_isometry(base, plane)
            assert np.linalg.norm(
                project_to_first_m(iso.inverse_apply(base), m)
            ) < 1e-10


class TestSubspaceGraphMatrix:
    def test_horizontal_space_gives_zero(self):
        e = Subspace(np.eye(5)[:, :3])
        res = subspace_graph_matrix(e)
        assert res is not None
        assert np.allclose(res.matrix, 0.0)
        assert res.norm == 0.0

    def test_line_slope(self):
        e = Subspace.from_span(np.array([[1.0], [0.1]]))
        res = subspace_graph_matrix(e)
        assert res.matrix[0, 0] == pytest.approx(0.1, abs=1e-14)

    def test_vertical_line_is_not_a_graph(self):
        e = Subspace(np.array([[0.0], [1.0]]))
        assert subspace_graph_matrix(e) is None


class TestGraphMatrixFromProbes:
    def test_exact_axis_probes_give_zero(self):
        for m, k in [(1, 1), (2, 2), (3, 1)]:
            n = m + k
            e = Subspace(np.eye(n)[:, :m])
            probes = [np.eye(n)[j] for j in range(m)]
            res = graph_matrix_from_probes(e, probes, 0.7)
            assert res.norm == pytest.approx(0.0, abs=1e-15)

    def test_line_slope_certified(self):
        e = Subspace.from_span(np.array([[1.0], [0.1]]))
        v = np.array([1.0, 0.1]) / math.sqrt(1.01)
        # probe distance to the axis point is about 0.0996 <= 0.3/3
        res = graph_matrix_from_probes(e, [v], 0.3)
        assert res.matrix[0, 0] == pytest.approx(0.1, abs=1e-12)
        assert res.norm <= 0.3

    def test_rejects_l_above_one(self):
        e = Subspace(np.eye(2)[:, :1])
        with pytest.raises(ValueError):
            graph_matrix_from_probes(e, [np.eye(2)[0]], 1.5)

    def test_rejects_off_subspace_probe(self):
        e = Subspace(np.eye(3)[:, :1])
        bad = np.array([1.0, 0.0, 0.05])
        with pytest.raises(PreconditionViolated) as err:
            graph_matrix_from_probes(e, [bad], 0.5)
        assert err.value.index == 0

    def test_rejects_far_probe(self):
        e = Subspace.from_span(np.array([[1.0], [0.9]]))
        v = np.array([1.0, 0.9]) / np.linalg.norm([1.0, 0.9])
        with pytest.raises(PreconditionViolated):
            graph_matrix_from_probes(e, [v], 0.5)

    def test_matches_rank_solve_oracle_randomized(self):
        # ground-truth slope matrices reconstructed through valid probes
        rng = np.random.default_rng(99)
        for _ in range(2000):
            a, e, probes, L = _random_probe_case(rng)
            res = graph_matrix_from_probes(e, probes, L)
            assert np.abs(res.matrix - a).max() < 1e-9
            assert res.norm <= L + 1e-12
            direct = subspace_graph_matrix(e)
            assert np.abs(res.matrix - direct.matrix).max() < 1e-12


def _random_probe_case(rng):
    """Subspace built from a known slope matrix plus valid probe points."""
    m = int(rng.integers(1, 5))
    k = int(rng.integers(1, 5))
    n = m + k
    L = float(rng.uniform(0.05, 1.0))
    a = rng.standard_normal((k, m))
    scale = L / (4.0 * math.sqrt(m)) / max(matrix_norm(a), 1e-12)
    a = a * scale * rng.uniform(0.2, 1.0)
    e = Subspace.from_span(np.vstack([np.eye(m), a]))
    probes = []
    for j in range(m):
        w = np.eye(m)[j] + rng.standard_normal(m) * L / (16.0 * m)
        probes.append(np.concatenate([w, a @ w]))
    return a, e, probes, L
