import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bladeenv.exceptions import NoActiveDirectionsError, NotSymmetricError, NumericalError, TrivialIntersectionError
from bladeenv.linalg import (
    OrthonormalBasis,
    SubspacePair,
    eigendecompose_spsd,
    fix_signs,
    intersect_inactive,
    matrix_from_dict,
    matrix_to_dict,
    numerical_rank,
    orthogonal_complement,
    select_gap,
    subspace_distance,
)


def random_basis(rng, d, k):
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return OrthonormalBasis(Q)


def projection_residual(A, B):
    """Largest distance of a column of A from colspan(B), and vice versa."""
    A, B = A.columns, B.columns
    return max(np.max(np.abs(A - B @ (B.T @ A))), np.max(np.abs(B - A @ (A.T @ B))))


class TestOrthonormalBasis:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(NumericalError):
            OrthonormalBasis(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            OrthonormalBasis(np.zeros((2, 3)))

    def test_vector_promoted_to_column(self):
        b = OrthonormalBasis(np.array([0.0, 1.0, 0.0]))
        assert b.ambient_dim == 3 and b.subspace_dim == 1

    def test_read_only(self):
        b = OrthonormalBasis(np.eye(3))
        with pytest.raises(ValueError):
            b.columns[0, 0] = 2.0

    def test_dict_round_trip_is_lossless(self):
        b = random_basis(np.random.default_rng(0), 7, 3)
        again = OrthonormalBasis.from_dict(json.loads(json.dumps(b.to_dict())))
        assert np.array_equal(again.columns, b.columns)


class TestEigendecompose:
    def test_identity(self):
        lam, Q = eigendecompose_spsd(np.eye(3))
        assert np.allclose(lam, 1.0)
        assert np.allclose(Q.columns.T @ Q.columns, np.eye(3))

    def test_diagonal(self):
        lam, Q = eigendecompose_spsd(np.diag([1.0, 4.0, 0.0]))
        assert np.allclose(lam, [4, 1, 0])
        assert np.allclose(np.abs(Q.columns), np.eye(3)[:, [1, 0, 2]])

    def test_rank_one_outer_product(self):
        a = np.array([1.0, 2.0, 2.0])
        lam, Q = eigendecompose_spsd(np.outer(a, a))
        assert lam == pytest.approx([9, 0, 0], abs=1e-12)
        assert np.allclose(Q.columns[:, 0], a / 3)

    def test_reconstruction(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((6, 6))
        C = A @ A.T
        lam, Q = eigendecompose_spsd(C)
        R = Q.columns @ np.diag(lam) @ Q.columns.T
        assert np.linalg.norm(R - C) / np.linalg.norm(C) <= 1e-8

    def test_non_symmetric_reports_asymmetry(self):
        C = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(NotSymmetricError) as err:
            eigendecompose_spsd(C)
        assert err.value.max_asymmetry == pytest.approx(0.5)

    def test_round_off_negative_eigenvalues_clamped(self):
        C = np.diag([1.0, -1e-13])
        lam, _ = eigendecompose_spsd(C)
        assert lam[-1] == 0.0

    def test_indefinite_rejected(self):
        with pytest.raises(NumericalError):
            eigendecompose_spsd(np.diag([1.0, -0.1]))

    def test_sign_convention_reproducible(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((5, 5))
        _, Q1 = eigendecompose_spsd(A @ A.T)
        _, Q2 = eigendecompose_spsd((A @ A.T).copy())
        assert np.array_equal(Q1.columns, Q2.columns)
        for col in Q1.columns.T:
            first = col[np.argmax(np.abs(col) > 1e-12 * np.max(np.abs(col)))]
            assert first > 0

    def test_fix_signs_flips_first_entry(self):
        Q = fix_signs(np.array([[-1.0, 0.0], [0.0, -1.0]]))
        assert np.array_equal(Q, np.eye(2))


class TestSelectGap:
    def test_gap_at_two(self):
        assert select_gap([10, 9, 0.1, 0.05]) == 2

    def test_dominant_first(self):
        assert select_gap([5, 0.001, 0.0009]) == 1

    def test_two_large_rest_small(self):
        lam = np.concatenate([[3.0, 1.2], np.geomspace(1e-4, 1e-6, 16)])
        assert select_gap(lam) == 2

    def test_exact_zero_tail_uses_floor(self):
        assert select_gap([2.0, 0.0, 0.0]) == 1

    def test_all_zero(self):
        with pytest.raises(NoActiveDirectionsError):
            select_gap([1e-15, 1e-16, 0.0])

    def test_min_ratio(self):
        with pytest.raises(NoActiveDirectionsError):
            select_gap([1.0, 0.9, 0.8], min_ratio=10.0)

    def test_rejects_ascending(self):
        with pytest.raises(ValueError):
            select_gap([1.0, 2.0])


class TestIntersect:
    def test_axis_aligned(self):
        e = np.eye(3)
        V = intersect_inactive([e[:, 0], e[:, 1]])
        assert V.subspace_dim == 1
        assert np.allclose(np.abs(V.columns[:, 0]), e[:, 2])

    def test_duplicate_subspace(self):
        e1 = np.eye(3)[:, 0]
        V = intersect_inactive([e1, e1])
        assert V.subspace_dim == 2
        assert np.max(np.abs(e1 @ V.columns)) <= 1e-12

    def test_nearly_parallel_directions_merge(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal(10)
        w /= np.linalg.norm(w)
        w2 = w + 1e-12 * rng.standard_normal(10)
        w2 /= np.linalg.norm(w2)
        assert intersect_inactive([w, w2]).subspace_dim == 9

    def test_d20_two_random_directions(self):
        rng = np.random.default_rng(4)
        W1, W2 = random_basis(rng, 20, 1), random_basis(rng, 20, 1)
        V = intersect_inactive([W1, W2])
        assert V.subspace_dim == 18
        for W in (W1, W2):
            assert np.max(np.abs(W.columns.T @ V.columns)) <= 1e-10

    def test_trivial_intersection(self):
        with pytest.raises(TrivialIntersectionError):
            intersect_inactive([np.eye(3)[:, :2], np.eye(3)[:, 2]])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            intersect_inactive([np.eye(3)[:, 0], np.eye(4)[:, 0]])

    def test_empty(self):
        with pytest.raises(ValueError):
            intersect_inactive([])

    def test_single_input_gives_complement(self):
        rng = np.random.default_rng(5)
        W = random_basis(rng, 8, 3)
        V = orthogonal_complement(W)
        full = np.hstack([W.columns, V.columns])
        assert np.allclose(full.T @ full, np.eye(8), atol=1e-12)

    def test_symmetric_in_order(self):
        rng = np.random.default_rng(6)
        A, B = random_basis(rng, 10, 2), random_basis(rng, 10, 3)
        assert projection_residual(intersect_inactive([A, B]), intersect_inactive([B, A])) <= 1e-9

    def test_induction(self):
        rng = np.random.default_rng(7)
        W1, W2, W3 = (random_basis(rng, 10, k) for k in (1, 2, 2))
        direct = intersect_inactive([W1, W2, W3])
        # pairwise: complement of the pair, then remove W3 inside it
        V12 = intersect_inactive([W1, W2])
        W_pair = orthogonal_complement(V12)
        stepwise = intersect_inactive([W_pair, W3])
        assert direct.subspace_dim == stepwise.subspace_dim == 5
        assert projection_residual(direct, stepwise) <= 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 12), st.data())
    def test_property_orthogonal_to_every_input(self, d, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        ks = data.draw(st.lists(st.integers(1, 2), min_size=1, max_size=3))
        if sum(ks) >= d:
            ks = [1]
        bases = [random_basis(rng, d, k) for k in ks]
        V = intersect_inactive(bases)
        assert V.subspace_dim == d - sum(ks)
        for W in bases:
            assert np.max(np.abs(W.columns.T @ V.columns)) <= 1e-10


class TestSubspacePair:
    def test_projector_identity(self):
        rng = np.random.default_rng(8)
        Q = random_basis(rng, 6, 6).columns
        pair = SubspacePair(OrthonormalBasis(Q[:, :2]), OrthonormalBasis(Q[:, 2:]), np.array([3, 2, 1, 0.5, 0.1, 0.0]))
        assert np.allclose(pair.W @ pair.W.T + pair.V @ pair.V.T, np.eye(6), atol=1e-9)
        assert pair.gap_index == 2 and pair.spans_design_space

    def test_rejects_unsorted_eigenvalues(self):
        Q = np.eye(3)
        with pytest.raises(ValueError):
            SubspacePair(OrthonormalBasis(Q[:, :1]), OrthonormalBasis(Q[:, 1:]), np.array([1.0, 2.0, 0.0]))

    def test_rejects_overlapping_blocks(self):
        Q = np.eye(3)
        with pytest.raises(NumericalError):
            SubspacePair(OrthonormalBasis(Q[:, :1]), OrthonormalBasis(Q[:, :2]), np.array([3.0, 2.0, 1.0]))

    def test_round_trip(self):
        Q = random_basis(np.random.default_rng(9), 4, 4).columns
        pair = SubspacePair(OrthonormalBasis(Q[:, :1]), OrthonormalBasis(Q[:, 1:]), np.array([4.0, 1.0, 0.5, 0.0]))
        again = SubspacePair.from_dict(json.loads(json.dumps(pair.to_dict())))
        assert np.array_equal(again.W, pair.W) and np.array_equal(again.eigenvalues, pair.eigenvalues)


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 2))) == 0
    assert numerical_rank(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12]])) == 1
    assert numerical_rank(np.eye(4)) == 4


def test_subspace_distance():
    e = np.eye(3)
    assert subspace_distance(e[:, :1], e[:, :1]) == pytest.approx(0.0)
    assert subspace_distance(e[:, :1], e[:, 1:2]) == pytest.approx(1.0)


def test_matrix_schema_round_trip():
    M = np.random.default_rng(10).standard_normal((3, 4))
    payload = matrix_to_dict(M)
    assert payload["rows"] == 3 and payload["cols"] == 4
    assert payload["data"][:4] == M[0].tolist()
    assert np.array_equal(matrix_from_dict(json.loads(json.dumps(payload))), M)


def test_matrix_schema_size_check():
    with pytest.raises(ValueError):
        matrix_from_dict({"rows": 2, "cols": 2, "data": [1.0]})
