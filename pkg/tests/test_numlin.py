import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochequiv.numlin import (
    DEFAULT_TOL,
    DimensionError,
    Subspace,
    Tolerance,
    as_matrix,
    containment_residual,
    image,
    intersect,
    invariance_residual,
    is_contained,
    is_invariant,
    kernel,
    matrices_equal,
    orthogonal_complement,
    rank,
    rank_and_kernel,
    real_invariant_eigenspaces,
    subspace_sum,
)


def span(*cols):
    return image(np.column_stack(cols))


def e(i, n):
    v = np.zeros(n)
    v[i] = 1.0
    return v


seeds = st.integers(0, 2**32 - 1)


class TestTolerance:
    def test_defaults(self):
        assert DEFAULT_TOL.rank_rel == 1e-10
        assert set(DEFAULT_TOL.as_dict()) == {"rank_rel", "eq_abs", "eq_rel", "cluster_rel"}

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            Tolerance(rank_rel=bad)


class TestRank:
    def test_identity(self):
        assert rank(np.eye(4)) == 4

    def test_zero_and_empty(self):
        assert rank(np.zeros((3, 3))) == 0
        r, K = rank_and_kernel(np.zeros((0, 3)))
        assert r == 0 and K.dim == 3

    def test_scale_invariance(self):
        # a rank-one matrix stays rank one at any scale
        M = np.outer([1.0, 2.0, 3.0], [4.0, 5.0])
        for s in (1e-150, 1.0, 1e150):
            assert rank(s * M) == 1

    def test_threshold_boundary(self):
        tol = Tolerance(rank_rel=1e-6)
        # threshold is rank_rel * max(m, n) * s_max = 2e-6
        assert rank(np.diag([1.0, 3e-6]), tol) == 2
        assert rank(np.diag([1.0, 1e-6]), tol) == 1

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(1, 6), st.integers(0, 6))
    def test_low_rank_products(self, seed, m, n, r):
        rng = np.random.default_rng(seed)
        r = min(r, m, n)
        M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        assert rank(M) == r
        K = kernel(M)
        assert K.dim == n - r
        assert np.allclose(M @ K.basis, 0.0, atol=1e-10 * max(1, np.abs(M).max()))
        assert np.allclose(K.basis.T @ K.basis, np.eye(K.dim))


class TestSubspaces:
    def test_image_of_empty(self):
        assert image(np.zeros((3, 0))).dim == 0

    def test_intersection_planes(self):
        U = span(e(0, 3), e(1, 3))
        V = span(e(1, 3), e(2, 3))
        W = intersect(U, V)
        assert W.dim == 1
        assert abs(abs(W.basis[1, 0]) - 1.0) < 1e-12

    def test_trivial_intersection(self):
        assert intersect(span(e(0, 2)), span(e(1, 2))).dim == 0
        assert intersect(Subspace.zero(3), Subspace.full(3)).dim == 0

    def test_ambient_mismatch(self):
        with pytest.raises(DimensionError):
            intersect(Subspace.full(2), Subspace.full(3))

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(1, 7), st.integers(0, 7), st.integers(0, 7))
    def test_dimension_formula(self, seed, n, a, b):
        # oracle: dim(U ∩ V) = dim U + dim V - dim(U + V)
        rng = np.random.default_rng(seed)
        a, b = min(a, n), min(b, n)
        shared = rng.integers(0, min(a, b) + 1)
        S = rng.standard_normal((n, shared))
        U = image(np.hstack([S, rng.standard_normal((n, a - shared))]))
        V = image(np.hstack([S, rng.standard_normal((n, b - shared))]))
        W = intersect(U, V)
        assert W.dim == U.dim + V.dim - subspace_sum(U, V).dim
        assert is_contained(W, U) and is_contained(W, V)

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(0, 6))
    def test_complement(self, seed, n, k):
        rng = np.random.default_rng(seed)
        U = image(rng.standard_normal((n, min(k, n))))
        Uc = orthogonal_complement(U)
        assert U.dim + Uc.dim == n
        assert np.allclose(U.basis.T @ Uc.basis, 0.0, atol=1e-12)
        assert intersect(U, Uc).dim == 0

    def test_containment(self):
        U = span(e(0, 3))
        V = span(e(0, 3), e(1, 3))
        assert is_contained(U, V)
        assert not is_contained(V, U)
        assert is_contained(Subspace.zero(3), U)
        assert containment_residual(U, V) < 1e-15

    def test_contains_vector(self):
        U = span(e(0, 3), e(1, 3))
        assert U.contains_vector([3.0, -1.0, 0.0])
        assert not U.contains_vector([0.0, 0.0, 1e-3])

    def test_projector(self):
        U = span(np.array([1.0, 1.0]))
        assert np.allclose(U.projector(), 0.5 * np.ones((2, 2)))


class TestInvariance:
    def test_diagonal(self):
        A = np.diag([1.0, 2.0, 3.0])
        assert is_invariant(A, span(e(0, 3), e(2, 3)))
        assert not is_invariant(A, span(np.array([1.0, 1.0, 0.0])))

    def test_nilpotent_kernel(self):
        # A maps e2 to e1 and e1 to 0: span(e1) invariant, span(e2) not
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert is_invariant(A, span(e(0, 2)))
        assert not is_invariant(A, span(e(1, 2)))
        assert invariance_residual(A, span(e(1, 2))) == pytest.approx(1.0)

    def test_nearly_annihilated_subspace(self):
        # A U is tiny but inside U: must still count as invariant
        A = np.diag([1e-14, 1.0])
        assert is_invariant(A, span(e(0, 2)))

    def test_large_norm(self):
        A = 1e8 * np.array([[1.0, 1.0], [0.0, 2.0]])
        assert is_invariant(A, span(e(0, 2)))
        assert not is_invariant(A, span(e(1, 2)))


class TestMatricesEqual:
    def test_mixed_rule(self):
        ok, res = matrices_equal([[1.0]], [[1.0 + 1e-12]])
        assert ok and res == pytest.approx(1e-12)
        assert matrices_equal(1e12 * np.eye(2), 1e12 * np.eye(2) + 1.0)[0]
        assert not matrices_equal(np.eye(2), np.eye(2) + 1e-6)[0]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matrices_equal(np.eye(2), np.eye(3))


class TestAsMatrix:
    def test_scalar_and_vector(self):
        assert as_matrix(3.0).shape == (1, 1)
        assert as_matrix([1.0, 2.0]).shape == (2, 1)
        assert as_matrix([1.0, 2.0], shape=(1, 2)).shape == (1, 2)

    def test_rejects(self):
        with pytest.raises(ValueError):
            as_matrix([[np.nan]])
        with pytest.raises(DimensionError):
            as_matrix(np.zeros((2, 2, 2)))
        with pytest.raises(DimensionError):
            as_matrix(np.eye(2), shape=(3, 3))


def _jordan_test_matrix(rng):
    """Block-diagonal Jordan-type matrix with known generalized eigenspaces
    (in base coordinates the coordinate blocks), hidden by a similarity."""
    J = np.zeros((6, 6))
    J[0:2, 0:2] = [[0.5, 1.0], [0.0, 0.5]]          # defective real eigenvalue
    J[2:4, 2:4] = [[0.3, -0.8], [0.8, 0.3]]         # complex pair
    J[4, 4] = -0.7
    J[5, 5] = 0.5 + 1e-3                            # close but distinct
    S = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    A = S @ J @ np.linalg.inv(S)
    blocks = {0.5: S[:, 0:2], 0.3: S[:, 2:4], -0.7: S[:, 4:5], 0.501: S[:, 5:6]}
    return A, blocks


class TestEigenspaces:
    @pytest.mark.parametrize("method", ["schur", "kernel"])
    def test_known_structure(self, method):
        rng = np.random.default_rng(3)
        A, blocks = _jordan_test_matrix(rng)
        clusters = real_invariant_eigenspaces(A, method=method)
        assert sorted(c.multiplicity for c in clusters) == [1, 1, 2, 2]
        for c in clusters:
            key = min(blocks, key=lambda k: abs(k - c.center.real))
            expected = image(blocks[key])
            assert c.subspace.dim == expected.dim
            assert is_contained(c.subspace, expected, Tolerance(rank_rel=1e-6))
            assert is_invariant(A, c.subspace, Tolerance(rank_rel=1e-8))

    def test_sorted_by_real_part(self):
        clusters = real_invariant_eigenspaces(np.diag([0.1, 2.0, -1.0]))
        assert [round(c.center.real, 6) for c in clusters] == [2.0, 0.1, -1.0]

    def test_repeated_diagonal(self):
        clusters = real_invariant_eigenspaces(np.diag([0.5, 0.5, 0.3]))
        assert [c.multiplicity for c in clusters] == [2, 1]
        assert clusters[0].subspace.dim == 2

    def test_empty(self):
        assert real_invariant_eigenspaces(np.zeros((0, 0))) == []

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 6))
    def test_direct_sum(self, seed, n):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, n))
        clusters = real_invariant_eigenspaces(A)
        assert sum(c.multiplicity for c in clusters) == n
        basis = np.hstack([c.subspace.basis for c in clusters])
        assert rank(basis, Tolerance(rank_rel=1e-8)) == n
        for c in clusters:
            assert is_invariant(A, c.subspace, Tolerance(rank_rel=1e-7))


class TestImageScale:
    def test_rounding_noise_is_not_a_direction(self):
        noise = 1e-17 * np.array([[1.0], [2.0]])
        assert image(noise).dim == 1
        assert image(noise, scale=1.0).dim == 0
        assert image(np.eye(2), scale=1.0).dim == 2
