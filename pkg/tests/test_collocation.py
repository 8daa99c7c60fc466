import numpy as np
import pytest

from pitlab.collocation import (
    NumericFailure,
    build_Q,
    build_QDelta_EE,
    build_QDelta_LU,
    make_radau_table,
    radau_nodes,
)

# hand-derived values for the two-point rule on [0, 1]
Q2 = np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]])
QD2_LU = np.array([[5.0 / 12.0, 0.0], [3.0 / 4.0, 2.0 / 5.0]])
M3_NODES = np.array([(4.0 - np.sqrt(6.0)) / 10.0, (4.0 + np.sqrt(6.0)) / 10.0, 1.0])


class TestRadauNodes:
    def test_single_node_is_right_endpoint(self):
        assert radau_nodes(1, 0.0, 1.0) == pytest.approx([1.0])

    def test_two_nodes(self):
        assert radau_nodes(2, 0.0, 1.0) == pytest.approx([1.0 / 3.0, 1.0], abs=1e-14)

    def test_three_nodes_match_radau_polynomial_roots(self):
        # interior points are the roots of 5x^2 + 2x - 1 mapped to [0, 1]
        assert radau_nodes(3, 0.0, 1.0) == pytest.approx(M3_NODES, abs=1e-13)

    @pytest.mark.parametrize("m", range(1, 10))
    def test_strictly_increasing_and_right_anchored(self, m):
        nodes = radau_nodes(m, 0.0, 1.0)
        assert np.all(np.diff(nodes) > 0)
        assert nodes[-1] == 1.0

    def test_scale_covariance(self):
        unit = radau_nodes(4, 0.0, 1.0)
        shifted = radau_nodes(4, 2.5, 4.0)
        assert np.abs(shifted - (2.5 + 1.5 * unit)).max() <= 1e-15

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            radau_nodes(0, 0.0, 1.0)
        with pytest.raises(ValueError):
            radau_nodes(3, 1.0, 1.0)


class TestBuildQ:
    def test_hand_integrated_two_point_matrix(self):
        q = build_Q(radau_nodes(2, 0.0, 1.0))
        assert np.abs(q - Q2).max() <= 1e-13

    def test_single_node_backward_euler_weight(self):
        assert np.abs(build_Q(np.array([1.0])) - np.array([[1.0]])).max() <= 1e-15

    @pytest.mark.parametrize("m", range(1, 10))
    def test_quadrature_exactness(self, m):
        # row m integrates every monomial of degree < m over [0, c_m]
        tab = make_radau_table(m)
        for k in range(m):
            lhs = tab.q @ tab.nodes**k
            rhs = tab.nodes ** (k + 1) / (k + 1)
            assert np.abs(lhs - rhs).max() <= 1e-12

    def test_duplicate_nodes_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            build_Q(np.array([0.5, 0.5, 1.0]))


class TestQDeltaLU:
    def test_hand_two_by_two(self):
        assert np.abs(build_QDelta_LU(Q2) - QD2_LU).max() <= 1e-13

    def test_identity_fixed_point(self):
        assert np.array_equal(build_QDelta_LU(np.eye(4)), np.eye(4))

    @pytest.mark.parametrize("m", range(2, 10))
    def test_reconstruction_and_positive_diagonal(self, m):
        q = make_radau_table(m).q
        u_t = build_QDelta_LU(q)
        assert np.abs(np.triu(u_t, 1)).max() == 0.0  # lower triangular result
        assert np.all(np.diag(u_t) > 0)
        # rebuild L = Q^T U^{-1} and check unit diagonal and L U = Q^T
        lower = np.linalg.solve(u_t, q).T
        assert np.abs(np.tril(lower, -1) + np.eye(m) - lower).max() <= 1e-10
        assert np.abs(lower @ u_t.T - q.T).max() <= 1e-13 * max(1.0, np.abs(q).max())

    def test_zero_pivot_reported(self):
        with pytest.raises(NumericFailure, match="pivot at index 0"):
            build_QDelta_LU(np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestQDeltaEE:
    def test_two_point_spacing(self):
        qde = build_QDelta_EE(radau_nodes(2, 0.0, 1.0))
        assert np.abs(qde - np.array([[0.0, 0.0], [2.0 / 3.0, 0.0]])).max() <= 1e-14

    def test_single_node(self):
        assert np.array_equal(build_QDelta_EE(np.array([1.0])), [[0.0]])

    @pytest.mark.parametrize("m", range(1, 8))
    def test_strictly_lower_triangular(self, m):
        qde = build_QDelta_EE(radau_nodes(m, 0.0, 1.0))
        assert np.abs(np.triu(qde)).max() == 0.0


class TestTable:
    def test_nodes_live_on_the_requested_interval(self):
        tab = make_radau_table(3, 1.0, 3.0)
        assert tab.nodes[-1] == 3.0
        assert tab.t0 == 1.0 and tab.t1 == 3.0
        # Q stays unit-interval scaled regardless of the window
        assert np.abs(tab.q - make_radau_table(3).q).max() <= 1e-15

    def test_backward_euler_variant_is_lower_triangular(self):
        tab = make_radau_table(3, implicit="be")
        assert np.abs(np.triu(tab.qd_imp, 1)).max() == 0.0
        assert np.all(np.diag(tab.qd_imp) > 0)

    def test_unknown_preconditioner(self):
        with pytest.raises(ValueError):
            make_radau_table(3, implicit="nope")
