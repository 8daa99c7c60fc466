import numpy as np
import pytest

from pitlab.collocation import make_radau_table
from pitlab.problems import DahlquistProblem
from pitlab.sweeper import LevelState, collocation_solve_direct, imex_sweep, residual


def dense_sweep_oracle(u_old, u0, tau, dt, tab, lam_i, lam_e):
    """Literal dense-matrix form of the preconditioned update.

    Solves (I - dt (QdI li + QdE le)) u_new
         = u0 + tau + dt ((Q - QdI) li + (Q - QdE) le) u_old
    for the scalar split problem, treating all nodes at once.
    """
    m = tab.m
    lhs = np.eye(m) - dt * (tab.qd_imp * lam_i + tab.qd_exp * lam_e)
    rhs = u0 + tau + dt * ((tab.q - tab.qd_imp) * lam_i + (tab.q - tab.qd_exp) * lam_e) @ u_old
    return np.linalg.solve(lhs, rhs)


def spread(problem, u0, m, dt):
    return LevelState.spread(np.atleast_1d(u0), m, dt, problem)


class TestImexSweep:
    @pytest.mark.parametrize("lam_i,lam_e", [(-1.0, 0.0), (-2.0, 0.5), (0.0, -0.7)])
    def test_matches_dense_matrix_oracle(self, lam_i, lam_e):
        tab = make_radau_table(3)
        problem = DahlquistProblem(lam_i, lam_e)
        state = spread(problem, 1.0, 3, 0.1)
        for _ in range(3):
            u_old = np.array([v[0] for v in state.u])
            expected = dense_sweep_oracle(u_old, 1.0, np.zeros(3), 0.1, tab, lam_i, lam_e)
            imex_sweep(state, tab, problem)
            got = np.array([v[0] for v in state.u])
            assert np.abs(got - expected).max() <= 1e-13

    def test_collocation_solution_is_fixed_point(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        exact = collocation_solve_direct(np.array([1.0]), tab, problem, 0.1)
        state = spread(problem, 1.0, 3, 0.1)
        state.u = [v.copy() for v in exact]
        state.refresh_rhs(problem)
        before = [v.copy() for v in state.u]
        imex_sweep(state, tab, problem)
        diff = max(np.abs(a - b).max() for a, b in zip(before, state.u))
        assert diff <= 1e-12

    def test_zero_rhs_gives_initial_value_plus_tau(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(0.0, 0.0)
        state = spread(problem, 2.0, 3, 0.1)
        state.tau = [np.array([0.1 * (m + 1)]) for m in range(3)]
        imex_sweep(state, tab, problem)
        for m in range(3):
            assert state.u[m] == pytest.approx([2.0 + 0.1 * (m + 1)], abs=1e-14)


class TestResidual:
    def test_collocation_solution_has_zero_residual(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        state = spread(problem, 1.0, 3, 0.1)
        state.u = [v.copy() for v in collocation_solve_direct(np.array([1.0]), tab, problem, 0.1)]
        state.refresh_rhs(problem)
        assert residual(state, tab) <= 1e-12

    def test_zero_everything_is_zero(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(0.0, 0.0)
        state = spread(problem, 1.0, 3, 0.1)
        assert residual(state, tab) == 0.0

    def test_hand_value_for_two_nodes(self):
        # u == u0 == 1, f == -u, dt = 0.1: defect is dt * |row sum of Q|,
        # rows sum to 1/3 and 1, so the max-residual is 0.1
        tab = make_radau_table(2)
        problem = DahlquistProblem(-1.0, 0.0)
        state = spread(problem, 1.0, 2, 0.1)
        assert residual(state, tab) == pytest.approx(0.1, abs=1e-14)


class TestDirectSolve:
    def test_fifth_order_accuracy_against_exponential(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        u = collocation_solve_direct(np.array([1.0]), tab, problem, 0.1)
        assert abs(u[-1][0] - np.exp(-0.1)) <= 1e-7

    def test_zero_rate_is_identity(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(0.0, 0.0)
        u = collocation_solve_direct(np.array([1.0]), tab, problem, 0.1)
        for v in u:
            assert v == pytest.approx([1.0])

    def test_sweeps_converge_to_direct_solution(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        exact = collocation_solve_direct(np.array([1.0]), tab, problem, 0.1)
        state = spread(problem, 1.0, 3, 0.1)
        for _ in range(20):
            imex_sweep(state, tab, problem)
        assert max(np.abs(a - b).max() for a, b in zip(state.u, exact)) <= 1e-10

    def test_size_guard(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        with pytest.raises(ValueError, match="4096"):
            collocation_solve_direct(np.zeros(4096), tab, problem, 0.1)


class TestSweepProperties:
    @pytest.mark.parametrize("implicit", ["lu", "be"])
    def test_preconditioner_independence_of_fixed_point(self, implicit):
        tab = make_radau_table(3, implicit=implicit)
        problem = DahlquistProblem(-1.0, -0.5)
        exact = collocation_solve_direct(np.array([1.0]), tab, problem, 0.1)
        state = spread(problem, 1.0, 3, 0.1)
        for _ in range(30):
            imex_sweep(state, tab, problem)
        assert max(np.abs(a - b).max() for a, b in zip(state.u, exact)) <= 1e-10

    def test_complex_rates_converge_to_direct_solution(self):
        # oscillatory decay: the state and caches stay complex throughout
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0 + 2.0j, 0.0)
        exact = collocation_solve_direct(np.array([1.0 + 0.0j]), tab, problem, 0.1)
        state = LevelState.spread(np.array([1.0 + 0.0j]), 3, 0.1, problem)
        for _ in range(25):
            imex_sweep(state, tab, problem)
        assert max(np.abs(a - b).max() for a, b in zip(state.u, exact)) <= 1e-12
        assert abs(exact[-1][0] - np.exp((-1.0 + 2.0j) * 0.1)) <= 1e-7

    def test_residual_contracts_monotonically(self):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        state = spread(problem, 1.0, 3, 0.1)
        last = residual(state, tab)
        for _ in range(10):
            imex_sweep(state, tab, problem)
            now = residual(state, tab)
            # strict decrease until the rounding floor
            assert now < last or now <= 1e-14
            last = now

    @pytest.mark.parametrize("sweeps,expected_order", [(1, 1), (2, 2), (3, 3)])
    def test_one_order_per_sweep(self, sweeps, expected_order):
        tab = make_radau_table(3)
        problem = DahlquistProblem(-1.0, 0.0)
        errors = []
        for dt in (0.1, 0.05, 0.025, 0.0125):
            steps = round(1.0 / dt)
            u = np.array([1.0])
            for _ in range(steps):
                state = LevelState.spread(u, 3, dt, problem)
                for _ in range(sweeps):
                    imex_sweep(state, tab, problem)
                u = state.u[-1]
            errors.append(abs(u[0] - np.exp(-1.0)))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert abs(orders.mean() - expected_order) <= 0.4
