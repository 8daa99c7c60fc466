"""IMEX SDC sweeps and collocation residuals.

One sweep applies the preconditioned Picard update node by node, with
the stiff right-hand side treated implicitly (diagonal solve supplied by
the problem) and the remaining part explicitly.  The residual measures
how far the node values are from solving the collocation system.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LevelState", "SolveFailure", "imex_sweep", "residual", "collocation_solve_direct"]


class SolveFailure(RuntimeError):
    """Implicit solve or direct factorization failed; carries the node index."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


@dataclass
class LevelState:
    """Solution data of one time step on one level.

    u0 is the value at the interval start, u[m] the current iterate at
    node m, f_imp/f_exp the cached right-hand-side evaluations (kept
    consistent with u after every update), tau the FAS correction per
    node (zero on the finest level), dt the step size.
    """

    u0: np.ndarray
    u: list
    f_imp: list
    f_exp: list
    tau: list
    dt: float
    residual_norm: float = field(default=np.inf)

    @classmethod
    def spread(cls, u0, num_nodes, dt, problem):
        """Start-of-step state: u0 copied to every node, caches filled."""
        u0 = np.asarray(u0)
        u = [u0.copy() for _ in range(num_nodes)]
        return cls(
            u0=u0.copy(),
            u=u,
            f_imp=[problem.eval_implicit(v) for v in u],
            f_exp=[problem.eval_explicit(v) for v in u],
            tau=[np.zeros_like(u0) for _ in range(num_nodes)],
            dt=float(dt),
        )

    def refresh_rhs(self, problem):
        """Re-evaluate both right-hand-side caches at the current nodes."""
        self.f_imp = [problem.eval_implicit(v) for v in self.u]
        self.f_exp = [problem.eval_explicit(v) for v in self.u]


def imex_sweep(state, tab, problem):
    """One IMEX SDC sweep over all nodes of the step; updates in place.

    For each node m the new value solves

        u_m - dt qdI_mm fI(u_m) = u0 + tau_m
            + dt sum_{j<m} [qdI_mj fI(u_j^new) + qdE_mj fE(u_j^new)]
            + dt sum_j [(q - qdI)_mj fI(u_j^old) + (q - qdE)_mj fE(u_j^old)]

    with the diagonal implicit part resolved by problem.implicit_solve.
    Right-hand-side caches are refreshed node by node as values update.
    """
    dt = state.dt
    q, qdi, qde = tab.q, tab.qd_imp, tab.qd_exp
    m = tab.m
    # integral terms from the previous iterate, fixed for the whole sweep
    old = [
        dt
        * sum(
            (q[row, j] - qdi[row, j]) * state.f_imp[j] + (q[row, j] - qde[row, j]) * state.f_exp[j]
            for j in range(m)
        )
        for row in range(m)
    ]
    for row in range(m):
        rhs = state.u0 + state.tau[row] + old[row]
        for j in range(row):
            rhs = rhs + dt * (qdi[row, j] * state.f_imp[j] + qde[row, j] * state.f_exp[j])
        try:
            u_new = problem.implicit_solve(rhs, dt * qdi[row, row])
        except Exception as exc:
            raise SolveFailure(f"implicit solve failed at node {row}: {exc}", node=row) from exc
        state.u[row] = u_new
        state.f_imp[row] = problem.eval_implicit(u_new)
        state.f_exp[row] = problem.eval_explicit(u_new)
    return state


def residual(state, tab):
    """Max-norm collocation residual over all nodes.

    Uses the cached right-hand-side values; it never re-evaluates the
    problem, so evaluation counts stay attributable to sweeps.
    """
    dt = state.dt
    worst = 0.0
    for row in range(tab.m):
        integral = dt * sum(
            tab.q[row, j] * (state.f_imp[j] + state.f_exp[j]) for j in range(tab.m)
        )
        defect = state.u0 + integral + state.tau[row] - state.u[row]
        worst = max(worst, float(np.max(np.abs(defect))))
    state.residual_norm = worst
    return worst


def collocation_solve_direct(u0, tab, problem, dt):
    """Dense direct solve of the collocation system; test oracle only.

    Solves (I - dt Q (x) A) u = (u0, ..., u0) for a linear problem whose
    full operator A = d(fI + fE)/du is available as a dense matrix.
    Limited to small systems (n_dof * m <= 4096).
    """
    u0 = np.atleast_1d(np.asarray(u0))
    a = np.atleast_2d(problem.dense_operator())
    n = u0.size
    m = tab.m
    if n * m > 4096:
        raise ValueError(f"direct collocation solve limited to 4096 unknowns, got {n * m}")
    system = np.eye(m * n) - dt * np.kron(tab.q, a)
    rhs = np.tile(u0.reshape(-1), m)
    try:
        flat = np.linalg.solve(system, rhs.astype(system.dtype, copy=False))
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"singular collocation system: {exc}") from exc
    return [flat[i * n : (i + 1) * n].reshape(u0.shape) for i in range(m)]
