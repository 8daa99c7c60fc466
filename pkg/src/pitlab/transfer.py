"""Fine/coarse level coupling: spectral resampling and FAS correction.

Restriction truncates the Fourier spectrum to the coarse band and
prolongation zero-pads it; both preserve mode amplitudes.  The coarse
Nyquist mode is folded on the way down and split symmetrically on the
way up, which makes restrict(prolong(u)) the exact identity for every
real coarse field.  The tau correction makes the coarse collocation
problem reproduce restricted fine information.
"""

from dataclasses import dataclass

import numpy as np

from .problems import _forward, _inverse

__all__ = ["LevelPair", "SpectralResampler", "IdentityResampler", "restrict_space", "prolong_space", "compute_fas_tau"]


class SpectralResampler:
    """Mode-space restriction/prolongation between two periodic grids."""

    def __init__(self, fine_n, coarse_n):
        if coarse_n < 2 or fine_n % coarse_n:
            raise ValueError(f"coarse size {coarse_n} must divide fine size {fine_n}")
        if fine_n & (fine_n - 1) or coarse_n & (coarse_n - 1):
            raise ValueError("grid sizes must be powers of two")
        self.fine_n = fine_n
        self.coarse_n = coarse_n
        self._r = self._mode_matrix(fine_n, coarse_n)

    @staticmethod
    def _mode_matrix(fine_n, coarse_n):
        # rows: coarse modes in FFT order, cols: fine modes in FFT order;
        # identity on |m| < coarse_n/2, the coarse Nyquist row collects
        # the fine +-coarse_n/2 modes.
        r = np.zeros((coarse_n, fine_n))
        half = coarse_n // 2
        for m in range(-half, half):
            r[m % coarse_n, m % fine_n] = 1.0
        if fine_n > coarse_n:
            r[half, half] += 1.0  # fine mode +coarse_n/2 into coarse Nyquist slot
        return r

    def restrict(self, values):
        if values.shape != (self.fine_n, self.fine_n):
            raise ValueError(f"expected {self.fine_n}x{self.fine_n} field, got {values.shape}")
        if self.fine_n == self.coarse_n:
            return values.copy()
        coeffs = _forward(values)
        return _inverse(self._r @ coeffs @ self._r.T)

    def prolong(self, values):
        if values.shape != (self.coarse_n, self.coarse_n):
            raise ValueError(f"expected {self.coarse_n}x{self.coarse_n} field, got {values.shape}")
        if self.fine_n == self.coarse_n:
            return values.copy()
        coeffs = _forward(values)
        p = self._p
        return _inverse(p @ coeffs @ p.T)

    @property
    def _p(self):
        # prolongation splits the coarse Nyquist halves symmetrically,
        # so it is the transpose of the restriction with weight 1/2 there
        p = self._r.T.copy()
        half = self.coarse_n // 2
        if self.fine_n > self.coarse_n:
            p[(-half) % self.fine_n, half] = 0.5
            p[half, half] = 0.5
        return p


class IdentityResampler:
    """Trivial transfer for problems without spatial coarsening."""

    def restrict(self, values):
        return np.array(values, copy=True)

    def prolong(self, values):
        return np.array(values, copy=True)


@dataclass
class LevelPair:
    """Fine and coarse problem plus the transfer operators between them.

    Both levels use the same collocation table layout (equal node count);
    node-space coarsening is an extension point, not built.
    """

    fine_problem: object
    coarse_problem: object
    resampler: object
    fine_table: object
    coarse_table: object

    def __post_init__(self):
        if self.fine_table.m != self.coarse_table.m:
            raise ValueError("fine and coarse levels must share the node count")

    def restrict(self, values):
        return self.resampler.restrict(values)

    def prolong(self, values):
        return self.resampler.prolong(values)


def restrict_space(field_values, pair):
    """Band-limit fine node values onto the coarse grid."""
    return pair.restrict(field_values)


def prolong_space(field_values, pair):
    """Zero-pad coarse node values onto the fine grid."""
    return pair.prolong(field_values)


def compute_fas_tau(fine_state, coarse_state, pair):
    """FAS correction: coarse operator at restricted values minus
    restricted fine operator, one vector per node.

    With the collocation operator C(u) = u - dt*Q*f(u) (any fine tau
    folded in), tau = C_coarse(R u) - R C_fine(u) reduces node-wise to

        tau_m = R(dt sum_j q^f_mj f^fine_j) - dt sum_j q^c_mj f^coarse_mj + R tau^fine_m

    where the coarse caches hold f evaluated at the restricted values.
    The step-transfer coupling enters through received initial values,
    not through tau.
    """
    m = pair.fine_table.m
    dt = fine_state.dt
    qf = pair.fine_table.q
    qc = pair.coarse_table.q
    tau = []
    for row in range(m):
        fine_integral = dt * sum(
            qf[row, j] * (fine_state.f_imp[j] + fine_state.f_exp[j]) for j in range(m)
        )
        coarse_integral = dt * sum(
            qc[row, j] * (coarse_state.f_imp[j] + coarse_state.f_exp[j]) for j in range(m)
        )
        tau.append(pair.restrict(fine_integral + fine_state.tau[row]) - coarse_integral)
    return tau
