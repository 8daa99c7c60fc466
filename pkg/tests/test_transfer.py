import numpy as np
import pytest

from pitlab.collocation import make_radau_table
from pitlab.problems import AllenCahnProblem
from pitlab.sweeper import LevelState, imex_sweep, residual
from pitlab.transfer import IdentityResampler, LevelPair, SpectralResampler, compute_fas_tau


def coords(n, length=1.0):
    x = -length / 2 + (np.arange(n) + 0.5) * (length / n)
    return np.meshgrid(x, x, indexing="ij")


def ac_pair(fine_n=32, coarse_n=8, eps=0.04, m=3):
    table = make_radau_table(m)
    return LevelPair(
        fine_problem=AllenCahnProblem(fine_n, 1, eps),
        coarse_problem=AllenCahnProblem(coarse_n, 1, eps),
        resampler=SpectralResampler(fine_n, coarse_n),
        fine_table=table,
        coarse_table=table,
    )


class TestSpaceTransfer:
    def test_constant_preserved_both_ways(self):
        rs = SpectralResampler(64, 16)
        c = np.full((64, 64), 2.5)
        assert np.abs(rs.restrict(c) - 2.5).max() <= 1e-13
        assert np.abs(rs.prolong(np.full((16, 16), 2.5)) - 2.5).max() <= 1e-13

    def test_low_mode_survives_restriction(self):
        # sample on vertex coordinates: mode-space resampling keeps the
        # common grid origin, so nested points line up exactly
        rs = SpectralResampler(64, 16)
        xf = np.arange(64) / 64.0 - 0.5
        xc = np.arange(16) / 16.0 - 0.5
        fine = np.cos(2 * np.pi * xf)[:, None] * np.ones((1, 64))
        expected = np.cos(2 * np.pi * xc)[:, None] * np.ones((1, 16))
        assert np.abs(rs.restrict(fine) - expected).max() <= 1e-12

    def test_high_mode_truncated_to_zero(self):
        rs = SpectralResampler(64, 16)
        xf, _ = coords(64)
        mode = 16 // 2 + 1
        assert np.abs(rs.restrict(np.cos(2 * np.pi * mode * xf))).max() <= 1e-12

    def test_restrict_after_prolong_is_identity_for_any_coarse_field(self):
        rs = SpectralResampler(64, 16)
        rng = np.random.default_rng(8)
        for _ in range(5):
            coarse = rng.standard_normal((16, 16))
            assert np.abs(rs.restrict(rs.prolong(coarse)) - coarse).max() <= 1e-12

    def test_prolong_exact_on_band_limited_fields(self):
        rs = SpectralResampler(64, 16)
        rng = np.random.default_rng(9)
        band_limited = rs.prolong(rs.restrict(rng.standard_normal((64, 64))))
        roundtrip = rs.prolong(rs.restrict(band_limited))
        assert np.abs(roundtrip - band_limited).max() <= 1e-11

    def test_size_mismatch_rejected(self):
        rs = SpectralResampler(64, 16)
        with pytest.raises(ValueError):
            rs.restrict(np.zeros((32, 32)))
        with pytest.raises(ValueError):
            rs.prolong(np.zeros((32, 32)))
        with pytest.raises(ValueError):
            SpectralResampler(48, 16)
        with pytest.raises(ValueError):
            SpectralResampler(64, 24)

    def test_identity_resampler_copies(self):
        rs = IdentityResampler()
        v = np.array([1.0, 2.0])
        out = rs.restrict(v)
        out[0] = 9.0
        assert v[0] == 1.0


class TestFasTau:
    def test_zero_rhs_gives_zero_tau(self):
        pair = ac_pair()
        m = pair.fine_table.m

        class ZeroProblem:
            def eval_implicit(self, u):
                return np.zeros_like(u)

            eval_explicit = eval_implicit

        zp = ZeroProblem()
        fine = LevelState.spread(np.random.default_rng(1).standard_normal((32, 32)), m, 0.1, zp)
        coarse = LevelState.spread(pair.restrict(fine.u0), m, 0.1, zp)
        tau = compute_fas_tau(fine, coarse, pair)
        assert max(np.abs(t).max() for t in tau) == 0.0

    def test_constant_state_pointwise_rhs_commutes(self):
        # restriction preserves constants exactly, so tau vanishes for a
        # state where the right-hand side only acts pointwise on u
        pair = ac_pair()
        m = pair.fine_table.m

        class Pointwise:
            def eval_implicit(self, u):
                return np.zeros_like(u)

            def eval_explicit(self, u):
                return u * (1.0 - u)

        pw = Pointwise()
        fine = LevelState.spread(np.full((32, 32), 0.3), m, 0.05, pw)
        coarse = LevelState.spread(pair.restrict(fine.u0), m, 0.05, pw)
        tau = compute_fas_tau(fine, coarse, pair)
        assert max(np.abs(t).max() for t in tau) <= 1e-12

    def test_band_limited_linear_field_commutes(self):
        # truncation commutes with the Laplacian on retained modes

        class Diffusion(AllenCahnProblem):
            def eval_explicit(self, u):
                return np.zeros_like(u)

        table = make_radau_table(3)
        pair = LevelPair(
            fine_problem=Diffusion(32, 1, 0.04),
            coarse_problem=Diffusion(8, 1, 0.04),
            resampler=SpectralResampler(32, 8),
            fine_table=table,
            coarse_table=table,
        )
        rng = np.random.default_rng(12)
        u0 = pair.prolong(pair.restrict(rng.standard_normal((32, 32))))
        fine = LevelState.spread(u0, 3, 0.01, pair.fine_problem)
        coarse = LevelState.spread(pair.restrict(u0), 3, 0.01, pair.coarse_problem)
        tau = compute_fas_tau(fine, coarse, pair)
        assert max(np.abs(t).max() for t in tau) <= 1e-11

    def test_fas_consistency_reproduces_restricted_fine_solution(self):
        # drive the fine level to the collocation solution, form tau, and
        # check the coarse residual of the restricted solution vanishes
        pair = ac_pair(fine_n=32, coarse_n=8)
        m = pair.fine_table.m
        u0 = 0.4 + 0.1 * np.cos(2 * np.pi * coords(32)[0])
        fine = LevelState.spread(u0, m, 1e-3, pair.fine_problem)
        for _ in range(60):
            imex_sweep(fine, pair.fine_table, pair.fine_problem)
        assert residual(fine, pair.fine_table) <= 1e-13

        coarse = LevelState.spread(pair.restrict(fine.u0), m, 1e-3, pair.coarse_problem)
        coarse.u = [pair.restrict(v) for v in fine.u]
        coarse.refresh_rhs(pair.coarse_problem)
        coarse.tau = compute_fas_tau(fine, coarse, pair)
        assert residual(coarse, pair.coarse_table) <= 1e-11
