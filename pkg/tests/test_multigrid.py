import numpy as np
import pytest
import scipy.linalg

from paraskin import BoundarySpec, Grid3D, MGConfig, StateVector, assemble, build_hierarchy, uniform_field
from paraskin.errors import GridMismatchError, SingularMatrixError
from paraskin.grid import BrickMortarSpec, CoefficientField, build_brick_mortar
from paraskin.multigrid import (
    block_average,
    block_inject,
    coarse_solve,
    coarsen_grid,
    prolong,
    restrict,
    smooth,
    solve,
)
from paraskin.discretization import StencilOperator, apply_matrix, to_dense

from helpers import dense_system_oracle


def identity_operator(grid: Grid3D) -> StencilOperator:
    shape = grid.shape
    return StencilOperator(
        grid,
        1.0,
        np.ones(shape),
        np.zeros((shape[0], shape[1], shape[2] - 1)),
        np.zeros((shape[0], shape[1] - 1, shape[2])),
        np.zeros((shape[0] - 1, shape[1], shape[2])),
        np.zeros(shape),
    )


class TestSmooth:
    def test_zero_steps_is_identity(self):
        g = Grid3D(3, 3, 3, 1.0, 1.0, 1.0)
        op = assemble(uniform_field(g, 1.0), BoundarySpec(), dt=0.5)
        rng = np.random.default_rng(0)
        x = StateVector(g, rng.standard_normal(g.n_cells))
        b = StateVector(g, rng.standard_normal(g.n_cells))
        out = smooth(op, x, b, omega=0.6, steps=0)
        assert np.array_equal(out.values, x.values)

    def test_scalar_system_one_step_exact(self):
        g = Grid3D(1, 1, 1, 1.0, 1.0, 1.0)
        op = assemble(uniform_field(g, 1.0), BoundarySpec(top=0.0, bottom=0.0), dt=0.25)
        a = float(op.center.reshape(-1)[0])
        b = StateVector(g, np.array([2.5]))
        out = smooth(op, StateVector.zeros(g), b, omega=1.0, steps=1)
        assert out.values[0] == pytest.approx(2.5 / a, rel=1e-15)

    def test_residual_non_increasing(self):
        rng = np.random.default_rng(1)
        g = Grid3D(5, 5, 5, 1.0, 1.0, 1.0)
        field = CoefficientField(g, rng.uniform(0.1, 2.0, g.n_cells))
        op = assemble(field, BoundarySpec(), dt=0.9)
        dense = to_dense(op)
        x = rng.standard_normal(g.n_cells)
        b = rng.standard_normal(g.n_cells)
        prev = np.linalg.norm(b - dense @ x)
        state = StateVector(g, x)
        for _ in range(3):
            state = smooth(op, state, StateVector(g, b), omega=0.6, steps=1)
            cur = np.linalg.norm(b - dense @ state.values)
            assert cur <= prev * (1.0 + 1e-12)
            prev = cur


class TestTransfers:
    def test_restrict_preserves_constants(self):
        g = Grid3D(4, 4, 4, 1.0, 1.0, 1.0)
        coarse = coarsen_grid(g)
        out = restrict(StateVector(g, np.full(g.n_cells, 2.5)), coarse)
        assert np.allclose(out.values, 2.5, rtol=0, atol=0)

    def test_prolong_preserves_constants(self):
        g = Grid3D(5, 4, 7, 1.0, 1.0, 1.0)
        coarse = coarsen_grid(g)
        out = prolong(StateVector(coarse, np.full(coarse.n_cells, -1.25)), g)
        assert np.allclose(out.values, -1.25, rtol=0, atol=0)

    def test_restrict_matches_hand_means(self):
        g = Grid3D(4, 4, 4, 1.0, 1.0, 1.0)
        coarse = coarsen_grid(g)
        rng = np.random.default_rng(2)
        fine = rng.standard_normal(g.shape)
        got = restrict(StateVector(g, fine.reshape(-1)), coarse).values3d()
        for k in range(2):
            for j in range(2):
                for i in range(2):
                    block = fine[2 * k : 2 * k + 2, 2 * j : 2 * j + 2, 2 * i : 2 * i + 2]
                    assert got[k, j, i] == pytest.approx(block.mean(), rel=1e-14)

    def test_odd_axis_tail_passes_through(self):
        g = Grid3D(2, 2, 3, 1.0, 1.0, 1.0)
        rng = np.random.default_rng(3)
        fine = rng.standard_normal(g.shape)
        got = block_average(fine)
        assert got.shape == (2, 1, 1)
        assert got[1, 0, 0] == pytest.approx(fine[2, :, :].mean(), rel=1e-14)

    def test_inject_then_average_roundtrip(self):
        g = Grid3D(6, 4, 8, 1.0, 1.0, 1.0)
        coarse = coarsen_grid(g)
        rng = np.random.default_rng(4)
        c = rng.standard_normal(coarse.shape)
        assert np.array_equal(block_average(block_inject(c, g.shape)), c)

    def test_level_mismatch_rejected(self):
        g = Grid3D(4, 4, 4, 1.0, 1.0, 1.0)
        with pytest.raises(GridMismatchError):
            restrict(StateVector.zeros(g), Grid3D(3, 2, 2, 1.0, 1.0, 1.0))


class TestCoarseSolve:
    def test_identity_returns_rhs(self):
        g = Grid3D(3, 3, 3, 1.0, 1.0, 1.0)
        op = identity_operator(g)
        b = StateVector(g, np.arange(g.n_cells, dtype=float))
        assert np.allclose(coarse_solve(op, b).values, b.values, rtol=1e-14)

    def test_two_cell_hand_system(self):
        # Column of two cells, D=1, h=1, dt=1, Dirichlet 1 top / 0 bottom:
        # rows: [1+2+1, -1; -1, 1+2+1] = [[4,-1],[-1,4]], rhs const = [0, 2].
        g = Grid3D(1, 1, 2, 1.0, 1.0, 1.0)
        op = assemble(uniform_field(g, 1.0), BoundarySpec(top=1.0, bottom=0.0), dt=1.0)
        b = StateVector(g, op.constant_vector())
        got = coarse_solve(op, b).values
        # Cramer on [[4,-1],[-1,4]] x = [0,2]
        det = 4.0 * 4.0 - 1.0
        want = np.array([(0.0 * 4.0 + 2.0 * 1.0) / det, (4.0 * 2.0 - 0.0) / det])
        assert np.allclose(got, want, rtol=1e-14)

    def test_random_system_self_consistent(self):
        rng = np.random.default_rng(5)
        g = Grid3D(5, 5, 2, 1.0, 1.0, 1.0)  # 50 unknowns
        field = CoefficientField(g, rng.uniform(0.05, 3.0, g.n_cells))
        op = assemble(field, BoundarySpec(), dt=1.3)
        b = rng.standard_normal(g.n_cells)
        x = coarse_solve(op, StateVector(g, b))
        back = apply_matrix(op, x.values3d()).reshape(-1)
        assert np.linalg.norm(back - b) <= 1e-10 * np.linalg.norm(b)

    def test_singular_matrix_detected(self):
        g = Grid3D(2, 1, 1, 1.0, 1.0, 1.0)
        op = StencilOperator(
            g,
            1.0,
            np.zeros(g.shape),
            np.zeros((1, 1, 1)),
            np.zeros((1, 0, 2)),
            np.zeros((0, 1, 2)),
            np.zeros(g.shape),
        )
        with pytest.raises(SingularMatrixError):
            coarse_solve(op, StateVector(g, np.ones(2)))


class TestSolve:
    def test_exact_initial_guess_returns_immediately(self):
        rng = np.random.default_rng(6)
        g = Grid3D(8, 8, 8, 1.0, 1.0, 1.0)
        field = CoefficientField(g, rng.uniform(0.1, 1.0, g.n_cells))
        h = build_hierarchy(field, BoundarySpec(), dt=1.0, cfg=MGConfig(coarsest_max_unknowns=64))
        x = rng.standard_normal(g.n_cells)
        b = apply_matrix(h.levels[0].op, x.reshape(g.shape)).reshape(-1)
        res = solve(h, StateVector(g, b), x0=StateVector(g, x))
        assert res.cycles == 0
        assert res.converged
        assert np.array_equal(res.state.values, x)

    def test_uniform_32_cubed_within_budget_and_matches_jacobi(self):
        g = Grid3D(32, 32, 32, 1.0, 1.0, 1.0)
        field = uniform_field(g, 1.0)
        bc = BoundarySpec()
        dt = 0.5
        h = build_hierarchy(field, bc, dt, cfg=MGConfig(coarsest_max_unknowns=512))
        rng = np.random.default_rng(7)
        b = StateVector(g, rng.random(g.n_cells))
        res = solve(h, b)
        assert res.converged
        assert res.cycles <= 30
        # Independent check: damped-Jacobi-only iteration to the same target.
        op = h.levels[0].op
        x = np.zeros(g.shape)
        b3 = b.values3d()
        for _ in range(20000):
            r = b3 - apply_matrix(op, x)
            if np.linalg.norm(r) <= 1e-8 * np.linalg.norm(b3):
                break
            x = x + 0.6 * r / op.center
        assert np.allclose(res.state.values, x.reshape(-1), atol=2e-8 * np.linalg.norm(b.values))

    def test_jumping_coefficients_match_dense_oracle(self):
        spec = BrickMortarSpec(layers=2, brick_extent=(3.0, 3.0, 1.0))
        g = Grid3D(8, 8, 8, 0.5, 0.5, 0.7)
        field = build_brick_mortar(spec, g)
        bc = BoundarySpec()
        dt = 0.8
        h = build_hierarchy(field, bc, dt, cfg=MGConfig(coarsest_max_unknowns=64, rel_tol=1e-10))
        rng = np.random.default_rng(8)
        b = rng.standard_normal(g.n_cells)
        res = solve(h, StateVector(g, b))
        assert res.converged
        a, _ = dense_system_oracle(field.values, g, bc, dt)
        want = scipy.linalg.solve(a, b)
        assert np.linalg.norm(res.state.values - want) <= 1e-8 * np.linalg.norm(want)

    def test_vcycle_contracts_monotonically(self):
        rng = np.random.default_rng(9)
        spec = BrickMortarSpec(layers=3, brick_extent=(4.0, 4.0, 1.0))
        g = Grid3D(16, 16, 16, 1.0, 1.0, 1.0)
        field = build_brick_mortar(spec, g)
        h = build_hierarchy(field, BoundarySpec(), dt=2.0, cfg=MGConfig(coarsest_max_unknowns=512))
        b = StateVector(g, rng.standard_normal(g.n_cells))
        res = solve(h, b, x0=StateVector(g, rng.standard_normal(g.n_cells)))
        hist = res.residual_history
        assert all(hist[i + 1] <= hist[i] * (1.0 + 1e-12) for i in range(len(hist) - 1))

    def test_h_robustness_uniform(self):
        cycles = {}
        for n in (16, 32, 64):
            g = Grid3D(n, n, n, 16.0 / n, 16.0 / n, 16.0 / n)
            field = uniform_field(g, 1.0)
            dt = 0.25 * (16.0 / n)  # step refined with the mesh
            h = build_hierarchy(field, BoundarySpec(), dt, cfg=MGConfig(coarsest_max_unknowns=512))
            rng = np.random.default_rng(10)
            b = StateVector(g, rng.random(g.n_cells))
            res = solve(h, b)
            assert res.converged
            cycles[n] = res.cycles
        assert cycles[32] <= cycles[16] + 5
        assert cycles[64] <= cycles[16] + 5

    def test_nonconvergence_is_signal_not_error(self):
        g = Grid3D(8, 8, 8, 1.0, 1.0, 1.0)
        field = uniform_field(g, 1.0)
        h = build_hierarchy(field, BoundarySpec(), dt=1.0, cfg=MGConfig(max_cycles=1, rel_tol=1e-30, coarsest_max_unknowns=64))
        rng = np.random.default_rng(11)
        res = solve(h, StateVector(g, rng.random(g.n_cells)))
        assert not res.converged
        assert res.cycles == 1

    def test_coarsest_direct_identity(self):
        spec = BrickMortarSpec(layers=2, brick_extent=(3.0, 3.0, 1.0))
        g = Grid3D(8, 8, 8, 0.5, 0.5, 0.7)
        h = build_hierarchy(build_brick_mortar(spec, g), BoundarySpec(), 1.0, MGConfig(coarsest_max_unknowns=64))
        bottom = h.levels[-1]
        rng = np.random.default_rng(12)
        b = StateVector(bottom.grid, rng.standard_normal(bottom.grid.n_cells))
        x = coarse_solve(bottom.op, b, h.coarse_factorization())
        back = apply_matrix(bottom.op, x.values3d()).reshape(-1)
        assert np.linalg.norm(back - b.values) <= 1e-10 * np.linalg.norm(b.values)


class TestHierarchy:
    def test_levels_halve_until_threshold(self):
        g = Grid3D(32, 32, 32, 1.0, 1.0, 1.0)
        h = build_hierarchy(uniform_field(g, 1.0), BoundarySpec(), 1.0, MGConfig(coarsest_max_unknowns=512))
        shapes = [(l.grid.nx, l.grid.ny, l.grid.nz) for l in h.levels]
        assert shapes == [(32, 32, 32), (16, 16, 16), (8, 8, 8)]
        assert h.levels[-1].grid.n_cells <= 512

    def test_coarse_coefficients_are_block_means(self):
        rng = np.random.default_rng(13)
        g = Grid3D(4, 4, 4, 1.0, 1.0, 1.0)
        field = CoefficientField(g, rng.uniform(0.1, 1.0, g.n_cells))
        h = build_hierarchy(field, BoundarySpec(), 1.0, MGConfig(coarsest_max_unknowns=8))
        fine = field.values3d()
        coarse = h.levels[1].coefficients
        assert coarse[0, 0, 0] == pytest.approx(fine[:2, :2, :2].mean(), rel=1e-14)
