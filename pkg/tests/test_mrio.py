import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tariffmrio.data_io import generate_fixture
from tariffmrio.mrio import (
    BlockMatrix,
    DemandVector,
    MRIOError,
    SolverError,
    WorldDims,
    build_coefficients,
    check_stochastic,
    compute_trade_flows,
    normalize_allocation,
    solve_production,
    spectral_radius_bound,
    stack_blocks,
)
from tariffmrio.equilibrium import Economy


def one_by_one(a, t=1.0):
    dims = WorldDims.synthetic(1, 1)
    return dims, BlockMatrix(dims, "A", [[[a]]]), BlockMatrix(dims, "T", [[[t]]])


class TestWorldDims:
    def test_flat_index_is_country_major(self):
        dims = WorldDims(("USA", "CHN", "CAN"), ("D01T02", "D24"))
        assert dims.size == 6
        assert dims.index("CHN", "D24") == 3
        assert dims.index(2, 0) == 4
        assert dims.labels()[3] == "CHN_D24"
        np.testing.assert_array_equal(dims.country_of(), [0, 0, 1, 1, 2, 2])
        np.testing.assert_array_equal(dims.sector_of(), [0, 1, 0, 1, 0, 1])

    def test_duplicate_codes_rejected(self):
        with pytest.raises(MRIOError, match="duplicate country"):
            WorldDims(("USA", "USA"), ("S",))

    def test_empty_dims_rejected(self):
        with pytest.raises(MRIOError):
            WorldDims((), ("S",))
        with pytest.raises(MRIOError):
            WorldDims.synthetic(1, 0)


class TestBlockMatrix:
    def test_from_dense_round_trip_block_diagonal(self, rng):
        dims = WorldDims.synthetic(3, 2)
        blocks = rng.uniform(size=(3, 2, 2))
        A = BlockMatrix(dims, "A", blocks)
        again = BlockMatrix.from_dense(dims, "A", A.toarray())
        np.testing.assert_array_equal(again.blocks, blocks)
        dense = A.toarray()
        assert dense[0:2, 2:4].sum() == 0 and dense[4:6, 0:2].sum() == 0

    def test_from_dense_round_trip_commodity_diagonal(self, rng):
        dims = WorldDims.synthetic(3, 2)
        blocks = rng.uniform(size=(3, 3, 2))
        T = BlockMatrix(dims, "ALL", blocks)
        dense = T.toarray()
        # entry (o*n+y, d*n+y') vanishes unless y == y'
        assert dense[0, 3] == 0 and dense[1, 2] == 0
        assert dense[2 * 2 + 1, 0 * 2 + 1] == blocks[2, 0, 1]
        np.testing.assert_array_equal(BlockMatrix.from_dense(dims, "ALL", dense).blocks, blocks)

    def test_off_structure_entries_rejected(self):
        dims = WorldDims.synthetic(2, 1)
        with pytest.raises(MRIOError, match="outside its block structure"):
            BlockMatrix.from_dense(dims, "A", [[0.1, 0.2], [0.0, 0.1]])
        dims = WorldDims.synthetic(1, 2)
        with pytest.raises(MRIOError, match="outside its block structure"):
            BlockMatrix.from_dense(dims, "T", [[1.0, 0.5], [0.0, 1.0]])

    def test_negative_and_shape_rejected(self):
        dims = WorldDims.synthetic(1, 1)
        with pytest.raises(MRIOError, match="negative"):
            BlockMatrix(dims, "Z", [[[-1.0]]])
        with pytest.raises(MRIOError, match="shape"):
            BlockMatrix(dims, "T", np.ones((2, 2, 1)))
        with pytest.raises(MRIOError, match="kind"):
            BlockMatrix(dims, "Q", [[[1.0]]])

    def test_blocks_are_immutable(self):
        _, A, _ = one_by_one(0.5)
        with pytest.raises(ValueError):
            A.blocks[0, 0, 0] = 1.0

    def test_matvec_and_rmatvec_match_dense(self, rng):
        dims = WorldDims.synthetic(3, 4)
        v = rng.normal(size=dims.size)
        for kind, shape in (("A", (3, 4, 4)), ("T", (3, 3, 4))):
            M = BlockMatrix(dims, kind, rng.uniform(size=shape))
            dense = M.toarray()
            np.testing.assert_allclose(M.matvec(v), dense @ v, rtol=1e-13)
            np.testing.assert_allclose(M.rmatvec(v), dense.T @ v, rtol=1e-13)


class TestBuildCoefficients:
    def test_single_cell_ratio(self):
        dims = WorldDims.synthetic(1, 1)
        A = build_coefficients(BlockMatrix(dims, "Z", [[[50.0]]]), [100.0])
        assert A.blocks[0, 0, 0] == 0.5

    def test_hand_computed_two_sector_block(self):
        dims = WorldDims.synthetic(1, 2)
        Z = stack_blocks(dims, [[[10.0, 20.0], [30.0, 40.0]]], "Z")
        A = build_coefficients(Z, [100.0, 200.0])
        np.testing.assert_allclose(A.toarray(), [[0.1, 0.1], [0.3, 0.2]], rtol=0, atol=1e-15)

    def test_zero_column_maps_to_zero(self):
        dims = WorldDims.synthetic(1, 2)
        Z = stack_blocks(dims, [[[10.0, 0.0], [5.0, 0.0]]], "Z")
        A = build_coefficients(Z, [100.0, 0.0])
        np.testing.assert_array_equal(A.blocks[0, :, 1], [0.0, 0.0])
        assert np.all(np.isfinite(A.blocks))

    def test_inputs_without_output_rejected(self):
        dims = WorldDims.synthetic(1, 2)
        Z = stack_blocks(dims, [[[10.0, 1.0], [5.0, 0.0]]], "Z")
        with pytest.raises(MRIOError, match="zero output"):
            build_coefficients(Z, [100.0, 0.0])

    def test_unproductive_column_rejected(self):
        dims = WorldDims.synthetic(1, 1)
        with pytest.raises(MRIOError, match="unproductive"):
            build_coefficients(BlockMatrix(dims, "Z", [[[120.0]]]), [100.0])

    def test_dimension_mismatch(self):
        dims = WorldDims.synthetic(1, 1)
        with pytest.raises(MRIOError, match="length"):
            build_coefficients(BlockMatrix(dims, "Z", [[[1.0]]]), [1.0, 2.0])


class TestNormalizeAllocation:
    def make(self, column):
        dims = WorldDims.synthetic(len(column), 1)
        blocks = np.zeros((len(column), len(column), 1))
        blocks[:, 0, 0] = column
        blocks[0, 1:, 0] = 1.0  # keep other destination columns non-empty
        return BlockMatrix(dims, "ALL", blocks)

    def test_single_supplier(self):
        T = normalize_allocation(self.make([0.0, 7.0]))
        np.testing.assert_array_equal(T.blocks[:, 0, 0], [0.0, 1.0])

    def test_proportional_shares(self):
        T = normalize_allocation(self.make([30.0, 70.0]))
        np.testing.assert_allclose(T.blocks[:, 0, 0], [0.3, 0.7], rtol=1e-15)

    def test_three_origins(self):
        T = normalize_allocation(self.make([20.0, 30.0, 50.0]))
        expected = np.array([20.0, 30.0, 50.0]) / 100.0
        np.testing.assert_allclose(T.blocks[:, 0, 0], expected, rtol=1e-15)
        assert abs(T.blocks[:, 0, 0].sum() - 1.0) <= 1e-12

    def test_zero_column_rejected_unless_filled(self):
        ALL = self.make([0.0, 0.0])
        with pytest.raises(MRIOError, match="zero allocation column"):
            normalize_allocation(ALL)
        T = normalize_allocation(ALL, fill_empty=True)
        np.testing.assert_array_equal(T.blocks[:, 0, 0], [1.0, 0.0])
        check_stochastic(T)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_columns_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        dims = WorldDims.synthetic(4, 3)
        ALL = BlockMatrix(dims, "ALL", rng.uniform(0.01, 100.0, size=(4, 4, 3)))
        check_stochastic(normalize_allocation(ALL))


class TestSolveProduction:
    def test_scalar_geometric_series(self):
        _, A, T = one_by_one(0.5)
        assert solve_production(A, T, [10.0])[0] == pytest.approx(20.0, rel=1e-14)

    def test_no_intermediates_gives_T_fd(self, rng):
        dims = WorldDims.synthetic(3, 2)
        raw = rng.uniform(size=(3, 3, 2))
        T = BlockMatrix(dims, "T", raw / raw.sum(axis=0, keepdims=True))
        A = BlockMatrix(dims, "A", np.zeros((3, 2, 2)))
        fd = rng.uniform(1, 10, dims.size)
        np.testing.assert_allclose(solve_production(A, T, fd), T.toarray() @ fd, rtol=1e-13)

    def test_two_country_dense_oracle(self):
        dims = WorldDims.synthetic(2, 1)
        A = BlockMatrix(dims, "A", [[[0.2]], [[0.3]]])
        T = BlockMatrix(dims, "T", [[[0.6], [0.5]], [[0.4], [0.5]]])
        fd = np.array([10.0, 10.0])
        TA = np.array([[0.6, 0.5], [0.4, 0.5]]) @ np.diag([0.2, 0.3])
        expected = np.linalg.solve(np.eye(2) - TA, np.array([[0.6, 0.5], [0.4, 0.5]]) @ fd)
        np.testing.assert_allclose(solve_production(A, T, fd), expected, rtol=1e-13)

    def test_residual_and_linearity_on_fixtures(self):
        for seed in range(5):
            ds = generate_fixture(seed, 4, 5)
            eco = Economy.from_world(ds)
            A, T, fd = eco.A, eco.base_T, eco.base_fd.values
            x = solve_production(A, T, fd)
            rhs = T.matvec(fd)
            resid = x - T.matvec(A.matvec(x)) - rhs
            assert np.abs(resid).max() / np.abs(rhs).max() < 1e-10
            assert x.min() >= 0
            np.testing.assert_allclose(solve_production(A, T, 3.5 * fd), 3.5 * x, rtol=1e-10)

    def test_iterative_path_matches_direct(self, monkeypatch):
        import tariffmrio.mrio as mrio

        ds = generate_fixture(3, 6, 5)
        eco = Economy.from_world(ds)
        direct = solve_production(eco.A, eco.base_T, eco.base_fd)
        monkeypatch.setattr(mrio, "DIRECT_SOLVE_MAX", 0)
        iterative = solve_production(eco.A, eco.base_T, eco.base_fd)
        np.testing.assert_allclose(iterative, direct, rtol=1e-11)

    def test_singular_system_raises(self):
        # a column sum of 1 makes I - TA singular
        _, A, T = one_by_one(1.0)
        with pytest.raises(SolverError):
            solve_production(A, T, [1.0])

    def test_spectral_bound(self):
        _, A, T = one_by_one(0.4)
        assert spectral_radius_bound(A, T) == pytest.approx(0.4)


class TestTradeFlows:
    def test_autarky_has_no_trade(self):
        ds = generate_fixture(5, 3, 3, trade_openness=0.0)
        eco = Economy.from_world(ds)
        flows = compute_trade_flows(eco.base_T, eco.A, eco.base_x, eco.base_fd)
        assert not flows.imports.any() and not flows.exports.any()
        assert flows.bilateral.nnz == 0

    def test_two_country_mirror(self):
        ds = generate_fixture(8, 2, 3)
        eco = Economy.from_world(ds)
        f = compute_trade_flows(eco.base_T, eco.A, eco.base_x, eco.base_fd)
        assert f.exports[0] == pytest.approx(f.imports[1], rel=1e-13)
        assert f.exports[1] == pytest.approx(f.imports[0], rel=1e-13)

    def test_hand_computed_bilateral_flows(self):
        dims = WorldDims.synthetic(2, 1)
        A = BlockMatrix(dims, "A", [[[0.2]], [[0.3]]])
        T = BlockMatrix(dims, "T", [[[0.6], [0.5]], [[0.4], [0.5]]])
        fd = DemandVector(dims, [10.0, 10.0])
        x = solve_production(A, T, fd)
        f = compute_trade_flows(T, A, x, fd)
        absorb = np.array([0.2 * x[0] + 10.0, 0.3 * x[1] + 10.0])
        # origin 0 -> destination 1 uses T[0,1]; origin 1 -> destination 0 uses T[1,0]
        assert f.bilateral[[0], [1]][0] == pytest.approx(0.5 * absorb[1], rel=1e-14)
        assert f.bilateral[[1], [0]][0] == pytest.approx(0.4 * absorb[0], rel=1e-14)
        assert f.bilateral[[0], [0]][0] == 0.0
        assert f.exports[0] == pytest.approx(0.5 * absorb[1], rel=1e-14)
        assert f.imports[0] == pytest.approx(0.4 * absorb[0], rel=1e-14)

    def test_global_closure(self):
        for seed in range(5):
            ds = generate_fixture(seed, 6, 4)
            eco = Economy.from_world(ds)
            f = compute_trade_flows(eco.base_T, eco.A, eco.base_x, eco.base_fd)
            assert abs(f.imports.sum() - f.exports.sum()) <= 1e-8 * f.exports.sum()
            assert f.exports_by_sector.sum() == pytest.approx(f.exports.sum(), rel=1e-13)
