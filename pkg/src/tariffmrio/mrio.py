"""Block-structured MRIO core: dimensions, Z/A/ALL/T matrices and the production solve.

Flat indexing of every vector and matrix is ``country * n_sectors + sector``.
Block matrices keep only their structurally non-zero core:

* ``Z`` and ``A`` are block-diagonal by country and store ``blocks[d, i, j]``
  (input ``i`` used by sector ``j`` in country ``d``).
* ``ALL`` and ``T`` are diagonal per commodity inside each (origin, destination)
  block and store ``blocks[o, d, y]``.

Trade shares are column-stochastic: for every destination ``d`` and commodity
``y`` the shares sum to one over origins ``o``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, MatrixRankWarning, gmres, spsolve

logger = logging.getLogger(__name__)

KINDS = ("Z", "A", "ALL", "T")
BLOCK_DIAGONAL = ("Z", "A")
COMMODITY_DIAGONAL = ("ALL", "T")

STOCHASTIC_TOL = 1e-12
RESIDUAL_TOL = 1e-10
NEGATIVE_CLAMP = 1e-12
# Assembled sparse systems above this size are solved with GMRES instead of
# a direct factorisation (I - TA has ~Nn^2 non-zeros).
DIRECT_SOLVE_MAX = 1200


class MRIOError(ValueError):
    """Inconsistent MRIO inputs (shapes, signs, structure)."""


class SolverError(RuntimeError):
    """A linear system could not be solved to the required residual."""


@dataclass(frozen=True)
class WorldDims:
    country_codes: tuple[str, ...]
    sector_codes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "country_codes", tuple(str(c) for c in self.country_codes))
        object.__setattr__(self, "sector_codes", tuple(str(s) for s in self.sector_codes))
        if not self.country_codes or not self.sector_codes:
            raise MRIOError("need at least one country and one sector")
        for label, codes in (("country", self.country_codes), ("sector", self.sector_codes)):
            if len(set(codes)) != len(codes):
                dupes = sorted({c for c in codes if codes.count(c) > 1})
                raise MRIOError(f"duplicate {label} codes: {dupes}")

    @classmethod
    def synthetic(cls, n_countries: int, n_sectors: int) -> "WorldDims":
        if n_countries < 1 or n_sectors < 1:
            raise MRIOError("n_countries and n_sectors must be >= 1")
        return cls(
            tuple(f"R{c:02d}" for c in range(n_countries)),
            tuple(f"S{s:02d}" for s in range(n_sectors)),
        )

    @property
    def n_countries(self) -> int:
        return len(self.country_codes)

    @property
    def n_sectors(self) -> int:
        return len(self.sector_codes)

    @property
    def size(self) -> int:
        return self.n_countries * self.n_sectors

    def index(self, country: int | str, sector: int | str) -> int:
        c = self.country_codes.index(country) if isinstance(country, str) else country
        s = self.sector_codes.index(sector) if isinstance(sector, str) else sector
        return c * self.n_sectors + s

    def labels(self) -> list[str]:
        """``COUNTRY_SECTOR`` labels in flat order."""
        return [f"{c}_{s}" for c in self.country_codes for s in self.sector_codes]

    def country_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_countries), self.n_sectors)

    def sector_of(self) -> np.ndarray:
        return np.tile(np.arange(self.n_sectors), self.n_countries)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """A Z, A, ALL or T matrix held in compact block form (see module docstring)."""

    dims: WorldDims
    kind: str
    blocks: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MRIOError(f"unknown block matrix kind {self.kind!r}")
        N, n = self.dims.n_countries, self.dims.n_sectors
        expected = (N, n, n) if self.kind in BLOCK_DIAGONAL else (N, N, n)
        blocks = _frozen(self.blocks)
        if blocks.shape != expected:
            raise MRIOError(f"{self.kind} blocks have shape {blocks.shape}, expected {expected}")
        if not np.all(np.isfinite(blocks)):
            raise MRIOError(f"{self.kind} has non-finite entries")
        if np.any(blocks < 0):
            raise MRIOError(f"{self.kind} has negative entries")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_dense(cls, dims: WorldDims, kind: str, matrix, atol: float = 0.0) -> "BlockMatrix":
        """Extract the structural core of a dense Nn x Nn matrix.

        Raises if any entry outside the allowed structure exceeds ``atol``.
        """
        M = np.asarray(matrix, dtype=float)
        N, n = dims.n_countries, dims.n_sectors
        if M.shape != (dims.size, dims.size):
            raise MRIOError(f"dimension mismatch: {M.shape} vs ({dims.size}, {dims.size})")
        M4 = M.reshape(N, n, N, n)
        if kind in BLOCK_DIAGONAL:
            cc = np.arange(N)
            blocks = M4[cc, :, cc, :]
            mask = np.ones((N, N), dtype=bool)
            mask[cc, cc] = False
            stray = np.abs(M4.transpose(0, 2, 1, 3)[mask])
        elif kind in COMMODITY_DIAGONAL:
            yy = np.arange(n)
            blocks = M4[:, yy, :, yy].transpose(1, 2, 0)
            off = M4.copy()
            off[:, yy, :, yy] = 0.0
            stray = np.abs(off)
        else:
            raise MRIOError(f"unknown block matrix kind {kind!r}")
        if stray.size and stray.max() > atol:
            raise MRIOError(f"{kind} has entries outside its block structure")
        return cls(dims, kind, blocks)

    @cached_property
    def entries(self) -> sp.csr_array:
        """Full Nn x Nn sparse matrix."""
        N, n = self.dims.n_countries, self.dims.n_sectors
        if self.kind in BLOCK_DIAGONAL:
            return sp.csr_array(sp.block_diag(list(self.blocks), format="csr"))
        o, d, y = np.nonzero(self.blocks)
        rows = o * n + y
        cols = d * n + y
        return sp.csr_array(
            (self.blocks[o, d, y], (rows, cols)), shape=(self.dims.size, self.dims.size)
        )

    def toarray(self) -> np.ndarray:
        return self.entries.toarray()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        N, n = self.dims.n_countries, self.dims.n_sectors
        V = np.asarray(v, dtype=float).reshape(N, n)
        if self.kind in BLOCK_DIAGONAL:
            return np.einsum("dij,dj->di", self.blocks, V).ravel()
        return np.einsum("ody,dy->oy", self.blocks, V).ravel()

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        """Product with the transpose."""
        N, n = self.dims.n_countries, self.dims.n_sectors
        V = np.asarray(v, dtype=float).reshape(N, n)
        if self.kind in BLOCK_DIAGONAL:
            return np.einsum("dij,di->dj", self.blocks, V).ravel()
        return np.einsum("ody,oy->dy", self.blocks, V).ravel()

    def column_sums(self) -> np.ndarray:
        """Z/A: sum over inputs per using sector; ALL/T: sum over origins per (d, y)."""
        if self.kind in BLOCK_DIAGONAL:
            return self.blocks.sum(axis=1).ravel()
        return self.blocks.sum(axis=0).ravel()


@dataclass(frozen=True, eq=False)
class DemandVector:
    """Final demand by destination country and commodity (c + g + i)."""

    dims: WorldDims
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen(self.values).ravel()
        if values.shape != (self.dims.size,):
            raise MRIOError(f"demand vector has length {values.size}, expected {self.dims.size}")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise MRIOError("final demand must be finite and non-negative")
        object.__setattr__(self, "values", values)


class TradeFlows(NamedTuple):
    imports: np.ndarray
    exports: np.ndarray
    bilateral: sp.csr_array
    exports_by_sector: np.ndarray


def check_same_dims(*objs):
    dims = objs[0].dims
    for obj in objs[1:]:
        if obj.dims != dims:
            raise MRIOError("dimension mismatch between operands")
    return dims


def as_vector(v, dims: WorldDims, name: str) -> np.ndarray:
    arr = np.asarray(getattr(v, "values", v), dtype=float).ravel()
    if arr.shape != (dims.size,):
        raise MRIOError(f"{name} has length {arr.size}, expected {dims.size}")
    return arr


def build_coefficients(Z: BlockMatrix, gross_output) -> BlockMatrix:
    """Technical coefficients ``A = Z diag(x)^-1``; zero-output sectors get zero columns."""
    if Z.kind != "Z":
        raise MRIOError(f"expected a Z matrix, got {Z.kind}")
    dims = Z.dims
    x = as_vector(gross_output, dims, "gross_output").reshape(dims.n_countries, dims.n_sectors)
    if np.any(x < 0):
        raise MRIOError("gross output must be non-negative")
    used = Z.blocks.sum(axis=1) > 0
    bad = used & (x <= 0)
    if bad.any():
        c, s = np.argwhere(bad)[0]
        raise MRIOError(
            f"sector {dims.country_codes[c]}_{dims.sector_codes[s]} has inputs but zero output"
        )
    safe = np.where(x > 0, x, 1.0)
    A = np.where(x[:, None, :] > 0, Z.blocks / safe[:, None, :], 0.0)
    colsum = A.sum(axis=1)
    if np.any(colsum >= 1.0):
        c, s = np.argwhere(colsum >= 1.0)[0]
        raise MRIOError(
            f"coefficient column {dims.country_codes[c]}_{dims.sector_codes[s]} sums to "
            f"{colsum[c, s]:.6g} >= 1 (unproductive)"
        )
    return BlockMatrix(dims, "A", A)


def normalize_allocation(ALL: BlockMatrix, fill_empty: bool = False) -> BlockMatrix:
    """Divide each destination-commodity column of ALL by its total over origins.

    A column with no supply at all raises unless ``fill_empty`` is set, in
    which case it is sourced entirely from the destination itself. Such a
    column carries no flow, so the choice only matters if a shock creates
    demand for that commodity.
    """
    if ALL.kind != "ALL":
        raise MRIOError(f"expected an ALL matrix, got {ALL.kind}")
    dims = ALL.dims
    totals = ALL.blocks.sum(axis=0)
    empty = totals <= 0
    if empty.any() and not fill_empty:
        d, y = np.argwhere(empty)[0]
        raise MRIOError(
            f"no supply of {dims.sector_codes[y]} to {dims.country_codes[d]} (zero allocation column)"
        )
    T = ALL.blocks / np.where(empty, 1.0, totals)[None, :, :]
    if empty.any():
        d, y = np.nonzero(empty)
        T[d, d, y] = 1.0
    return BlockMatrix(dims, "T", T)


def check_stochastic(T: BlockMatrix, tol: float = STOCHASTIC_TOL) -> None:
    err = np.abs(T.blocks.sum(axis=0) - 1.0)
    if err.max() > tol:
        d, y = np.unravel_index(err.argmax(), err.shape)
        raise MRIOError(
            f"trade shares for ({T.dims.country_codes[d]}, {T.dims.sector_codes[y]}) "
            f"sum to {1 - err[d, y]:.15g}, not 1"
        )


def solve_shifted(operator, rhs: np.ndarray, assemble, *, what: str) -> np.ndarray:
    """Solve ``(I - M) z = rhs`` where ``operator(v) = M v``; never forms an inverse."""
    size = rhs.size
    scale = np.abs(rhs).max() if size else 0.0
    if scale == 0.0:
        return np.zeros(size)

    def apply(v):
        return v - operator(v)

    if size <= DIRECT_SOLVE_MAX:
        system = (sp.identity(size, format="csc") - assemble()).tocsc()
        # a singular system shows up below as a non-finite solution
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            z = np.asarray(spsolve(system, rhs), dtype=float).ravel()
    else:
        op = LinearOperator((size, size), matvec=apply, dtype=float)
        z, info = gmres(op, rhs, x0=rhs.copy(), rtol=1e-13, atol=0.0, restart=60, maxiter=50)
        if info < 0:
            raise SolverError(f"{what}: GMRES breakdown")

    for _ in range(3):
        if not np.all(np.isfinite(z)):
            raise SolverError(f"{what}: singular system (non-finite solution)")
        r = rhs - apply(z)
        rel = np.abs(r).max() / scale
        if rel < RESIDUAL_TOL * 1e-2:
            break
        # iterative refinement on the residual
        if size <= DIRECT_SOLVE_MAX:
            z = z + np.asarray(spsolve(system, r), dtype=float).ravel()
        else:
            dz, _ = gmres(op, r, rtol=1e-13, atol=0.0, restart=60, maxiter=50)
            z = z + dz
    rel = np.abs(rhs - apply(z)).max() / scale
    if not np.isfinite(rel) or rel >= RESIDUAL_TOL:
        raise SolverError(f"{what}: residual {rel:.3g} exceeds {RESIDUAL_TOL:g} (non-convergent system)")
    return z


def clamp_nonnegative(z: np.ndarray, what: str) -> np.ndarray:
    floor = -NEGATIVE_CLAMP * max(1.0, float(np.abs(z).max(initial=0.0)))
    if np.any(z < floor):
        raise SolverError(f"{what}: solution has negative entries (min {z.min():.3g})")
    return np.where(z < 0, 0.0, z)


def solve_production(A: BlockMatrix, T: BlockMatrix, fd) -> np.ndarray:
    """Gross output ``x`` solving ``(I - T A) x = T fd``."""
    if A.kind != "A" or T.kind != "T":
        raise MRIOError("solve_production expects A and T matrices")
    dims = check_same_dims(A, T)
    f = as_vector(fd, dims, "final demand")
    rhs = T.matvec(f)
    x = solve_shifted(
        lambda v: T.matvec(A.matvec(v)),
        rhs,
        lambda: T.entries @ A.entries,
        what="production solve",
    )
    return clamp_nonnegative(x, "production solve")


def compute_trade_flows(T: BlockMatrix, A: BlockMatrix, x, fd) -> TradeFlows:
    """Bilateral flows ``T2 (A x_hat + fd)`` with domestic blocks removed.

    ``bilateral`` is an Nn x N sparse matrix: rows are (origin, commodity),
    columns are destination countries.
    """
    dims = check_same_dims(A, T)
    N, n = dims.n_countries, dims.n_sectors
    xv = as_vector(x, dims, "gross output")
    f = as_vector(fd, dims, "final demand")
    absorption = (A.matvec(xv) + f).reshape(N, n)
    flows = T.blocks * absorption[None, :, :]
    cc = np.arange(N)
    flows[cc, cc, :] = 0.0
    exports_by_sector = flows.sum(axis=1)  # (o, y)
    bilateral = sp.csr_array(flows.transpose(0, 2, 1).reshape(N * n, N))
    return TradeFlows(
        imports=flows.sum(axis=(0, 2)),
        exports=exports_by_sector.sum(axis=1),
        bilateral=bilateral,
        exports_by_sector=exports_by_sector.ravel(),
    )


def spectral_radius_bound(A: BlockMatrix, T: BlockMatrix) -> float:
    """Max column sum of T A, an upper bound on its spectral radius."""
    # column (d, j) of TA sums to sum_y A_d[y, j] * sum_o T[o, d, y] = sum_y A_d[y, j]
    return float((A.blocks * T.blocks.sum(axis=0)[:, :, None]).sum(axis=1).max())


def stack_blocks(dims: WorldDims, blocks: Sequence[np.ndarray], kind: str) -> BlockMatrix:
    """Convenience: build a Z/A matrix from a list of per-country n x n blocks."""
    return BlockMatrix(dims, kind, np.stack([np.asarray(b, dtype=float) for b in blocks]))
