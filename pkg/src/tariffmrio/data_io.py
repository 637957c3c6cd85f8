"""World tables on disk: the canonical CSV schema, validation and synthetic fixtures.

A world directory holds five UTF-8 CSV files with a header row and dot decimals.
Row and column labels are ``COUNTRY_SECTOR`` in flat order (country-major).

``dims.csv``
    columns ``kind,code``; ``kind`` is ``country`` or ``sector``. File order
    fixes the model order.
``Z.csv``
    first column ``id``, then one column per label; entry (r, c) is the
    intermediate sale of origin row r to using sector c (origin-resolved).
``fd.csv``
    first column ``id``, then one column per destination country. Columns
    named ``DEST:component`` (for example ``USA:c``, ``USA:g``, ``USA:i``) are
    summed per destination.
``output.csv``
    ``id,gross_output,value_added``.
``satellite.csv``
    ``id,jobs_per_output,formal,informal,skilled,unskilled,adult,youth,male,female``.
    Jobs are in thousands per unit of gross output.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .employment import GROUPS, EmploymentSatellite
from .mrio import BlockMatrix, DemandVector, MRIOError, WorldDims, solve_production

FILES = {
    "dims": "dims.csv",
    "Z": "Z.csv",
    "fd": "fd.csv",
    "output": "output.csv",
    "satellite": "satellite.csv",
}
BALANCE_TOL = 1e-6


class WorldFileError(OSError):
    """A world file is missing or unreadable."""


class WorldDataError(ValueError):
    """Schema or accounting violations; ``violations`` lists each one."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} violation(s): {head}{more}")


@dataclass(frozen=True)
class Violation:
    check: str
    location: str
    expected: float | None = None
    actual: float | None = None
    detail: str = ""

    def __str__(self):
        if self.expected is None:
            return f"{self.check} at {self.location}: {self.detail}"
        return (f"{self.check} at {self.location}: expected {self.expected:.10g}, "
                f"got {self.actual:.10g}")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v not in (None, "")}


@dataclass(frozen=True, eq=False)
class WorldDataset:
    dims: WorldDims
    intermediate: np.ndarray  # (Nn, Nn), origin-resolved
    final_demand: np.ndarray  # (Nn, N), origin-resolved by destination country
    value_added: np.ndarray
    gross_output: np.ndarray
    satellite: EmploymentSatellite
    total_employment: float | None = None

    @cached_property
    def Z(self) -> BlockMatrix:
        """Block-diagonal intermediate use, aggregated over origins."""
        N, n = self.dims.n_countries, self.dims.n_sectors
        z4 = self.intermediate.reshape(N, n, N, n)
        return BlockMatrix(self.dims, "Z", z4.sum(axis=0).transpose(1, 0, 2))

    @cached_property
    def ALL(self) -> BlockMatrix:
        """Bilateral supply of each commodity (intermediate plus final), ``[o, d, y]``."""
        N, n = self.dims.n_countries, self.dims.n_sectors
        inter = self.intermediate.reshape(N, n, N, n).sum(axis=3)  # (o, y, d)
        final = self.final_demand.reshape(N, n, N)
        return BlockMatrix(self.dims, "ALL", (inter + final).transpose(0, 2, 1))

    @cached_property
    def fd(self) -> DemandVector:
        """Final demand by destination country and commodity."""
        N, n = self.dims.n_countries, self.dims.n_sectors
        return DemandVector(self.dims, self.final_demand.reshape(N, n, N).sum(axis=0).T.ravel())


def validate_world(ds: WorldDataset, tol: float = BALANCE_TOL) -> list[Violation]:
    dims = ds.dims
    labels = dims.labels()
    out: list[Violation] = []
    Nn, N = dims.size, dims.n_countries
    shapes = {
        "Z": (ds.intermediate, (Nn, Nn)),
        "fd": (ds.final_demand, (Nn, N)),
        "value_added": (ds.value_added, (Nn,)),
        "gross_output": (ds.gross_output, (Nn,)),
    }
    for name, (arr, shape) in shapes.items():
        if arr.shape != shape:
            out.append(Violation("shape", name, detail=f"shape {arr.shape}, expected {shape}"))
    if out:
        return out

    for name, (arr, _) in shapes.items():
        if not np.all(np.isfinite(arr)):
            out.append(Violation("non-finite", name, detail="NaN or infinite entries"))
            continue
        for idx in np.argwhere(arr < 0)[:50]:
            if arr.ndim == 2:
                col = labels[idx[1]] if name == "Z" else dims.country_codes[idx[1]]
                loc = f"{name}[{labels[idx[0]]}, {col}]"
            else:
                loc = f"{name}[{labels[idx[0]]}]"
            out.append(Violation("negative", loc, detail=f"value {arr[tuple(idx)]:.10g}"))
    if out:
        return out

    x = ds.gross_output
    scale = np.maximum(np.abs(x), 1e-300)
    rows = ds.intermediate.sum(axis=1) + ds.final_demand.sum(axis=1)
    for i in np.flatnonzero(np.abs(rows - x) > tol * scale):
        out.append(Violation("row balance", f"row {labels[i]}", expected=float(x[i]), actual=float(rows[i])))
    cols = ds.intermediate.sum(axis=0) + ds.value_added
    for j in np.flatnonzero(np.abs(cols - x) > tol * scale):
        out.append(Violation("column balance", f"column {labels[j]}", expected=float(x[j]), actual=float(cols[j])))
    return out


def _read_csv(path: Path, **kw) -> pd.DataFrame:
    if not path.is_file():
        raise WorldFileError(f"missing file: {path}")
    try:
        return pd.read_csv(path, encoding="utf-8", float_precision="round_trip", **kw)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise WorldDataError([Violation("schema", str(path), detail=str(exc))]) from exc


def _labelled(df: pd.DataFrame, labels: list[str], name: str) -> pd.DataFrame:
    if df.columns[0] != "id":
        raise WorldDataError([Violation("schema", name, detail="first column must be 'id'")])
    df = df.set_index("id")
    if list(df.index.astype(str)) != labels:
        raise WorldDataError([Violation("schema", name, detail="row labels do not match dims.csv order")])
    return df


def _numeric(df: pd.DataFrame, name: str) -> np.ndarray:
    try:
        return df.to_numpy(dtype=float)
    except ValueError as exc:
        raise WorldDataError([Violation("schema", name, detail=f"non-numeric entries: {exc}")]) from exc


def read_dims(path: Path) -> WorldDims:
    df = _read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != ["kind", "code"]:
        raise WorldDataError([Violation("schema", path.name, detail="columns must be kind,code")])
    bad = set(df["kind"]) - {"country", "sector"}
    if bad:
        raise WorldDataError([Violation("schema", path.name, detail=f"unknown kinds {sorted(bad)}")])
    try:
        return WorldDims(
            tuple(df.loc[df["kind"] == "country", "code"]),
            tuple(df.loc[df["kind"] == "sector", "code"]),
        )
    except MRIOError as exc:
        raise WorldDataError([Violation("schema", path.name, detail=str(exc))]) from exc


def load_world(path: str | Path, tol: float = BALANCE_TOL, validate: bool = True) -> WorldDataset:
    """Read a world directory; raises WorldDataError listing every violation."""
    root = Path(path)
    if not root.is_dir():
        raise WorldFileError(f"world directory not found: {root}")
    dims = read_dims(root / FILES["dims"])
    labels = dims.labels()

    z = _labelled(_read_csv(root / FILES["Z"]), labels, FILES["Z"])
    if list(z.columns) != labels:
        raise WorldDataError([Violation("schema", FILES["Z"], detail="column labels do not match dims.csv order")])

    fd = _labelled(_read_csv(root / FILES["fd"]), labels, FILES["fd"])
    dest = [str(c).split(":", 1)[0] for c in fd.columns]
    unknown = sorted(set(dest) - set(dims.country_codes))
    if unknown:
        raise WorldDataError([Violation("schema", FILES["fd"], detail=f"unknown destination columns {unknown}")])
    fd_values = _numeric(fd, FILES["fd"])
    fd_by_dest = np.zeros((dims.size, dims.n_countries))
    for k, d in enumerate(dest):
        fd_by_dest[:, dims.country_codes.index(d)] += fd_values[:, k]

    output = _labelled(_read_csv(root / FILES["output"]), labels, FILES["output"])
    if list(output.columns) != ["gross_output", "value_added"]:
        raise WorldDataError([Violation("schema", FILES["output"], detail="columns must be id,gross_output,value_added")])
    out_values = _numeric(output, FILES["output"])

    sat = _labelled(_read_csv(root / FILES["satellite"]), labels, FILES["satellite"])
    if list(sat.columns) != ["jobs_per_output", *GROUPS]:
        raise WorldDataError([Violation(
            "schema", FILES["satellite"],
            detail="columns must be id,jobs_per_output," + ",".join(GROUPS),
        )])
    sat_values = _numeric(sat, FILES["satellite"])
    try:
        satellite = EmploymentSatellite(dims, sat_values[:, 0], sat_values[:, 1:])
    except MRIOError as exc:
        raise WorldDataError([Violation("satellite", FILES["satellite"], detail=str(exc))]) from exc

    ds = WorldDataset(
        dims=dims,
        intermediate=_numeric(z, FILES["Z"]),
        final_demand=fd_by_dest,
        value_added=out_values[:, 1],
        gross_output=out_values[:, 0],
        satellite=satellite,
    )
    if validate:
        violations = validate_world(ds, tol)
        if violations:
            raise WorldDataError(violations)
    return ds


def write_world(ds: WorldDataset, path: str | Path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    dims = ds.dims
    labels = dims.labels()
    fmt = "%.17g"
    pd.DataFrame(
        {"kind": ["country"] * dims.n_countries + ["sector"] * dims.n_sectors,
         "code": list(dims.country_codes) + list(dims.sector_codes)}
    ).to_csv(root / FILES["dims"], index=False)
    pd.DataFrame(ds.intermediate, index=pd.Index(labels, name="id"), columns=labels).to_csv(
        root / FILES["Z"], float_format=fmt)
    pd.DataFrame(ds.final_demand, index=pd.Index(labels, name="id"),
                 columns=list(dims.country_codes)).to_csv(root / FILES["fd"], float_format=fmt)
    pd.DataFrame({"gross_output": ds.gross_output, "value_added": ds.value_added},
                 index=pd.Index(labels, name="id")).to_csv(root / FILES["output"], float_format=fmt)
    ds.satellite.frame().rename_axis("id").to_csv(root / FILES["satellite"], float_format=fmt)
    return root


def world_hash(ds: WorldDataset) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([ds.dims.country_codes, ds.dims.sector_codes]).encode())
    for arr in (ds.intermediate, ds.final_demand, ds.value_added, ds.gross_output,
                ds.satellite.coefficients, ds.satellite.group_shares):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


def generate_fixture(seed: int, n_countries: int, n_sectors: int, sparsity: float = 0.2,
                     trade_openness: float = 0.3, country_codes=None, sector_codes=None) -> WorldDataset:
    """Balanced synthetic world, deterministic in ``seed``.

    Demand-driven construction: draw coefficients (column sums below 0.65),
    trade shares and final demand, solve for gross output, then back out the
    origin-resolved flows and value added. ``sparsity`` is the probability
    of dropping an off-diagonal input or a foreign supply link;
    ``trade_openness`` in [0, 1] scales import shares (0 gives autarky).
    """
    N, n = int(n_countries), int(n_sectors)
    if N < 1 or n < 1:
        raise ValueError("need at least one country and one sector")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    if not 0.0 <= trade_openness <= 1.0:
        raise ValueError(f"trade_openness must be in [0, 1], got {trade_openness}")
    if N == 1 and trade_openness > 0:
        raise ValueError("a one-country world cannot be open to trade")
    synthetic = WorldDims.synthetic(N, n)
    dims = WorldDims(
        tuple(country_codes) if country_codes is not None else synthetic.country_codes,
        tuple(sector_codes) if sector_codes is not None else synthetic.sector_codes,
    )
    if dims.n_countries != N or dims.n_sectors != n:
        raise ValueError("code lists do not match the requested dimensions")

    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.0, 1.0, (N, n, n))
    keep = rng.uniform(size=(N, n, n)) >= sparsity
    keep[:, np.arange(n), np.arange(n)] = True
    raw *= keep
    col_target = rng.uniform(0.15, 0.65, (N, n))
    A = raw / raw.sum(axis=1, keepdims=True) * col_target[:, None, :]

    import_share = np.clip(trade_openness * rng.uniform(0.5, 1.5, (N, n)), 0.0, 1.0)
    foreign = rng.uniform(0.05, 1.0, (N, N, n)) * (rng.uniform(size=(N, N, n)) >= sparsity)
    fallback = rng.integers(1, max(N, 2), size=(N, n))
    cc = np.arange(N)
    foreign[cc, cc, :] = 0.0
    if N > 1:
        empty = np.argwhere(foreign.sum(axis=0) == 0)
        for d, y in empty:
            foreign[(d + fallback[d, y]) % N, d, y] = 1.0
        shares = foreign / foreign.sum(axis=0, keepdims=True) * import_share[None, :, :]
    else:
        shares = np.zeros((N, N, n))
    shares[cc, cc, :] = 1.0 - import_share

    country_scale = rng.lognormal(0.0, 1.0, N)
    fd = country_scale[:, None] * rng.uniform(20.0, 200.0, (N, n))
    jobs = rng.lognormal(-2.0, 0.8, N * n)
    first = rng.uniform(0.1, 0.9, (N * n, 4))

    A_mat = BlockMatrix(dims, "A", A)
    T_mat = BlockMatrix(dims, "T", shares)
    x = solve_production(A_mat, T_mat, fd.ravel())
    X = x.reshape(N, n)
    inter = np.einsum("ody,dyj,dj->oydj", shares, A, X).reshape(N * n, N * n)
    final = np.einsum("ody,dy->oyd", shares, fd).reshape(N * n, N)
    va = x - inter.sum(axis=0)

    group_shares = np.empty((N * n, 8))
    group_shares[:, 0::2] = first
    group_shares[:, 1::2] = 1.0 - first
    satellite = EmploymentSatellite(dims, jobs, group_shares)
    return WorldDataset(
        dims=dims,
        intermediate=inter,
        final_demand=final,
        value_added=va,
        gross_output=x,
        satellite=satellite,
        total_employment=float(np.sum(jobs * x)),
    )


DEMO_SEED = 2025
DEMO_COUNTRIES = ("USA", "CHN", "CAN")
DEMO_SECTORS = ("D01T02", "D24")


def demo_fixture() -> WorldDataset:
    """The 3-country x 2-sector demo world, regenerated from its seed."""
    return generate_fixture(DEMO_SEED, 3, 2, sparsity=0.0, trade_openness=0.4,
                            country_codes=DEMO_COUNTRIES, sector_codes=DEMO_SECTORS)


def demo_world_path() -> Path:
    return Path(str(resources.files("tariffmrio").joinpath("data/demo_world")))
