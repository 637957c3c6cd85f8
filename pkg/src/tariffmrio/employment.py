"""Employment satellite: jobs from gross output and the labour-group split of changes.

Employment is in thousands of jobs. Each country-sector carries a jobs-per-output
coefficient and four binary labour partitions (formality, skill, age, sex).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .catalog import DEFAULT_GROUP, INCOME_GROUPS, default_income_groups
from .mrio import MRIOError, WorldDims, as_vector

PARTITIONS = {
    "formality": ("formal", "informal"),
    "skill": ("skilled", "unskilled"),
    "age": ("adult", "youth"),
    "sex": ("male", "female"),
}
GROUPS = tuple(g for pair in PARTITIONS.values() for g in pair)
SHARE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EmploymentSatellite:
    dims: WorldDims
    coefficients: np.ndarray
    group_shares: np.ndarray  # (Nn, 8) in GROUPS order

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float).ravel()
        shares = np.array(self.group_shares, dtype=float)
        if coef.shape != (self.dims.size,):
            raise MRIOError(f"employment coefficients have length {coef.size}, expected {self.dims.size}")
        if shares.shape != (self.dims.size, len(GROUPS)):
            raise MRIOError(f"group shares have shape {shares.shape}, expected ({self.dims.size}, 8)")
        if not np.all(np.isfinite(coef)) or np.any(coef < 0):
            raise MRIOError("employment coefficients must be finite and non-negative")
        if not np.all(np.isfinite(shares)) or np.any(shares < 0) or np.any(shares > 1):
            raise MRIOError("labour-group shares must lie in [0, 1]")
        pair_sums = shares[:, 0::2] + shares[:, 1::2]
        bad = np.abs(pair_sums - 1.0) > SHARE_TOL
        if bad.any():
            cell, part = np.argwhere(bad)[0]
            raise MRIOError(
                f"{self.dims.labels()[cell]}: {list(PARTITIONS)[part]} shares sum to "
                f"{pair_sums[cell, part]:.12g}, not 1"
            )
        coef.setflags(write=False)
        shares.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "group_shares", shares)

    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.group_shares, columns=list(GROUPS), index=self.dims.labels())
        df.insert(0, "jobs_per_output", self.coefficients)
        return df

    def scaled(self, factor: float) -> "EmploymentSatellite":
        return EmploymentSatellite(self.dims, self.coefficients * factor, self.group_shares)


@dataclass(frozen=True, eq=False)
class EmploymentReport:
    by_country_sector: pd.DataFrame
    by_country: pd.DataFrame
    by_sector: pd.DataFrame
    by_income_group: pd.DataFrame
    group_delta: pd.DataFrame
    distribution: pd.Series

    @property
    def total_delta(self) -> float:
        return float(self.by_country_sector["delta"].sum())


def employment_levels(sat: EmploymentSatellite, x) -> np.ndarray:
    return sat.coefficients * as_vector(x, sat.dims, "gross output")


def _pct(delta, base):
    delta = np.asarray(delta, dtype=float)
    base = np.asarray(base, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(base != 0, 100.0 * delta / np.where(base != 0, base, 1.0), np.nan)


def _aggregate(cells: pd.DataFrame, key: str, order) -> pd.DataFrame:
    out = cells.groupby(key, sort=False)[["base", "delta"]].sum()
    out = out.reindex([k for k in order if k in out.index])
    out["pct"] = _pct(out["delta"], out["base"])
    return out


def group_order(mapping: dict[str, str], countries) -> list[str]:
    present = {mapping.get(c, DEFAULT_GROUP) for c in countries}
    known = [g for g in INCOME_GROUPS if g in present]
    return known + sorted(present - set(known))


def decompose(sat: EmploymentSatellite, delta: np.ndarray) -> np.ndarray:
    """Split per-cell job changes across labour groups, (Nn, 8).

    The second group of each pair takes the remainder. The first group's
    part is rounded to a multiple of the spacing of the cell total, which
    makes the remainder exact and the pair add back to the total bit for bit.
    """
    delta = np.asarray(delta, dtype=float)
    parts = np.empty((delta.size, len(GROUPS)))
    ulp = np.spacing(np.abs(delta))[:, None]
    first = np.round(delta[:, None] * sat.group_shares[:, 0::2] / ulp) * ulp
    parts[:, 0::2] = np.where(delta[:, None] != 0, first, 0.0)
    parts[:, 1::2] = delta[:, None] - parts[:, 0::2]
    return parts


def loss_distribution(parts: np.ndarray, delta: np.ndarray) -> pd.Series:
    """Percentage of net job losses borne by each group, over cells with losses."""
    losing = delta < 0
    total = delta[losing].sum()
    if total == 0:
        return pd.Series(0.0, index=list(GROUPS), name="pct_of_losses")
    return pd.Series(100.0 * parts[losing].sum(axis=0) / total, index=list(GROUPS), name="pct_of_losses")


def employment_delta(sat: EmploymentSatellite, base_x, shocked_x,
                     groups: dict[str, str] | None = None) -> EmploymentReport:
    dims = sat.dims
    groups = default_income_groups() if groups is None else groups
    base = employment_levels(sat, base_x)
    shocked = employment_levels(sat, shocked_x)
    delta = sat.coefficients * (as_vector(shocked_x, dims, "x") - as_vector(base_x, dims, "x"))

    countries = np.array(dims.country_codes)[dims.country_of()]
    sectors = np.array(dims.sector_codes)[dims.sector_of()]
    cells = pd.DataFrame(
        {
            "country": countries,
            "sector": sectors,
            "income_group": [groups.get(c, DEFAULT_GROUP) for c in countries],
            "base": base,
            "shocked": shocked,
            "delta": delta,
            "pct": _pct(delta, base),
        },
        index=dims.labels(),
    )
    parts = decompose(sat, delta)
    group_delta = pd.DataFrame(parts, columns=list(GROUPS), index=cells.index)
    return EmploymentReport(
        by_country_sector=cells,
        by_country=_aggregate(cells, "country", dims.country_codes),
        by_sector=_aggregate(cells, "sector", dims.sector_codes),
        by_income_group=_aggregate(cells, "income_group", group_order(groups, dims.country_codes)),
        group_delta=group_delta,
        distribution=loss_distribution(parts, delta),
    )


def top_k(report: EmploymentReport, dimension: str, k: int) -> pd.DataFrame:
    """Most negative job changes first, ties in code order, with sub-total and total rows."""
    if dimension not in ("country", "sector"):
        raise ValueError(f"dimension must be 'country' or 'sector', got {dimension!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    table = report.by_country if dimension == "country" else report.by_sector
    ranked = table.reset_index(names=dimension)
    # stable sort keeps code order among equal deltas
    ranked = ranked.sort_values("delta", kind="stable").head(k).reset_index(drop=True)
    ranked.insert(0, "rank", np.arange(1, len(ranked) + 1))
    rows = [
        {"rank": np.nan, dimension: "Sub-total", "base": ranked["base"].sum(),
         "delta": ranked["delta"].sum()},
        {"rank": np.nan, dimension: "Total", "base": table["base"].sum(),
         "delta": table["delta"].sum()},
    ]
    summary = pd.DataFrame(rows)
    summary["pct"] = _pct(summary["delta"], summary["base"])
    return pd.concat([ranked, summary], ignore_index=True)
