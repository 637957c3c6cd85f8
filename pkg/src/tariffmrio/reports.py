"""Report tables for one scenario run and the fixed CSV text format they are written in.

Absolute values are printed with 3 decimals, percentages with 2; a missing
percentage (zero baseline) is an empty field. Each file opens with ``# key: value``
lines describing the run, so ``pandas.read_csv(path, comment="#")`` reads it back.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .catalog import DEFAULT_GROUP, SECTOR_NAMES
from .employment import PARTITIONS, EmploymentReport, employment_delta, group_order, top_k
from .equilibrium import EquilibriumState, diff_states

REPORT_FILES = (
    "employment_by_income_group.csv",
    "exports_by_income_group.csv",
    "top_countries.csv",
    "top_sectors.csv",
    "labour_groups.csv",
    "country_sector_deltas.csv",
)
TOTAL = "Total"


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    name: str
    tables: dict[str, pd.DataFrame]
    header: dict[str, str]
    manifest: dict


def _fmt_number(v, decimals: int) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    s = f"{float(v):.{decimals}f}"
    # never print a signed zero
    if float(s) == 0.0:
        s = f"{0.0:.{decimals}f}"
    return s


def format_table(df: pd.DataFrame) -> pd.DataFrame:
    """Render numbers as text: ``pct``/``pct_*`` columns 2 decimals, other floats 3."""
    out = pd.DataFrame(index=df.index)
    for col in df.columns:
        series = df[col]
        if col == "rank":
            out[col] = ["" if pd.isna(v) else str(int(v)) for v in series]
        elif pd.api.types.is_numeric_dtype(series) and not pd.api.types.is_bool_dtype(series):
            name = str(col)
            decimals = 2 if name == "pct" or name.startswith("pct_") or name.endswith("_pct") else 3
            out[col] = [_fmt_number(v, decimals) for v in series]
        else:
            out[col] = series.astype(str)
    return out


def _describe(values) -> str:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size and np.all(arr == arr[0]):
        return f"{arr[0]:g}"
    return "[" + ", ".join(f"{v:g}" for v in arr) + "]"


def run_header(name: str, state: EquilibriumState, timestamp: str | None = None) -> dict[str, str]:
    cfg = state.config
    header = {
        "scenario": name,
        "sigma": _describe(state.sigma),
        "epsilon": _describe(state.epsilon),
        "damping": f"{cfg.damping:g}",
        "tolerance": f"{cfg.tolerance:g}",
        "iterations": str(state.iterations),
        "converged": str(state.converged).lower(),
        "status": state.status,
    }
    if timestamp:
        header["generated"] = timestamp
    return header


def write_csv(df: pd.DataFrame, path: str | Path, header: dict[str, str] | None = None) -> Path:
    path = Path(path)
    lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
    body = format_table(df).to_csv(index=False, lineterminator="\n")
    path.write_text("\n".join(lines) + ("\n" if lines else "") + body, encoding="utf-8")
    return path


def read_csv(path: str | Path) -> tuple[pd.DataFrame, dict[str, str]]:
    path = Path(path)
    header = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(": ")
            header[key] = value
    return pd.read_csv(path, comment="#", keep_default_na=False, na_values=[""]), header


def _with_total(df: pd.DataFrame, key: str) -> pd.DataFrame:
    total = {key: TOTAL, "base": df["base"].sum(), "delta": df["delta"].sum()}
    out = pd.concat([df, pd.DataFrame([total])], ignore_index=True)
    out["pct"] = _pct(out["delta"], out["base"])
    return out


def _pct(delta, base):
    delta = np.asarray(delta, dtype=float)
    base = np.asarray(base, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(base != 0, 100.0 * delta / np.where(base != 0, base, 1.0), np.nan)


def employment_by_income_group(emp: EmploymentReport) -> pd.DataFrame:
    df = emp.by_income_group[["base", "delta"]].reset_index(names="income_group")
    return _with_total(df, "income_group")


def exports_by_income_group(base: EquilibriumState, shocked: EquilibriumState,
                            groups: dict[str, str]) -> pd.DataFrame:
    dims = base.dims
    df = pd.DataFrame({
        "income_group": [groups.get(c, DEFAULT_GROUP) for c in dims.country_codes],
        "base": base.exports,
        "delta": shocked.exports - base.exports,
    })
    order = group_order(groups, dims.country_codes)
    df = df.groupby("income_group", sort=False)[["base", "delta"]].sum().reindex(order)
    return _with_total(df.reset_index(names="income_group"), "income_group")


def labour_groups(emp: EmploymentReport) -> pd.DataFrame:
    rows = []
    totals = emp.group_delta.sum(axis=0)
    for partition, pair in PARTITIONS.items():
        for g in pair:
            rows.append({
                "partition": partition,
                "group": g,
                "delta": float(totals[g]),
                "pct_of_losses": float(emp.distribution[g]),
            })
    return pd.DataFrame(rows)


def country_sector_deltas(emp: EmploymentReport, base: EquilibriumState,
                          shocked: EquilibriumState) -> pd.DataFrame:
    cells = emp.by_country_sector
    diff = diff_states(base, shocked).cells
    out = pd.DataFrame({
        "country": cells["country"].to_numpy(),
        "sector": cells["sector"].to_numpy(),
        "income_group": cells["income_group"].to_numpy(),
        "jobs_base": cells["base"].to_numpy(),
        "jobs_delta": cells["delta"].to_numpy(),
        "jobs_pct": cells["pct"].to_numpy(),
    })
    for name in ("x", "exports", "fd"):
        for part in ("base", "delta", "pct"):
            out[f"{name}_{part}"] = diff[f"{name}_{part}"].to_numpy()
    return out


def build_report(name: str, base: EquilibriumState, shocked: EquilibriumState, satellite,
                 groups: dict[str, str], k: int = 15, timestamp: str | None = None,
                 extra: dict | None = None) -> ScenarioReport:
    emp = employment_delta(satellite, base.x, shocked.x, groups)
    sectors = top_k(emp, "sector", k)
    sectors.insert(2, "name", [SECTOR_NAMES.get(s, "") for s in sectors["sector"]])
    tables = {
        "employment_by_income_group.csv": employment_by_income_group(emp),
        "exports_by_income_group.csv": exports_by_income_group(base, shocked, groups),
        "top_countries.csv": top_k(emp, "country", k),
        "top_sectors.csv": sectors,
        "labour_groups.csv": labour_groups(emp),
        "country_sector_deltas.csv": country_sector_deltas(emp, base, shocked),
    }
    header = run_header(name, shocked, timestamp)
    manifest = {
        "scenario": name,
        "status": shocked.status,
        "converged": shocked.converged,
        "iterations": shocked.iterations,
        "residuals": {k_: (float(v) if math.isfinite(v) else None)
                      for k_, v in shocked.residuals.items()},
        "message": shocked.message,
        "sigma": [float(v) for v in shocked.sigma],
        "epsilon": [float(v) for v in shocked.epsilon],
        "damping": shocked.config.damping,
        "tolerance": shocked.config.tolerance,
        "countries": list(base.dims.country_codes),
        "sectors": list(base.dims.sector_codes),
        "total_jobs_delta": emp.total_delta,
    }
    if extra:
        manifest.update(extra)
    if timestamp:
        manifest["generated"] = timestamp
    return ScenarioReport(name, tables, header, manifest)


def write_report(report: ScenarioReport, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fname, df in report.tables.items():
        write_csv(df, out / fname, report.header)
    (out / "run.json").write_text(json.dumps(report.manifest, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return out


def baseline_table(state: EquilibriumState, satellite, groups: dict[str, str]) -> pd.DataFrame:
    dims = state.dims
    countries = np.array(dims.country_codes)[dims.country_of()]
    return pd.DataFrame({
        "country": countries,
        "sector": np.array(dims.sector_codes)[dims.sector_of()],
        "income_group": [groups.get(c, DEFAULT_GROUP) for c in countries],
        "x": state.x,
        "fd": state.fd.values,
        "exports": state.flows.exports_by_sector,
        "jobs": satellite.coefficients * state.x,
    })


class CompareError(ValueError):
    pass


def compare_runs(run_dirs, table: str = "employment_by_income_group.csv") -> pd.DataFrame:
    """Side-by-side delta and pct columns per run, rows keyed by the table's first column."""
    if len(run_dirs) < 2:
        raise CompareError("compare needs at least two run directories")
    merged = None
    ref = None
    seen: dict[str, int] = {}
    keys: list = []
    for run_dir in map(Path, run_dirs):
        manifest = json.loads((run_dir / "run.json").read_text("utf-8"))
        ident = (manifest.get("world_hash"), manifest.get("countries"), manifest.get("sectors"))
        if ref is None:
            ref = (run_dir, ident)
        elif ident != ref[1]:
            what = "world hashes" if ident[1:] == ref[1][1:] else "dimensions"
            raise CompareError(f"mismatched {what}: {ref[0]} vs {run_dir}")
        df, _ = read_csv(run_dir / table)
        key = df.columns[0]
        name = manifest["scenario"]
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f"{name}#{seen[name]}"
        part = df[[key, "delta", "pct"]].rename(columns={"delta": f"{name}", "pct": f"pct_{name}"})
        keys.extend(k_ for k_ in part[key] if k_ not in keys)
        merged = part if merged is None else merged.merge(part, on=key, how="outer", sort=False)
    # outer merges may reorder rows; restore first-seen order
    return merged.set_index(key).loc[keys].reset_index()

