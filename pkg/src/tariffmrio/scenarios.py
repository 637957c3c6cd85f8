"""Declarative tariff scenarios and their resolution to a dense tariff tensor.

A scenario file is YAML with the keys ``name``, ``description``, ``shocks``,
``retaliation`` and optional ``overrides``. Each shock entry is a mapping::

    importer: USA                 # code, "group:<income group>", "ALL" or a list
    exporter: ALL
    commodities: [D24]            # sector codes or "ALL" (default)
    rate: 0.50                    # ad-valorem fraction, >= 0
    mode: set                     # set | add | cut (default set)

Resolution rules, applied per (importer d, exporter o, commodity y) cell:

1. Domestic cells (d == o) are never taxed.
2. Among ``set`` entries covering a cell, the one with the highest precedence
   key wins. The key is compared lexicographically as
   (commodity level, exporter level, importer level), where an explicit code
   list is level 2, a list containing a group selector is level 1 and ``ALL``
   is level 0. So a sector carve-out beats a country rate, which beats a
   blanket rate.
3. Two ``set`` entries with the same key and the identical resolved scope: the
   later one in the file wins (``shocks`` precede ``retaliation``). With the
   same key, overlapping but non-identical scopes and different rates, the
   scenario is rejected as contradictory.
4. ``add`` entries are summed on top of the ``set`` value.
5. ``cut`` entries remove ``rate`` times the baseline duty of the cell, where
   baseline duties come from an optional CSV. The resulting add-on is floored
   at minus the baseline duty. Without a baseline file a cut resolves to zero
   and a warning is logged.

Country and sector codes are checked against the world being simulated and
the ICIO reference catalogue. Codes that exist only in the catalogue are
skipped for that world, and any other code is rejected.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from .catalog import DEFAULT_GROUP, ICIO_COUNTRIES, ICIO_SECTORS, INCOME_GROUPS, default_income_groups
from .mrio import WorldDims

logger = logging.getLogger(__name__)

MODES = ("set", "add", "cut")
ENTRY_KEYS = {"importer", "exporter", "commodities", "rate", "mode"}
SCENARIO_KEYS = {"name", "description", "shocks", "retaliation", "overrides"}
OVERRIDE_KEYS = {"sigma", "epsilon", "damping"}
BUILTIN_NAMES = ("scenario1", "scenario2", "scenario3")


class ScenarioError(ValueError):
    pass


def _selector(value, where: str) -> tuple[str, ...] | str:
    if value is None or value == "ALL":
        return "ALL"
    if isinstance(value, str):
        return (value,)
    if isinstance(value, (list, tuple)) and value and all(isinstance(v, str) for v in value):
        if "ALL" in value:
            raise ScenarioError(f"{where}: 'ALL' cannot be combined with other codes")
        return tuple(value)
    raise ScenarioError(f"{where}: expected a code, a list of codes or 'ALL', got {value!r}")


@dataclass(frozen=True)
class TariffEntry:
    importer: tuple[str, ...] | str
    exporter: tuple[str, ...] | str
    commodities: tuple[str, ...] | str = "ALL"
    rate: float = 0.0
    mode: str = "set"
    where: str = field(default="", compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError(f"{self.where}: mode must be one of {MODES}, got {self.mode!r}")
        rate = float(self.rate)
        if not np.isfinite(rate) or rate < 0:
            raise ScenarioError(f"{self.where}: negative or non-finite rate {self.rate!r}")
        object.__setattr__(self, "rate", rate)

    @classmethod
    def from_mapping(cls, raw: dict, where: str) -> "TariffEntry":
        if not isinstance(raw, dict):
            raise ScenarioError(f"{where}: entry must be a mapping")
        unknown = set(raw) - ENTRY_KEYS
        if unknown:
            raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
        for key in ("importer", "exporter", "rate"):
            if key not in raw:
                raise ScenarioError(f"{where}: missing '{key}'")
        rate = raw["rate"]
        if isinstance(rate, bool) or not isinstance(rate, (int, float)):
            raise ScenarioError(f"{where}.rate: expected a number, got {rate!r}")
        return cls(
            importer=_selector(raw["importer"], f"{where}.importer"),
            exporter=_selector(raw["exporter"], f"{where}.exporter"),
            commodities=_selector(raw.get("commodities", "ALL"), f"{where}.commodities"),
            rate=rate,
            mode=raw.get("mode", "set"),
            where=where,
        )

    def to_mapping(self) -> dict:
        def out(sel):
            if sel == "ALL":
                return "ALL"
            return sel[0] if len(sel) == 1 else list(sel)

        raw = {"importer": out(self.importer), "exporter": out(self.exporter)}
        if self.commodities != "ALL":
            raw["commodities"] = out(self.commodities)
        raw["rate"] = self.rate
        if self.mode != "set":
            raw["mode"] = self.mode
        return raw


@dataclass(frozen=True, eq=False)
class TariffTensor:
    """Resolved tariffs indexed ``[importer, exporter, commodity]``.

    ``rates`` are add-ons relative to the baseline duties; ``wedge`` is the
    proportional change in the delivered-price factor,
    ``(1 + baseline + rate) / (1 + baseline) - 1``, which equals ``rates``
    when no baseline duties are given.
    """

    dims: WorldDims
    rates: np.ndarray
    baseline: np.ndarray | None = None

    def __post_init__(self):
        N, n = self.dims.n_countries, self.dims.n_sectors
        rates = np.array(self.rates, dtype=float)
        if rates.shape != (N, N, n):
            raise ScenarioError(f"tariff tensor has shape {rates.shape}, expected {(N, N, n)}")
        cc = np.arange(N)
        if np.any(rates[cc, cc, :] != 0):
            raise ScenarioError("domestic (self) tariffs must be zero")
        base = None if self.baseline is None else np.array(self.baseline, dtype=float)
        floor = 0.0 if base is None else -base
        if np.any(rates < floor - 1e-15):
            raise ScenarioError("tariff add-ons below the negative baseline duty")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "baseline", base)

    @classmethod
    def zeros(cls, dims: WorldDims) -> "TariffTensor":
        return cls(dims, np.zeros((dims.n_countries, dims.n_countries, dims.n_sectors)))

    @property
    def wedge(self) -> np.ndarray:
        if self.baseline is None:
            return self.rates
        return (1.0 + self.baseline + self.rates) / (1.0 + self.baseline) - 1.0

    def is_zero(self) -> bool:
        return not np.any(self.rates)

    def rate(self, importer: str, exporter: str, sector: str) -> float:
        d = self.dims
        return float(
            self.rates[
                d.country_codes.index(importer),
                d.country_codes.index(exporter),
                d.sector_codes.index(sector),
            ]
        )


@dataclass(frozen=True)
class TariffSchedule:
    entries: tuple[TariffEntry, ...] = ()

    def resolve(self, dims: WorldDims, groups: dict[str, str] | None = None,
                baseline: np.ndarray | None = None) -> TariffTensor:
        return resolve_entries(self.entries, dims, groups, baseline)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str = ""
    shocks: TariffSchedule = TariffSchedule()
    retaliation: TariffSchedule = TariffSchedule()
    overrides: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)
    source: str = field(default="", compare=False)

    def resolve(self, dims: WorldDims, groups: dict[str, str] | None = None,
                baseline: np.ndarray | None = None) -> TariffTensor:
        entries = self.shocks.entries + self.retaliation.entries
        return resolve_entries(entries, dims, groups, baseline)


class _CodeResolver:
    def __init__(self, dims: WorldDims, groups: dict[str, str]):
        self.dims = dims
        self.groups = groups
        self.country_index = {c: i for i, c in enumerate(dims.country_codes)}
        self.sector_index = {s: i for i, s in enumerate(dims.sector_codes)}
        self.known_groups = set(INCOME_GROUPS) | set(groups.values())
        self.skipped: set[str] = set()

    def countries(self, sel, where: str) -> tuple[np.ndarray, int]:
        if sel == "ALL":
            return np.arange(self.dims.n_countries), 0
        idx: set[int] = set()
        level = 2
        for code in sel:
            if code.startswith("group:"):
                name = code[len("group:"):]
                if name not in self.known_groups:
                    raise ScenarioError(f"{where}: unknown income group {name!r}")
                level = 1
                idx.update(
                    i for c, i in self.country_index.items()
                    if self.groups.get(c, DEFAULT_GROUP) == name
                )
            elif code in self.country_index:
                idx.add(self.country_index[code])
            elif code in ICIO_COUNTRIES:
                self.skipped.add(code)
            else:
                raise ScenarioError(f"{where}: unknown country code {code!r}")
        return np.array(sorted(idx), dtype=int), level

    def sectors(self, sel, where: str) -> tuple[np.ndarray, int]:
        if sel == "ALL":
            return np.arange(self.dims.n_sectors), 0
        idx: set[int] = set()
        for code in sel:
            if code in self.sector_index:
                idx.add(self.sector_index[code])
            elif code in ICIO_SECTORS:
                self.skipped.add(code)
            else:
                raise ScenarioError(f"{where}: unknown sector code {code!r}")
        return np.array(sorted(idx), dtype=int), 2


def resolve_entries(entries, dims: WorldDims, groups: dict[str, str] | None = None,
                    baseline: np.ndarray | None = None) -> TariffTensor:
    groups = default_income_groups() if groups is None else groups
    N, n = dims.n_countries, dims.n_sectors
    codes = _CodeResolver(dims, groups)
    cc = np.arange(N)

    resolved = []
    for pos, e in enumerate(entries):
        where = e.where or f"entry[{pos}]"
        imp, li = codes.countries(e.importer, f"{where}.importer")
        exp, lo = codes.countries(e.exporter, f"{where}.exporter")
        com, ly = codes.sectors(e.commodities, f"{where}.commodities")
        mask = np.zeros((N, N, n), dtype=bool)
        if imp.size and exp.size and com.size:
            mask[np.ix_(imp, exp, com)] = True
        mask[cc, cc, :] = False
        scope = (tuple(imp), tuple(exp), tuple(com))
        resolved.append((pos, e, where, mask, (ly, lo, li), scope))

    rates = np.zeros((N, N, n))
    key_at = np.full((N, N, n), -1, dtype=int)
    owner = np.full((N, N, n), -1, dtype=int)
    scope_ids: dict[tuple, int] = {}
    scope_where: dict[int, str] = {}

    def key_rank(key):
        return key[0] * 9 + key[1] * 3 + key[2]

    sets = sorted((r for r in resolved if r[1].mode == "set"), key=lambda r: key_rank(r[4]))
    for pos, e, where, mask, key, scope in sets:
        sid = scope_ids.setdefault((key, scope), len(scope_ids))
        rank = key_rank(key)
        clash = mask & (key_at == rank) & (owner != sid) & (rates != e.rate)
        if clash.any():
            d, o, y = np.argwhere(clash)[0]
            raise ScenarioError(
                f"{where} (rate {e.rate:g}) contradicts {scope_where[int(owner[d, o, y])]} "
                f"at equal precedence on ({dims.country_codes[d]}, {dims.country_codes[o]}, "
                f"{dims.sector_codes[y]})"
            )
        rates[mask] = e.rate
        key_at[mask] = rank
        owner[mask] = sid
        scope_where[sid] = where

    for pos, e, where, mask, key, scope in resolved:
        if e.mode == "add":
            rates[mask] += e.rate

    cut = np.zeros((N, N, n))
    for pos, e, where, mask, key, scope in resolved:
        if e.mode == "cut":
            cut[mask] += e.rate
    if cut.any():
        if baseline is None:
            logger.warning("duty reductions need baseline duties; none supplied, reductions resolve to zero")
        else:
            base = np.asarray(baseline, dtype=float)
            rates = np.maximum(rates - cut * base, -base)

    if codes.skipped:
        logger.info("codes not present in this world were skipped: %s", ", ".join(sorted(codes.skipped)))
    return TariffTensor(dims, rates, None if baseline is None else np.asarray(baseline, dtype=float))


def _entries(raw, section: str, source: str) -> TariffSchedule:
    if raw is None:
        return TariffSchedule()
    if not isinstance(raw, list):
        raise ScenarioError(f"{source}: '{section}' must be a list")
    return TariffSchedule(tuple(
        TariffEntry.from_mapping(item, f"{source}: {section}[{i}]") for i, item in enumerate(raw)
    ))


def _check_overrides(raw, source: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ScenarioError(f"{source}: 'overrides' must be a mapping")
    unknown = set(raw) - OVERRIDE_KEYS
    if unknown:
        raise ScenarioError(f"{source}: unknown override keys {sorted(unknown)}")
    return dict(raw)


def scenario_from_mapping(raw: dict, source: str = "<scenario>") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError(f"{source}: scenario file must be a mapping")
    unknown = set(raw) - SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"{source}: unknown keys {sorted(unknown)}")
    if not raw.get("name"):
        raise ScenarioError(f"{source}: missing 'name'")
    return Scenario(
        name=str(raw["name"]),
        description=str(raw.get("description") or "").strip(),
        shocks=_entries(raw.get("shocks"), "shocks", source),
        retaliation=_entries(raw.get("retaliation"), "retaliation", source),
        overrides=_check_overrides(raw.get("overrides"), source),
        source=source,
    )


def parse_scenario(path: str | Path, dims: WorldDims | None = None,
                   groups: dict[str, str] | None = None) -> Scenario:
    """Read a scenario file; with ``dims`` given, codes and conflicts are checked eagerly."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text("utf-8"))
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: malformed YAML: {exc}") from exc
    scenario = scenario_from_mapping(raw, str(path))
    if dims is not None:
        scenario.resolve(dims, groups)
    return scenario


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    return scenario_from_mapping(yaml.safe_load(text), source)


def dump_scenario(scenario: Scenario) -> str:
    raw = {
        "name": scenario.name,
        "description": scenario.description,
        "shocks": [e.to_mapping() for e in scenario.shocks.entries],
        "retaliation": [e.to_mapping() for e in scenario.retaliation.entries],
    }
    if scenario.overrides:
        raw["overrides"] = scenario.overrides
    return yaml.safe_dump(raw, sort_keys=False, allow_unicode=True)


def builtin_scenario_path(name: str):
    if name not in BUILTIN_NAMES:
        raise ScenarioError(f"no built-in scenario {name!r}; choose from {BUILTIN_NAMES}")
    return resources.files("tariffmrio").joinpath(f"data/{name}.yaml")


def builtin_scenarios() -> list[Scenario]:
    out = []
    for name in BUILTIN_NAMES:
        ref = builtin_scenario_path(name)
        out.append(scenario_from_mapping(yaml.safe_load(ref.read_text("utf-8")), f"{name}.yaml"))
    return out


def load_baseline_duties(path: str | Path, dims: WorldDims) -> np.ndarray:
    """Baseline duty CSV with columns importer, exporter, sector, rate ('ALL' allowed)."""
    df = pd.read_csv(path, dtype={"importer": str, "exporter": str, "sector": str})
    missing = {"importer", "exporter", "sector", "rate"} - set(df.columns)
    if missing:
        raise ScenarioError(f"{path}: missing columns {sorted(missing)}")
    codes = _CodeResolver(dims, {})
    N, n = dims.n_countries, dims.n_sectors
    out = np.zeros((N, N, n))
    for i, row in enumerate(df.itertuples(index=False), start=2):
        where = f"{path}:{i}"
        rate = float(row.rate)
        if not np.isfinite(rate) or rate < 0:
            raise ScenarioError(f"{where}: negative or non-finite duty {row.rate!r}")
        imp, _ = codes.countries(_selector(row.importer, where), f"{where}.importer")
        exp, _ = codes.countries(_selector(row.exporter, where), f"{where}.exporter")
        com, _ = codes.sectors(_selector(row.sector, where), f"{where}.sector")
        if imp.size and exp.size and com.size:
            out[np.ix_(imp, exp, com)] = rate
    cc = np.arange(N)
    out[cc, cc, :] = 0.0
    return out
