"""Fixed point of shares, prices, final demand and output under a tariff schedule.

One sweep runs in causal order: delivered prices, Armington shares, cost-push
prices, final demand, gross output. Shares and prices are damped,
``next = current + damping * (proposal - current)``, and the sweep repeats
until the largest relative change across T, the price deltas and x drops
below the tolerance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .armington import DEFAULT_SIGMA, DeliveredPriceTensor, calibrate, update_shares
from .data_io import WorldDataset
from .employment import EmploymentSatellite
from .mrio import (
    BlockMatrix,
    DemandVector,
    MRIOError,
    SolverError,
    TradeFlows,
    as_vector,
    build_coefficients,
    check_stochastic,
    compute_trade_flows,
    normalize_allocation,
    solve_production,
)
from .prices import (
    DEFAULT_EPSILON,
    DemandResponse,
    demand_response,
    final_demand_price_delta,
    propagate_prices,
    tariff_cost_shock,
)
from .scenarios import Scenario, TariffTensor

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
DIVERGED = "diverged"
BASE_OUTPUT_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9
    max_iterations: int = 200
    damping: float = 0.5
    divergence_window: int = 10

    def __post_init__(self):
        if not (self.tolerance > 0 and math.isfinite(self.tolerance)):
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.divergence_window < 2:
            raise ValueError("divergence_window must be >= 2")


@dataclass(frozen=True, eq=False)
class Economy:
    """Calibrated baseline: technology, base shares, base demand and elasticities."""

    A: BlockMatrix
    base_T: BlockMatrix
    base_fd: DemandVector
    base_x: np.ndarray
    sigma: np.ndarray
    epsilon: np.ndarray
    satellite: EmploymentSatellite | None = None

    @property
    def dims(self):
        return self.A.dims

    @classmethod
    def from_world(cls, ds: WorldDataset, sigma=DEFAULT_SIGMA, epsilon=DEFAULT_EPSILON) -> "Economy":
        A = build_coefficients(ds.Z, ds.gross_output)
        T = normalize_allocation(ds.ALL, fill_empty=True)
        fd = ds.fd
        x = solve_production(A, T, fd)
        recorded = np.asarray(ds.gross_output, dtype=float)
        dev = np.abs(x - recorded).max() / max(np.abs(recorded).max(), 1e-300)
        if dev > BASE_OUTPUT_TOL:
            logger.warning("re-solved baseline output deviates from recorded output by %.3g (relative)", dev)
        return cls.calibrated(A, T, fd, x, sigma, epsilon, ds.satellite)

    @classmethod
    def calibrated(cls, A, T, fd, x, sigma=DEFAULT_SIGMA, epsilon=DEFAULT_EPSILON,
                   satellite=None) -> "Economy":
        dims = A.dims
        fd = fd if isinstance(fd, DemandVector) else DemandVector(dims, fd)
        params = calibrate(T, sigma)
        resp = DemandResponse(epsilon, fd)
        return cls(A, T, fd, as_vector(x, dims, "gross output").copy(),
                   params.sigma, resp.epsilon, satellite)

    def with_params(self, sigma=None, epsilon=None) -> "Economy":
        return Economy.calibrated(
            self.A, self.base_T, self.base_fd, self.base_x,
            self.sigma if sigma is None else sigma,
            self.epsilon if epsilon is None else epsilon,
            self.satellite,
        )


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    T: BlockMatrix
    price_delta: np.ndarray
    fd: DemandVector
    x: np.ndarray
    flows: TradeFlows
    tariffs: TariffTensor
    iterations: int
    converged: bool
    status: str = CONVERGED
    residuals: dict = field(default_factory=dict)
    history: tuple = ()
    config: SolverConfig = SolverConfig()
    sigma: np.ndarray | None = None
    epsilon: np.ndarray | None = None
    message: str = ""

    @property
    def dims(self):
        return self.T.dims

    @property
    def imports(self) -> np.ndarray:
        return self.flows.imports

    @property
    def exports(self) -> np.ndarray:
        return self.flows.exports


@dataclass(frozen=True, eq=False)
class DeltaReport:
    """Baseline-vs-scenario changes; ``pct`` columns are NaN where the baseline is zero."""

    cells: pd.DataFrame
    countries: pd.DataFrame


def _pct(delta, base):
    delta = np.asarray(delta, dtype=float)
    base = np.asarray(base, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(base != 0, 100.0 * delta / np.where(base != 0, base, 1.0), np.nan)


def _rel_change(new: np.ndarray, old: np.ndarray, scale: float) -> float:
    if new.size == 0:
        return 0.0
    return float(np.abs(new - old).max() / max(scale, 1e-300))


def equilibrium_step(economy: Economy, tariffs: TariffTensor, T: BlockMatrix, dp: np.ndarray):
    """One un-damped sweep from ``(T, dp)``: returns the proposals ``(T_new, dp_new)``."""
    params = calibrate(economy.base_T, economy.sigma)
    prices = DeliveredPriceTensor.from_producer_prices(1.0 + dp, tariffs.wedge)
    T_new = update_shares(params, prices)
    dpm = tariff_cost_shock(economy.A, T_new, tariffs)
    dp_new = propagate_prices(economy.A, T_new, dpm)
    return T_new, dp_new


def _demand_and_output(economy: Economy, tariffs: TariffTensor, T: BlockMatrix, dp: np.ndarray):
    pfd = final_demand_price_delta(T, dp, tariffs)
    fd = demand_response(DemandResponse(economy.epsilon, economy.base_fd), pfd)
    x = solve_production(economy.A, T, fd)
    return fd, x


def _state(economy, tariffs, T, dp, fd, x, iterations, status, residuals, history, cfg, message=""):
    return EquilibriumState(
        T=T,
        price_delta=dp,
        fd=fd,
        x=x,
        flows=compute_trade_flows(T, economy.A, x, fd),
        tariffs=tariffs,
        iterations=iterations,
        converged=status == CONVERGED,
        status=status,
        residuals=residuals,
        history=tuple(history),
        config=cfg,
        sigma=economy.sigma,
        epsilon=economy.epsilon,
        message=message,
    )


def solve_baseline(economy: Economy, cfg: SolverConfig | None = None) -> EquilibriumState:
    """The calibrated no-tariff equilibrium."""
    cfg = cfg or SolverConfig()
    return solve_scenario(economy, TariffTensor.zeros(economy.dims), cfg)


def _resolve(economy: Economy, scenario, groups, baseline_duties) -> tuple[Economy, TariffTensor, dict]:
    if isinstance(scenario, TariffTensor):
        if scenario.dims != economy.dims:
            raise MRIOError("tariff tensor dimensions do not match the economy")
        return economy, scenario, {}
    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario or TariffTensor, got {type(scenario).__name__}")
    tariffs = scenario.resolve(economy.dims, groups, baseline_duties)
    ov = scenario.overrides
    if "sigma" in ov or "epsilon" in ov:
        economy = economy.with_params(ov.get("sigma"), ov.get("epsilon"))
    return economy, tariffs, ov


def solve_scenario(economy: Economy, scenario, cfg: SolverConfig | None = None,
                   groups: dict[str, str] | None = None,
                   baseline_duties: np.ndarray | None = None) -> EquilibriumState:
    """Iterate to the tariff equilibrium; non-convergence is reported, not raised.

    ``scenario`` is a :class:`Scenario` (its ``overrides`` for sigma, epsilon
    and damping are applied) or an already resolved :class:`TariffTensor`.
    """
    cfg = cfg or SolverConfig()
    economy, tariffs, ov = _resolve(economy, scenario, groups, baseline_duties)
    if "damping" in ov:
        cfg = replace(cfg, damping=float(ov["damping"]))
    if np.any(tariffs.wedge < 0):
        logger.info("scenario lowers some tariffs below their baseline level")

    lam = cfg.damping
    T, dp = economy.base_T, np.zeros(economy.dims.size)
    fd, x = economy.base_fd, economy.base_x
    history: list[float] = []
    residuals: dict[str, float] = {}
    growth = 0
    for it in range(1, cfg.max_iterations + 1):
        try:
            T_prop, dp_prop = equilibrium_step(economy, tariffs, T, dp)
            if lam == 1.0:
                T_next, dp_next = T_prop, dp_prop
            else:
                T_next = BlockMatrix(economy.dims, "T", T.blocks + lam * (T_prop.blocks - T.blocks))
                dp_next = dp + lam * (dp_prop - dp)
            fd_next, x_next = _demand_and_output(economy, tariffs, T_next, dp_next)
        except (SolverError, MRIOError) as exc:
            logger.error("iteration %d failed: %s", it, exc)
            residuals["error"] = float("nan")
            return _state(economy, tariffs, T, dp, fd, x, it, DIVERGED, residuals, history, cfg, str(exc))

        residuals = {
            "T": _rel_change(T_prop.blocks, T.blocks, T.blocks.max(initial=0.0)),
            "price": _rel_change(dp_prop, dp, np.abs(1.0 + dp).max(initial=1.0)),
            "x": _rel_change(x_next, x, np.abs(x).max(initial=0.0)),
        }
        res = max(residuals.values())
        logger.info("iteration %d residual %.3e (T %.2e, price %.2e, x %.2e)",
                    it, res, residuals["T"], residuals["price"], residuals["x"])
        growth = growth + 1 if history and res > history[-1] else 0
        history.append(res)
        T, dp, fd, x = T_next, dp_next, fd_next, x_next
        if not math.isfinite(res):
            return _state(economy, tariffs, T, dp, fd, x, it, DIVERGED, residuals, history, cfg,
                          "non-finite residual")
        if res < cfg.tolerance:
            check_stochastic(T)
            return _state(economy, tariffs, T, dp, fd, x, it, CONVERGED, residuals, history, cfg)
        if growth >= cfg.divergence_window:
            msg = f"residual grew for {growth} consecutive iterations"
            logger.error(msg)
            return _state(economy, tariffs, T, dp, fd, x, it, DIVERGED, residuals, history, cfg, msg)

    msg = f"no convergence after {cfg.max_iterations} iterations (residual {history[-1]:.3e})"
    logger.warning(msg)
    return _state(economy, tariffs, T, dp, fd, x, cfg.max_iterations, MAX_ITERATIONS,
                  residuals, history, cfg, msg)


def diff_states(base: EquilibriumState, shocked: EquilibriumState) -> DeltaReport:
    """Per country-sector and per-country changes in x, exports and final demand."""
    if base.dims != shocked.dims:
        raise MRIOError("cannot compare states with different dimensions")
    dims = base.dims
    cols = {
        "x": (base.x, shocked.x),
        "exports": (base.flows.exports_by_sector, shocked.flows.exports_by_sector),
        "fd": (base.fd.values, shocked.fd.values),
    }
    data = {
        "country": np.array(dims.country_codes)[dims.country_of()],
        "sector": np.array(dims.sector_codes)[dims.sector_of()],
    }
    for name, (b, s) in cols.items():
        data[f"{name}_base"] = b
        data[f"{name}_delta"] = s - b
        data[f"{name}_pct"] = _pct(s - b, b)
    cells = pd.DataFrame(data, index=pd.Index(dims.labels(), name="id"))

    agg = cells.groupby("country", sort=False)[[f"{k}_{p}" for k in cols for p in ("base", "delta")]].sum()
    agg = agg.reindex(list(dims.country_codes))
    agg["imports_base"] = base.imports
    agg["imports_delta"] = shocked.imports - base.imports
    for name in (*cols, "imports"):
        agg[f"{name}_pct"] = _pct(agg[f"{name}_delta"], agg[f"{name}_base"])
    agg.index.name = "country"
    return DeltaReport(cells=cells, countries=agg)
