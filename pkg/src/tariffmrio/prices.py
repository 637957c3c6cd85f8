"""Tariff cost push into producer prices and the price response of final demand."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mrio import (
    BlockMatrix,
    DemandVector,
    MRIOError,
    as_vector,
    check_same_dims,
    clamp_nonnegative,
    solve_shifted,
)
from .scenarios import TariffTensor

DEFAULT_EPSILON = -0.5


@dataclass(frozen=True, eq=False)
class PriceState:
    producer_prices: np.ndarray
    import_cost_shock: np.ndarray
    price_delta: np.ndarray

    @classmethod
    def baseline(cls, size: int) -> "PriceState":
        return cls(np.ones(size), np.zeros(size), np.zeros(size))


@dataclass(frozen=True, eq=False)
class DemandResponse:
    """Isoelastic own-price final demand: ``fd = base_fd * (1 + dp) ** epsilon``."""

    epsilon: np.ndarray
    base_fd: DemandVector

    def __post_init__(self):
        n = self.base_fd.dims.n_sectors
        eps = np.broadcast_to(np.asarray(self.epsilon, dtype=float), (n,)).copy()
        if not np.all(np.isfinite(eps)):
            raise MRIOError("demand elasticities must be finite")
        object.__setattr__(self, "epsilon", eps)


def _wedge(tariffs, dims) -> np.ndarray:
    wedge = tariffs.wedge if isinstance(tariffs, TariffTensor) else np.asarray(tariffs, dtype=float)
    if wedge.shape != (dims.n_countries, dims.n_countries, dims.n_sectors):
        raise MRIOError(f"tariff tensor shape {wedge.shape} does not match world dimensions")
    return wedge


def import_tariff_incidence(T: BlockMatrix, tariffs) -> np.ndarray:
    """Share-weighted tariff on each destination's commodity purchases, shape (N, n).

    ``g[d, y] = sum_o T[o, d, y] * tau[d, o, y]``; domestic tariffs are zero.
    """
    wedge = _wedge(tariffs, T.dims)
    return np.einsum("ody,doy->dy", T.blocks, wedge)


def tariff_cost_shock(A: BlockMatrix, T: BlockMatrix, tariffs) -> np.ndarray:
    """First-round unit-cost increase from tariffs on imported intermediates.

    ``dpm[d, j] = sum_y A_d[y, j] * sum_{o != d} T[o, d, y] * tau[d, o, y]``.
    """
    check_same_dims(A, T)
    g = import_tariff_incidence(T, tariffs)
    return np.einsum("dy,dyj->dj", g, A.blocks).ravel()


def propagate_prices(A: BlockMatrix, T: BlockMatrix, dpm) -> np.ndarray:
    """Cost-push dual ``dp = (I - (T A)^T)^-1 dpm`` via a linear solve."""
    dims = check_same_dims(A, T)
    shock = as_vector(dpm, dims, "import cost shock")
    if not np.any(shock):
        return np.zeros(dims.size)
    dp = solve_shifted(
        lambda v: A.rmatvec(T.rmatvec(v)),
        shock,
        lambda: (T.entries @ A.entries).T,
        what="price solve",
    )
    if np.all(shock >= 0):
        dp = clamp_nonnegative(dp, "price solve")
    return dp


def final_demand_price_delta(T: BlockMatrix, price_delta, tariffs) -> np.ndarray:
    """Price change of the composite good bought by final users in each destination.

    ``pfd[d, y] = sum_o T[o, d, y] * (dp[o, y] + tau[d, o, y])``: the
    share-weighted producer price change plus the share-weighted tariff.
    """
    dims = T.dims
    dp = as_vector(price_delta, dims, "price delta")
    return T.rmatvec(dp) + import_tariff_incidence(T, tariffs).ravel()


def demand_response(resp: DemandResponse, price_delta) -> DemandVector:
    dims = resp.base_fd.dims
    dp = as_vector(price_delta, dims, "price delta")
    level = 1.0 + dp
    if np.any(level <= 0) or not np.all(np.isfinite(level)):
        raise MRIOError("price level must stay strictly positive")
    eps = resp.epsilon[dims.sector_of()]
    return DemandVector(dims, resp.base_fd.values * level ** eps)
