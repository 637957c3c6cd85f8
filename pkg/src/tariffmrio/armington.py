"""Armington trade shares: calibration at unit prices and price-driven reallocation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mrio import BlockMatrix, MRIOError, check_stochastic

DEFAULT_SIGMA = 4.0


@dataclass(frozen=True, eq=False)
class ArmingtonParams:
    """Per-commodity elasticities and calibrated preference weights.

    ``weights[o, d, y]`` is the calibrated ``a**sigma`` term. With baseline
    delivered prices normalised to one, it equals the baseline share.
    """

    sigma: np.ndarray
    base_shares: BlockMatrix
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class DeliveredPriceTensor:
    """Delivered prices ``values[o, d, y] = p[o, y] * (1 + tariff[d, o, y])``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[0] != values.shape[1]:
            raise MRIOError(f"delivered prices must have shape (N, N, n), got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise MRIOError("delivered prices must be finite and strictly positive")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_producer_prices(cls, producer_prices, tariff_wedge) -> "DeliveredPriceTensor":
        """``producer_prices`` is (N*n,) or (N, n); ``tariff_wedge`` is indexed [importer, exporter, commodity]."""
        wedge = np.asarray(tariff_wedge, dtype=float)
        N, _, n = wedge.shape
        p = np.asarray(producer_prices, dtype=float).reshape(N, n)
        return cls(p[:, None, :] * (1.0 + wedge.transpose(1, 0, 2)))

    @classmethod
    def unit(cls, N: int, n: int) -> "DeliveredPriceTensor":
        return cls(np.ones((N, N, n)))


def sigma_vector(sigma, n_sectors: int) -> np.ndarray:
    s = np.broadcast_to(np.asarray(sigma, dtype=float), (n_sectors,)).copy()
    return s


def calibrate(base_T: BlockMatrix, sigma) -> ArmingtonParams:
    if base_T.kind != "T":
        raise MRIOError(f"expected a T matrix, got {base_T.kind}")
    s = sigma_vector(sigma, base_T.dims.n_sectors)
    if not np.all(np.isfinite(s)) or np.any(s <= 1.0):
        raise MRIOError(f"Armington elasticities must exceed 1, got min {s.min():g}")
    check_stochastic(base_T)
    return ArmingtonParams(sigma=s, base_shares=base_T, weights=base_T.blocks)


def update_shares(params: ArmingtonParams, prices: DeliveredPriceTensor) -> BlockMatrix:
    """CES share rule ``s0 p^(1-sigma) / sum_k s0_k p_k^(1-sigma)`` per (destination, commodity)."""
    w = params.weights
    p = prices.values
    if p.shape != w.shape:
        raise MRIOError(f"price tensor shape {p.shape} does not match shares {w.shape}")
    # Normalising by each column's max price keeps powers bounded and makes
    # uniform rescaling of a column drop out before exponentiation.
    rel = p / p.max(axis=0, keepdims=True)
    num = w * rel ** (1.0 - params.sigma)[None, None, :]
    den = num.sum(axis=0, keepdims=True)
    # Columns facing one common price keep their calibrated shares exactly.
    uniform = np.all(rel == 1.0, axis=0, keepdims=True)
    den = np.where(uniform, 1.0, den)
    if np.any(den <= 0):
        d, y = np.argwhere(den[0] <= 0)[0]
        dims = params.base_shares.dims
        raise MRIOError(
            f"degenerate share column ({dims.country_codes[d]}, {dims.sector_codes[y]})"
        )
    return BlockMatrix(params.base_shares.dims, "T", num / den)
