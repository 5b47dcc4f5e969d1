"""Conditional-independence tests: Fisher-z partial correlation and G-square."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .core import Dataset, DegeneracyError, InputError, SampleSizeError

R_CLAMP = 1.0 - 1e-12
VAR_FLOOR = 1e-12
SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class CIResult:
    statistic: float
    p_value: float
    independent: bool


def _columns(data: Dataset | np.ndarray, x, y, z) -> tuple[np.ndarray, int, int, list[int]]:
    values = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)

    def idx(c):
        if isinstance(c, str):
            if not isinstance(data, Dataset):
                raise InputError("named columns need a Dataset")
            return data.index(c)
        return int(c)

    xi, yi, zi = idx(x), idx(y), [idx(c) for c in z]
    if xi == yi:
        raise InputError("x and y must differ")
    if xi in zi or yi in zi:
        raise InputError("x and y must not be in the conditioning set")
    return values, xi, yi, zi


def partial_corr_from_cov(cov, x: int, y: int, z: Sequence[int]) -> float:
    """Partial correlation of x and y given z from a covariance matrix.

    ``cov`` may be an ndarray or a nested list. The conditioning block is
    eliminated in place (a Schur complement), which equals the precision
    matrix formula on the (x, y, z) submatrix. A pivot whose residual
    variance falls below 1e-12 of its raw variance marks a singular
    conditioning block, or an x or y explained entirely by z; both leave
    the partial correlation undefined.
    """
    idx = [x, y, *z]
    k = len(idx)
    s = [[float(cov[i][j]) for j in idx] for i in idx]
    raw = [s[i][i] for i in range(k)]
    if min(raw) < VAR_FLOOR:
        raise DegeneracyError("constant column in partial correlation")
    if k == 2:
        r = s[0][1] / math.sqrt(raw[0] * raw[1])
        return float(min(1.0, max(-1.0, r)))
    for p in range(k - 1, 1, -1):
        piv = s[p][p]
        if not piv > SINGULAR_RATIO * raw[p]:
            raise DegeneracyError("singular covariance submatrix")
        row = s[p]
        for i in range(p):
            f = s[i][p] / piv
            if f:
                si = s[i]
                for j in range(p):
                    si[j] -= f * row[j]
    sxx, syy, sxy = s[0][0], s[1][1], s[0][1]
    if not (sxx > SINGULAR_RATIO * raw[0] and syy > SINGULAR_RATIO * raw[1]):
        raise DegeneracyError("singular covariance submatrix")
    # residuals that are exact multiples of each other give the limit +-1
    r = sxy / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def partial_correlation(data, x, y, z: Sequence = ()) -> float:
    values, xi, yi, zi = _columns(data, x, y, z)
    if values.shape[0] < len(zi) + 3:
        raise SampleSizeError(f"need at least {len(zi) + 3} rows")
    idx = [xi, yi, *zi]
    cov = np.atleast_2d(np.cov(values[:, idx], rowvar=False))
    return partial_corr_from_cov(cov, 0, 1, range(2, len(idx)))


def fisher_z_from_r(r: float, n: int, cond_size: int, alpha: float) -> CIResult:
    dof = n - cond_size - 3
    if dof <= 0:
        raise SampleSizeError(f"Fisher-z needs more than {cond_size + 3} rows, got {n}")
    r = max(-R_CLAMP, min(R_CLAMP, r))
    stat = 0.5 * math.log((1 + r) / (1 - r)) * math.sqrt(dof)
    p = math.erfc(abs(stat) / math.sqrt(2.0))
    return CIResult(stat, min(1.0, p), p > alpha)


def fisher_z(data, x, y, z: Sequence = (), alpha: float = 0.05) -> CIResult:
    values, xi, yi, zi = _columns(data, x, y, z)
    n = values.shape[0]
    if n <= len(zi) + 3:
        raise SampleSizeError(f"Fisher-z needs more than {len(zi) + 3} rows, got {n}")
    r = partial_correlation(values, xi, yi, zi)
    return fisher_z_from_r(r, n, len(zi), alpha)


def g_square_codes(x: np.ndarray, y: np.ndarray, strata: np.ndarray, alpha: float) -> CIResult:
    """G-square test on integer-coded columns; ``strata`` labels each row's Z configuration."""
    g2 = 0.0
    dof = 0
    _, s_idx = np.unique(strata, return_inverse=True)
    _, x_idx = np.unique(x, return_inverse=True)
    _, y_idx = np.unique(y, return_inverse=True)
    nx_, ny_ = x_idx.max() + 1, y_idx.max() + 1
    table = np.zeros((s_idx.max() + 1, nx_, ny_))
    np.add.at(table, (s_idx, x_idx, y_idx), 1.0)
    for tab in table:
        # levels observed within this stratum only
        tab = tab[tab.sum(axis=1) > 0][:, tab.sum(axis=0) > 0]
        rows, cols = tab.shape
        if rows < 2 or cols < 2:
            continue
        expected = np.outer(tab.sum(axis=1), tab.sum(axis=0)) / tab.sum()
        nz = tab > 0
        g2 += 2.0 * float(np.sum(tab[nz] * np.log(tab[nz] / expected[nz])))
        dof += (rows - 1) * (cols - 1)
    if dof == 0:
        return CIResult(0.0, 1.0, True)
    p = float(special.chdtrc(dof, g2))
    return CIResult(g2, p, p > alpha)


def strata_codes(values: np.ndarray, cols: Sequence[int]) -> np.ndarray:
    if not len(cols):
        return np.zeros(values.shape[0], dtype=np.int64)
    block = values[:, list(cols)].astype(np.int64)
    # base-7 packing; discrete levels live in 0..5 plus binary indicators
    weights = 7 ** np.arange(len(cols), dtype=np.int64)
    if len(cols) > 20:
        _, codes = np.unique(block, axis=0, return_inverse=True)
        return codes.ravel()
    return block @ weights


def g_square(data, x, y, z: Sequence = (), alpha: float = 0.05) -> CIResult:
    values, xi, yi, zi = _columns(data, x, y, z)
    if values.shape[0] < 1:
        raise SampleSizeError("G-square needs at least one row")
    return g_square_codes(values[:, xi], values[:, yi], strata_codes(values, zi), alpha)
