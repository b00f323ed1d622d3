"""Scalar special functions for BPSK streams on Gaussian channels.

SINR arguments are plain floats (or float arrays); ``math.inf`` is a
first-class value meaning "decoded / interference free".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect
from scipy.special import roots_hermite

from sgmod.errors import DomainError

LN2 = math.log(2.0)

# Above this SINR the bit MSE is below 1e-22 and is returned as exactly zero.
G_CUTOFF = 100.0

_HERMITE_ORDER = 1000
_MIN_WEIGHT = 1e-30
_ROOT_XTOL = 1e-12


@lru_cache(maxsize=None)
def gaussian_nodes(order: int = _HERMITE_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(xi)], xi ~ N(0, 1).

    Physicists' Hermite rule rescaled to the standard normal; nodes whose
    weight is below 1e-30 are dropped since every integrand used here is
    bounded by 4.
    """
    x, w = roots_hermite(order)
    keep = w > _MIN_WEIGHT * w.max()
    nodes = math.sqrt(2.0) * x[keep]
    weights = w[keep] / w[keep].sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class EbN0:
    """Energy per information bit over noise spectral density, linear scale."""

    ratio: float

    def __post_init__(self):
        if not self.ratio > 0 or math.isnan(self.ratio):
            raise DomainError(f"Eb/N0 must be positive, got {self.ratio!r}")

    @property
    def db(self) -> float:
        return 10.0 * math.log10(self.ratio)

    @classmethod
    def from_db(cls, db: float) -> "EbN0":
        return cls(10.0 ** (db / 10.0))


def _check_snr(a: np.ndarray, name: str) -> None:
    if np.any(np.isnan(a)):
        raise DomainError(f"{name} must not be NaN")
    if np.any(a < 0):
        raise DomainError(f"{name} must be nonnegative, got min {a.min()!r}")


def _gaussian_mean(fn, a: np.ndarray) -> np.ndarray:
    # E[fn(a + xi*sqrt(a))] for each entry of a (finite, positive)
    nodes, weights = gaussian_nodes()
    out = np.empty(a.shape)
    flat = a.ravel()
    res = out.reshape(-1)
    step = max(1, 2_000_000 // nodes.size)
    for lo in range(0, flat.size, step):
        chunk = flat[lo:lo + step, None]
        y = chunk + nodes[None, :] * np.sqrt(chunk)
        res[lo:lo + step] = fn(y) @ weights
    return out


def _one_minus_tanh_sq(y):
    # 1 - tanh y = 2/(1 + e^{2y}), written with e^{-2|y|} to avoid overflow
    e = np.exp(-2.0 * np.abs(y))
    v = np.where(y >= 0, 2.0 * e, 2.0) / (1.0 + e)
    return v * v


def mse_g(a):
    """Mean squared error of the tanh bit estimate at SINR ``a``.

    g(a) = E[(1 - tanh(a + xi*sqrt(a)))^2], xi standard normal. Accepts a
    scalar or an array; ``inf`` maps to 0 and ``0`` to 1.
    """
    arr = np.asarray(a, dtype=float)
    _check_snr(arr, "SINR")
    out = np.zeros(arr.shape)
    out[arr == 0] = 1.0
    mid = (arr > 0) & (arr < G_CUTOFF)
    if np.any(mid):
        out[mid] = np.clip(_gaussian_mean(_one_minus_tanh_sq, arr[mid]), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def _log2_one_plus_exp_neg2(y):
    return np.logaddexp(0.0, -2.0 * y) / LN2


def biawgn_capacity(gamma):
    """Mutual information (bits) of equiprobable BPSK on a real AWGN channel.

    Computed as 1 - E[log2(1 + exp(-2*gamma - 2*sqrt(gamma)*xi))].
    """
    arr = np.asarray(gamma, dtype=float)
    _check_snr(arr, "SNR")
    out = np.ones(arr.shape)
    out[arr == 0] = 0.0
    fin = (arr > 0) & np.isfinite(arr)
    if np.any(fin):
        out[fin] = np.clip(1.0 - _gaussian_mean(_log2_one_plus_exp_neg2, arr[fin]), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def biawgn_capacity_inverse(rate: float) -> float:
    """SNR at which the BPSK mutual information equals ``rate`` bits."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"rate must lie in [0, 1), got {rate!r}")
    if rate == 0.0:
        return 0.0
    hi = 1.0
    while biawgn_capacity(hi) < rate:
        hi *= 2.0
        if hi > G_CUTOFF * 1e3:
            raise DomainError(f"rate {rate!r} is numerically indistinguishable from 1")
    return bisect(lambda g: biawgn_capacity(g) - rate, 0.0, hi, xtol=_ROOT_XTOL)


def _ebn0_for_rate(c: float) -> float:
    # (2^{2C} - 1) / (2C): the Eb/N0 at which C is the AWGN capacity
    return math.expm1(2.0 * c * LN2) / (2.0 * c)


def awgn_capacity_fixed_point(ebn0: EbN0 | float) -> float:
    """Positive root C of C = 0.5*log2(1 + 2*C*Eb/N0), or 0 at/below ln 2."""
    ratio = ebn0.ratio if isinstance(ebn0, EbN0) else float(ebn0)
    if not ratio > 0:
        raise DomainError(f"Eb/N0 must be positive, got {ratio!r}")
    if ratio <= LN2:
        return 0.0
    hi = 1.0
    while _ebn0_for_rate(hi) < ratio:
        hi *= 2.0
    # the rate -> Eb/N0 map is increasing from ln 2 at C = 0+
    return bisect(lambda c: _ebn0_for_rate(c) - ratio if c > 0 else LN2 - ratio,
                  0.0, hi, xtol=_ROOT_XTOL)


def awgn_capacity(snr):
    """0.5*log2(1 + snr) bits per real dimension."""
    return 0.5 * np.log2(1.0 + np.asarray(snr, dtype=float))
