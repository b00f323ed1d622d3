"""Spectral efficiency of the coupled system and the curves behind it.

``s`` is the total system SNR alpha/sigma2. Efficiencies are in bits per
real dimension.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from scipy.optimize import brentq

from sgmod.core import LN2, EbN0, awgn_capacity_fixed_point, biawgn_capacity
from sgmod.density import Model, SystemParams, two_stage_max_rate
from sgmod.errors import ConfigurationError, DomainError


class Receiver(str, Enum):
    SIC = "modified-SIC"
    TWO_STAGE = "two-stage"
    AWGN = "awgn-capacity"

    @classmethod
    def parse(cls, value: "Receiver | str") -> "Receiver":
        if isinstance(value, cls):
            return value
        aliases = {"sic": cls.SIC, "modified-sic": cls.SIC, "two-stage": cls.TWO_STAGE,
                   "pic": cls.TWO_STAGE, "two-stage-pic": cls.TWO_STAGE,
                   "awgn": cls.AWGN, "awgn-capacity": cls.AWGN}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown receiver {value!r}") from None


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v!r}")


def sic_threshold(alpha: float, s: float) -> float:
    """Limiting code threshold ln(1+s)/alpha of the modified SIC receiver."""
    _check_positive(alpha=alpha, s=s)
    return math.log1p(s) / alpha


def c_eff(alpha: float, s: float) -> float:
    """alpha * C_BIAWGN(ln(1+s)/alpha)."""
    return alpha * biawgn_capacity(sic_threshold(alpha, s))


def ebn0_of(alpha: float, s: float) -> EbN0:
    """Eb/N0 = 1 / (2 * C_BIAWGN(ln(1+s)/alpha) * sigma2) with sigma2 = alpha/s."""
    rate = biawgn_capacity(sic_threshold(alpha, s))
    return EbN0(1.0 / (2.0 * rate * (alpha / s)))


def theorem1_rate(alpha: float, sigma2: float, delta: float) -> float:
    """Sum rate when codes are designed for the first-iteration SINR at offset delta.

    The threshold is ln((alpha+sigma2)/sigma2)/alpha minus the first-order
    drop alpha/(sigma2*(alpha+sigma2)) * delta.
    """
    _check_positive(alpha=alpha, sigma2=sigma2)
    if delta < 0:
        raise DomainError(f"delta must be nonnegative, got {delta!r}")
    theta = (math.log1p(alpha / sigma2) / alpha
             - alpha / (sigma2 * (alpha + sigma2)) * delta)
    if not theta > 0:
        raise DomainError(f"delta={delta!r} leaves a nonpositive threshold {theta!r}")
    return alpha * biawgn_capacity(theta)


def limit_ebn0(s: float) -> float:
    """Eb/N0 of the modified SIC receiver as alpha -> infinity: s / log2(1+s)."""
    _check_positive(s=s)
    return s / math.log2(1.0 + s)


def s_for_ebn0(alpha: float, ebn0: EbN0 | float) -> float:
    """Total SNR s at which the modified SIC receiver runs at the given Eb/N0."""
    target = ebn0.ratio if isinstance(ebn0, EbN0) else float(ebn0)
    _check_positive(alpha=alpha)
    lo = 1e-9
    if target <= ebn0_of(alpha, lo).ratio:
        raise DomainError(f"Eb/N0 {target!r} is below what alpha={alpha!r} can reach")
    hi = 1.0
    while ebn0_of(alpha, hi).ratio < target:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError(f"Eb/N0 {target!r} out of range for alpha={alpha!r}")
    return brentq(lambda s: ebn0_of(alpha, s).ratio - target, lo, hi, xtol=1e-14, rtol=1e-14)


@dataclass(frozen=True)
class CurvePoint:
    receiver: Receiver
    alpha: float
    s: float
    sigma2: float
    spectral_efficiency: float
    ebn0: EbN0

    @property
    def ebn0_db(self) -> float:
        return self.ebn0.db

    def as_row(self) -> dict:
        return {"receiver": self.receiver.value, "alpha": self.alpha, "s": self.s,
                "sigma2": self.sigma2, "ebn0_db": self.ebn0_db,
                "spectral_efficiency": self.spectral_efficiency}


@dataclass
class CurveTable:
    rows: list[CurvePoint] = field(default_factory=list)

    def select(self, receiver: Receiver | str, alpha: float | None = None) -> list[CurvePoint]:
        receiver = Receiver.parse(receiver)
        return [r for r in self.rows
                if r.receiver is receiver and (alpha is None or r.alpha == alpha)]

    def sorted_for_export(self) -> list[CurvePoint]:
        return sorted(self.rows, key=lambda r: (r.receiver.value, r.alpha, r.ebn0_db))


@dataclass(frozen=True)
class SweepSpec:
    alphas: tuple[float, ...]
    s_values: tuple[float, ...]
    receiver: Receiver = Receiver.SIC
    two_stage: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "s_values", tuple(float(s) for s in self.s_values))
        object.__setattr__(self, "receiver", Receiver.parse(self.receiver))
        if not self.alphas or not self.s_values:
            raise ConfigurationError("sweep needs at least one alpha and one s value")
        for v in self.alphas + self.s_values:
            if not v > 0:
                raise ConfigurationError(f"sweep values must be positive, got {v!r}")


def _point(receiver: Receiver, alpha: float, s: float, two_stage: dict) -> CurvePoint:
    sigma2 = alpha / s
    if receiver is Receiver.SIC:
        eff, ebn0 = c_eff(alpha, s), ebn0_of(alpha, s)
    elif receiver is Receiver.AWGN:
        ebn0 = ebn0_of(alpha, s)
        eff = awgn_capacity_fixed_point(ebn0)
    else:
        opts = {"model": Model.CONTINUOUS, "t_max": 20.0, "dt": 1e-2, "max_iter": 400}
        opts.update(two_stage)
        eff, _ = two_stage_max_rate(SystemParams(alpha, sigma2), **opts)
        ebn0 = EbN0(s / (2.0 * eff) if eff > 0 else math.inf)
    return CurvePoint(receiver, alpha, s, sigma2, eff, ebn0)


def _point_star(args):
    return _point(*args)


def sweep_fig2(spec: SweepSpec, workers: int = 1) -> CurveTable:
    """Evaluate one receiver over the (alpha, s) grid; rows sorted by Eb/N0.

    AWGN rows report the capacity at the Eb/N0 of the modified SIC receiver
    for the same (alpha, s), so both curves share abscissae.
    """
    jobs = [(spec.receiver, a, s, spec.two_stage) for a in spec.alphas for s in spec.s_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_point_star, jobs))
    else:
        rows = [_point_star(j) for j in jobs]
    rows.sort(key=lambda r: (r.ebn0_db, r.alpha, r.s))
    return CurveTable(rows)


def s_grid_for_ebn0_range(alpha: float, db_min: float, db_max: float, n: int) -> list[float]:
    """s values at which the modified SIC receiver spans [db_min, db_max] dB evenly."""
    if n < 2:
        raise ConfigurationError("need at least two points")
    step = (db_max - db_min) / (n - 1)
    return [s_for_ebn0(alpha, EbN0.from_db(db_min + i * step)) for i in range(n)]


def capacity_gap_db(efficiency: float, ebn0: EbN0) -> float:
    """Distance in dB between an operating point and the AWGN capacity curve.

    The capacity curve needs Eb/N0 = (2^{2C} - 1)/(2C) to support rate C.
    """
    if not efficiency > 0:
        return math.inf
    needed = math.expm1(2.0 * efficiency * LN2) / (2.0 * efficiency)
    return ebn0.db - 10.0 * math.log10(needed)


