"""Density evolution of the coupled interference-cancellation receiver.

Two time models are supported. In the *discrete* model the grid is the
slot index ``t = 1..t_max`` and a packet spans ``2W+1`` slots. In the
*continuous* model the packet length is normalised to one and the grid is
uniform with spacing ``dt``; integrals over a packet use the composite
trapezoid rule.

Outside the grid the profile is extended with fixed boundary values: to the
left every packet is known (``z = inf``), to the right packets keep arriving
and are fully unknown (``z = 0``).

Mixed intervals in the continuous model: an interval whose left end point is
decoded contributes nothing to the interference integral, so the jump from
decoded to undecoded sits at the first undecoded grid point. This keeps the
step initialisation exact (``x_0(t) = alpha*(t + 1/2) + sigma2``) while the
update stays monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from sgmod.core import biawgn_capacity, mse_g
from sgmod.errors import ConfigurationError, InvariantError

CONVERGENCE_TOL = 1e-12
STALL_ITERATIONS = 5
THETA_RESOLUTION = 1e-4


class Mode(str, Enum):
    PIC = "two-stage-PIC"
    SIC = "modified-SIC"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, cls):
            return value
        aliases = {"pic": cls.PIC, "two-stage": cls.PIC, "two-stage-pic": cls.PIC,
                   "sic": cls.SIC, "modified-sic": cls.SIC}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown receiver mode {value!r}") from None


class Model(str, Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"

    @classmethod
    def parse(cls, value: "Model | str") -> "Model":
        try:
            return cls(str(value.value if isinstance(value, cls) else value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown time model {value!r}") from None


@dataclass(frozen=True)
class SystemParams:
    """Load ``alpha``, noise power ``sigma2``, coupling half-window ``w``
    (discrete model only) and code threshold ``theta``."""

    alpha: float
    sigma2: float
    w: int = 1
    theta: float = math.inf

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha!r}")
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2!r}")
        if int(self.w) != self.w or self.w < 1:
            raise ConfigurationError(f"w must be a positive integer, got {self.w!r}")
        if not self.theta >= 0:
            raise ConfigurationError(f"theta must be nonnegative, got {self.theta!r}")

    @property
    def snr(self) -> float:
        return self.alpha / self.sigma2


@dataclass
class SinrProfile:
    """SINR ``z`` and interference-plus-noise variance ``x`` over a time grid.

    ``x`` is ``None`` until a variance update has been applied to ``z``.
    """

    t: np.ndarray
    z: np.ndarray
    model: Model
    dt: float = 1.0
    x: np.ndarray | None = None
    iteration: int = 0

    w: int = 1

    @property
    def pad(self) -> int:
        """Grid points covered by half a packet."""
        if self.model is Model.CONTINUOUS:
            return int(round(0.5 / self.dt))
        return self.w

    def copy(self) -> "SinrProfile":
        return replace(self, z=self.z.copy(), x=None if self.x is None else self.x.copy())


@dataclass
class DeTrajectory:
    profiles: list[SinrProfile]
    front: np.ndarray
    speed: np.ndarray
    mode: Mode
    params: SystemParams
    converged: bool = False
    stalled: bool = False

    @property
    def final(self) -> SinrProfile:
        return self.profiles[-1]

    @property
    def iterations(self) -> int:
        return self.profiles[-1].iteration


# -- grids -----------------------------------------------------------------

def init_discrete(params: SystemParams, t_max: int) -> SinrProfile:
    """Step initialisation on slots ``1..t_max``: packets centred at t <= W
    are known, the rest unknown."""
    w = int(params.w)
    if int(t_max) != t_max or t_max <= w:
        raise ConfigurationError(f"t_max must be an integer > w={w}, got {t_max!r}")
    t = np.arange(1, int(t_max) + 1, dtype=float)
    z = np.where(t <= w, math.inf, 0.0)
    return SinrProfile(t=t, z=z, model=Model.DISCRETE, dt=1.0, w=w)


def _grid_index(value: float, dt: float, name: str) -> int:
    k = round(value / dt)
    if abs(k * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ConfigurationError(f"{name}={value!r} is not a multiple of dt={dt!r}")
    return int(k)


def init_continuous(params: SystemParams, t_min: float = -1.0, t_max: float = 40.0,
                    dt: float = 1e-3) -> SinrProfile:
    """Step initialisation on a uniform grid: ``inf`` for t < 0, 0 for t >= 0."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt!r}")
    if not t_min < 0 < t_max:
        raise ConfigurationError(f"need t_min < 0 < t_max, got [{t_min!r}, {t_max!r}]")
    _grid_index(0.5, dt, "half packet length")
    lo = _grid_index(t_min, dt, "t_min")
    hi = _grid_index(t_max, dt, "t_max")
    k = np.arange(lo, hi + 1)
    t = k * dt
    z = np.where(k < 0, math.inf, 0.0)
    return SinrProfile(t=t, z=z, model=Model.CONTINUOUS, dt=dt)


def _padded(z: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([np.full(n, math.inf), z, np.zeros(n)])


def _known(profile: SinrProfile) -> np.ndarray:
    # packets whose SINR is pinned at +inf by the boundary condition
    if profile.model is Model.DISCRETE:
        return profile.t <= profile.w
    return profile.t < 0


# -- variance --------------------------------------------------------------

def _variance_from(z_ext: np.ndarray, params: SystemParams, model: Model, p: int,
                   dt: float) -> np.ndarray:
    """x on the interior of ``z_ext`` (``p`` boundary points trimmed per side)."""
    g = mse_g(z_ext)
    if model is Model.DISCRETE:
        width = 2 * p + 1
        acc = np.convolve(g, np.ones(width), mode="valid") / width
    else:
        cells = 0.5 * dt * (g[:-1] + g[1:])
        cells[np.isinf(z_ext[:-1])] = 0.0
        acc = np.convolve(cells, np.ones(2 * p), mode="valid")
    return params.alpha * acc + params.sigma2


def variance_update_discrete(profile: SinrProfile, params: SystemParams) -> SinrProfile:
    """x_t = alpha/(2W+1) * sum_{|j|<=W} g(z_{t+j}) + sigma2."""
    if profile.model is not Model.DISCRETE:
        raise ConfigurationError("profile is not on a discrete grid")
    return _variance_update(profile, params)


def variance_update_continuous(profile: SinrProfile, params: SystemParams) -> SinrProfile:
    """x(t) = alpha * int_{-1/2}^{1/2} g(z(t+tau)) dtau + sigma2."""
    if profile.model is not Model.CONTINUOUS:
        raise ConfigurationError("profile is not on a continuous grid")
    return _variance_update(profile, params)


def _variance_update(profile: SinrProfile, params: SystemParams) -> SinrProfile:
    p = profile.pad
    x = _variance_from(_padded(profile.z, p), params, profile.model, p, profile.dt)
    return replace(profile, x=x)


# -- SINR ------------------------------------------------------------------

def _sinr_update(profile: SinrProfile, params: SystemParams) -> SinrProfile:
    if profile.x is None:
        raise InvariantError("variance profile not computed; run a variance update first")
    if np.any(profile.x <= 0):
        raise InvariantError("nonpositive interference variance")
    p = profile.pad
    x_ext = _edge_extended(profile, params)
    r = 1.0 / x_ext
    if profile.model is Model.DISCRETE:
        width = 2 * p + 1
        z = np.convolve(r, np.ones(width), mode="valid") / width
    else:
        cells = 0.5 * profile.dt * (r[:-1] + r[1:])
        z = np.convolve(cells, np.ones(2 * p), mode="valid")
    z[_known(profile)] = math.inf
    return replace(profile, z=z, x=None, iteration=profile.iteration + 1)


def _edge_extended(profile: SinrProfile, params: SystemParams) -> np.ndarray:
    # x on the grid plus p points each side; the edge values follow from z
    # and the boundary convention
    p = profile.pad
    n = profile.z.size
    z_ext = _padded(profile.z, 2 * p)
    left = _variance_from(z_ext[:3 * p], params, profile.model, p, profile.dt)
    right = _variance_from(z_ext[n + p:], params, profile.model, p, profile.dt)
    return np.concatenate([left, profile.x, right])


def sinr_update_discrete(profile: SinrProfile, params: SystemParams) -> SinrProfile:
    """z_t = 1/(2W+1) * sum_{|j|<=W} 1/x_{t+j} for t > W; known packets keep inf."""
    if profile.model is not Model.DISCRETE:
        raise ConfigurationError("profile is not on a discrete grid")
    return _sinr_update(profile, params)


def sinr_update_continuous(profile: SinrProfile, params: SystemParams) -> SinrProfile:
    """z(t) = int_{-1/2}^{1/2} 1/x(t+tau) dtau for t >= 0."""
    if profile.model is not Model.CONTINUOUS:
        raise ConfigurationError("profile is not on a continuous grid")
    return _sinr_update(profile, params)


def sic_threshold_update(profile: SinrProfile, theta: float) -> SinrProfile:
    """Packets whose SINR strictly exceeds ``theta`` are decoded (set to inf)."""
    z = profile.z.copy()
    z[z > theta] = math.inf
    return replace(profile, z=z)


def operator_F(profile: SinrProfile, params: SystemParams, mode: Mode | str = Mode.SIC
               ) -> SinrProfile:
    """One full iteration: variance update, SINR update, optional SIC decoding."""
    mode = Mode.parse(mode)
    nxt = _sinr_update(_variance_update(profile, params), params)
    if mode is Mode.SIC:
        nxt = sic_threshold_update(nxt, params.theta)
    return nxt


# -- trajectories ----------------------------------------------------------

def measurable(profile: SinrProfile) -> np.ndarray:
    """Mask of grid points at least one packet length from the right edge."""
    edge = 1.0 if profile.model is Model.CONTINUOUS else 2 * profile.w + 1
    return profile.t <= profile.t[-1] - edge + 1e-9


def front_position(profile: SinrProfile, theta: float) -> float:
    """Right end of the contiguous prefix with ``z >= theta`` (``-inf`` if empty)."""
    mask = measurable(profile)
    ok = profile.z[mask] >= theta
    if ok.size == 0 or not ok[0]:
        return -math.inf
    bad = np.flatnonzero(~ok)
    last = ok.size - 1 if bad.size == 0 else bad[0] - 1
    return float(profile.t[mask][last])


def _changed(a: np.ndarray, b: np.ndarray) -> float:
    ia, ib = np.isinf(a), np.isinf(b)
    if np.any(ia != ib):
        return math.inf
    fin = ~ia
    return float(np.max(np.abs(a[fin] - b[fin]), initial=0.0))


def make_grid(params: SystemParams, model: Model | str, *, t_max: float | None = None,
              t_min: float = -1.0, dt: float = 1e-3) -> SinrProfile:
    model = Model.parse(model)
    if model is Model.DISCRETE:
        return init_discrete(params, 10 * (2 * params.w + 1) if t_max is None else t_max)
    return init_continuous(params, t_min, 40.0 if t_max is None else t_max, dt)


def run_de(params: SystemParams, mode: Mode | str = Mode.SIC,
           model: Model | str = Model.CONTINUOUS, *, t_max: float | None = None,
           t_min: float = -1.0, dt: float = 1e-3, max_iter: int = 100,
           keep_profiles: bool = True) -> DeTrajectory:
    """Iterate the density-evolution operator from the step initialisation.

    Each recorded profile carries ``z_i`` and the variance ``x_i`` computed
    from it. Iteration stops after ``max_iter`` SINR updates or once the
    profile changes by less than 1e-12 (sup norm over finite entries).
    """
    mode = Mode.parse(mode)
    if max_iter < 1:
        raise ConfigurationError(f"max_iter must be >= 1, got {max_iter!r}")
    cur = _variance_update(make_grid(params, model, t_max=t_max, t_min=t_min, dt=dt), params)
    step = cur.dt
    profiles = [cur]
    fronts = [front_position(cur, params.theta)]
    converged = False
    for _ in range(max_iter):
        nxt = operator_F(cur, params, mode)
        nxt = _variance_update(nxt, params)
        _check_variance(nxt, params)
        fronts.append(front_position(nxt, params.theta))
        delta = _changed(nxt.z, cur.z)
        if keep_profiles:
            profiles.append(nxt)
        else:
            profiles[-1:] = [nxt]
        cur = nxt
        if delta < CONVERGENCE_TOL:
            converged = True
            break
    front = np.array(fronts)
    with np.errstate(invalid="ignore"):
        speed = np.concatenate([[math.nan], np.diff(front)])
    speed[~np.isfinite(speed)] = math.nan
    return DeTrajectory(profiles=profiles, front=front, speed=speed, mode=mode,
                        params=params, converged=converged,
                        stalled=_stalled(speed, step))


def _stalled(speed: np.ndarray, dt: float) -> bool:
    slow = np.nan_to_num(speed[1:], nan=0.0) < dt / 10
    run = 0
    for s in slow:
        run = run + 1 if s else 0
        if run >= STALL_ITERATIONS:
            return True
    return False


def _check_variance(profile: SinrProfile, params: SystemParams) -> None:
    x = profile.x
    if np.any(x < params.sigma2) or np.any(~np.isfinite(x)):
        raise InvariantError("interference variance dropped below the noise floor")


def bulk_fixed_point(alpha: float, sigma2: float, z0: float = 0.0, tol: float = 1e-13,
                     max_iter: int = 100_000) -> float:
    """Fixed point of the uncoupled recursion z <- 1/(alpha*g(z) + sigma2) from z0."""
    z = z0
    for _ in range(max_iter):
        nz = 1.0 / (alpha * mse_g(z) + sigma2)
        if abs(nz - z) < tol:
            return nz
        z = nz
    return z


def evaluation_window(profile: SinrProfile) -> np.ndarray:
    """Middle third of the measurable undecoded-at-start region ``t >= 0``."""
    mask = measurable(profile) & ~_known(profile)
    t = profile.t[mask]
    lo, hi = t[0], t[-1]
    third = (hi - lo) / 3.0
    return mask & (profile.t >= lo + third - 1e-9) & (profile.t <= hi - third + 1e-9)


def two_stage_max_rate(params: SystemParams, model: Model | str = Model.CONTINUOUS, *,
                       t_max: float | None = None, t_min: float = -1.0, dt: float = 1e-3,
                       max_iter: int = 100) -> tuple[float, float]:
    """Largest code threshold the two-stage receiver supports, and its efficiency.

    The PIC stage does not depend on the threshold, so the largest feasible
    threshold is the minimum final SINR over the central evaluation window,
    rounded down to the search resolution. Returns ``(alpha*C(theta), theta)``.
    """
    pic = replace(params, theta=math.inf)
    traj = run_de(pic, Mode.PIC, model, t_max=t_max, t_min=t_min, dt=dt,
                  max_iter=max_iter, keep_profiles=False)
    final = traj.final
    zmin = float(np.min(final.z[evaluation_window(final)]))
    theta = math.ceil(zmin / THETA_RESOLUTION - 1) * THETA_RESOLUTION if math.isfinite(zmin) \
        else math.inf
    if not theta > 0:
        return 0.0, 0.0
    if math.isinf(theta):
        return params.alpha, math.inf
    return params.alpha * biawgn_capacity(theta), theta
