"""Finite-size Monte Carlo model of the coupled transmitter and PIC/SIC receiver.

Time is divided into slots; a packet occupies ``2W+1`` consecutive slots
(one per section) and each slot holds ``L/(2W+1)`` symbol intervals. Every
symbol interval is an ``N``-dimensional real channel use. Stream ``k`` belongs
to user ``k mod (2W+1)``, and user ``u`` starts a new packet at every slot
congruent to ``u+1`` modulo ``2W+1``, so one group of ``K/(2W+1)`` packets
starts in every slot.

The slot range mirrors the discrete density-evolution grid ``t = 1..T``:

* packets centred at ``t <= W`` (starting before slot 1) are absent;
* packets centred at ``W < t <= T`` are detected;
* packets centred beyond ``T`` form the frozen tail: they transmit but are
  never estimated, matching the ``z = 0`` right boundary. The simulation
  runs for ``T + W`` slots so every detected packet is fully observed.

All random draws come from one ``numpy.random.Generator`` seeded by the
config, in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from sgmod.density import Mode, Model, SystemParams, run_de
from sgmod.errors import ConfigurationError


@dataclass(frozen=True)
class LinkSimConfig:
    n_dims: int
    m_substreams: int
    k_streams: int
    w: int
    l_bits: int
    sigma2: float
    power: float = 1.0
    seed: int = 0
    iterations: int = 5
    slots: int = 20
    frozen_tail: bool = True

    def __post_init__(self):
        for name in ("n_dims", "m_substreams", "k_streams", "w", "l_bits", "iterations",
                     "slots"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.l_bits % self.sections:
            raise ConfigurationError(
                f"l_bits={self.l_bits} must be divisible by 2W+1={self.sections}")
        if self.k_streams % self.sections:
            raise ConfigurationError(
                f"k_streams={self.k_streams} must be divisible by 2W+1={self.sections}")
        if self.slots <= self.w:
            raise ConfigurationError(f"slots={self.slots} must exceed w={self.w}")
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not self.power > 0:
            raise ConfigurationError(f"power must be positive, got {self.power!r}")

    @property
    def sections(self) -> int:
        return 2 * self.w + 1

    @property
    def load(self) -> float:
        return self.k_streams / self.n_dims

    @property
    def section_len(self) -> int:
        return self.l_bits // self.sections

    @property
    def total_slots(self) -> int:
        return self.slots + self.w

    @property
    def n_symbols(self) -> int:
        return self.total_slots * self.section_len


@dataclass
class LinkSimState:
    """Mutable world of one Monte Carlo trial.

    Chip-level arrays are indexed ``[stream, substream, symbol]``; packet
    arrays by packet index. ``est`` holds the soft estimates currently used
    for cancellation, ``cand_*`` the combiner outputs computed from the
    current residual (the next iteration's estimates and SINRs).
    """

    config: LinkSimConfig
    signatures: np.ndarray        # (K, M, N), entries +-1/sqrt(N)
    pk_stream: np.ndarray         # (P,)
    pk_start: np.ndarray          # (P,) first slot, 1-based
    pk_frozen: np.ndarray         # (P,) bool
    bits: np.ndarray              # (P, L) in {-1, +1}
    positions: np.ndarray         # (K, M, L) packet position of replica m of bit l
    chips: np.ndarray             # (K, M, n_symbols) in {-1, 0, +1}
    noise: np.ndarray             # (n_symbols, N)
    received: np.ndarray          # (n_symbols, N)
    est: np.ndarray               # (K, M, n_symbols) in [-1, 1]
    residual: np.ndarray | None = None
    x_hat: np.ndarray | None = None
    cand_est: np.ndarray | None = None   # (P_det, M, L)
    cand_y: np.ndarray | None = None     # (P_det, L)
    cand_sinr: np.ndarray | None = None  # (P_det,)
    decoded: np.ndarray | None = None    # (P,) bool
    iteration: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def detected(self) -> np.ndarray:
        """Indices of packets the receiver estimates."""
        return np.flatnonzero(~self.pk_frozen)

    def replica_symbols(self, packets: np.ndarray | None = None) -> np.ndarray:
        """Global symbol index of every replica, shape (P, M, L)."""
        if packets is None:
            packets = np.arange(self.pk_stream.size)
        start = (self.pk_start[packets] - 1) * self.config.section_len
        return start[:, None, None] + self.positions[self.pk_stream[packets]]


def _interleavers(rng: np.random.Generator, cfg: LinkSimConfig) -> np.ndarray:
    # Bits of a stream are split into 2W+1 equal groups; replica m of a bit
    # in group g lands in section (g + m) mod (2W+1), at a random offset.
    k, m, ln, sec, ls = cfg.k_streams, cfg.m_substreams, cfg.l_bits, cfg.sections, cfg.section_len
    pos = np.empty((k, m, ln), dtype=np.int64)
    for kk in range(k):
        group = rng.permutation(ln) // ls
        for mm in range(m):
            section = (group + mm) % sec
            offset = np.empty(ln, dtype=np.int64)
            for s in range(sec):
                members = np.flatnonzero(section == s)
                offset[members] = rng.permutation(ls)
            pos[kk, mm] = section * ls + offset
    return pos


def generate_world(config: LinkSimConfig) -> LinkSimState:
    """Draw bits, signatures, interleavers and noise; nothing is cancelled yet."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    k, m, n = cfg.k_streams, cfg.m_substreams, cfg.n_dims
    signatures = (2.0 * rng.integers(0, 2, size=(k, m, n)) - 1.0) / math.sqrt(n)
    positions = _interleavers(rng, cfg)

    streams, starts = [], []
    for kk in range(k):
        first = kk % cfg.sections + 1
        for s in range(first, cfg.total_slots + 1, cfg.sections):
            if s + cfg.w > cfg.slots and not cfg.frozen_tail:
                continue
            streams.append(kk)
            starts.append(s)
    pk_stream = np.array(streams, dtype=np.int64)
    pk_start = np.array(starts, dtype=np.int64)
    pk_frozen = pk_start + cfg.w > cfg.slots
    bits = 2.0 * rng.integers(0, 2, size=(pk_stream.size, cfg.l_bits)) - 1.0

    n_sym = cfg.n_symbols
    chips = np.zeros((k, m, n_sym))
    sym = (pk_start - 1)[:, None, None] * cfg.section_len + positions[pk_stream]
    inside = sym < n_sym
    pidx, midx, lidx = np.nonzero(inside)
    chips[pk_stream[pidx], midx, sym[pidx, midx, lidx]] = bits[pidx, lidx]

    noise = rng.normal(0.0, math.sqrt(cfg.sigma2), size=(n_sym, n))
    amp = math.sqrt(cfg.power / m)
    received = amp * (chips.reshape(k * m, n_sym).T @ signatures.reshape(k * m, n)) + noise

    state = LinkSimState(config=cfg, signatures=signatures, pk_stream=pk_stream,
                         pk_start=pk_start, pk_frozen=pk_frozen, bits=bits,
                         positions=positions, chips=chips, noise=noise, received=received,
                         est=np.zeros_like(chips), decoded=np.zeros(pk_stream.size, bool))
    _cancel(state)
    _measure(state)
    _record(state)
    return state


def modulate_slot(state: LinkSimState, slot: int, noise: bool = True) -> np.ndarray:
    """Channel output of one slot, shape (L/(2W+1), N).

    Sum over every active replica of sqrt(P/M) * bit * signature, plus the
    slot's AWGN when ``noise`` is set.
    """
    cfg = state.config
    if not 1 <= slot <= cfg.total_slots:
        raise ConfigurationError(f"slot {slot} outside 1..{cfg.total_slots}")
    lo, hi = (slot - 1) * cfg.section_len, slot * cfg.section_len
    k, m = cfg.k_streams, cfg.m_substreams
    sig = state.signatures.reshape(k * m, cfg.n_dims)
    out = math.sqrt(cfg.power / m) * (state.chips.reshape(k * m, -1)[:, lo:hi].T @ sig)
    if noise:
        out = out + state.noise[lo:hi]
    return out


def _cancel(state: LinkSimState) -> None:
    # residual = received - reconstruction, formed from the chip error so
    # that perfectly known replicas leave exactly zero behind
    cfg = state.config
    k, m = cfg.k_streams, cfg.m_substreams
    err = (state.chips - state.est).reshape(k * m, -1)
    state.residual = math.sqrt(cfg.power / m) * (err.T @ state.signatures.reshape(k * m, -1)) \
        + state.noise
    energy = np.einsum("ij,ij->i", state.residual, state.residual) / cfg.n_dims
    state.x_hat = energy.reshape(cfg.total_slots, cfg.section_len).mean(axis=1) / cfg.power


def matched_filter(state: LinkSimState) -> np.ndarray:
    """Filter outputs q for every chip position, shape (K, M, n_symbols).

    The replica's own current estimate is added back, so an active replica
    reads ``bit/sqrt(M)`` plus interference and noise.
    """
    cfg = state.config
    k, m = cfg.k_streams, cfg.m_substreams
    q = (state.signatures.reshape(k * m, -1) @ state.residual.T) / math.sqrt(cfg.power)
    return q.reshape(k, m, -1) + state.est / math.sqrt(m)


def combine_and_estimate(state: LinkSimState, q: np.ndarray | None = None,
                         packets: np.ndarray | None = None):
    """Weighted replica combining and tanh estimation.

    Returns ``(extrinsic, y, z_pred)``: per-replica estimates using the other
    M-1 replicas, shape (P, M, L); the all-replica combiner output with
    weights 1/x normalised to one, shape (P, L); and the predicted SINR
    (1/M) * sum 1/x of that output, shape (P, L).
    """
    cfg = state.config
    if q is None:
        q = matched_filter(state)
    if packets is None:
        packets = state.detected
    sym = state.replica_symbols(packets)
    qr = q[state.pk_stream[packets][:, None, None], np.arange(cfg.m_substreams)[None, :, None],
           sym]
    inv_x = 1.0 / state.x_hat[sym // cfg.section_len]
    terms = qr * inv_x
    total = terms.sum(axis=1, keepdims=True)
    root_m = math.sqrt(cfg.m_substreams)
    # tanh of (1/sqrt(M)) * sum_{m' != m} q/x is the conditional mean of the bit
    extrinsic = np.tanh((total - terms) / root_m)
    y = total[:, 0, :] / inv_x.sum(axis=1)
    z_pred = inv_x.sum(axis=1) / cfg.m_substreams
    return extrinsic, y, z_pred


def measured_sinr(y: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Per-packet SINR (mean^2 / variance) of the sign-corrected combiner output."""
    uy = y * bits
    var = uy.var(axis=1, ddof=1)
    mean = uy.mean(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(var > 0, mean * mean / var, math.inf)


def _measure(state: LinkSimState) -> None:
    det = state.detected
    ext, y, _ = combine_and_estimate(state, packets=det)
    state.cand_est, state.cand_y = ext, y
    state.cand_sinr = measured_sinr(y, state.bits[det])


def _scatter(state: LinkSimState, packets: np.ndarray, values: np.ndarray) -> None:
    # values: (len(packets), M, L) estimates placed at their chip positions
    sym = state.replica_symbols(packets)
    kk = state.pk_stream[packets][:, None, None]
    mm = np.arange(state.config.m_substreams)[None, :, None]
    state.est[kk, mm, sym] = values


def _record(state: LinkSimState) -> None:
    det = state.detected
    sym = state.replica_symbols(det)
    kk = state.pk_stream[det][:, None, None]
    mm = np.arange(state.config.m_substreams)[None, :, None]
    err = np.abs(state.est[kk, mm, sym] - state.bits[det][:, None, :]).mean()
    state.history.append({
        "iteration": state.iteration,
        "x_hat": state.x_hat.copy(),
        "sinr": state.cand_sinr.copy(),
        "decoded": np.flatnonzero(state.decoded).copy(),
        "mean_abs_error": float(err),
    })


def pic_iteration(state: LinkSimState) -> LinkSimState:
    """Apply the pending estimates, cancel, and refresh the combiner outputs.

    Decoded packets keep their true bits; the frozen tail stays at zero.
    The state is updated in place and returned.
    """
    det = state.detected
    live = ~state.decoded[det]
    _scatter(state, det[live], state.cand_est[live])
    _cancel(state)
    _measure(state)
    state.iteration += 1
    _record(state)
    return state


def sic_decode_step(state: LinkSimState, theta: float) -> LinkSimState:
    """Decode every detected packet whose measured SINR exceeds ``theta``.

    Decoding is genie-aided: a packet above threshold is taken to be
    recovered by a code operating at that threshold, so its true bits are
    subtracted. Estimates of the remaining packets are left pending.
    """
    det = state.detected
    newly = det[(state.cand_sinr > theta) & ~state.decoded[det]]
    if newly.size:
        state.decoded[newly] = True
        m = state.config.m_substreams
        _scatter(state, newly, np.repeat(state.bits[newly][:, None, :], m, axis=1))
        _cancel(state)
        state.history[-1]["decoded_after"] = np.flatnonzero(state.decoded).copy()
    return state


@dataclass
class LinkSimResult:
    config: LinkSimConfig
    mode: Mode
    theta: float
    x_hat: np.ndarray              # (iterations + 1, total_slots)
    sinr: list[np.ndarray]         # per iteration, per detected packet
    decoded: list[np.ndarray]      # per iteration, decoded packet indices
    mean_abs_error: np.ndarray
    pk_stream: np.ndarray
    pk_start: np.ndarray

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "mode": self.mode.value,
            "theta": self.theta,
            "load": self.config.load,
            "x_hat": self.x_hat.tolist(),
            "sinr": [s.tolist() for s in self.sinr],
            "decoded": [d.tolist() for d in self.decoded],
            "mean_abs_error": self.mean_abs_error.tolist(),
            "packets": {"stream": self.pk_stream.tolist(), "start": self.pk_start.tolist()},
        }


def run_linksim(config: LinkSimConfig, mode: Mode | str = Mode.PIC,
                theta: float = math.inf) -> LinkSimResult:
    """Run ``config.iterations`` receiver iterations on a fresh world."""
    mode = Mode.parse(mode)
    state = generate_world(config)
    for _ in range(config.iterations):
        if mode is Mode.SIC:
            sic_decode_step(state, theta)
        pic_iteration(state)
    h = state.history
    return LinkSimResult(
        config=config, mode=mode, theta=theta,
        x_hat=np.array([r["x_hat"] for r in h]),
        sinr=[r["sinr"] for r in h],
        decoded=[r["decoded"] for r in h],
        mean_abs_error=np.array([r["mean_abs_error"] for r in h]),
        pk_stream=state.pk_stream, pk_start=state.pk_start,
    )


def de_reference(config: LinkSimConfig, mode: Mode | str = Mode.PIC,
                 theta: float = math.inf) -> np.ndarray:
    """Discrete density-evolution variances x_i^t matching a link-sim config.

    Shape (iterations + 1, slots); row i is iteration i.
    """
    params = SystemParams(config.load, config.sigma2 / config.power, w=config.w, theta=theta)
    traj = run_de(params, mode, Model.DISCRETE, t_max=config.slots,
                  max_iter=config.iterations)
    rows = [p.x for p in traj.profiles]
    while len(rows) < config.iterations + 1:
        rows.append(rows[-1])
    return np.array(rows)


def compare_with_de(configs: list[LinkSimConfig]) -> dict:
    """Average per-slot x_hat over trials and compare with density evolution.

    All configs must differ only in their seed.
    """
    base = configs[0]
    sims = np.array([run_linksim(c).x_hat[:, :base.slots] for c in configs])
    mean = sims.mean(axis=0)
    ref = de_reference(base)
    rel = np.abs(mean - ref) / ref
    if len(configs) > 1:
        stderr = sims.std(axis=0, ddof=1) / math.sqrt(len(configs))
    else:
        stderr = np.full(mean.shape, math.nan)
    return {"sim": mean, "de": ref, "rel_err": rel, "stderr": stderr}
