"""Monte-Carlo SER/BER estimation for the CE transceiver designs.

Every random quantity of channel trial ``c`` is drawn from its own stream
keyed by ``(seed, tag, c)``: the channel, the transmitted symbol indices and
the unit-variance receiver noise.  The same draws are therefore reused across
SNR points and across schemes (common random numbers), and the noise is
scaled by ``sigma`` per SNR point.

Receivers that do not depend on the SNR (single-stream schemes and ZF) are
designed once per channel; the MMSE design is redone at each SNR point.
Transmit phases are solved once per constellation point and stream, then
looked up per symbol.  Multi-stream simulations use the actual CE
interference of the other groups.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import multi_stream as ms
from . import single_stream as ss
from .ce_phase import solve_phases
from .constellation import Constellation, make_psk, make_qam, ml_detect_many
from .core import STREAM_NOISE, STREAM_SYMBOLS, SystemConfig, cscg, make_rng, sample_rayleigh_channel

PROPOSED = "proposed_single"
AS = "as"
SEB = "seb"
AS_HYBRID = "as_hybrid"
SEB_HYBRID = "seb_hybrid"
MMSE_MULTI = "mmse_multi"
ZF_MULTI = "zf_multi"

SINGLE_SCHEMES = (PROPOSED, AS, SEB, AS_HYBRID, SEB_HYBRID)
MULTI_SCHEMES = (MMSE_MULTI, ZF_MULTI)
SCHEMES = SINGLE_SCHEMES + MULTI_SCHEMES

GROUPINGS = ("enumerate", "index", "sampled")

# target slack handed to the phase solver: designed receivers are exactly
# feasible, but baseline feasibility flags carry a relative slack of FEAS_RTOL
PHASE_TOL = 10 * ss.FEAS_RTOL
CI_LEVEL = 0.95
CSV_HEADER = ("snr_db", "ser", "ber", "symbols", "errors", "ci_low", "ci_high", "infeasible_channels")


class ConfigError(ValueError):
    """Invalid sweep configuration."""


def constellation_for(n: int) -> Constellation:
    """Square QAM when ``n`` is an even power of two (4 and up), PSK otherwise."""
    if n in (4, 16, 64, 256):
        return make_qam(n)
    return make_psk(n)


@dataclass(frozen=True)
class SweepConfig:
    scheme: str
    m_t: int
    m_r: int
    k_streams: int = 1
    rate: int = 4
    snr_grid: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    channel_trials: int = 2000
    symbols_per_channel: int = 50
    seed: int = 0
    l_u: int = 50
    l_p: int = 50
    grouping: str = "enumerate"
    power: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.m_t < 2 or self.m_r < 2:
            raise ConfigError("m_t and m_r must be >= 2")
        if not self.snr_grid:
            raise ConfigError("snr_grid is empty")
        if self.k_streams < 1 or self.rate < 1 or self.rate % self.k_streams:
            raise ConfigError(f"rate {self.rate} must be a positive multiple of k_streams {self.k_streams}")
        if self.channel_trials < 0 or self.symbols_per_channel < 1:
            raise ConfigError("channel_trials must be >= 0 and symbols_per_channel >= 1")
        if self.l_u < 1 or self.l_p < 1:
            raise ConfigError("l_u and l_p must be >= 1")
        if self.grouping not in GROUPINGS:
            raise ConfigError(f"unknown grouping {self.grouping!r}")
        if self.power <= 0 or self.beta <= 0:
            raise ConfigError("power and beta must be positive")
        k = self.k_streams
        if self.scheme in SINGLE_SCHEMES:
            if k != 1:
                raise ConfigError(f"{self.scheme} is a single-stream scheme; k_streams must be 1")
        else:
            if k < 2 or self.m_t % k or self.m_t // k < 2:
                raise ConfigError(f"{self.scheme} needs k >= 2 and m_t/k >= 2 (integer); got m_t={self.m_t}, k={k}")
            if self.scheme == ZF_MULTI and self.m_r < (k - 1) * self.m_t // k + 2:
                raise ConfigError(f"zf_multi needs m_r >= {(k - 1) * self.m_t // k + 2}, got {self.m_r}")

    @property
    def bits_per_stream(self) -> int:
        return self.rate // self.k_streams

    @property
    def constellation(self) -> Constellation:
        return constellation_for(2 ** self.bits_per_stream)

    def noise_var(self, snr_db: float) -> float:
        return self.power * self.beta / 10.0 ** (snr_db / 10.0)

    def system(self) -> SystemConfig:
        return SystemConfig(self.m_t, self.m_r, self.power, 1.0, self.beta)

    def randomization(self) -> ss.RandomizationConfig:
        return ss.RandomizationConfig(self.l_u, self.l_p, self.seed)


@dataclass(frozen=True)
class SerPoint:
    snr_db: float
    ser: float
    ber: float
    symbols: int
    errors: int
    ci_low: float
    ci_high: float
    infeasible_channels: int
    bits: int = 0
    bit_errors: int = 0
    ber_ci_low: float = np.nan
    ber_ci_high: float = np.nan
    union_bound: float = np.nan


@dataclass(frozen=True)
class SerCurve:
    points: tuple = ()
    config: SweepConfig = field(default=None, compare=False)

    @property
    def snr_db(self):
        return np.array([p.snr_db for p in self.points])

    @property
    def ser(self):
        return np.array([p.ser for p in self.points])

    @property
    def ber(self):
        return np.array([p.ber for p in self.points])


def wilson_interval(errors: int, trials: int, level: float = CI_LEVEL):
    """Wilson score interval for a binomial proportion; ``(0, 1)`` when ``trials == 0``."""
    if trials <= 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + level / 2.0)
    p = errors / trials
    z2n = z * z / trials
    center = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * np.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials)) / (1.0 + z2n)
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == trials else min(1.0, center + half)
    return lo, hi


# counter columns accumulated per SNR point
_SYM, _ERR, _BITS, _BERR, _INFEAS, _UB = range(6)


@dataclass
class _Link:
    """One designed stream: receiver, scaling and per-point transmit phases."""

    u: np.ndarray
    alpha: float
    constellation: Constellation
    phases: np.ndarray  # (N, group size)
    antennas: list
    blocked: bool = False


def _single_link(cfg: SweepConfig, h, trial: int):
    base = cfg.constellation
    if cfg.scheme == PROPOSED:
        sol = ss.optimize_receiver(h, base.tau, cfg.randomization(), (trial,))
        u, feasible, const = sol.u, sol.feasible, base
    else:
        design = ss.baseline_as if cfg.scheme in (AS, AS_HYBRID) else ss.baseline_seb
        u, feasible = design(h, base.tau)
        const = base
        if not feasible and cfg.scheme in (AS_HYBRID, SEB_HYBRID):
            const = make_psk(base.size)
            feasible = ss.dominance_ok(ss.effective_row(u, h), const.tau)
    return _make_link(u, h, list(range(cfg.m_t)), const, cfg.power / cfg.m_t, not feasible)


def _make_link(u, h_k, antennas, const, ppa, blocked):
    g = ss.effective_row(u, h_k)
    alpha = float(np.sqrt(ppa) * np.sum(np.abs(g)))
    phases = np.zeros((const.size, len(antennas)))
    if not blocked:
        for n, s in enumerate(const.points):
            phases[n] = solve_phases(g, alpha * s, ppa, PHASE_TOL)
    return _Link(u, alpha, const, phases, antennas, blocked)


def _multi_links(cfg: SweepConfig, h, trial: int, sigma: float):
    mode = ms.MMSE if cfg.scheme == MMSE_MULTI else ms.ZF
    st = ms.mmse_noise_scale(sigma, cfg.power, cfg.k_streams) if mode == ms.MMSE else None
    plan, sols = ms.grouping_search(h, cfg.k_streams, cfg.constellation.tau, mode, cfg.randomization(),
                                    sigma_tilde=st, power=cfg.power, search=cfg.grouping, stream=(trial,))
    links = []
    for k, sol in enumerate(sols):
        h_k, _ = ms.split_channel(h, plan, k)
        links.append(_make_link(sol.u, h_k, list(plan.groups[k]), cfg.constellation,
                                cfg.power / cfg.m_t, not sol.feasible))
    return links


def _transmit(cfg, links, idx):
    """CE transmit matrix ``(symbols, m_t)`` for symbol indices ``idx`` of shape ``(symbols, K)``."""
    amp = np.sqrt(cfg.power / cfg.m_t)
    theta = np.zeros((idx.shape[0], cfg.m_t))
    for k, link in enumerate(links):
        theta[:, link.antennas] = link.phases[idx[:, k]]
    return amp * np.exp(1j * theta)


def _count(cfg, links, h, idx, noise, sigma, out):
    """Accumulate symbol/bit errors of one channel at one SNR point into ``out``."""
    x = _transmit(cfg, links, idx)
    rx = x @ h.T + sigma * noise
    for k, link in enumerate(links):
        c = link.constellation
        sent = idx[:, k]
        nsym = sent.size
        out[_SYM] += nsym
        out[_BITS] += nsym * c.bits_per_symbol
        if link.blocked:
            out[_ERR] += nsym
            out[_BERR] += nsym * c.bits_per_symbol
            continue
        y = rx @ link.u.conj()
        det = ml_detect_many(y, link.alpha, c)
        out[_ERR] += int(np.count_nonzero(det != sent))
        out[_BERR] += int(np.count_nonzero(c.labels[det] != c.labels[sent]))


def _union_bound(link, sigma):
    if link.blocked:
        return 1.0
    c = link.constellation
    return ss.ser_union_bound(link.alpha * c.d_min, sigma * np.linalg.norm(link.u), c.size)


def simulate_channel(cfg: SweepConfig, trial: int) -> np.ndarray:
    """Counters ``(len(snr_grid), 6)`` for channel trial ``trial``."""
    h = sample_rayleigh_channel(cfg.system(), cfg.seed, (trial,))
    k = cfg.k_streams
    nsym = cfg.symbols_per_channel
    n = cfg.constellation.size
    idx = make_rng(cfg.seed, STREAM_SYMBOLS, trial).integers(0, n, size=(nsym, k))
    noise = cscg(make_rng(cfg.seed, STREAM_NOISE, trial), (nsym, cfg.m_r))
    out = np.zeros((len(cfg.snr_grid), 6))
    links = None
    if cfg.scheme in SINGLE_SCHEMES or cfg.scheme == ZF_MULTI:
        links = [_single_link(cfg, h, trial)] if cfg.scheme in SINGLE_SCHEMES else _multi_links(cfg, h, trial, None)
    for i, snr in enumerate(cfg.snr_grid):
        sigma = np.sqrt(cfg.noise_var(snr))
        cur = links if links is not None else _multi_links(cfg, h, trial, sigma)
        _count(cfg, cur, h, idx, noise, sigma, out[i])
        out[i, _INFEAS] += any(l.blocked for l in cur)
        if cfg.scheme in SINGLE_SCHEMES:
            out[i, _UB] += _union_bound(cur[0], sigma)
    return out


def _chunk(args):
    cfg, trials = args
    return [simulate_channel(cfg, t) for t in trials]


def run_sweep(cfg: SweepConfig, workers: int = 1) -> SerCurve:
    """SER/BER curve pooled over ``cfg.channel_trials`` channels; deterministic given ``cfg.seed``."""
    cfg.validate()
    trials = list(range(cfg.channel_trials))
    if workers > 1 and len(trials) > 1:
        chunks = [(cfg, trials[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_chunk, chunks))
        per_trial = [None] * len(trials)
        for i, part in enumerate(parts):
            per_trial[i::workers] = part
    else:
        per_trial = _chunk((cfg, trials))
    # summed in trial order so the float union bound does not depend on workers
    totals = np.zeros((len(cfg.snr_grid), 6))
    for row in per_trial:
        totals += row
    points = []
    for snr, row in zip(cfg.snr_grid, totals):
        sym, err, bits, berr = (int(round(v)) for v in row[:4])
        lo, hi = wilson_interval(err, sym)
        blo, bhi = wilson_interval(berr, bits)
        ub = row[_UB] / cfg.channel_trials if cfg.scheme in SINGLE_SCHEMES and cfg.channel_trials else np.nan
        points.append(SerPoint(
            snr_db=snr,
            ser=err / sym if sym else 0.0,
            ber=berr / bits if bits else 0.0,
            symbols=sym,
            errors=err,
            ci_low=lo,
            ci_high=hi,
            infeasible_channels=int(round(row[_INFEAS])),
            bits=bits,
            bit_errors=berr,
            ber_ci_low=blo,
            ber_ci_high=bhi,
            union_bound=float(ub),
        ))
    return SerCurve(tuple(points), cfg)


@dataclass(frozen=True)
class ComparisonRow:
    snr_db: float
    ser: tuple
    ber: tuple
    ser_ordered: tuple  # ser[i] <= ser[i + 1]
    ser_ci_overlap: tuple
    ber_ordered: tuple
    ber_ci_overlap: tuple


@dataclass(frozen=True)
class Comparison:
    names: tuple
    curves: tuple
    rows: tuple

    def to_text(self) -> str:
        head = ["snr_db"] + [f"ser[{n}]" for n in self.names] + [f"ber[{n}]" for n in self.names]
        head += [f"ser_le[{a}<={b}]" for a, b in zip(self.names, self.names[1:])]
        head += [f"ci_overlap[{a},{b}]" for a, b in zip(self.names, self.names[1:])]
        lines = ["\t".join(head)]
        for r in self.rows:
            cells = [f"{r.snr_db:g}"] + [f"{v:.4e}" for v in r.ser + r.ber]
            cells += ["yes" if f else "no" for f in r.ser_ordered + r.ser_ci_overlap]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def _overlap(a_lo, a_hi, b_lo, b_hi) -> bool:
    return a_lo <= b_hi and b_lo <= a_hi


def compare_schemes(cfgs, names=None, workers: int = 1) -> Comparison:
    """Run sweeps sharing SNR grid and seed and tabulate adjacent-pair orderings."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("nothing to compare")
    grid, seed = cfgs[0].snr_grid, cfgs[0].seed
    for c in cfgs[1:]:
        if c.snr_grid != grid:
            raise ConfigError("compared sweeps must share the SNR grid")
        if c.seed != seed:
            raise ConfigError("compared sweeps must share the seed (common random numbers)")
    names = tuple(names or (c.scheme for c in cfgs))
    curves = tuple(run_sweep(c, workers) for c in cfgs)
    rows = []
    for i, snr in enumerate(grid):
        pts = [c.points[i] for c in curves]
        pairs = list(zip(pts, pts[1:]))
        rows.append(ComparisonRow(
            snr_db=snr,
            ser=tuple(p.ser for p in pts),
            ber=tuple(p.ber for p in pts),
            ser_ordered=tuple(a.ser <= b.ser for a, b in pairs),
            ser_ci_overlap=tuple(_overlap(a.ci_low, a.ci_high, b.ci_low, b.ci_high) for a, b in pairs),
            ber_ordered=tuple(a.ber <= b.ber for a, b in pairs),
            ber_ci_overlap=tuple(_overlap(a.ber_ci_low, a.ber_ci_high, b.ber_ci_low, b.ber_ci_high) for a, b in pairs),
        ))
    return Comparison(names, curves, tuple(rows))


def _fmt(v) -> str:
    return f"{v:.10g}"


def write_csv(curve: SerCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in curve.points:
            w.writerow([_fmt(p.snr_db), _fmt(p.ser), _fmt(p.ber), p.symbols, p.errors,
                        _fmt(p.ci_low), _fmt(p.ci_high), p.infeasible_channels])


def read_csv(path) -> SerCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header")
    points = []
    for r in rows[1:]:
        points.append(SerPoint(
            snr_db=float(r[0]), ser=float(r[1]), ber=float(r[2]), symbols=int(r[3]), errors=int(r[4]),
            ci_low=float(r[5]), ci_high=float(r[6]), infeasible_channels=int(r[7]),
        ))
    return SerCurve(tuple(points))
