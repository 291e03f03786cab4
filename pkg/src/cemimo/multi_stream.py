"""Multi-stream CE transmission through transmit antenna grouping.

The ``M_t`` transmit antennas are split into ``K`` equal groups; group ``k``
carries stream ``k`` and receive beamformer ``u_k`` recovers it from
``y_k = u_k^H H_k x_k + u_k^H H_-k x_-k + noise``.  Two receiver designs are
provided:

* MMSE: treat the interference as Gaussian with the Cauchy-Schwarz variance
  bound and maximize ``||u^H H_k||_1 / sqrt(||u^H H_-k||^2 + st^2)`` with
  ``st = sigma sqrt(K / (P (K - 1)))``, via the same lifting and randomization
  as the single-stream design.
* ZF: restrict ``u_k`` to the null space of ``H_-k^H`` and run the
  single-stream design on the projected channel.

Antenna indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import single_stream as ss
from .ce_phase import TargetOutsideAnnulus, solve_phases
from .core import STREAM_GROUPING, CeTransmitVector, hermitian_evd, make_rng, numerical_rank, svd
from .single_stream import RandomizationConfig

MMSE = "mmse"
ZF = "zf"

ENUMERATION_BUDGET = 10_000
SAMPLE_SIZE = 1_000


@dataclass(frozen=True)
class GroupingPlan:
    """Partition of ``range(m_t)`` into ``k`` equal-size groups."""

    k: int
    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.k < 1 or len(groups) != self.k:
            raise ValueError(f"expected {self.k} groups, got {len(groups)}")
        sizes = {len(g) for g in groups}
        if len(sizes) != 1 or 0 in sizes:
            raise ValueError("groups must be non-empty and of equal size")
        flat = sorted(itertools.chain.from_iterable(groups))
        if flat != list(range(len(flat))):
            raise ValueError("groups must partition 0..m_t-1")

    @property
    def m_t(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def group_size(self) -> int:
        return len(self.groups[0])

    def others(self, k: int) -> list:
        """Antenna indices of every group except ``k``, in ascending group order."""
        return [i for j, g in enumerate(self.groups) if j != k for i in g]

    def canonical(self) -> "GroupingPlan":
        groups = sorted(tuple(sorted(g)) for g in self.groups)
        return GroupingPlan(self.k, tuple(groups))


def index_grouping(m_t: int, k: int) -> GroupingPlan:
    """Consecutive groups ``{0..m-1}, {m..2m-1}, ...`` with ``m = m_t / k``."""
    if k < 1 or m_t % k:
        raise ValueError(f"m_t={m_t} is not divisible by k={k}")
    m = m_t // k
    return GroupingPlan(k, tuple(tuple(range(j * m, (j + 1) * m)) for j in range(k)))


def partition_count(m_t: int, k: int) -> int:
    if k < 1 or m_t % k:
        raise ValueError(f"m_t={m_t} is not divisible by k={k}")
    m = m_t // k
    return math.factorial(m_t) // (math.factorial(m) ** k * math.factorial(k))


def enumerate_partitions(m_t: int, k: int):
    """All plans in lexicographic order (groups sorted, each group starting with its smallest index)."""
    if k < 1 or m_t % k:
        raise ValueError(f"m_t={m_t} is not divisible by k={k}")
    m = m_t // k

    def rec(remaining):
        if not remaining:
            yield ()
            return
        first, rest = remaining[0], remaining[1:]
        for combo in itertools.combinations(rest, m - 1):
            group = (first, *combo)
            left = tuple(i for i in rest if i not in combo)
            for tail in rec(left):
                yield (group, *tail)

    for groups in rec(tuple(range(m_t))):
        yield GroupingPlan(k, groups)


def sample_partitions(m_t: int, k: int, count: int, seed: int):
    """Index grouping plus up to ``count`` distinct random plans, in lexicographic order."""
    rng = make_rng(seed, STREAM_GROUPING, m_t, k)
    m = m_t // k
    plans = {index_grouping(m_t, k).groups}
    for _ in range(count):
        perm = rng.permutation(m_t)
        plans.add(GroupingPlan(k, tuple(perm[j * m:(j + 1) * m] for j in range(k))).canonical().groups)
    return [GroupingPlan(k, g) for g in sorted(plans)]


def split_channel(h, plan: GroupingPlan, k: int):
    """``(H_k, H_-k)``: columns of group ``k`` and of all other groups."""
    h = np.asarray(h)
    if plan.m_t != h.shape[1]:
        raise ValueError(f"plan covers {plan.m_t} antennas, channel has {h.shape[1]}")
    if not 0 <= k < plan.k:
        raise ValueError(f"stream index {k} out of range for {plan.k} streams")
    return h[:, list(plan.groups[k])], h[:, plan.others(k)]


def active_subchannel(h, active):
    """Columns of ``h`` for a user-chosen subset of active transmit antennas."""
    active = sorted(set(int(i) for i in active))
    h = np.asarray(h)
    if not active or active[0] < 0 or active[-1] >= h.shape[1]:
        raise ValueError("active antenna indices out of range")
    return h[:, active]


@dataclass(frozen=True)
class StreamSolution:
    u: np.ndarray
    alpha: float
    objective: float
    feasible: bool
    sdr_upper_bound: float = np.nan
    provenance: str = ""


@dataclass(frozen=True)
class ZfSubchannel:
    v_tilde: np.ndarray
    h_eff: np.ndarray
    w: np.ndarray = None


def mmse_noise_scale(sigma: float, power: float, k: int) -> float:
    """``sigma * sqrt(K / (P (K - 1)))``."""
    if k < 2:
        raise ValueError("the MMSE design needs k >= 2 streams")
    if sigma <= 0 or power <= 0:
        raise ValueError("sigma and power must be positive")
    return float(sigma * np.sqrt(k / (power * (k - 1))))


def sinr_ratio(u, h_k, h_minus_k, sigma_tilde: float) -> float:
    """``||u^H H_k||_1 / sqrt(||u^H H_-k||^2 + st^2)``."""
    signal = ss.l1_objective(u, h_k)
    interference = float(np.sum(np.abs(ss.effective_row(u, h_minus_k)) ** 2))
    return signal / np.sqrt(interference + sigma_tilde ** 2)


def charnes_cooper(u, h_minus_k, sigma_tilde: float):
    """Map ``u`` to ``(u / sqrt(I + st^2), 1 / (I + st^2))`` with ``I = ||u^H H_-k||^2``.

    The image satisfies ``||v^H H_-k||^2 + t st^2 = 1`` and its objective
    ``||v^H H_k||_1`` equals the ratio objective at ``u``.
    """
    interference = float(np.sum(np.abs(ss.effective_row(u, h_minus_k)) ** 2))
    denom = interference + sigma_tilde ** 2
    return np.asarray(u) / np.sqrt(denom), 1.0 / denom


def from_lifted_scale(u, h_minus_k, sigma_tilde: float):
    """``st u / sqrt(1 - ||u^H H_-k||^2)``: a point of the lifted problem mapped to the ratio problem."""
    interference = float(np.sum(np.abs(ss.effective_row(u, h_minus_k)) ** 2))
    if interference >= 1.0:
        raise ValueError("point violates the interference budget")
    return sigma_tilde * np.asarray(u) / np.sqrt(1.0 - interference)


def mmse_ser_bound(u_k, h, plan: GroupingPlan, k: int, power: float, noise_var: float, constellation) -> float:
    """Union bound with the interference replaced by its Cauchy-Schwarz variance bound."""
    h_k, h_minus = split_channel(h, plan, k)
    signal = np.sqrt(power / plan.m_t) * ss.l1_objective(u_k, h_k)
    interference = float(np.sum(np.abs(ss.effective_row(u_k, h_minus)) ** 2))
    var = power * (plan.k - 1) / plan.k * interference + noise_var
    n = constellation.size
    if var <= 0:
        return 0.0 if signal > 0 else (n - 1) / 2.0
    arg = signal * constellation.d_min / np.sqrt(2.0 * var)
    return float((n - 1) * ss.q_function(arg))


def build_p6_sdr(h_k, h_minus_k, tau: float, sigma_tilde: float):
    """Lifted MMSE program; ``W`` of order ``M_r + n_k`` with ``n_k`` the group size."""
    h_k = np.asarray(h_k, dtype=complex)
    h_minus_k = np.asarray(h_minus_k, dtype=complex)
    if sigma_tilde <= 0:
        raise ValueError("sigma_tilde must be positive")
    m_r, n_k = h_k.shape
    s2 = sigma_tilde ** 2
    quad = s2 * np.eye(m_r) + h_minus_k @ h_minus_k.conj().T
    return ss.lifted_program(h_k, tau, quad, s2, 1.0 + n_k * s2)


def whitening(h_minus_k, sigma_tilde: float, m_r: int):
    """``M`` with ``M^H (st^2 I + H_-k H_-k^H) M = I``.

    Substituting ``u = M v`` turns the interference-plus-noise budget into
    ``||v|| <= 1`` and ``u^H H_k`` into ``v^H (M^H H_k)``, so the MMSE program
    becomes the single-stream program on the whitened channel ``M^H H_k``.
    """
    h_minus_k = np.asarray(h_minus_k, dtype=complex).reshape(m_r, -1)
    lam, q = hermitian_evd(sigma_tilde ** 2 * np.eye(m_r) + h_minus_k @ h_minus_k.conj().T, tol=1e-9)
    return q / np.sqrt(lam)


def solve_mmse_receiver(h, plan: GroupingPlan, k: int, tau: float, sigma_tilde: float,
                        cfg: RandomizationConfig = RandomizationConfig(), power: float = 1.0,
                        stream=()) -> StreamSolution:
    """MMSE-based receiver for stream ``k``; the returned ``u`` has unit norm.

    The relaxation, the rank-one test and both randomizations run on the
    whitened channel (see :func:`whitening`); candidates are mapped back,
    normalized, checked against the modulus constraint on ``H_k`` and ranked
    by the ratio objective.  The closed-form feasible point on ``H_k`` is the
    fallback.
    """
    if plan.group_size < 2:
        raise ValueError("the MMSE design needs at least 2 antennas per group")
    if sigma_tilde <= 0:
        raise ValueError("sigma_tilde must be positive")
    h_k, h_minus = split_channel(np.asarray(h, dtype=complex), plan, k)
    m_r = h_k.shape[0]
    if numerical_rank(h_k) < 2:
        raise ValueError(f"stream {k}: group channel rank < 2")
    m = whitening(h_minus, sigma_tilde, m_r)
    h_w = m.conj().T @ h_k
    # the relaxation is homogeneous in the channel; solve it at unit scale
    scale = np.linalg.norm(h_w)
    w, sol = ss.solve_lifted(ss.build_p3_sdr(h_w / scale, tau), f"stream {k} MMSE relaxation")
    bound = max(sol.objective, sol.dual_objective) * scale
    stream = (*stream, k)

    def to_u(v):
        return ss.normalize(m @ v)

    def score(u):
        return sinr_ratio(u, h_k, h_minus, sigma_tilde)

    prov = None
    v = ss.conic.extract_rank1(w, ss.RANK1_RATIO)
    if v is not None:
        u = to_u(v[:m_r])
        if ss.is_feasible(u, h_k, tau):
            prov = ss.RANK1_EXACT
    if prov is None:
        def score_w(x):
            return score(to_u(x))

        def lift(x):
            return to_u(x) if np.any(x) else x

        cands = [
            (ss.P2FS, ss.feasible_solution(h_k)),
            (ss.RAND_U, lift(ss.rand_u(w, h_w, tau, cfg.l_u, cfg.seed, stream, score=score_w))),
            (ss.RAND_P, lift(ss.rand_p(w, h_w, tau, cfg.l_p, cfg.seed, stream, score=score_w))),
        ]
        prov, u, _ = ss.select_candidate(cands, score)
    u = ss.repair(u, h_k, tau)
    # the whitened image of u is feasible for the relaxation, so its ratio is a lower bound on it
    obj = score(u)
    return _stream_solution(u, h_k, plan, power, obj, ss.is_feasible(u, h_k, tau), max(bound, obj), prov)


def _stream_solution(u, h_k, plan, power, objective, feasible, bound, prov):
    alpha = float(np.sqrt(power / plan.m_t) * ss.l1_objective(u, h_k))
    return StreamSolution(u, alpha, float(objective), bool(feasible), float(bound), prov)


def zf_null_basis(h_minus_k) -> ZfSubchannel:
    """Orthonormal basis of the null space of ``H_-k^H`` (left null space of ``H_-k``)."""
    h_minus_k = np.asarray(h_minus_k, dtype=complex)
    m_r, cols = h_minus_k.shape
    if m_r <= cols:
        raise ValueError(f"zero-forcing needs m_r > {cols} interfering antennas, got m_r={m_r}")
    if cols == 0:
        return ZfSubchannel(np.eye(m_r, dtype=complex), None)
    u, _, _ = svd(h_minus_k)
    return ZfSubchannel(u[:, numerical_rank(h_minus_k):], None)


def solve_zf_receiver(h, plan: GroupingPlan, k: int, tau: float,
                      cfg: RandomizationConfig = RandomizationConfig(), power: float = 1.0,
                      stream=()) -> StreamSolution:
    """ZF-based receiver for stream ``k``: the single-stream design on the projected channel."""
    h = np.asarray(h, dtype=complex)
    h_k, h_minus = split_channel(h, plan, k)
    m_r = h.shape[0]
    if plan.group_size < 2 or m_r < h_minus.shape[1] + 2:
        raise ValueError(
            f"zero-forcing needs group size >= 2 and m_r >= {h_minus.shape[1] + 2}; "
            f"got group size {plan.group_size}, m_r={m_r}"
        )
    sub = zf_null_basis(h_minus)
    h_eff = sub.v_tilde.conj().T @ h_k
    res = ss.optimize_receiver(h_eff, tau, cfg, (*stream, k))
    u = sub.v_tilde @ res.u
    feasible = res.feasible and ss.is_feasible(u, h_k, tau)
    return _stream_solution(u, h_k, plan, power, ss.l1_objective(u, h_k), feasible,
                            res.sdr_upper_bound, res.provenance)


def zf_subchannel(h, plan: GroupingPlan, k: int, w=None) -> ZfSubchannel:
    h_k, h_minus = split_channel(np.asarray(h, dtype=complex), plan, k)
    sub = zf_null_basis(h_minus)
    return ZfSubchannel(sub.v_tilde, sub.v_tilde.conj().T @ h_k, w)


def solve_streams(h, plan: GroupingPlan, tau: float, mode: str, cfg: RandomizationConfig = RandomizationConfig(),
                  sigma_tilde: float = None, power: float = 1.0, stream=()):
    if mode == MMSE:
        if sigma_tilde is None:
            raise ValueError("the MMSE design needs sigma_tilde")
        return [solve_mmse_receiver(h, plan, k, tau, sigma_tilde, cfg, power, stream) for k in range(plan.k)]
    if mode == ZF:
        return [solve_zf_receiver(h, plan, k, tau, cfg, power, stream) for k in range(plan.k)]
    raise ValueError(f"unknown design mode {mode!r}")


def grouping_search(h, k: int, tau: float, mode: str, cfg: RandomizationConfig = RandomizationConfig(),
                    sigma_tilde: float = None, power: float = 1.0, search: str = "enumerate",
                    budget: int = ENUMERATION_BUDGET, sample_size: int = SAMPLE_SIZE, stream=()):
    """Plan maximizing the minimum per-stream objective, with its per-stream solutions.

    ``search`` is ``"enumerate"`` (all partitions, error beyond ``budget``),
    ``"sampled"`` (index grouping plus a seeded random sample) or ``"index"``.
    Ties go to the lexicographically first plan.
    """
    m_t = np.asarray(h).shape[1]
    if search == "enumerate":
        count = partition_count(m_t, k)
        if count > budget:
            raise ValueError(
                f"{count} groupings exceed the enumeration budget of {budget}; use search='sampled'"
            )
        plans = enumerate_partitions(m_t, k)
    elif search == "sampled":
        plans = sample_partitions(m_t, k, sample_size, cfg.seed)
    elif search == "index":
        plans = [index_grouping(m_t, k)]
    else:
        raise ValueError(f"unknown search {search!r}")

    best = None
    for plan in plans:
        sols = solve_streams(h, plan, tau, mode, cfg, sigma_tilde, power, stream)
        score = min(s.objective for s in sols)
        if best is None or score > best[0]:
            best = (score, plan, sols)
    return best[1], best[2]


class StreamPhaseError(ValueError):
    def __init__(self, stream: int, cause: Exception):
        self.stream = stream
        super().__init__(f"stream {stream}: {cause}")


def assemble_multistream_transmit(h, plan: GroupingPlan, solutions, symbols, power: float = 1.0,
                                  tol: float = 1e-12) -> CeTransmitVector:
    """CE transmit vector placing ``alpha_k s_k`` at each stream's noise-free, interference-free output."""
    h = np.asarray(h, dtype=complex)
    symbols = np.atleast_1d(np.asarray(symbols, dtype=complex))
    if len(solutions) != plan.k or symbols.size != plan.k:
        raise ValueError("need one solution and one symbol per stream")
    ppa = power / plan.m_t
    phases = np.zeros(plan.m_t)
    for k, (sol, s) in enumerate(zip(solutions, symbols)):
        h_k, _ = split_channel(h, plan, k)
        try:
            phases[list(plan.groups[k])] = solve_phases(ss.effective_row(sol.u, h_k), sol.alpha * s, ppa, tol)
        except TargetOutsideAnnulus as exc:
            raise StreamPhaseError(k, exc) from exc
    return CeTransmitVector(phases, float(np.sqrt(ppa)))
