"""Receive beamforming for single-stream CE transmission.

The design problem is: maximize ``||u^H H||_1`` over ``||u||_2 <= 1`` subject to
``||u^H H||_inf <= (tau + 1)/2 * ||u^H H||_1`` and ``||u^H H||_1 > 0``, i.e.
maximize the minimum distance of the scaled constellation at the combiner
output while keeping the constellation inside the CE-reachable annulus.

It is lifted to an SDP over ``W ~ [u; p][u; p]^H`` with an auxiliary
unit-modulus vector ``p`` and rounded back with two Gaussian randomization
schemes (one on the ``u`` block, one on the ``p`` block) plus a closed-form
point that is always feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import conic
from .core import STREAM_RAND_P, STREAM_RAND_U, cscg, hermitian_evd, make_rng, numerical_rank

RANK1_RATIO = 1e-6
# strict positivity is implemented as ||u^H H||_1 >= POSITIVITY * ||H||_F
POSITIVITY = 1e-9
# relative slack on the dominance constraint; matches the accepted solver accuracy
FEAS_RTOL = 1e-6
INNER_TOL = 1e-8
SDR_TOL = 1e-8
# accuracy accepted when the solver stops short of the requested tolerance
ACCEPT_TOL = 1e-5
TIE_TOL = 1e-10
# tolerance met by every returned receiver; FEAS_RTOL screens raw solver output
EXACT_RTOL = 1e-12
REPAIR_MARGIN = 1e-13
REPAIR_ITERS = 5

RANK1_EXACT = "rank1_exact"
RAND_U = "rand_u"
RAND_P = "rand_p"
P2FS = "p2fs"


class SolverFailure(RuntimeError):
    """The conic solver did not return an optimal point for a relaxation."""

    def __init__(self, what, solution):
        self.solution = solution
        super().__init__(
            f"{what}: status={solution.status} gap={solution.gap:.2e} "
            f"primal_res={solution.primal_residual:.2e} iterations={solution.iterations}"
        )


@dataclass(frozen=True)
class RandomizationConfig:
    l_u: int = 50
    l_p: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.l_u < 1 or self.l_p < 1:
            raise ValueError("l_u and l_p must be >= 1")


@dataclass(frozen=True)
class ReceiverSolution:
    u: np.ndarray
    objective: float
    sdr_upper_bound: float
    provenance: str
    feasible: bool


def effective_row(u, h):
    """``u^H H`` as a 1-D array."""
    return np.asarray(u).conj() @ np.asarray(h)


def l1_objective(u, h) -> float:
    return float(np.sum(np.abs(effective_row(u, h))))


def dominance_ok(row, tau: float, rtol: float = FEAS_RTOL) -> bool:
    a = np.abs(row)
    return bool(np.max(a) <= 0.5 * (tau + 1.0) * np.sum(a) * (1.0 + rtol))


def is_feasible(u, h, tau: float, rtol: float = FEAS_RTOL) -> bool:
    """Dominance and positivity at ``u`` (the norm constraint is the caller's job)."""
    u = np.asarray(u)
    if not np.any(u):
        return False
    row = effective_row(u, h)
    if np.sum(np.abs(row)) < POSITIVITY * np.linalg.norm(h):
        return False
    return dominance_ok(row, tau, rtol)


def normalize(u):
    nrm = np.linalg.norm(u)
    return u / nrm if nrm > 0 else np.zeros_like(u)


def p_star(u, h) -> np.ndarray:
    """Unit-modulus ``p`` with ``Re{u^H H p} = ||u^H H||_1``."""
    row = effective_row(u, h)
    p = np.exp(-1j * np.angle(row))
    p[row == 0] = 1.0
    return p


def build_p3_sdr(h, tau: float) -> conic.ConeProgram:
    """SDP relaxation over ``W`` of order ``M_r + M_t``.

    Layout: ``W[:M_r, :M_r]`` is the ``u`` block, ``W[M_r:, M_r:]`` the ``p`` block.
    """
    h = np.asarray(h, dtype=complex)
    m_r, m_t = h.shape
    return lifted_program(h, tau, np.eye(m_r), 1.0, 1.0 + m_t)


def lifted_program(h_k, tau, quad, p_weight, budget):
    """Lifted program over ``W`` of order ``M_r + n_p`` (``n_p`` = columns of ``h_k``).

    Maximizes ``Re sum_il h_k[i, l] W[M_r + l, i]`` subject to
    ``tr(W blkdiag(quad, p_weight I)) <= budget``, one modulus cone per column,
    unit diagonal on the ``p`` block and ``W >= 0``.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    h_k = np.asarray(h_k, dtype=complex)
    m_r, n_p = h_k.shape
    order = m_r + n_p
    var = conic.HermitianVariable(order)
    prog = conic.ConeProgram(var.size)
    prog.layout = {"W": var, "m_r": m_r, "n_p": n_p}

    c_obj = np.zeros((order, order), dtype=complex)
    c_obj[:m_r, m_r:] = h_k
    z_obj = var.trace_coeffs(c_obj, prog.n)
    prog.objective = z_obj.real.copy()

    q = np.zeros((order, order), dtype=complex)
    q[:m_r, :m_r] = quad
    q[m_r:, m_r:] = p_weight * np.eye(n_p)
    # normalized to a unit right-hand side for conditioning
    prog.add_nonneg(-var.trace_coeffs(q / budget, prog.n).real[None, :], [1.0])

    half = 0.5 * (tau + 1.0)
    for i in range(n_p):
        ci = np.zeros((order, order), dtype=complex)
        ci[:m_r, m_r + i] = h_k[:, i]
        zi = var.trace_coeffs(ci, prog.n)
        prog.add_soc(np.vstack([half * z_obj.real, zi.real, zi.imag]), np.zeros(3))
    for i in range(n_p):
        row = np.zeros(prog.n)
        row[var.diag_index(m_r + i)] = 1.0
        prog.add_equality(row, 1.0)
    f, g = var.psd_map(prog.n)
    prog.add_psd(f, g, 2 * order)
    return prog


def _usable(sol) -> bool:
    if sol.status == conic.OPTIMAL:
        return True
    return (sol.status == conic.INACCURATE and sol.gap <= ACCEPT_TOL
            and sol.primal_residual <= ACCEPT_TOL)


def solve_lifted(prog: conic.ConeProgram, what="relaxation"):
    sol = conic.solve(prog, tol=SDR_TOL)
    if not _usable(sol):
        raise SolverFailure(what, sol)
    return prog.layout["W"].unpack(sol.x), sol


def _gaussian_draws(block, count, rng):
    """``count`` rows drawn from CN(0, block) via a clamped EVD square root."""
    lam, vec = hermitian_evd((block + block.conj().T) / 2, tol=np.inf)
    root = vec * np.sqrt(np.clip(lam, 0.0, None))
    return cscg(rng, (count, block.shape[0])) @ root.T


def _argmax(cands, score):
    best, best_val = None, -np.inf
    for c in cands:
        if c is None:
            continue
        v = score(c)
        if v > best_val:
            best, best_val = c, v
    return best


def rand_u(w_star, h, tau, l_u, seed, stream=(), score=None, feasible=None):
    """Gaussian randomization on the ``u`` block; zero vector when nothing is feasible."""
    h = np.asarray(h)
    m_r = h.shape[0]
    feasible = feasible or (lambda u: is_feasible(u, h, tau))
    score = score or (lambda u: l1_objective(u, h))
    wu = np.asarray(w_star)[:m_r, :m_r]
    v = conic.extract_rank1(wu, RANK1_RATIO)
    if v is not None:
        u = normalize(v)
        return u if feasible(u) else np.zeros(m_r, dtype=complex)
    rng = make_rng(seed, STREAM_RAND_U, *stream)
    draws = _gaussian_draws(wu, l_u, rng)
    cands = []
    for d in draws:
        u = normalize(d)
        cands.append(u if feasible(u) else None)
    best = _argmax(cands, score)
    return best if best is not None else np.zeros(m_r, dtype=complex)


def inner_program(a_vec, h, tau, norm_map):
    """max Re{u^H a} s.t. ||norm_map^H u|| <= 1, |u^H h_i| <= (tau+1)/2 Re{u^H a}.

    Real variables are ``[Re u, Im u]``.
    """
    m_r = h.shape[0]
    prog = conic.ConeProgram(2 * m_r)
    ar = np.concatenate([a_vec.real, a_vec.imag])
    prog.objective = ar
    # ||B^H u||: B^H u = (Br - j Bi)^T (ur + j ui)
    b = np.asarray(norm_map)
    br, bi = b.real.T, b.imag.T
    rows_re = np.hstack([br, bi])
    rows_im = np.hstack([-bi, br])
    f = np.vstack([np.zeros(2 * m_r), rows_re, rows_im])
    g = np.zeros(f.shape[0])
    g[0] = 1.0
    prog.add_soc(f, g)
    half = 0.5 * (tau + 1.0)
    for i in range(h.shape[1]):
        hi = h[:, i]
        prog.add_soc(
            np.vstack([half * ar, np.concatenate([hi.real, hi.imag]), np.concatenate([hi.imag, -hi.real])]),
            np.zeros(3),
        )
    return prog


def solve_inner(a_vec, h, tau, norm_map):
    prog = inner_program(a_vec, h, tau, norm_map)
    sol = conic.solve(prog, tol=INNER_TOL)
    if not _usable(sol):
        return None
    m_r = h.shape[0]
    u = sol.x[:m_r] + 1j * sol.x[m_r:]
    # the feasible set is a cone cut by the norm ball, so a nonzero optimum sits
    # on the sphere; an iterate deep inside means only u = 0 is feasible
    if sol.objective < POSITIVITY * np.linalg.norm(h) or np.linalg.norm(np.asarray(norm_map).conj().T @ u) < 0.5:
        return None
    return u


def solve_p3_given_p(h, tau, p):
    """Optimal ``u`` of the convex problem obtained by fixing ``p``; ``None`` if only ``u = 0`` is feasible."""
    h = np.asarray(h, dtype=complex)
    p = np.asarray(p, dtype=complex)
    if not np.allclose(np.abs(p), 1.0, atol=1e-9):
        raise ValueError("p must be unit-modulus")
    return solve_inner(h @ p, h, tau, np.eye(h.shape[0]))


def rand_p(w_star, h, tau, l_p, seed, stream=(), inner=None, score=None, feasible=None):
    """Gaussian randomization on the ``p`` block followed by the inner convex solve."""
    h = np.asarray(h, dtype=complex)
    m_r, m_t = h.shape
    inner = inner or (lambda p: solve_p3_given_p(h, tau, p))
    feasible = feasible or (lambda u: is_feasible(u, h, tau))
    score = score or (lambda u: l1_objective(u, h))
    wp = np.asarray(w_star)[m_r:, m_r:]

    def candidate(p):
        u = inner(p)
        if u is None:
            return None
        u = normalize(u)
        return u if feasible(u) else None

    v = conic.extract_rank1(wp, RANK1_RATIO)
    if v is not None:
        u = candidate(np.exp(1j * np.angle(v)))
        return u if u is not None else np.zeros(m_r, dtype=complex)
    rng = make_rng(seed, STREAM_RAND_P, *stream)
    draws = _gaussian_draws(wp, l_p, rng)
    best = _argmax((candidate(np.exp(1j * np.angle(xi))) for xi in draws), score)
    return best if best is not None else np.zeros(m_r, dtype=complex)


def feasible_solution(h) -> np.ndarray:
    """Always-feasible receiver: best ``j`` of ``max Re{u^H s}`` with ``u`` orthogonal to ``2 h_j - s``.

    ``s`` is the sum of the channel columns; for each ``j`` the maximizer is the
    normalized projection of ``s`` onto the orthogonal complement of
    ``c_j = 2 h_j - s``.
    """
    h = np.asarray(h, dtype=complex)
    if numerical_rank(h) < 2:
        raise ValueError("channel rank < 2: no feasible receiver is guaranteed")
    s = h.sum(axis=1)
    best, best_val = None, 0.0
    for j in range(h.shape[1]):
        proj = _project_out(s, 2 * h[:, j] - s)
        val = np.linalg.norm(proj)
        if val > best_val * (1 + 1e-12) and val > 0:
            best, best_val = proj / val, val
    if best is None or best_val < POSITIVITY * np.linalg.norm(h):
        # degenerate sum of columns: any u orthogonal to c_j with u^H H != 0 works
        c = 2 * h[:, 0] - s
        cols = [_project_out(h[:, i], c) for i in range(h.shape[1])]
        best = normalize(max(cols, key=np.linalg.norm))
    return best


def repair(u, h, tau: float):
    """Feasible unit vector next to a tolerance-feasible ``u``.

    Solver output on the dominance boundary is only feasible up to
    ``FEAS_RTOL``.  The violation ``V(u) = max|r_i| - (tau+1)/2 sum|r_i|`` (with
    ``r = u^H H``) is degree-one homogeneous in ``u``, so a step against its
    gradient sized to reach ``V = -REPAIR_MARGIN sum|r_i|`` moves just inside.
    When the feasible set has no interior (``tau = 0`` with two transmit
    antennas) the same steps end on the boundary and ``EXACT_RTOL`` is
    accepted.  The closed-form point is the last resort.
    """
    h = np.asarray(h, dtype=complex)
    if is_feasible(u, h, tau, rtol=0.0):
        return u
    half = 0.5 * (tau + 1.0)
    v = np.asarray(u, dtype=complex)
    near = v if is_feasible(v, h, tau, rtol=EXACT_RTOL) else None
    for _ in range(REPAIR_ITERS):
        row = effective_row(v, h)
        mag = np.abs(row)
        phase = np.where(mag > 0, row / np.where(mag > 0, mag, 1.0), 0.0)
        weight = np.full(mag.size, -half)
        weight[int(np.argmax(mag))] += 1.0
        # directional derivative of V along d is Re{d^H grad}
        grad = h @ (weight * phase.conj())
        gnorm = np.linalg.norm(grad)
        if gnorm == 0:
            break
        excess = float(np.max(mag) - half * np.sum(mag)) + REPAIR_MARGIN * float(np.sum(mag))
        v = normalize(v - (excess / gnorm) * grad / gnorm)
        if is_feasible(v, h, tau, rtol=0.0):
            return v
        if near is None and is_feasible(v, h, tau, rtol=EXACT_RTOL):
            near = v
    return near if near is not None else feasible_solution(h)


def _project_out(v, c):
    nc = np.vdot(c, c).real
    if nc == 0:
        return v.copy()
    return v - c * (np.vdot(c, v) / nc)


def optimize_receiver(h, tau: float, cfg: RandomizationConfig = RandomizationConfig(), stream=()) -> ReceiverSolution:
    """SDR with customized randomization; the result is always feasible when ``rank(H) >= 2``."""
    h = np.asarray(h, dtype=complex)
    m_r = h.shape[0]
    if numerical_rank(h) < 2:
        raise ValueError("channel rank < 2: design problem may be infeasible")
    w, sol = solve_lifted(build_p3_sdr(h, tau), "single-stream relaxation")
    # the dual value certifies the bound; the primal iterate sits just inside
    bound = max(sol.objective, sol.dual_objective)

    v = conic.extract_rank1(w, RANK1_RATIO)
    if v is not None:
        u = normalize(v[:m_r])
        if is_feasible(u, h, tau):
            u = repair(u, h, tau)
            obj = l1_objective(u, h)
            return ReceiverSolution(u, obj, max(bound, obj), RANK1_EXACT, True)

    prov, u, best = select_candidate([
        (P2FS, feasible_solution(h)),
        (RAND_U, rand_u(w, h, tau, cfg.l_u, cfg.seed, stream)),
        (RAND_P, rand_p(w, h, tau, cfg.l_p, cfg.seed, stream)),
    ], lambda v: l1_objective(v, h))
    u = repair(u, h, tau)
    best = l1_objective(u, h)
    # (u, p_star(u)) lifts to a feasible point of the relaxation, so its value
    # is a lower bound on the relaxation optimum; solver error cannot push the
    # reported bound below it
    return ReceiverSolution(u, best, max(bound, best), prov, is_feasible(u, h, tau))


def select_candidate(cands, score):
    """Best ``(provenance, u, value)``; zero vectors are skipped and earlier entries win ties."""
    prov, u = cands[0]
    best = score(u)
    for name, cand in cands[1:]:
        if not np.any(cand):
            continue
        val = score(cand)
        if val > best + TIE_TOL * max(abs(best), 1.0):
            prov, u, best = name, cand, val
    return prov, u, best


def baseline_as(h, tau: float):
    """Receive antenna selection; returns ``(u, feasible)``."""
    h = np.asarray(h, dtype=complex)
    l1 = np.abs(h).sum(axis=1)
    ok = np.array([dominance_ok(row, tau) and s > 0 for row, s in zip(h, l1)])
    if ok.any():
        j = int(np.flatnonzero(ok)[np.argmax(l1[ok])])
    else:
        j = int(np.argmax(l1))
    u = np.zeros(h.shape[0], dtype=complex)
    u[j] = 1.0
    return u, bool(ok.any())


def baseline_seb(h, tau: float):
    """Strongest-eigenmode receiver; returns ``(u, feasible)``."""
    h = np.asarray(h, dtype=complex)
    _, vec = hermitian_evd(h @ h.conj().T, tol=1e-9)
    u = vec[:, 0]
    return u, is_feasible(u, h, tau)


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def ser_union_bound(d_min_combiner: float, sigma: float, n: int) -> float:
    """``(N - 1) Q(sqrt(d^2 / (2 sigma^2)))`` for noise CN(0, sigma^2)."""
    if sigma <= 0:
        return 0.0 if d_min_combiner > 0 else (n - 1) / 2.0
    return float((n - 1) * q_function(np.sqrt(d_min_combiner ** 2 / (2.0 * sigma ** 2))))
