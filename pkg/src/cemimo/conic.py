"""Small dense conic programs over real variables.

A :class:`ConeProgram` maximizes ``c @ x + offset`` subject to linear
equalities and cone memberships ``F @ x + g in K`` where ``K`` is the
nonnegative orthant, a second-order cone ``{(t, v): ||v|| <= t}`` or the cone
of symmetric PSD matrices (``F @ x + g`` is then the row-major vectorization
of a symmetric matrix).  Programs are solved with the Clarabel interior-point
solver.

Complex Hermitian matrix variables are handled by :class:`HermitianVariable`,
which stores ``W = X + jY`` through the real entries of ``X`` (upper
triangle) and ``Y`` (strict upper triangle) and imposes ``W >= 0`` through the
real embedding ``[[X, -Y], [Y, X]] >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import clarabel
import numpy as np
import scipy.sparse as sp

NONNEG = "nonnegative"
SOC = "second_order"
PSD = "psd"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"
INACCURATE = "inaccurate"

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 500


@dataclass
class ConeBlock:
    cone: str
    dim: int
    f: np.ndarray
    g: np.ndarray


@dataclass
class ConeProgram:
    n: int
    objective: np.ndarray = None
    offset: float = 0.0
    eq_a: list = field(default_factory=list)
    eq_b: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.objective is None:
            self.objective = np.zeros(self.n)

    def add_equality(self, row, rhs: float):
        self.eq_a.append(np.asarray(row, dtype=float).reshape(self.n))
        self.eq_b.append(float(rhs))

    def _block(self, cone, dim, f, g, rows):
        f = np.atleast_2d(np.asarray(f, dtype=float))
        g = np.asarray(g, dtype=float).reshape(-1)
        if f.shape != (rows, self.n) or g.shape != (rows,):
            raise ValueError(f"{cone} block expects ({rows}, {self.n}) map, got {f.shape} and {g.shape}")
        self.blocks.append(ConeBlock(cone, dim, f, g))

    def add_nonneg(self, f, g):
        f = np.atleast_2d(np.asarray(f, dtype=float))
        self._block(NONNEG, f.shape[0], f, g, f.shape[0])

    def add_soc(self, f, g):
        f = np.atleast_2d(np.asarray(f, dtype=float))
        if f.shape[0] < 2:
            raise ValueError("second-order cone needs dimension >= 2")
        self._block(SOC, f.shape[0], f, g, f.shape[0])

    def add_psd(self, f, g, order: int):
        self._block(PSD, order, f, g, order * order)

    def data_norm(self) -> float:
        parts = [np.abs(self.objective).max(initial=0.0)]
        for b in self.blocks:
            parts += [np.abs(b.f).max(initial=0.0), np.abs(b.g).max(initial=0.0)]
        if self.eq_a:
            parts += [np.abs(np.array(self.eq_a)).max(), np.abs(np.array(self.eq_b)).max()]
        return float(max(parts))


@dataclass
class ConeSolution:
    x: np.ndarray
    objective: float
    dual_objective: float
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    z: np.ndarray = None


@lru_cache(maxsize=None)
def _svec_map(order: int):
    """Matrix taking row-major vec(S) to Clarabel's scaled upper-triangle svec(S)."""
    rows, cols, vals = [], [], []
    k = 0
    r2 = np.sqrt(2.0)
    for j in range(order):
        for i in range(j + 1):
            if i == j:
                rows.append(k), cols.append(i * order + j), vals.append(1.0)
            else:
                rows += [k, k]
                cols += [i * order + j, j * order + i]
                vals += [r2 / 2, r2 / 2]
            k += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(k, order * order))


def _to_clarabel(p: ConeProgram):
    a_parts, b_parts, cones = [], [], []
    if p.eq_a:
        a_parts.append(np.array(p.eq_a))
        b_parts.append(np.array(p.eq_b))
        cones.append(clarabel.ZeroConeT(len(p.eq_a)))
    for blk in p.blocks:
        if blk.cone == PSD:
            t = _svec_map(blk.dim)
            a_parts.append(-(t @ blk.f))
            b_parts.append(t @ blk.g)
            cones.append(clarabel.PSDTriangleConeT(blk.dim))
        else:
            a_parts.append(-blk.f)
            b_parts.append(blk.g)
            cones.append(clarabel.NonnegativeConeT(blk.dim) if blk.cone == NONNEG
                         else clarabel.SecondOrderConeT(blk.dim))
    a = sp.csc_matrix(np.vstack(a_parts))
    b = np.concatenate(b_parts)
    return a, b, cones


def cone_violation(p: ConeProgram, x: np.ndarray) -> float:
    """Largest equality or cone violation of ``x``."""
    worst = 0.0
    if p.eq_a:
        worst = max(worst, float(np.max(np.abs(np.array(p.eq_a) @ x - np.array(p.eq_b)))))
    for blk in p.blocks:
        v = blk.f @ x + blk.g
        if blk.cone == NONNEG:
            worst = max(worst, float(np.max(-v, initial=0.0)))
        elif blk.cone == SOC:
            worst = max(worst, float(np.linalg.norm(v[1:]) - v[0]))
        else:
            s = v.reshape(blk.dim, blk.dim)
            worst = max(worst, float(-np.linalg.eigvalsh((s + s.T) / 2)[0]))
    return max(worst, 0.0)


_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": INACCURATE,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
    "MaxIterations": MAX_ITER,
}


def solve(p: ConeProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ConeSolution:
    """Solve ``p`` (a maximization) to relative gap and feasibility ``tol``."""
    a, b, cones = _to_clarabel(p)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    pmat = sp.csc_matrix((p.n, p.n))
    sol = clarabel.DefaultSolver(pmat, -p.objective, a, b, cones, settings).solve()
    status = _STATUS.get(str(sol.status), INACCURATE)
    x = np.asarray(sol.x, dtype=float)
    obj = float(p.objective @ x + p.offset) if x.size else np.nan
    dual = -float(sol.obj_val_dual) + p.offset
    gap = abs(obj - dual) / max(1.0, abs(obj))
    return ConeSolution(
        x=x,
        objective=obj,
        dual_objective=dual,
        status=status,
        primal_residual=cone_violation(p, x) if x.size else np.inf,
        dual_residual=float(sol.r_dual),
        gap=gap,
        iterations=int(sol.iterations),
        z=np.asarray(sol.z, dtype=float),
    )


def _svec_to_mat(v, order):
    t = _svec_map(order)
    # t has orthonormal rows, so t.T maps svec back to the symmetric matrix
    return (t.T @ v).reshape(order, order)


def _project_dual(p: ConeProgram, z):
    """Nearest point of the dual cone (all cones here are self-dual); equality duals are free."""
    z = np.array(z, dtype=float)
    k = len(p.eq_a)
    for blk in p.blocks:
        if blk.cone == NONNEG:
            z[k:k + blk.dim] = np.clip(z[k:k + blk.dim], 0.0, None)
            k += blk.dim
        elif blk.cone == SOC:
            t, v = z[k], z[k + 1:k + blk.dim]
            nv = np.linalg.norm(v)
            if nv > t:
                if nv <= -t:
                    z[k:k + blk.dim] = 0.0
                else:
                    a = 0.5 * (t + nv)
                    z[k] = a
                    z[k + 1:k + blk.dim] = a * v / nv
            k += blk.dim
        else:
            size = blk.dim * (blk.dim + 1) // 2
            m = _svec_to_mat(z[k:k + size], blk.dim)
            lam, vec = np.linalg.eigh((m + m.T) / 2)
            proj = (vec * np.clip(lam, 0.0, None)) @ vec.T
            z[k:k + size] = _svec_map(blk.dim) @ proj.ravel()
            k += size
    return z


def certified_bound(p: ConeProgram, sol: ConeSolution, x_bound: float) -> float:
    """Upper bound on the optimum of ``p`` valid for any dual iterate.

    With ``z`` projected onto the dual cone, weak duality gives
    ``c^T x <= b^T z - r^T x`` for every feasible ``x``, where
    ``r = A^T z - c`` is the dual residual.  If every feasible ``x`` has
    ``|x_i| <= x_bound`` the last term is at most ``||r||_1 x_bound``, so the
    bound holds however inaccurate the solver was.
    """
    if sol.z is None or not sol.z.size:
        return np.inf
    a, b, _ = _to_clarabel(p)
    z = _project_dual(p, sol.z)
    resid = a.T @ z - p.objective
    return float(b @ z + np.abs(resid).sum() * x_bound + p.offset)


def hermitian_embed(h: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re h, -Im h], [Im h, Re h]]``."""
    h = np.asarray(h)
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def extract_rank1(w: np.ndarray, ratio_tol: float = 1e-6):
    """Return ``v`` with ``w ~ v v^H`` when ``lambda_2 / lambda_1 <= ratio_tol``, else ``None``."""
    w = np.asarray(w, dtype=complex)
    lam, vec = np.linalg.eigh((w + w.conj().T) / 2)
    lam, vec = lam[::-1], vec[:, ::-1]
    if lam[0] <= 0:
        return None
    if lam.size > 1 and max(lam[1], 0.0) / lam[0] > ratio_tol:
        return None
    return np.sqrt(lam[0]) * vec[:, 0]


@lru_cache(maxsize=None)
def _hermitian_basis(order: int):
    """Basis matrices ``E_k`` with ``W = sum_k x_k E_k`` (read-only)."""
    mats = []
    for i in range(order):
        for j in range(i, order):
            e = np.zeros((order, order), dtype=complex)
            e[i, j] = e[j, i] = 1.0
            mats.append(e)
    for i in range(order):
        for j in range(i + 1, order):
            e = np.zeros((order, order), dtype=complex)
            e[i, j], e[j, i] = 1j, -1j
            mats.append(e)
    basis = np.array(mats)
    emb = np.array([hermitian_embed(e).ravel() for e in basis]).T
    basis.setflags(write=False)
    emb.setflags(write=False)
    return basis, emb


class HermitianVariable:
    """Complex Hermitian matrix variable occupying ``order**2`` real slots at ``start``."""

    def __init__(self, order: int, start: int = 0):
        self.order = order
        self.start = start
        self.size = order * order
        self._basis, self._embed = _hermitian_basis(order)

    def trace_coeffs(self, c: np.ndarray, n: int) -> np.ndarray:
        """Complex row ``z`` (length ``n``) with ``tr(c @ W) == z @ x``."""
        z = np.zeros(n, dtype=complex)
        z[self.start:self.start + self.size] = np.einsum("ij,kji->k", np.asarray(c), self._basis)
        return z

    def diag_index(self, i: int) -> int:
        # upper-triangle ordering: row i starts after sum_{r<i} (order - r) entries
        return self.start + i * self.order - i * (i - 1) // 2

    def psd_map(self, n: int):
        """``(F, g)`` such that ``F @ x + g`` is the row-major real embedding of ``W``."""
        f = np.zeros((4 * self.size, n))
        f[:, self.start:self.start + self.size] = self._embed
        return f, np.zeros(4 * self.size)

    def pack(self, w: np.ndarray) -> np.ndarray:
        """Coordinates of Hermitian ``w``; inverse of :meth:`unpack`."""
        w = np.asarray(w)
        iu = np.triu_indices(self.order)
        iu1 = np.triu_indices(self.order, 1)
        return np.concatenate([w[iu].real, w[iu1].imag])

    def unpack(self, x: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(x)[self.start:self.start + self.size]
        return np.tensordot(coeffs, self._basis, axes=1)


def dump_triplets(p: ConeProgram, path) -> None:
    """Write ``p`` as plain-text sparse triplets ``block row col value``.

    Constant terms use column ``rhs``; the objective is block ``obj`` (maximized).
    """
    lines = [f"# n={p.n} sense=max offset={float(p.offset)!r}"]

    def emit(name, mat, const):
        mat = np.atleast_2d(mat)
        for r, c in zip(*np.nonzero(mat)):
            lines.append(f"{name} {r} {c} {float(mat[r, c])!r}")
        for r in np.nonzero(const)[0]:
            lines.append(f"{name} {r} rhs {float(const[r])!r}")

    emit("obj", p.objective[None, :], np.zeros(1))
    if p.eq_a:
        emit("eq", np.array(p.eq_a), np.array(p.eq_b))
    for i, blk in enumerate(p.blocks):
        emit(f"{blk.cone}:{blk.dim}#{i}", blk.f, blk.g)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
