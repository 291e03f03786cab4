"""Linear-algebra kernels, seeded sampling and the flat-fading MIMO model.

Random streams use numpy's Philox counter-based generator keyed by a
``SeedSequence`` built from ``(seed, *stream)``.  Any tuple of non-negative
integers names an independent stream, so per-trial streams are obtained by
appending the trial index instead of advancing a shared generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_RTOL = 1e-10
HERMITIAN_TOL = 1e-12

# stream tags used across the package
STREAM_CHANNEL = 1
STREAM_NOISE = 2
STREAM_SYMBOLS = 3
STREAM_RAND_U = 4
STREAM_RAND_P = 5
STREAM_DESIGN = 6
STREAM_GROUPING = 7


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *stream)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


def cscg(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Draw i.i.d. CN(0, variance) samples."""
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * np.sqrt(variance / 2.0)


@dataclass(frozen=True)
class SystemConfig:
    m_t: int
    m_r: int
    power: float = 1.0
    noise_var: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.m_t < 2 or self.m_r < 2:
            raise ValueError(f"need m_t, m_r >= 2, got {self.m_t}, {self.m_r}")
        if not (self.power > 0 and self.noise_var > 0 and self.beta > 0):
            raise ValueError("power, noise_var and beta must be positive")

    @property
    def power_per_antenna(self) -> float:
        return self.power / self.m_t

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(self.power / self.m_t))


@dataclass(frozen=True)
class CeTransmitVector:
    """Constant-envelope transmit vector: one phase per antenna, one shared amplitude."""

    phases: np.ndarray
    amplitude: float
    entries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        phases = np.mod(np.asarray(self.phases, dtype=float), 2 * np.pi)
        phases[phases >= 2 * np.pi] = 0.0
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        x = self.amplitude * np.exp(1j * phases)
        x.setflags(write=False)
        object.__setattr__(self, "entries", x)

    @classmethod
    def from_power(cls, phases, power: float) -> "CeTransmitVector":
        phases = np.asarray(phases, dtype=float)
        return cls(phases, float(np.sqrt(power / phases.size)))

    def __len__(self):
        return self.phases.size


def sample_rayleigh_channel(cfg: SystemConfig, seed: int, stream=()) -> np.ndarray:
    """Draw an ``m_r x m_t`` channel with i.i.d. CN(0, beta) entries."""
    rng = make_rng(seed, STREAM_CHANNEL, *stream)
    return cscg(rng, (cfg.m_r, cfg.m_t), cfg.beta)


def apply_channel(h: np.ndarray, x: CeTransmitVector, noise_var: float, seed=None, stream=()):
    """Received vector ``h @ x + n`` with ``n ~ CN(0, noise_var I)``.

    ``noise_var == 0`` gives the noiseless output and ignores ``seed``.
    """
    h = np.asarray(h)
    xv = x.entries if isinstance(x, CeTransmitVector) else np.asarray(x)
    if h.ndim != 2 or h.shape[1] != xv.shape[0]:
        raise ValueError(f"channel {h.shape} incompatible with transmit vector of length {xv.shape[0]}")
    y = h @ xv
    if noise_var > 0:
        if seed is None:
            raise ValueError("a seed is required when noise_var > 0")
        rng = make_rng(seed, STREAM_NOISE, *stream)
        y = y + cscg(rng, y.shape, noise_var)
    return y


def hermitian_evd(m: np.ndarray, tol: float = HERMITIAN_TOL):
    """Eigendecomposition of a Hermitian matrix, eigenvalues in descending order.

    Raises ``ValueError`` when ``m`` is not Hermitian within ``tol`` relative
    to its Frobenius norm.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.linalg.norm(m), 1.0)
    if np.linalg.norm(m - m.conj().T) > tol * scale:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return w[::-1].copy(), v[:, ::-1].copy()


def svd(m: np.ndarray):
    """Full SVD ``m = U diag(s) V^H``; returns ``(U, s, V)`` with ``s`` descending."""
    u, s, vh = np.linalg.svd(np.asarray(m), full_matrices=True)
    return u, s, vh.conj().T


def numerical_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(m), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))
