"""QAM/PSK constellations normalized to unit peak amplitude, with Gray labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def gray(i):
    return np.asarray(i) ^ (np.asarray(i) >> 1)


def _bits(values, width):
    values = np.asarray(values)
    shifts = np.arange(width - 1, -1, -1)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True)
class Constellation:
    """Normalized symbol set.

    Attributes:
        points: complex symbols with ``max |s| = 1``.
        labels: ``(N, log2 N)`` array of bits, row ``k`` labels ``points[k]``.
        tau: smallest symbol amplitude.
        d_min: minimum pairwise Euclidean distance.
    """

    name: str
    points: np.ndarray
    labels: np.ndarray
    tau: float
    d_min: float

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]


def _build(name, points, labels):
    points = np.asarray(points, dtype=complex)
    points = points / np.max(np.abs(points))
    diff = np.abs(points[:, None] - points[None, :])
    d_min = float(np.min(diff[~np.eye(points.size, dtype=bool)]))
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(name, points, labels, float(np.min(np.abs(points))), d_min)


def make_qam(n: int) -> Constellation:
    """Square ``n``-QAM with reflected-Gray labels per axis (I bits first)."""
    if n not in (4, 16, 64, 256):
        raise ValueError(f"unsupported square QAM size {n}")
    side = int(round(np.sqrt(n)))
    half = side.bit_length() - 1
    levels = 2 * np.arange(side) - (side - 1)
    ii, qq = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    ii, qq = ii.ravel(), qq.ravel()
    points = levels[ii] + 1j * levels[qq]
    labels = np.concatenate([_bits(gray(ii), half), _bits(gray(qq), half)], axis=1)
    return _build(f"{n}-QAM", points, labels)


def make_psk(n: int) -> Constellation:
    """``n``-PSK on the unit circle with circular Gray labels."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"PSK size must be a power of two >= 2, got {n}")
    k = np.arange(n)
    points = np.exp(2j * np.pi * k / n)
    if n == 2:
        points = np.array([1.0, -1.0], dtype=complex)
    labels = _bits(gray(k), n.bit_length() - 1)
    return _build(f"{n}-PSK", points, labels)


def ml_detect(y: complex, alpha: float, c: Constellation) -> int:
    """Index of the point of ``alpha * S`` closest to ``y`` (lowest index on ties)."""
    return int(np.argmin(np.abs(y - alpha * c.points)))


def ml_detect_many(y: np.ndarray, alpha: float, c: Constellation) -> np.ndarray:
    y = np.asarray(y)
    d = np.abs(y[..., None] - alpha * c.points)
    return np.argmin(d, axis=-1)
