"""Reachable region of the noise-free combiner output under CE transmission.

With per-antenna amplitude ``a`` and effective MISO channel ``g``, the
noise-free output ``a * sum_i g_i exp(j theta_i)`` covers the closed annulus
``inner <= |d| <= outer`` with ``outer = a ||g||_1`` and
``inner = a * max(2 ||g||_inf - ||g||_1, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import Constellation


@dataclass(frozen=True)
class Annulus:
    inner: float
    outer: float
    eff_channel: np.ndarray

    @property
    def ratio(self) -> float:
        """``inner / outer``; ``inf`` for the degenerate all-zero channel."""
        return self.inner / self.outer if self.outer > 0 else np.inf


def annulus_radii(amplitudes):
    """(inner, outer) for a multiset of non-negative amplitudes."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.size == 0:
        return 0.0, 0.0
    total = float(np.sum(amplitudes))
    return max(2.0 * float(np.max(amplitudes)) - total, 0.0), total


def annulus_of(eff_channel, power_per_antenna: float) -> Annulus:
    eff = np.atleast_1d(np.asarray(eff_channel, dtype=complex)).ravel()
    amp = np.sqrt(power_per_antenna)
    inner, outer = annulus_radii(np.abs(eff))
    return Annulus(amp * inner, amp * outer, eff)


def is_constellation_feasible(a: Annulus, c: Constellation) -> bool:
    # exact comparison; 0/0 counts as infeasible
    if a.outer <= 0:
        return False
    return a.inner / a.outer <= c.tau


def optimal_scaling(a: Annulus) -> float:
    """Largest scaling that keeps a unit-peak constellation inside the annulus."""
    return a.outer
