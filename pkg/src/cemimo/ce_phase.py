"""Constant-envelope phase solver for a single MISO link.

Given an effective channel ``g`` (length ``m``), per-antenna power ``P/M_t``
and a target ``t`` inside the reachable annulus, find phases with
``sqrt(P/M_t) * sum_i g_i exp(j theta_i) == t``.

The construction works on the rotated coefficients ``c_i = sqrt(P/M_t) g_i``:
amplitudes are processed in descending order, and each vector is placed so
that the remaining target stays inside the annulus spanned by the amplitudes
still to be placed (the distance to the new residual target is chosen at the
midpoint of the admissible interval).  The last two vectors close the sum by
two-circle intersection.  The construction is exact up to rounding and
rotation covariant: rotating the target rotates every phase by the same angle.
"""

from __future__ import annotations

import numpy as np

from .annulus import annulus_radii

BOUNDARY_TOL = 1e-12


class TargetOutsideAnnulus(ValueError):
    """Target magnitude lies outside ``[inner, outer]`` beyond tolerance."""

    def __init__(self, target, inner, outer):
        self.target = complex(target)
        self.inner = float(inner)
        self.outer = float(outer)
        mag = abs(self.target)
        self.residual = max(self.inner - mag, mag - self.outer, 0.0)
        super().__init__(
            f"|target|={mag:.6g} outside annulus [{self.inner:.6g}, {self.outer:.6g}] "
            f"(distance {self.residual:.3g})"
        )


def _coefficients(eff_channel, power_per_antenna):
    eff = np.atleast_1d(np.asarray(eff_channel, dtype=complex)).ravel()
    return np.sqrt(power_per_antenna) * eff


def reachable(eff_channel, target, power_per_antenna, tol: float = BOUNDARY_TOL) -> bool:
    """Annulus membership of ``target`` with boundary slack ``tol * max(outer, 1)``."""
    coef = _coefficients(eff_channel, power_per_antenna)
    inner, outer = annulus_radii(np.abs(coef))
    slack = tol * max(outer, 1.0)
    mag = abs(target)
    return inner - slack <= mag <= outer + slack


def _place(t, r, rho):
    """Angle psi with |t - r e^{j psi}| == rho (the '+' branch)."""
    mag = abs(t)
    if mag == 0.0 or r == 0.0:
        return 0.0
    cosd = (mag * mag + r * r - rho * rho) / (2.0 * r * mag)
    return float(np.angle(t) + np.arccos(min(1.0, max(-1.0, cosd))))


def solve_phases(eff_channel, target, power_per_antenna, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Phases in ``[0, 2 pi)`` whose CE combination hits ``target``.

    Raises:
        TargetOutsideAnnulus: ``|target|`` is outside the annulus by more than
            ``tol * max(outer, 1)``.
    """
    coef = _coefficients(eff_channel, power_per_antenna)
    m = coef.size
    amps = np.abs(coef)
    base = np.angle(coef)
    inner, outer = annulus_radii(amps)
    slack = tol * max(outer, 1.0)
    t = complex(target)
    mag = abs(t)
    if mag < inner - slack or mag > outer + slack:
        raise TargetOutsideAnnulus(t, inner, outer)

    psi = np.zeros(m)
    if outer == 0.0:
        return np.zeros(m)
    if mag >= outer - BOUNDARY_TOL * max(outer, 1.0):
        # outer boundary: every vector aligned with the target
        psi[:] = np.angle(t) if mag > 0 else 0.0
        return _wrap(psi - base)
    clamped = min(max(mag, inner), outer)
    if clamped != mag:
        t = t * (clamped / mag) if mag > 0 else complex(clamped)

    order = np.argsort(-amps, kind="stable")
    suffix = np.cumsum(amps[order][::-1])[::-1]  # suffix[i] = sum of amps[order[i:]]
    for pos in range(m - 2):
        k = order[pos]
        r = amps[k]
        rest_max = amps[order[pos + 1]]
        rest_sum = suffix[pos + 1]
        rest_in = max(2.0 * rest_max - rest_sum, 0.0)
        mag = abs(t)
        lo = max(abs(mag - r), rest_in)
        hi = min(mag + r, rest_sum)
        rho = 0.5 * (lo + hi)
        psi[k] = _place(t, r, rho)
        t = t - r * np.exp(1j * psi[k])

    if m == 1:
        psi[0] = np.angle(t)
        return _wrap(psi - base)

    a_idx, b_idx = order[m - 2], order[m - 1]
    a, b = amps[a_idx], amps[b_idx]
    if a == 0.0:
        return _wrap(psi - base)
    psi[a_idx] = _place(t, a, b)
    res = t - a * np.exp(1j * psi[a_idx])
    psi[b_idx] = np.angle(res) if b > 0 else 0.0
    return _wrap(psi - base)


def _wrap(theta):
    theta = np.mod(theta, 2 * np.pi)
    theta[theta >= 2 * np.pi] = 0.0
    return theta


def synthesize(eff_channel, phases, power_per_antenna) -> complex:
    """Noise-free combiner output for the given phases."""
    coef = _coefficients(eff_channel, power_per_antenna)
    return complex(np.sum(coef * np.exp(1j * np.asarray(phases))))
