"""Rabi-oscillation fit of emission intensity against excitation power."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError


@dataclass(frozen=True)
class RabiFit:
    pi_power_uW: float
    amplitude: float
    damping: float
    residual_norm: float


def rabi_model(power_uW, amplitude, pi_power_uW, damping=0.0):
    """A * exp(-damping * sqrt(P)) * sin^2((pi/2) * sqrt(P / P_pi))."""
    p = np.asarray(power_uW, dtype=float)
    return amplitude * np.exp(-damping * np.sqrt(p)) * np.sin(0.5 * np.pi * np.sqrt(p / pi_power_uW)) ** 2


def rabi_fit(powers_uW, intensities, fit_damping=True, sigma=None):
    """Least-squares fit of :func:`rabi_model`.

    The P_pi landscape is multimodal (aliasing onto higher maxima), so the
    fit starts from a grid of P_pi guesses spanning the sampled powers and
    keeps the best local optimum.
    """
    p = np.asarray(powers_uW, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if p.shape != y.shape or p.ndim != 1:
        raise FitError("powers and intensities must be 1-D arrays of equal length")
    if p.size < 5:
        raise FitError(f"need at least 5 points, got {p.size}")
    if np.any(p < 0) or not np.all(np.isfinite(y)):
        raise FitError("powers must be >= 0 and intensities finite")
    if np.ptp(y) == 0:
        raise FitError("intensities are constant; no oscillation to fit")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def residuals(theta):
        a, ppi, gam = theta if fit_damping else (*theta, 0.0)
        return (rabi_model(p, a, ppi, gam) - y) * w

    p_pos = p[p > 0]
    if p_pos.size == 0:
        raise FitError("all powers are zero")
    guesses = np.geomspace(p_pos.min() / 2, p.max() * 2, 40)
    a0 = max(y.max(), 1e-12)
    best = None
    for g in guesses:
        x0 = [a0, g, 0.0] if fit_damping else [a0, g]
        lb = [0.0, 1e-12, 0.0] if fit_damping else [0.0, 1e-12]
        ub = [np.inf, np.inf, np.inf] if fit_damping else [np.inf, np.inf]
        try:
            res = least_squares(residuals, x0, bounds=(lb, ub), x_scale="jac")
        except ValueError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None or not best.success:
        raise FitError("least-squares fit did not converge")
    a, ppi, *rest = best.x
    gam = rest[0] if fit_damping else 0.0
    if a <= 0:
        raise FitError("fit collapsed to zero amplitude")
    return RabiFit(float(ppi), float(a), float(gam), float(np.linalg.norm(best.fun)))


def simulate_rabi_curve(model, excitation, powers_uW, cycles_per_point, seed, accepted_lines):
    """Fraction of cycles emitting a photon on ``accepted_lines`` per third-pulse power.

    Runs the cascade simulator once per power with the third pulse area set
    from the power; intensities carry binomial shot noise.
    """
    from dataclasses import replace

    from . import cascade, levels

    wanted = np.array([cascade.LINE_INDEX[lid] for lid in levels.expand_line_selection(accepted_lines)])
    out = np.empty(len(powers_uW))
    duration = cycles_per_point / excitation.rep_rate_Hz
    for k, power in enumerate(powers_uW):
        exc = replace(excitation.with_third_pulse_power(float(power)), duration_s=duration)
        sub = int(np.random.SeedSequence([int(seed), k]).generate_state(1)[0])
        ev = cascade.simulate_trajectories(model, exc, seed=sub)
        hits = np.unique(ev["cycle"][np.isin(ev["line"], wanted)])
        out[k] = hits.size / exc.n_cycles
    return out
