"""Guiding-center force fields and drift velocities.

Provides the mean-force field F = div(P)/n, the reduced force
Phi = (F - mu grad|B|)/|B|, the four classical drifts, the explicit
perpendicular bulk velocity of the zero-Mach force balance, and the
effective potential governing the fast parallel motion along a line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import VacuumError
from .field_model import FieldLine, eval_field
from .moments import div_pressure_tensor

N_FLOOR = 1e-14


@dataclass(frozen=True)
class DriftSet:
    """The classical drifts plus the reduced force at one phase point."""

    V_cd: np.ndarray          # curvature drift
    V_gd: np.ndarray          # gradient drift
    V_ed: np.ndarray          # electric drift
    V_dpar: np.ndarray        # drift parallel to b
    Phi: np.ndarray
    parallel_force: float     # B . Phi

    def spatial_sum(self, u_par, b):
        return u_par * b + self.V_dpar + self.V_ed + self.V_cd + self.V_gd


def force_F(n_field, p_perp_field, p_par_field, x, t=0.0, config=None,
            sample=None, h=1e-3):
    """Mean force per particle: div(P)/n."""
    sample = sample or eval_field(config, x, t)
    n = n_field(x, t) if callable(n_field) else n_field.value(x, t)
    if n <= N_FLOOR:
        raise VacuumError(f"density {n:.3e} at or below the vacuum floor")
    return div_pressure_tensor(p_perp_field, p_par_field, x, t,
                               sample=sample, h=h) / n


def phi_field(x, mu, t, F, sample):
    """Phi = (F - mu grad|B|) / |B|."""
    F = np.asarray(F, dtype=float)
    return (F - mu * sample.gradB_mag) / sample.magB


def parallel_force(x, mu, t, F, sample):
    """B . Phi = b . (F - mu grad|B|), the fast parallel acceleration."""
    F = np.asarray(F, dtype=float)
    return float(sample.b @ (F - mu * sample.gradB_mag))


def drift_velocities(x, t, c_par, mu, E=None, sample=None, config=None,
                     F=None) -> DriftSet:
    """Curvature, gradient, electric, and parallel drifts at a phase point."""
    sample = sample or eval_field(config, x, t)
    E = sample.E if E is None else np.asarray(E, dtype=float)
    F = np.zeros(3) if F is None else np.asarray(F, dtype=float)
    magB = sample.magB
    V_cd = (c_par ** 2 / magB) * sample.f_vec
    V_gd = (mu / magB) * np.cross(sample.b, sample.gradB_mag)
    V_ed = np.cross(E, sample.b) / magB
    V_dpar = mu * float(sample.b @ sample.curl_b) * sample.b
    Phi = phi_field(x, mu, t, F, sample)
    return DriftSet(V_cd=V_cd, V_gd=V_gd, V_ed=V_ed, V_dpar=V_dpar, Phi=Phi,
                    parallel_force=float(sample.B @ Phi))


def perp_velocity(x, t, E=None, n_field=None, p_perp_field=None,
                  p_par_field=None, sample=None, config=None, h=1e-3):
    """Perpendicular bulk velocity of the zero-Mach force balance:

        u_perp = (E x b)/|B| + (b x grad p_perp)/(n|B|)
                 + (p_par - p_perp)/(n|B|) * (b x (b . grad) b).
    """
    sample = sample or eval_field(config, x, t)
    E = sample.E if E is None else np.asarray(E, dtype=float)
    n = n_field(x, t)
    if n <= N_FLOOR:
        raise VacuumError(f"density {n:.3e} at or below the vacuum floor")
    if hasattr(p_perp_field, "grad"):
        gpp = np.asarray(p_perp_field.grad(x, t), dtype=float)
    else:
        from . import numdiff
        gpp = numdiff.grad(lambda y: p_perp_field(y, t),
                           np.asarray(x, float), h)
    dp = p_par_field(x, t) - p_perp_field(x, t)
    magB = sample.magB
    return (np.cross(E, sample.b) / magB
            + np.cross(sample.b, gpp) / (n * magB)
            + dp / (n * magB) * sample.f_vec)


class EffectivePotential:
    """V(s) with dV/ds = -b . (F - mu grad|B|) along a traced line.

    Anchored at V(0) = 0; only differences of V are meaningful.
    """

    def __init__(self, line: FieldLine, mu, t=0.0, F_provider=None):
        self.line = line
        self.mu = mu
        drive = []
        for x, sample in zip(line.nodes, line.samples):
            F = np.zeros(3) if F_provider is None else \
                np.asarray(F_provider(x, t), dtype=float)
            drive.append(parallel_force(x, mu, t, F, sample))
        self._minus_dV = CubicSpline(line.s, np.asarray(drive))
        self._V = self._minus_dV.antiderivative()
        self._V0 = float(self._V(0.0))

    def __call__(self, s):
        return -(self._V(s) - self._V0)

    def dV_ds(self, s):
        return -self._minus_dV(s)

    def parallel_force_at(self, s):
        return float(self._minus_dV(s))


def effective_potential(line: FieldLine, mu, t=0.0, F_provider=None):
    """Cumulative-quadrature effective potential along a traced line."""
    return EffectivePotential(line, mu, t, F_provider)
