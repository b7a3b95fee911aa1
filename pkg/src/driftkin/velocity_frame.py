"""Velocity-space coordinates: Cartesian c <-> (energy, c_par, gyrophase).

The gyrophase is measured in a per-call perpendicular basis (e1, e2)
with e1 x e2 = b.  No attempt is made at a globally smooth frame; every
observable built on these coordinates (gyroaverages, pseudo-inverses)
is independent of the basis choice, and only those observables are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFieldError, DomainError

_CANONICAL = (np.array([1.0, 0.0, 0.0]),
              np.array([0.0, 1.0, 0.0]),
              np.array([0.0, 0.0, 1.0]))

DEFAULT_SEED = _CANONICAL[0]

_PARALLEL_TOL = 1e-8


def perp_basis(b, seed_axis=None):
    """Orthonormal pair (e1, e2) normal to b with e1 x e2 = b.

    e1 is the normalized projection of seed_axis onto the plane normal
    to b; a seed (nearly) parallel to b falls back to the canonical
    axis chain x -> y -> z.
    """
    b = np.asarray(b, dtype=float)
    candidates = [] if seed_axis is None else [np.asarray(seed_axis, float)]
    candidates.extend(_CANONICAL)
    for axis in candidates:
        if np.linalg.norm(np.cross(axis, b)) >= _PARALLEL_TOL:
            e1 = axis - (axis @ b) * b
            e1 = e1 / np.linalg.norm(e1)
            e2 = np.cross(b, e1)
            return e1, e2
    raise ValueError("no usable seed axis; is b a unit vector?")


def in_velocity_domain(e, c_par, rtol=1e-12):
    """True when (e, c_par) lies in the admissible set e >= 0, c_par^2 <= 2e."""
    return e >= -rtol and c_par * c_par <= 2.0 * e * (1.0 + rtol) + rtol


def to_gyro(c, b, basis=None):
    """Map a velocity vector to (e, c_par, alpha) in the local frame.

    Total function: a purely parallel velocity gets alpha = 0 by
    convention.
    """
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    e1, e2 = basis if basis is not None else perp_basis(b)
    e = 0.5 * float(c @ c)
    c_par = float(c @ b)
    c1 = float(c @ e1)
    c2 = float(c @ e2)
    if c1 * c1 + c2 * c2 == 0.0:
        alpha = 0.0
    else:
        alpha = float(np.arctan2(c2, c1)) % (2.0 * np.pi)
    return e, c_par, alpha


def from_gyro(e, c_par, alpha, b, basis=None):
    """Inverse map: c = |c_perp| (cos(a) e1 + sin(a) e2) + c_par b."""
    if not in_velocity_domain(e, c_par):
        raise DomainError(f"(e, c_par) = ({e}, {c_par}) outside e >= c_par^2/2")
    b = np.asarray(b, dtype=float)
    e1, e2 = basis if basis is not None else perp_basis(b)
    cperp = np.sqrt(max(2.0 * e - c_par * c_par, 0.0))
    return cperp * (np.cos(alpha) * e1 + np.sin(alpha) * e2) + c_par * b


def gyro_ring(e, c_par, b, n_alpha, basis=None):
    """Velocity vectors at the n_alpha uniform gyrophases (and the phases).

    Returns (alphas, C) with C of shape (n_alpha, 3).  The uniform ring
    is the quadrature grid for all gyrophase averages.
    """
    if not in_velocity_domain(e, c_par):
        raise DomainError(f"(e, c_par) = ({e}, {c_par}) outside e >= c_par^2/2")
    b = np.asarray(b, dtype=float)
    e1, e2 = basis if basis is not None else perp_basis(b)
    alphas = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    cperp = np.sqrt(max(2.0 * e - c_par * c_par, 0.0))
    C = (cperp * np.cos(alphas)[:, None] * e1
         + cperp * np.sin(alphas)[:, None] * e2
         + c_par * b)
    return alphas, C


def magnetic_moment(e, c_par, magB):
    """mu = (e - c_par^2/2) / |B|, the first adiabatic invariant."""
    if magB <= 0:
        raise DegenerateFieldError("magnetic moment needs |B| > 0")
    if not in_velocity_domain(e, c_par):
        raise DomainError(f"(e, c_par) = ({e}, {c_par}) outside e >= c_par^2/2")
    return (e - 0.5 * c_par * c_par) / magB


@dataclass(frozen=True)
class GyroPoint:
    """A phase-space point in gyro coordinates with its local basis."""

    x: np.ndarray
    e: float
    c_par: float
    alpha: float
    mu: float
    basis: tuple

    @classmethod
    def from_cartesian(cls, x, c, sample, seed_axis=None):
        basis = perp_basis(sample.b, seed_axis)
        e, c_par, alpha = to_gyro(c, sample.b, basis)
        mu = magnetic_moment(e, c_par, sample.magB)
        return cls(x=np.asarray(x, float), e=e, c_par=c_par, alpha=alpha,
                   mu=mu, basis=basis)

    def velocity(self, sample):
        return from_gyro(self.e, self.c_par, self.alpha, sample.b, self.basis)
