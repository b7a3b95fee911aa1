"""Gyrophase calculus: averages, harmonics, the fast-rotation operator
and its pseudo-inverse, and closed forms for the first-order fluxes.

All phase averages use the uniform trapezoid rule on the gyrophase
circle, which is exact for trigonometric polynomials of degree below
n_alpha/2 and spectrally accurate for smooth integrands.  The
pseudo-inverse has two interchangeable evaluation paths: a Fourier
antiderivative of the ring samples (fast path) and direct quadrature
of the explicit Green kernel split at its jump (reference path).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from . import numdiff
from .errors import AliasingError, NumericsError, SolvabilityError
from .field_model import eval_field
from .velocity_frame import gyro_ring, perp_basis

DEFAULT_N_ALPHA = 64
DEFAULT_TOL_SOLV = 1e-9


# -- phase-space function protocol ----------------------------------------

class FDPhaseFunction:
    """Wrap a plain callable g(x, c, t) with finite-difference partials."""

    def __init__(self, fn, h_x=1e-3, h_c=1e-3, h_t=1e-3):
        self.fn = fn
        self.h_x = h_x
        self.h_c = h_c
        self.h_t = h_t

    def value(self, x, c, t):
        return self.fn(x, c, t)

    def grad_c(self, x, c, t):
        return numdiff.grad(lambda cc: self.fn(x, cc, t), np.asarray(c, float),
                            self.h_c)

    def grad_x(self, x, c, t):
        return numdiff.grad(lambda xx: self.fn(xx, c, t), np.asarray(x, float),
                            self.h_x)

    def dt(self, x, c, t):
        return numdiff.d1(lambda s: self.fn(x, c, s), t, self.h_t)


def as_phase_function(g):
    if hasattr(g, "grad_c") and hasattr(g, "value"):
        return g
    return FDPhaseFunction(g)


@dataclass(frozen=True)
class DistributionSpec:
    """A gyrophase-independent distribution G(x, e, c_par, t) with partials."""

    G: Callable
    dG_de: Callable
    dG_dcpar: Callable
    grad_x: Callable          # -> 3-vector, at fixed (e, c_par)
    dG_dt: Callable
    ker_L: bool = True

    @classmethod
    def from_callable(cls, G, h=1e-4):
        """Build a spec with 4th-order finite-difference partials."""
        return cls(
            G=G,
            dG_de=lambda x, e, cp, t: numdiff.d1(lambda s: G(x, s, cp, t), e, h),
            dG_dcpar=lambda x, e, cp, t: numdiff.d1(lambda s: G(x, e, s, t), cp, h),
            grad_x=lambda x, e, cp, t: numdiff.grad(
                lambda xx: G(xx, e, cp, t), np.asarray(x, float), h),
            dG_dt=lambda x, e, cp, t: numdiff.d1(lambda s: G(x, e, cp, s), t, h),
        )

    def velocity_view(self, config):
        """Phase-space view g(x, c, t) = G(x, |c|^2/2, c.b, t) with exact
        chain-rule partials."""
        return _KerLView(self, config)


class _KerLView:
    def __init__(self, spec, config):
        self.spec = spec
        self.config = config

    def _coords(self, x, c, t):
        sample = eval_field(self.config, x, t)
        e = 0.5 * float(np.dot(c, c))
        c_par = float(np.dot(c, sample.b))
        return sample, e, c_par

    def value(self, x, c, t):
        _, e, c_par = self._coords(x, c, t)
        return self.spec.G(x, e, c_par, t)

    def grad_c(self, x, c, t):
        sample, e, c_par = self._coords(x, c, t)
        return (self.spec.dG_de(x, e, c_par, t) * np.asarray(c, float)
                + self.spec.dG_dcpar(x, e, c_par, t) * sample.b)

    def grad_x(self, x, c, t):
        sample, e, c_par = self._coords(x, c, t)
        return (self.spec.grad_x(x, e, c_par, t)
                + self.spec.dG_dcpar(x, e, c_par, t) * (sample.jac_b @ c))

    def dt(self, x, c, t):
        sample, e, c_par = self._coords(x, c, t)
        return (self.spec.dG_dt(x, e, c_par, t)
                + self.spec.dG_dcpar(x, e, c_par, t) * float(np.dot(c, sample.dt_b)))


def _zero_vec(x, t):
    return np.zeros(3)


@dataclass(frozen=True)
class ForceInput:
    """Force and bulk-velocity fields entering the streaming operators.

    ``F0`` is the leading mean force per particle, ``F1`` the
    next-order force (perpendicular to b by construction), ``u0`` the
    bulk velocity with Jacobian ``grad_u0[i, j] = d u0_j / d x_i``.
    """

    F0: Callable = _zero_vec
    F1: Callable = _zero_vec
    u0: Callable = _zero_vec
    grad_u0: Optional[Callable] = None

    def jac_u0(self, x, t, h=1e-3):
        if self.grad_u0 is not None:
            return np.asarray(self.grad_u0(x, t), dtype=float)
        return numdiff.jacobian(lambda y: self.u0(y, t), np.asarray(x, float), h)

    def f1_checked(self, x, t, b):
        f1 = np.asarray(self.F1(x, t), dtype=float)
        if abs(float(f1 @ b)) > 1e-12 * max(1.0, float(np.linalg.norm(f1))):
            raise ValueError("F1 must be perpendicular to b")
        return f1


# -- gyrophase quadrature ---------------------------------------------------

def _validate_n_alpha(n_alpha):
    if n_alpha < 4 or n_alpha % 2 != 0:
        raise ValueError("n_alpha must be an even integer >= 4")


def _ring_values(h, e, c_par, sample, n_alpha, basis):
    alphas, C = gyro_ring(e, c_par, sample.b, n_alpha, basis)
    vals = np.array([float(h(C[j])) for j in range(n_alpha)])
    if not np.all(np.isfinite(vals)):
        bad = alphas[~np.isfinite(vals)][0]
        raise NumericsError(f"non-finite integrand at gyrophase {bad:.6f}")
    return alphas, C, vals


def gyroaverage(h, e, c_par, sample, n_alpha=DEFAULT_N_ALPHA, basis=None):
    """Mean of h over the gyrophase circle at fixed (e, c_par)."""
    _validate_n_alpha(n_alpha)
    _, _, vals = _ring_values(h, e, c_par, sample, n_alpha, basis)
    return float(np.mean(vals))


def gyroaverage_vector(h_vec, e, c_par, sample, n_alpha=DEFAULT_N_ALPHA,
                       basis=None):
    """Gyroaverage of a vector-valued integrand."""
    _validate_n_alpha(n_alpha)
    alphas, C = gyro_ring(e, c_par, sample.b, n_alpha, basis)
    vals = np.array([np.asarray(h_vec(C[j]), dtype=float) for j in range(n_alpha)])
    if not np.all(np.isfinite(vals)):
        raise NumericsError("non-finite vector integrand on the gyrophase ring")
    return vals.mean(axis=0)


def gyro_harmonic(h, m, kind, e, c_par, sample, n_alpha=DEFAULT_N_ALPHA,
                  basis=None):
    """m-th Fourier coefficient (1/2pi) integral of sin/cos(m a) h along
    the ring."""
    _validate_n_alpha(n_alpha)
    if m >= n_alpha // 2:
        raise AliasingError(f"harmonic m = {m} needs n_alpha > {2 * m}")
    if kind not in ("sin", "cos"):
        raise ValueError("kind must be 'sin' or 'cos'")
    alphas, _, vals = _ring_values(h, e, c_par, sample, n_alpha, basis)
    w = np.sin(m * alphas) if kind == "sin" else np.cos(m * alphas)
    return float(np.mean(w * vals))


# -- the operator family ----------------------------------------------------

def apply_L(g, x, c, t, sample):
    """Fast-rotation operator: -(c x B) . grad_c g."""
    g = as_phase_function(g)
    c = np.asarray(c, dtype=float)
    return float(-np.cross(c, sample.B) @ g.grad_c(x, c, t))


def apply_T(g, x, c, t, forces, sample=None):
    """Streaming operator: c . grad_x g + F0 . grad_c g."""
    g = as_phase_function(g)
    c = np.asarray(c, dtype=float)
    F0 = np.asarray(forces.F0(x, t), dtype=float)
    return float(c @ g.grad_x(x, c, t) + F0 @ g.grad_c(x, c, t))


def apply_A(g, x, c, t, forces, sample=None):
    """Slow advection: dg/dt + u0 . grad_x g - c . ((grad u0) grad_c g)."""
    g = as_phase_function(g)
    c = np.asarray(c, dtype=float)
    u0 = np.asarray(forces.u0(x, t), dtype=float)
    Ju = forces.jac_u0(x, t)
    return float(g.dt(x, c, t) + u0 @ g.grad_x(x, c, t)
                 - c @ (Ju @ g.grad_c(x, c, t)))


def apply_D(g, x, c, t, forces, sample):
    """Next-order force term: F1 . grad_c g, with F1 perpendicular to b."""
    g = as_phase_function(g)
    c = np.asarray(c, dtype=float)
    f1 = forces.f1_checked(x, t, sample.b)
    return float(f1 @ g.grad_c(x, c, t))


def alpha_derivative_spectral(h, e, c_par, alpha, sample,
                              n_alpha=DEFAULT_N_ALPHA, basis=None):
    """Spectral d/d(alpha) of the ring samples of h, evaluated at alpha."""
    _validate_n_alpha(n_alpha)
    _, _, vals = _ring_values(h, e, c_par, sample, n_alpha, basis)
    fh = np.fft.fft(vals) / n_alpha
    k = np.fft.fftfreq(n_alpha, d=1.0 / n_alpha)
    coef = fh * (1j * k)
    if n_alpha % 2 == 0:
        coef[n_alpha // 2] = 0.0
    return float(np.real(np.sum(coef * np.exp(1j * k * alpha))))


# -- pseudo-inverse ---------------------------------------------------------

def gamma_kernel(alpha, phi):
    """Green kernel of the phase antiderivative with zero-average gauge."""
    phi = phi % (2.0 * np.pi)
    if phi < alpha % (2.0 * np.pi):
        return phi / (2.0 * np.pi)
    return phi / (2.0 * np.pi) - 1.0


def _antiderivative_coeffs(vals, magB, tol_solv):
    """tol_solv=None projects out the phase average instead of checking
    the solvability condition (for composition oracles applied to
    inputs that need not satisfy the transport constraint)."""
    n = len(vals)
    scale = float(np.max(np.abs(vals)))
    fh = np.fft.fft(vals) / n
    if scale == 0.0:
        return np.zeros(n, dtype=complex), None
    if tol_solv is not None and abs(fh[0]) > tol_solv * scale:
        raise SolvabilityError(
            f"phase average {np.real(fh[0]):.3e} exceeds solvability "
            f"tolerance {tol_solv:.1e} x max|h| = {tol_solv * scale:.3e}")
    k = np.fft.fftfreq(n, d=1.0 / n)
    coef = np.zeros(n, dtype=complex)
    nz = k != 0
    coef[nz] = fh[nz] / (1j * k[nz] * magB)
    if n % 2 == 0:
        coef[n // 2] = 0.0
    return coef, k


def pseudo_inverse(h, e, c_par, alpha, sample, n_alpha=DEFAULT_N_ALPHA,
                   basis=None, tol_solv=DEFAULT_TOL_SOLV, method="fft"):
    """Unique solution g of (fast-rotation) g = h with zero phase average.

    Requires the solvability condition: the phase average of h must
    vanish (within tol_solv relative to max |h| on the ring).

    method='fft' sums the Fourier antiderivative of the ring samples;
    method='kernel' integrates the explicit kernel, split at its jump.
    Both evaluate the same operator; 'kernel' is the slow reference.
    """
    _validate_n_alpha(n_alpha)
    if basis is None:
        basis = perp_basis(sample.b)
    _, _, vals = _ring_values(h, e, c_par, sample, n_alpha, basis)
    coef, k = _antiderivative_coeffs(vals, sample.magB, tol_solv)
    if k is None:
        return 0.0
    if method == "fft":
        return float(np.real(np.sum(coef * np.exp(1j * k * alpha))))
    if method == "kernel":
        from .velocity_frame import from_gyro

        def h_tilde(phi):
            return float(h(from_gyro(e, c_par, phi, sample.b, basis)))

        a = alpha % (2.0 * np.pi)
        lo, _ = quad(lambda p: (p / (2 * np.pi)) * h_tilde(p), 0.0, a,
                     limit=200)
        hi, _ = quad(lambda p: (p / (2 * np.pi) - 1.0) * h_tilde(p), a,
                     2.0 * np.pi, limit=200)
        return (lo + hi) / sample.magB
    raise ValueError("method must be 'fft' or 'kernel'")


def pseudo_inverse_ring(h, e, c_par, sample, n_alpha=DEFAULT_N_ALPHA,
                        basis=None, tol_solv=DEFAULT_TOL_SOLV):
    """Pseudo-inverse of h evaluated at every ring node at once.

    Returns (alphas, C, g_values); the workhorse for the brute-force
    composition oracles, which need the whole ring anyway.
    """
    _validate_n_alpha(n_alpha)
    if basis is None:
        basis = perp_basis(sample.b)
    alphas, C, vals = _ring_values(h, e, c_par, sample, n_alpha, basis)
    coef, k = _antiderivative_coeffs(vals, sample.magB, tol_solv)
    if k is None:
        return alphas, C, np.zeros(n_alpha)
    gvals = np.real(np.fft.ifft(coef * n_alpha))
    return alphas, C, gvals


# -- closed forms for the first-order flux moments --------------------------

def _grad_plus_force(dist, forces, x, e, c_par, t):
    """(grad_x + F0 d/de) G as a 3-vector."""
    F0 = np.asarray(forces.F0(x, t), dtype=float)
    return (np.asarray(dist.grad_x(x, e, c_par, t), dtype=float)
            + dist.dG_de(x, e, c_par, t) * F0)


def pi_c_gamma1_closed(dist, forces, x, e, c_par, t, config):
    """Closed form of the gyroaverage of c times the pseudo-inverse of
    the streamed distribution (the first-order perpendicular flux)."""
    sample = eval_field(config, x, t)
    w = (_grad_plus_force(dist, forces, x, e, c_par, t)
         + c_par * dist.dG_dcpar(x, e, c_par, t) * sample.curvature)
    return (e - 0.5 * c_par ** 2) / sample.magB * np.cross(sample.b, w)


def pi_c_gamma1_quadrature(dist, forces, x, e, c_par, t, config,
                           n_alpha=DEFAULT_N_ALPHA, basis=None):
    """Brute-force counterpart of :func:`pi_c_gamma1_closed`:
    gyroaverage of c times pseudo_inverse(streaming of the distribution).

    The pseudo-inverse acts on the mean-free part of the streamed
    distribution; for manufactured inputs the phase average need not
    vanish (it would for a constraint-satisfying distribution), and the
    flux moments only see the oscillating harmonics either way.
    """
    sample = eval_field(config, x, t)
    view = dist.velocity_view(config)

    def tg0(c):
        return apply_T(view, x, c, t, forces)

    _, C, gvals = pseudo_inverse_ring(tg0, e, c_par, sample, n_alpha, basis,
                                      tol_solv=None)
    return (C * gvals[:, None]).mean(axis=0)


def pi_cc_gamma1_contracted_closed(dist, forces, x, e, c_par, t, config,
                                   h_cpar=1e-3):
    """Closed form of (grad b) : d/d(c_par) of the gyroaverage of
    (c tensor c) times the pseudo-inverse of the streamed distribution."""
    sample = eval_field(config, x, t)

    def inner(cp):
        w = _grad_plus_force(dist, forces, x, e, cp, t)
        return (e - 0.5 * cp ** 2) * cp * float(sample.f_vec @ w)

    return -numdiff.d1(inner, c_par, h_cpar) / sample.magB


def pi_cc_gamma1_contracted_quadrature(dist, forces, x, e, c_par, t, config,
                                       n_alpha=DEFAULT_N_ALPHA, basis=None,
                                       h_cpar=1e-3):
    """Brute-force counterpart: FD in c_par of the ring-averaged tensor
    moment, contracted with the direction-field Jacobian."""
    sample = eval_field(config, x, t)
    view = dist.velocity_view(config)

    def tensor_moment(cp):
        def tg0(c):
            return apply_T(view, x, c, t, forces)
        _, C, gvals = pseudo_inverse_ring(tg0, e, cp, sample, n_alpha, basis,
                                          tol_solv=None)
        M = np.einsum("ji,jk,j->ik", C, C, gvals) / n_alpha
        return float(np.sum(sample.jac_b * M))

    return numdiff.d1(tensor_moment, c_par, h_cpar)


# -- closed phase averages of the operator family ---------------------------

def pi_T_closed(dist, forces, x, e, c_par, t, config):
    """Phase average of the streaming operator on a gyrophase-independent
    distribution, in expanded form."""
    sample = eval_field(config, x, t)
    F0 = np.asarray(forces.F0(x, t), dtype=float)
    G = dist.G(x, e, c_par, t)
    dGe = dist.dG_de(x, e, c_par, t)
    dGc = dist.dG_dcpar(x, e, c_par, t)
    gradG = np.asarray(dist.grad_x(x, e, c_par, t), dtype=float)
    f0b = float(F0 @ sample.b)
    return (c_par * (float(sample.b @ gradG) + G * sample.div_b)
            + c_par * f0b * dGe
            + sample.div_b * ((e - 0.5 * c_par ** 2) * dGc - c_par * G)
            + f0b * dGc)


def pi_A_closed(dist, forces, x, e, c_par, t, config):
    """Phase average of the slow-advection operator on a
    gyrophase-independent distribution, in expanded form."""
    sample = eval_field(config, x, t)
    u0 = np.asarray(forces.u0(x, t), dtype=float)
    Ju = forces.jac_u0(x, t)
    div_u = float(np.trace(Ju))
    bJub = float(sample.b @ Ju @ sample.b)
    G = dist.G(x, e, c_par, t)
    dGe = dist.dG_de(x, e, c_par, t)
    dGc = dist.dG_dcpar(x, e, c_par, t)
    gradG = np.asarray(dist.grad_x(x, e, c_par, t), dtype=float)
    dGt = dist.dG_dt(x, e, c_par, t)
    term_e1 = G + (e - 0.5 * c_par ** 2) * dGe
    term_e2 = -G + (-e + 1.5 * c_par ** 2) * dGe
    term_c = G + c_par * dGc
    return (dGt + div_u * G + float(u0 @ gradG)
            - div_u * term_e1 - bJub * (term_e2 + term_c))
