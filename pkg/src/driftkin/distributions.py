"""Built-in test distributions, analytic field profiles, and random
smooth phase-space functions for verification sweeps.

Everything here carries exact analytic partial derivatives so that the
operator evaluations under test are not polluted by differencing noise
in their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field_model import eval_field
from .gyro_ops import DistributionSpec
from .velocity_frame import perp_basis

_TWO_PI = 2.0 * np.pi


# -- scalar/vector spatial profiles with analytic derivatives ---------------

@dataclass(frozen=True)
class ScalarProfile:
    """base + lin . x + amp * sin(k . x + omega t + phase)."""

    base: float = 1.0
    lin: np.ndarray = None
    amp: float = 0.0
    k: np.ndarray = None
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lin", np.zeros(3) if self.lin is None
                           else np.asarray(self.lin, dtype=float))
        object.__setattr__(self, "k", np.zeros(3) if self.k is None
                           else np.asarray(self.k, dtype=float))

    def value(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        return (self.base + float(self.lin @ x)
                + self.amp * np.sin(float(self.k @ x) + self.omega * t
                                    + self.phase))

    def grad(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        return self.lin + self.amp * np.cos(
            float(self.k @ x) + self.omega * t + self.phase) * self.k

    def dt(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        return self.amp * self.omega * np.cos(
            float(self.k @ x) + self.omega * t + self.phase)

    def __call__(self, x, t=0.0):
        return self.value(x, t)


def constant_profile(v):
    return ScalarProfile(base=float(v))


@dataclass(frozen=True)
class VectorProfile:
    """Componentwise base + M^T x + amp_j sin(k_j . x + omega_j t)."""

    base: np.ndarray = None
    M: np.ndarray = None           # jac contribution: J[i, j] = M[i, j]
    amp: np.ndarray = None
    k: np.ndarray = None           # (3, 3): row j is the wavevector of comp j
    omega: np.ndarray = None

    def __post_init__(self):
        z3 = np.zeros(3)
        object.__setattr__(self, "base", z3 if self.base is None
                           else np.asarray(self.base, dtype=float))
        object.__setattr__(self, "M", np.zeros((3, 3)) if self.M is None
                           else np.asarray(self.M, dtype=float))
        object.__setattr__(self, "amp", z3 if self.amp is None
                           else np.asarray(self.amp, dtype=float))
        object.__setattr__(self, "k", np.zeros((3, 3)) if self.k is None
                           else np.asarray(self.k, dtype=float))
        object.__setattr__(self, "omega", z3 if self.omega is None
                           else np.asarray(self.omega, dtype=float))

    def value(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        ph = self.k @ x + self.omega * t
        return self.base + x @ self.M + self.amp * np.sin(ph)

    def jac(self, x, t=0.0):
        """J[i, j] = d v_j / d x_i."""
        x = np.asarray(x, dtype=float)
        ph = self.k @ x + self.omega * t
        # d/dx_i of amp_j sin(k_j . x) = amp_j cos(ph_j) k[j, i]
        return self.M + (self.amp * np.cos(ph))[None, :] * self.k.T

    def dt(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        ph = self.k @ x + self.omega * t
        return self.amp * self.omega * np.cos(ph)

    def __call__(self, x, t=0.0):
        return self.value(x, t)


def uniform_vector(v):
    return VectorProfile(base=np.asarray(v, dtype=float))


def random_scalar_profile(rng, base=1.0, amp=0.25, kscale=0.7):
    return ScalarProfile(base=base, amp=amp * (0.5 + rng.random()),
                         k=kscale * rng.standard_normal(3),
                         phase=_TWO_PI * rng.random())


def random_vector_profile(rng, scale=0.3, kscale=0.6):
    return VectorProfile(base=scale * rng.standard_normal(3),
                         amp=scale * rng.random(3),
                         k=kscale * rng.standard_normal((3, 3)))


# -- named test distributions (energy form) ----------------------------------

def maxwellian(n_profile=None, T=1.0):
    """Isotropic Maxwellian: n(x,t) (2 pi T)^{-3/2} exp(-e/T)."""
    n_profile = n_profile or constant_profile(1.0)
    norm = (_TWO_PI * T) ** -1.5

    def G(x, e, cp, t):
        return n_profile.value(x, t) * norm * np.exp(-e / T)

    return DistributionSpec(
        G=G,
        dG_de=lambda x, e, cp, t: -G(x, e, cp, t) / T,
        dG_dcpar=lambda x, e, cp, t: 0.0 * np.asarray(e),
        grad_x=lambda x, e, cp, t: norm * np.exp(-e / T) * n_profile.grad(x, t),
        dG_dt=lambda x, e, cp, t: norm * np.exp(-e / T) * n_profile.dt(x, t),
    )


def bi_maxwellian(n_profile=None, T_perp=1.0, T_par=1.0):
    """Gaussian with distinct perpendicular/parallel temperatures."""
    n_profile = n_profile or constant_profile(1.0)
    norm = (_TWO_PI) ** -1.5 * T_perp ** -1.0 * T_par ** -0.5

    def shape(e, cp):
        return norm * np.exp(-(e - 0.5 * cp ** 2) / T_perp
                             - 0.5 * cp ** 2 / T_par)

    def G(x, e, cp, t):
        return n_profile.value(x, t) * shape(e, cp)

    return DistributionSpec(
        G=G,
        dG_de=lambda x, e, cp, t: -G(x, e, cp, t) / T_perp,
        dG_dcpar=lambda x, e, cp, t: G(x, e, cp, t) * (cp / T_perp - cp / T_par),
        grad_x=lambda x, e, cp, t: shape(e, cp) * n_profile.grad(x, t),
        dG_dt=lambda x, e, cp, t: shape(e, cp) * n_profile.dt(x, t),
    )


def poly_gaussian(n_profile=None, T=1.0, a0=1.0, a_e=0.3, a_c=0.2):
    """Polynomial-weighted Gaussian: n (a0 + a_e e + a_c c_par^2) exp(-e/T),
    normalized so the a0 part alone integrates to n."""
    n_profile = n_profile or constant_profile(1.0)
    norm = (_TWO_PI * T) ** -1.5

    def poly(e, cp):
        return a0 + a_e * e + a_c * cp ** 2

    def G(x, e, cp, t):
        return n_profile.value(x, t) * norm * poly(e, cp) * np.exp(-e / T)

    return DistributionSpec(
        G=G,
        dG_de=lambda x, e, cp, t: n_profile.value(x, t) * norm * np.exp(-e / T)
        * (a_e - poly(e, cp) / T),
        dG_dcpar=lambda x, e, cp, t: n_profile.value(x, t) * norm
        * np.exp(-e / T) * 2.0 * a_c * cp,
        grad_x=lambda x, e, cp, t: norm * poly(e, cp) * np.exp(-e / T)
        * n_profile.grad(x, t),
        dG_dt=lambda x, e, cp, t: norm * poly(e, cp) * np.exp(-e / T)
        * n_profile.dt(x, t),
    )


_DISTRIBUTIONS = {
    "maxwellian": maxwellian,
    "bi_maxwellian": bi_maxwellian,
    "poly_gaussian": poly_gaussian,
}


def named_distribution(name, **kw):
    try:
        builder = _DISTRIBUTIONS[name]
    except KeyError:
        raise ValueError(f"unknown distribution {name!r}; valid names: "
                         + ", ".join(sorted(_DISTRIBUTIONS))) from None
    return builder(**kw)


# -- analytic moments of the bi-Maxwellian -----------------------------------

def _double_factorial(m):
    out = 1
    while m > 1:
        out *= m
        m -= 2
    return out


@dataclass(frozen=True)
class BiMaxwellianMoments:
    """Closed-form moment fields of a bi-Maxwellian over a configuration.

    moment(m, q)(x, t) = n <c_par^m> q! (T_perp/|B|)^q with Gaussian
    parallel moments; the field enters through the local |B|.
    """

    config: object
    n_profile: ScalarProfile
    T_perp: float = 1.0
    T_par: float = 1.0

    def n(self, x, t=0.0):
        return self.n_profile.value(x, t)

    def p_perp(self, x, t=0.0):
        return self.n_profile.value(x, t) * self.T_perp

    def p_par(self, x, t=0.0):
        return self.n_profile.value(x, t) * self.T_par

    def moment_value(self, m, q, x, t=0.0):
        if m < 0 or q < 0:
            return 0.0
        if m % 2 == 1:
            return 0.0
        magB = eval_field(self.config, x, t).magB
        cpar_mom = _double_factorial(m - 1) * self.T_par ** (m // 2) if m else 1.0
        mu_mom = float(math.factorial(q)) * (self.T_perp / magB) ** q
        return self.n(x, t) * cpar_mom * mu_mom

    def moment(self, m, q):
        return lambda x, t=0.0: self.moment_value(m, q, x, t)

    def distribution(self):
        return bi_maxwellian(self.n_profile, self.T_perp, self.T_par)


# -- random smooth phase-space functions -------------------------------------

class RandomPhaseFunction:
    """(p0 + p.c + c.Qc) exp(-|c|^2/(2 sigma^2)) * s(x, t), with exact
    partials; the spatial factor is a smooth sinusoid."""

    def __init__(self, rng, sigma=1.5, kscale=0.6):
        self.p0 = rng.standard_normal()
        self.p = rng.standard_normal(3)
        self.Q = 0.5 * rng.standard_normal((3, 3))
        self.sigma2 = sigma ** 2
        self.a = 0.3 + 0.4 * rng.random()
        self.k = kscale * rng.standard_normal(3)
        self.omega = rng.standard_normal()
        self.phase = _TWO_PI * rng.random()

    def _poly(self, c):
        return self.p0 + float(self.p @ c) + float(c @ self.Q @ c)

    def _gauss(self, c):
        return np.exp(-0.5 * float(c @ c) / self.sigma2)

    def _spatial(self, x, t):
        return 1.0 + self.a * np.sin(float(self.k @ x) + self.omega * t
                                     + self.phase)

    def value(self, x, c, t):
        return self._poly(c) * self._gauss(c) * self._spatial(x, t)

    def grad_c(self, x, c, t):
        c = np.asarray(c, dtype=float)
        dpoly = self.p + (self.Q + self.Q.T) @ c
        return (dpoly - self._poly(c) * c / self.sigma2) * self._gauss(c) \
            * self._spatial(x, t)

    def grad_x(self, x, c, t):
        return self._poly(c) * self._gauss(c) * self.a * np.cos(
            float(self.k @ x) + self.omega * t + self.phase) * self.k

    def dt(self, x, c, t):
        return self._poly(c) * self._gauss(c) * self.a * self.omega * np.cos(
            float(self.k @ x) + self.omega * t + self.phase)

    def __call__(self, x, c, t):
        return self.value(x, c, t)


def random_zero_average_function(rng, b, T=1.0):
    """A smooth velocity function whose gyroaverage vanishes identically.

    Built from first and second gyro-harmonics only, so the phase
    average is zero analytically for any |c_perp|, not just to
    quadrature accuracy.
    """
    b = np.asarray(b, dtype=float)

    def perp(v):
        w = v - (v @ b) * b
        return w / np.linalg.norm(w)

    e1, e2 = perp_basis(b)
    w1 = perp(rng.standard_normal(3) + 0.5 * e1)
    w2 = perp(rng.standard_normal(3) + 0.5 * e2)
    a1 = rng.standard_normal()
    a2 = rng.standard_normal()
    b1 = 0.5 * rng.standard_normal()
    b2 = 0.5 * rng.standard_normal()
    w12 = float(w1 @ w2)

    def h(c):
        c = np.asarray(c, dtype=float)
        e = 0.5 * float(c @ c)
        cp = float(c @ b)
        f1 = np.exp(-e / T) * (1.0 + b1 * cp)
        f2 = np.exp(-e / T) * (1.0 + b2 * cp)
        first = float(c @ w1)
        second = float(c @ w1) * float(c @ w2) - (e - 0.5 * cp ** 2) * w12
        return a1 * f1 * first + a2 * f2 * second

    return h
