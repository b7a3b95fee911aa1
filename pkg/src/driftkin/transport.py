"""Pointwise evaluators for the constrained drift-kinetic transport
system and its verification identities.

The transport of the conservative density calG = 2 pi |B| Gbar is

    d(calG)/dt + Sdag(calG) + Cdag(calK) = 0,      C(Gbar) = 0,

with Sdag a conservative divergence in (x, mu, c_par) and C the
advection along the fast parallel motion.  This module provides:

* ``apply_C`` / ``apply_C_dagger``: the constraint operator and its
  negative adjoint (conservative form);
* ``apply_S`` / ``apply_S_dagger``: the slow transport operator in
  advective and conservative forms, plus the drift-decomposed form;
* the explicit model residual in the (energy, c_par) variables, for
  the change-of-variables equivalence checks;
* ``moment_identity_residual``: quadrature of the transport residual
  against c_par^m mu^q minus the closed-form moment-hierarchy row;
* ``step_reduced_transport``: a conservative finite-volume stepper for
  the straight-uniform-field special case in invariant coordinates.

All spatial divergences of composite fluxes are 4th-order central
differences of analytic constituents.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np

from . import numdiff
from .errors import StabilityError
from .field_model import eval_field
from .gyro_ops import DistributionSpec, ForceInput, pi_A_closed, pi_T_closed, \
    pi_c_gamma1_closed, pi_cc_gamma1_contracted_closed
from .moments import DEFAULT_QUAD, cpar_nodes, mu_nodes

_TWO_PI = 2.0 * np.pi


# -- background bundle -------------------------------------------------------

class Background:
    """Field configuration plus the bulk velocity, electric field, and
    mean-force providers entering the transport coefficients."""

    def __init__(self, config, u=None, E=None, F=None, grad_u=None, h=1e-3):
        self.config = config
        self._u = u
        self._E = E
        self._F = F
        self._grad_u = grad_u
        self.h = h
        self._cache = {}

    @classmethod
    def force_balance(cls, config, u=None, E=None, h=1e-3):
        """Background whose mean force is E + u x B exactly (the
        zero-Mach balance)."""
        bg = cls(config, u=u, E=E, F=None, h=h)
        bg._F = bg._force_from_balance
        return bg

    @classmethod
    def from_moments(cls, config, n_field, p_perp_field, p_par_field, u=None,
                     E=None, h=1e-3):
        from .drift_kinematics import force_F

        def F(x, t):
            return force_F(n_field, p_perp_field, p_par_field, x, t,
                           sample=bg.sample(x, t), h=h)
        bg = cls(config, u=u, E=E, F=F, h=h)
        return bg

    def sample(self, x, t):
        key = (float(x[0]), float(x[1]), float(x[2]), float(t))
        hit = self._cache.get(key)
        if hit is None:
            hit = eval_field(self.config, x, t)
            if len(self._cache) > 200000:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def u(self, x, t):
        if self._u is None:
            return np.zeros(3)
        return np.asarray(self._u(x, t), dtype=float)

    def u_jac(self, x, t):
        if self._u is None:
            return np.zeros((3, 3))
        if self._grad_u is not None:
            return np.asarray(self._grad_u(x, t), dtype=float)
        if hasattr(self._u, "jac"):
            return np.asarray(self._u.jac(x, t), dtype=float)
        return numdiff.jacobian(lambda y: self._u(y, t), np.asarray(x, float),
                                self.h)

    def E(self, x, t):
        if self._E is None:
            return self.sample(x, t).E
        return np.asarray(self._E(x, t), dtype=float)

    def _force_from_balance(self, x, t):
        sample = self.sample(x, t)
        return self.E(x, t) + np.cross(self.u(x, t), sample.B)

    def F(self, x, t):
        if self._F is None:
            return np.zeros(3)
        return np.asarray(self._F(x, t), dtype=float)

    def phi(self, x, mu, t, sample=None):
        sample = sample or self.sample(x, t)
        return (self.F(x, t) - mu * sample.gradB_mag) / sample.magB

    def forces(self):
        """View as a ForceInput for the gyro-operator layer."""
        return ForceInput(F0=self.F, u0=self.u,
                          grad_u0=lambda x, t: self.u_jac(x, t))


# -- distributions in the magnetic-moment variables --------------------------

@dataclass
class MuDistribution:
    """Gbar(x, mu, c_par, t) with partials; calG = 2 pi |B| Gbar."""

    G_bar: Callable
    d_mu: Optional[Callable] = None
    d_cpar: Optional[Callable] = None
    grad_x: Optional[Callable] = None
    d_t: Optional[Callable] = None
    constraint_tol: float = 1e-8
    h: float = 1e-4

    def value(self, x, mu, c_par, t):
        return self.G_bar(x, mu, c_par, t)

    def dmu(self, x, mu, c_par, t):
        if self.d_mu is not None:
            return self.d_mu(x, mu, c_par, t)
        return numdiff.d1(lambda s: self.G_bar(x, s, c_par, t), mu, self.h)

    def dcpar(self, x, mu, c_par, t):
        if self.d_cpar is not None:
            return self.d_cpar(x, mu, c_par, t)
        return numdiff.d1(lambda s: self.G_bar(x, mu, s, t), c_par, self.h)

    def gradx(self, x, mu, c_par, t):
        if self.grad_x is not None:
            return np.asarray(self.grad_x(x, mu, c_par, t), dtype=float)
        return numdiff.grad(lambda y: self.G_bar(y, mu, c_par, t),
                            np.asarray(x, float), self.h)

    def ddt(self, x, mu, c_par, t):
        if self.d_t is not None:
            return self.d_t(x, mu, c_par, t)
        return numdiff.d1(lambda s: self.G_bar(x, mu, c_par, s), t, self.h)

    def cal_G(self, config):
        """The conservative density 2 pi |B| Gbar as a plain callable."""
        def calg(x, mu, c_par, t):
            return _TWO_PI * eval_field(config, x, t).magB \
                * self.G_bar(x, mu, c_par, t)
        return calg

    @classmethod
    def from_energy_spec(cls, spec: DistributionSpec, config):
        """Change of variables e = mu |B|(x, t) + c_par^2/2, with exact
        chain-rule partials."""
        def coords(x, mu, cp, t):
            sample = eval_field(config, x, t)
            return sample, mu * sample.magB + 0.5 * cp ** 2

        def g(x, mu, cp, t):
            _, e = coords(x, mu, cp, t)
            return spec.G(x, e, cp, t)

        def dmu(x, mu, cp, t):
            sample, e = coords(x, mu, cp, t)
            return sample.magB * spec.dG_de(x, e, cp, t)

        def dcp(x, mu, cp, t):
            _, e = coords(x, mu, cp, t)
            return spec.dG_dcpar(x, e, cp, t) + cp * spec.dG_de(x, e, cp, t)

        def gx(x, mu, cp, t):
            sample, e = coords(x, mu, cp, t)
            return (np.asarray(spec.grad_x(x, e, cp, t), dtype=float)
                    + mu * spec.dG_de(x, e, cp, t) * sample.gradB_mag)

        def gt(x, mu, cp, t):
            sample, e = coords(x, mu, cp, t)
            return (spec.dG_dt(x, e, cp, t)
                    + mu * sample.magB * sample.dt_lnB * spec.dG_de(x, e, cp, t))

        return cls(G_bar=g, d_mu=dmu, d_cpar=dcp, grad_x=gx, d_t=gt)


@dataclass
class MultiplierSpec:
    """Lagrange-multiplier density calK(x, mu, c_par, t) of the parallel
    constraint; taken as validated input, never solved for."""

    cal_K: Callable
    flux_checked: bool = False

    def flux_residual(self, config, x, t=0.0, quad=DEFAULT_QUAD):
        """integral of calK c_par dmu dc_par (must vanish)."""
        sample = eval_field(config, x, t)
        mu, wmu = _gl_nodes(0.0, quad.mu_cut * quad.T_ref / sample.magB,
                            quad.n_mu)
        cp, wcp = _gl_nodes(-quad.cpar_cut * np.sqrt(quad.T_ref),
                            quad.cpar_cut * np.sqrt(quad.T_ref), quad.n_cpar)
        tot = 0.0
        for i, m in enumerate(mu):
            for j, c in enumerate(cp):
                tot += wmu[i] * wcp[j] * self.cal_K(x, m, c, t) * c
        return tot


def zero_multiplier():
    return MultiplierSpec(cal_K=lambda x, mu, cp, t: 0.0, flux_checked=True)


# -- constraint operators ----------------------------------------------------

def apply_C(dist: MuDistribution, x, mu, c_par, t, background) -> float:
    """Advection along the fast parallel motion:
    c_par b . grad_x G + b . (F - mu grad|B|) dG/dc_par."""
    sample = background.sample(x, t)
    drive = float(sample.b @ (background.F(x, t) - mu * sample.gradB_mag))
    return (c_par * float(sample.b @ dist.gradx(x, mu, c_par, t))
            + drive * dist.dcpar(x, mu, c_par, t))


def apply_C_dagger(cal_K, x, mu, c_par, t, background, h=1e-3) -> float:
    """Conservative form: div(c_par calK b) + d/dc_par((B . Phi) calK)."""
    x = np.asarray(x, dtype=float)

    def spatial_flux(y):
        sample = background.sample(y, t)
        return c_par * cal_K(y, mu, c_par, t) * sample.b

    div_term = numdiff.divergence(spatial_flux, x, h)
    sample = background.sample(x, t)

    def cpar_flux(cp):
        drive = float(sample.B @ background.phi(x, mu, t, sample))
        return drive * cal_K(x, mu, cp, t)

    return float(div_term + numdiff.d1(cpar_flux, c_par, h))


def constraint_residual_energy(dist: DistributionSpec, x, e, c_par, t,
                               background) -> float:
    """The parallel constraint in the (energy, c_par) variables:
    (grad_x + F d/de) . (c_par G b) + (div b) d/dc_par((e - c_par^2/2) G)
    + (F . b) dG/dc_par."""
    forces = background.forces()
    return pi_T_closed(dist, forces, x, e, c_par, t, background.config)


# -- slow transport operator -------------------------------------------------

def spatial_flux_velocity(background, x, mu, c_par, t):
    """The spatial flux velocity of the slow transport operator:
    u + mu curl b - b x Phi + (c_par^2/|B| - mu) f."""
    x = np.asarray(x, dtype=float)
    sample = background.sample(x, t)
    phi = (background.F(x, t) - mu * sample.gradB_mag) / sample.magB
    return (background.u(x, t) + mu * sample.curl_b - np.cross(sample.b, phi)
            + (c_par ** 2 / sample.magB - mu) * sample.f_vec)


def _flux_coefficients(background, x, mu, c_par, t, h=None):
    """Shared coefficients (V_x, a_c, a_mu) of the slow transport flux."""
    h = h or background.h
    x = np.asarray(x, dtype=float)
    sample = background.sample(x, t)
    F = background.F(x, t)
    phi = (F - mu * sample.gradB_mag) / sample.magB
    V_x = (background.u(x, t) + mu * sample.curl_b - np.cross(sample.b, phi)
           + (c_par ** 2 / sample.magB - mu) * sample.f_vec)
    Ju = background.u_jac(x, t)
    bJub = float(sample.b @ Ju @ sample.b)
    div_u = float(np.trace(Ju))
    div_f = numdiff.divergence(lambda y: background.sample(y, t).f_vec, x, h)

    def bxphi(y):
        s = background.sample(y, t)
        p = (background.F(y, t) - mu * s.gradB_mag) / s.magB
        return np.cross(s.B, p)

    div_BxPhi = numdiff.divergence(bxphi, x, h)
    phif = float(phi @ sample.f_vec)
    a_c = -bJub + mu * div_f + phif
    dln = sample.dt_lnB + float(background.u(x, t) @ sample.gradB_mag) \
        / sample.magB
    a_mu = (-dln - div_u + bJub + div_BxPhi / sample.magB
            - (c_par ** 2 / sample.magB) * div_f - phif)
    return V_x, a_c, a_mu


def apply_S(dist: MuDistribution, x, mu, c_par, t, background) -> float:
    """Advective form: V_x . grad G + a_c c_par dG/dc_par
    + a_mu mu dG/dmu."""
    V_x, a_c, a_mu = _flux_coefficients(background, x, mu, c_par, t)
    return float(V_x @ dist.gradx(x, mu, c_par, t)
                 + a_c * c_par * dist.dcpar(x, mu, c_par, t)
                 + a_mu * mu * dist.dmu(x, mu, c_par, t))


def apply_S_dagger(cal_G, x, mu, c_par, t, background, h=1e-3) -> float:
    """Conservative form: div(V_x calG) + d/dc_par(a_c c_par calG)
    + d/dmu(a_mu mu calG)."""
    x = np.asarray(x, dtype=float)

    def spatial_flux(y):
        return spatial_flux_velocity(background, y, mu, c_par, t) \
            * cal_G(y, mu, c_par, t)

    div_x = numdiff.divergence(spatial_flux, x, h)
    _, a_c, _ = _flux_coefficients(background, x, mu, c_par, t)

    def cpar_flux(cp):
        return a_c * cp * cal_G(x, mu, cp, t)

    d_cpar = numdiff.d1(cpar_flux, c_par, h)

    def mu_flux(m):
        _, _, a_mu = _flux_coefficients(background, x, m, c_par, t)
        return a_mu * m * cal_G(x, m, c_par, t)

    d_mu = numdiff.d1(mu_flux, mu, h)
    return float(div_x + d_cpar + d_mu)


def apply_S_dagger_drift_form(cal_G, x, mu, c_par, t, background,
                              h=1e-3) -> float:
    """The same conservative operator written through the classical
    drifts; algebraically identical when the mean force satisfies the
    zero-Mach balance F = E + u x B."""
    from .drift_kinematics import drift_velocities

    x = np.asarray(x, dtype=float)

    def drifts_at(y, m):
        s = background.sample(y, t)
        return s, drift_velocities(y, t, c_par=c_par, mu=m,
                                   E=background.E(y, t), sample=s)

    def u_par(y):
        s = background.sample(y, t)
        return float(background.u(y, t) @ s.b)

    def spatial_flux(y):
        s, dset = drifts_at(y, mu)
        return dset.spatial_sum(u_par(y), s.b) * cal_G(y, mu, c_par, t)

    div_x = numdiff.divergence(spatial_flux, x, h)

    sample = background.sample(x, t)
    gradlnB = sample.gradB_mag / sample.magB
    _, dset = drifts_at(x, mu)
    b_grad_upar = float(sample.b @ numdiff.grad(u_par, x, h))
    div_gd_dpar = numdiff.divergence(
        lambda y: drifts_at(y, mu)[1].V_gd + drifts_at(y, mu)[1].V_dpar, x, h)
    a_c = (-b_grad_upar - div_gd_dpar
           + float(sample.curvature @ dset.V_ed)
           + float(gradlnB @ (dset.V_dpar - dset.V_gd)))

    def cpar_flux(cp):
        return a_c * cp * cal_G(x, mu, cp, t)

    d_cpar = numdiff.d1(cpar_flux, c_par, h)

    def mu_flux(m):
        s, dset_m = drifts_at(x, m)
        div_ed = numdiff.divergence(lambda y: drifts_at(y, m)[1].V_ed, x, h)
        div_dpar = numdiff.divergence(lambda y: drifts_at(y, m)[1].V_dpar,
                                      x, h)
        a_mu = (-s.dt_lnB - float(s.curvature @ dset_m.V_ed) - div_ed
                + (c_par ** 2 / (m * s.magB)) * div_dpar
                - float(gradlnB @ (dset_m.V_ed + dset_m.V_dpar)))
        return a_mu * m * cal_G(x, m, c_par, t)

    d_mu = numdiff.d1(mu_flux, mu, h)
    return float(div_x + d_cpar + d_mu)


def transport_residual(cal_G, cal_K, x, mu, c_par, t, background, dGdt=None,
                       h=1e-3, return_terms=False):
    """Pointwise residual d(calG)/dt + Sdag(calG) + Cdag(calK)."""
    if dGdt is not None:
        dt_term = float(dGdt(x, mu, c_par, t))
    else:
        dt_term = numdiff.d1(lambda s: cal_G(x, mu, c_par, s), t, h)
    s_term = apply_S_dagger(cal_G, x, mu, c_par, t, background, h)
    c_term = 0.0 if cal_K is None else \
        apply_C_dagger(cal_K, x, mu, c_par, t, background, h)
    total = dt_term + s_term + c_term
    if return_terms:
        return total, {"dt": dt_term, "transport": s_term,
                       "multiplier": c_term}
    return total


# -- explicit model in the (energy, c_par) variables --------------------------

def explicit_model_residual_energy(dist: DistributionSpec, x, e, c_par, t,
                                   background, k_dist=None, h=1e-3) -> float:
    """Left side of the explicit limit model in the (energy, c_par)
    variables; equals the (mu, c_par) residual dG/dt + S G + C K after
    the change of variables, pointwise for arbitrary inputs."""
    forces = background.forces()
    config = background.config
    x = np.asarray(x, dtype=float)
    t1 = pi_A_closed(dist, forces, x, e, c_par, t, config)

    def w_vec(y, ee):
        return pi_c_gamma1_closed(dist, forces, y, ee, c_par, t, config)

    div_w = numdiff.divergence(lambda y: w_vec(y, e), x, h)
    F = np.asarray(forces.F0(x, t), dtype=float)
    dw_de = np.array([numdiff.d1(lambda ee, k=k: w_vec(x, ee)[k], e, h)
                      for k in range(3)])
    t2 = div_w + float(F @ dw_de)
    t3 = pi_cc_gamma1_contracted_closed(dist, forces, x, e, c_par, t, config,
                                        h_cpar=h)
    t4 = 0.0 if k_dist is None else \
        pi_T_closed(k_dist, forces, x, e, c_par, t, config)
    return float(t1 + t2 + t3 + t4)


def mu_model_residual(dist: MuDistribution, x, mu, c_par, t, background,
                      k_dist: Optional[MuDistribution] = None) -> float:
    """dG/dt + S G + C K in the (mu, c_par) variables (advective form)."""
    out = dist.ddt(x, mu, c_par, t) + apply_S(dist, x, mu, c_par, t,
                                              background)
    if k_dist is not None:
        out += apply_C(k_dist, x, mu, c_par, t, background)
    return float(out)


# -- moment hierarchy ---------------------------------------------------------

def _moment_or_zero(provider, m, q):
    if m < 0 or q < 0:
        return lambda x, t: 0.0
    return provider(m, q)


def moment_identity_residual(cal_G, cal_K, m, q, x, t, background,
                             moment_provider, k_moment_provider=None,
                             quad=None, dGdt=None, h=1e-3):
    """Quadrature of the transport residual against c_par^m mu^q, minus
    the closed-form moment-hierarchy row built from the moment fields.

    Both sides are identities in the distribution, so the difference
    isolates implementation errors in the conservative transport
    operator against the independently coded moment algebra.
    """
    quad = quad or DEFAULT_QUAD
    x = np.asarray(x, dtype=float)
    sample = background.sample(x, t)

    # Side 1: velocity-space quadrature of the pointwise residual.
    mus, wmu = mu_nodes(quad, sample.magB)
    cps, wcp = cpar_nodes(quad)
    lhs_quad = 0.0
    for i, mv in enumerate(mus):
        for j, cv in enumerate(cps):
            r = transport_residual(cal_G, cal_K, x, mv, cv, t, background,
                                   dGdt=dGdt, h=h)
            lhs_quad += wmu[i] * wcp[j] * r * cv ** m * mv ** q

    # Side 2: the closed moment-hierarchy row.
    Ms = {d: _moment_or_zero(moment_provider, m + d[0], q + d[1])
          for d in ((0, 0), (0, 1), (2, 0))}
    if k_moment_provider is None:
        def k_moment_provider(mm, qq):
            return lambda xx, tt: 0.0
    K_up = _moment_or_zero(k_moment_provider, m + 1, q)
    K_dn = _moment_or_zero(k_moment_provider, m - 1, q)
    K_dn1 = _moment_or_zero(k_moment_provider, m - 1, q + 1)

    u = background.u(x, t)
    F = background.F(x, t)
    Ju = background.u_jac(x, t)
    bJub = float(sample.b @ Ju @ sample.b)
    div_u = float(np.trace(Ju))
    gradlnB = sample.gradB_mag / sample.magB

    def fld(y):
        return background.sample(y, t)

    def spatial_flux(y):
        s = fld(y)
        Fy = background.F(y, t)
        v1 = background.u(y, t) - np.cross(s.b, Fy) / s.magB
        curl_b_over_B = (s.curl_b / s.magB
                         - np.cross(s.gradB_mag, s.b) / s.magB ** 2)
        v2 = s.magB * curl_b_over_B - s.f_vec
        v3 = s.f_vec / s.magB
        return (v1 * Ms[(0, 0)](y, t) + v2 * Ms[(0, 1)](y, t)
                + v3 * Ms[(2, 0)](y, t))

    div_flux = numdiff.divergence(spatial_flux, x, h)
    div_f = numdiff.divergence(lambda y: fld(y).f_vec, x, h)
    div_bxF = numdiff.divergence(
        lambda y: np.cross(fld(y).b, background.F(y, t)), x, h)
    div_bxgradB = numdiff.divergence(
        lambda y: np.cross(fld(y).b, fld(y).gradB_mag), x, h)
    dtlnB_adv = sample.dt_lnB + float(u @ gradlnB)
    c00 = ((m - q) * bJub - (m - q) * float(F @ sample.f_vec) / sample.magB
           + q * dtlnB_adv + q * div_u - (q / sample.magB) * div_bxF)
    c01 = (-m * div_f + (m - q) * float(gradlnB @ sample.f_vec)
           + (q / sample.magB) * div_bxgradB)
    c20 = (q / sample.magB) * div_f
    dtM = numdiff.d1(lambda s: Ms[(0, 0)](x, s), t, h)
    div_Kb = numdiff.divergence(
        lambda y: K_up(y, t) * fld(y).b, x, h)
    lhs_closed = (dtM + div_flux
                  + c00 * Ms[(0, 0)](x, t) + c01 * Ms[(0, 1)](x, t)
                  + c20 * Ms[(2, 0)](x, t)
                  + div_Kb - m * float(sample.b @ F) * K_dn(x, t)
                  + m * float(sample.b @ sample.gradB_mag) * K_dn1(x, t))
    return lhs_quad, lhs_closed, lhs_quad - lhs_closed


def moment_constraint_row(m, q, x, t, background, moment_provider, h=1e-3):
    """Closed form of the constraint row:
    div(M_{m+1,q} b) - m (b.F) M_{m-1,q} + m (b.grad|B|) M_{m-1,q+1}."""
    x = np.asarray(x, dtype=float)
    sample = background.sample(x, t)
    F = background.F(x, t)
    M_up = _moment_or_zero(moment_provider, m + 1, q)
    M_dn = _moment_or_zero(moment_provider, m - 1, q)
    M_dn1 = _moment_or_zero(moment_provider, m - 1, q + 1)
    div_Mb = numdiff.divergence(
        lambda y: M_up(y, t) * background.sample(y, t).b, x, h)
    return (div_Mb - m * float(sample.b @ F) * M_dn(x, t)
            + m * float(sample.b @ sample.gradB_mag) * M_dn1(x, t))


def mass_conservation_display(x, t, background, n_field, h=1e-3):
    """dn/dt + div(n u), the reduced form of the density-moment row."""
    x = np.asarray(x, dtype=float)
    dtn = numdiff.d1(lambda s: n_field(x, s), t, h)
    div_nu = numdiff.divergence(
        lambda y: n_field(y, t) * background.u(y, t), x, h)
    return dtn + div_nu


# -- adjointness of the constraint pair ---------------------------------------

def adjoint_pairing_residual(k_dist: MuDistribution, f_dist: MuDistribution,
                             background, box, t=0.0, n_x=24, quad=None):
    """<Cdag K, F> + <K, C F> over a box times the velocity domain.

    Vanishes (to quadrature accuracy) whenever the integrands decay at
    the box boundary, expressing that C is the negative adjoint of
    Cdag.
    """
    quad = quad or DEFAULT_QUAD
    (lo, hi) = box
    axes = [_gl_nodes(lo[i], hi[i], n_x) for i in range(3)]
    cal_K = k_dist.cal_G(background.config)
    total = 0.0
    for i, (xi, wi) in enumerate(zip(*axes[0])):
        for j, (yj, wj) in enumerate(zip(*axes[1])):
            for k, (zk, wk) in enumerate(zip(*axes[2])):
                x = np.array([xi, yj, zk])
                sample = background.sample(x, t)
                mu_nodes, wmu = _gl_nodes(
                    0.0, quad.mu_cut * quad.T_ref / sample.magB, quad.n_mu)
                cp_nodes, wcp = _gl_nodes(
                    -quad.cpar_cut * np.sqrt(quad.T_ref),
                    quad.cpar_cut * np.sqrt(quad.T_ref), quad.n_cpar)
                for a, mv in enumerate(mu_nodes):
                    for bb, cv in enumerate(cp_nodes):
                        w = wi * wj * wk * wmu[a] * wcp[bb]
                        cdk = apply_C_dagger(cal_K, x, mv, cv, t, background)
                        cf = apply_C(f_dist, x, mv, cv, t, background)
                        total += w * (cdk * f_dist.value(x, mv, cv, t)
                                      + cal_K(x, mv, cv, t) * cf)
    return total


# -- reduced stepper (straight uniform field) ---------------------------------

def step_reduced_transport(G0, extent, drift, dt, n_steps, cfl_max=0.5):
    """Conservative upwind finite-volume advection of cell averages.

    Covers the straight-uniform-field case in invariant coordinates:
    with b = z-hat and z-independent, constraint-satisfying data, the
    transport reduces to a 2-D drift advection of each (mu, c_par)
    slice across the field.  ``G0`` has shape (nx, ny) or
    (nx, ny, ...) with trailing slice axes; ``drift`` maps a face
    midpoint (x1, x2) to the 2-vector drift velocity.  Total mass is
    conserved to rounding per step by construction.
    """
    G = np.array(G0, dtype=float, copy=True)
    nx, ny = G.shape[:2]
    Lx, Ly = extent
    dx, dy = Lx / nx, Ly / ny
    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy
    # Face-normal velocities: vx on the (i+1/2, j) faces, vy on (i, j+1/2).
    vx = np.empty((nx, ny))
    vy = np.empty((nx, ny))
    for i in range(nx):
        for j in range(ny):
            vx[i, j] = float(np.asarray(drift((i + 1) * dx % Lx, yc[j]))[0])
            vy[i, j] = float(np.asarray(drift(xc[i], (j + 1) * dy % Ly))[1])
    cfl = (np.max(np.abs(vx)) / dx + np.max(np.abs(vy)) / dy) * dt
    if cfl > cfl_max:
        raise StabilityError(f"CFL number {cfl:.3f} exceeds {cfl_max}")
    extra = (1,) * (G.ndim - 2)
    vxp = np.maximum(vx, 0.0).reshape(nx, ny, *extra)
    vxm = np.minimum(vx, 0.0).reshape(nx, ny, *extra)
    vyp = np.maximum(vy, 0.0).reshape(nx, ny, *extra)
    vym = np.minimum(vy, 0.0).reshape(nx, ny, *extra)
    for _ in range(n_steps):
        fx = vxp * G + vxm * np.roll(G, -1, axis=0)
        fy = vyp * G + vym * np.roll(G, -1, axis=1)
        G = G - dt / dx * (fx - np.roll(fx, 1, axis=0)) \
            - dt / dy * (fy - np.roll(fy, 1, axis=1))
    return G
