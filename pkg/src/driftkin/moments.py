"""Velocity-space moments of gyrophase-independent distributions.

Quadratures run over a truncated box in (mu, c_par), or equivalently a
truncated region of the (energy, c_par) half-plane; Gauss-Legendre
nodes in each direction make the Gaussian-weighted moments converge
spectrally.  Truncation bounds scale with a declared reference
temperature and are validated against a tail estimate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np

from . import numdiff
from .errors import CapabilityError, TruncationError
from .field_model import eval_field
from .gyro_ops import DistributionSpec


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncation and resolution of the velocity-space quadrature.

    mu_cut and cpar_cut are in thermal units: the box is
    mu <= mu_cut * T_ref / |B| and |c_par| <= cpar_cut * sqrt(T_ref).
    """

    n_mu: int = 80
    n_cpar: int = 80
    T_ref: float = 1.0
    mu_cut: float = 40.0
    cpar_cut: float = 9.0
    max_order: int = 8
    tol_truncation: float = 1e-10

    def tail_estimate(self):
        return math.exp(-self.mu_cut) + math.exp(-0.5 * self.cpar_cut ** 2)

    def check_tail(self):
        est = self.tail_estimate()
        if est > self.tol_truncation:
            raise TruncationError(
                f"quadrature tail estimate {est:.2e} exceeds tolerance "
                f"{self.tol_truncation:.1e}; widen mu_cut/cpar_cut")


DEFAULT_QUAD = QuadratureSpec()


def _gl_nodes(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _gl_panels(breaks, counts):
    """Composite Gauss-Legendre rule over consecutive panels."""
    xs, ws = [], []
    for k in range(len(breaks) - 1):
        x, w = _gl_nodes(breaks[k], breaks[k + 1], counts[k])
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def mu_nodes(quad, magB):
    """mu quadrature: a dense core panel out to ~10 thermal widths plus a
    sparse tail panel; plain GL cannot resolve the Gaussian core when
    the truncation box is many decay lengths wide."""
    cut = quad.mu_cut * quad.T_ref / magB
    core = min(10.0 * quad.T_ref / magB, cut)
    if core >= cut:
        return _gl_nodes(0.0, cut, quad.n_mu)
    n_core = max(4, int(round(0.75 * quad.n_mu)))
    n_tail = max(4, quad.n_mu - n_core)
    return _gl_panels([0.0, core, cut], [n_core, n_tail])


def cpar_nodes(quad):
    """Symmetric composite rule for the parallel velocity."""
    cmax = quad.cpar_cut * math.sqrt(quad.T_ref)
    core = min(5.0 * math.sqrt(quad.T_ref), cmax)
    if core >= cmax:
        return _gl_nodes(-cmax, cmax, quad.n_cpar)
    n_core = max(6, int(round(0.75 * quad.n_cpar)))
    n_tail = max(3, (quad.n_cpar - n_core) // 2)
    return _gl_panels([-cmax, -core, core, cmax], [n_tail, n_core, n_tail])


def _eval_grid(fn, x, A, B, t):
    """Evaluate fn(x, A, B, t) on broadcast arrays, falling back to a loop."""
    try:
        out = np.asarray(fn(x, A, B, t), dtype=float)
        if out.shape == A.shape:
            return out
    except Exception:
        pass
    out = np.empty(A.shape)
    for idx in np.ndindex(A.shape):
        out[idx] = fn(x, float(A[idx]), float(B[idx]), t)
    return out


def _as_mu_callable(G):
    """Normalize the distribution argument to Gbar(x, mu, c_par, t),
    given either an energy-form DistributionSpec or a mu-form callable."""
    if isinstance(G, DistributionSpec):
        def gbar(x, mu, cp, t, magB):
            return G.G(x, mu * magB + 0.5 * cp ** 2, cp, t)
        return gbar, True
    def gbar(x, mu, cp, t, magB):
        return G(x, mu, cp, t)
    return gbar, False


def _mu_quadrature(G, weight, x, t, quad, sample):
    """integral of (2 pi |B|) Gbar * weight(mu, c_par) over the box."""
    quad.check_tail()
    magB = sample.magB
    gbar, _ = _as_mu_callable(G)
    mu, wmu = mu_nodes(quad, magB)
    cp, wcp = cpar_nodes(quad)
    MU, CP = np.meshgrid(mu, cp, indexing="ij")
    W = np.outer(wmu, wcp)
    vals = _eval_grid(lambda xx, a, b, tt: gbar(xx, a, b, tt, magB), x, MU, CP, t)
    return float(2.0 * np.pi * magB * np.sum(W * vals * weight(MU, CP)))


def _energy_quadrature(G, weight, x, t, quad, sample):
    """Same moment through the (energy, c_par) variables: for each c_par,
    energy runs from c_par^2/2 up to a global cap."""
    quad.check_tail()
    if not isinstance(G, DistributionSpec):
        raise CapabilityError("energy-variable quadrature needs an "
                              "energy-form DistributionSpec")
    magB = sample.magB
    cmax = quad.cpar_cut * math.sqrt(quad.T_ref)
    e_cap = quad.mu_cut * quad.T_ref + 0.5 * cmax ** 2
    cp, wcp = cpar_nodes(quad)
    total = 0.0
    n_core = max(4, int(round(0.75 * quad.n_mu)))
    n_tail = max(4, quad.n_mu - n_core)
    for j, cpj in enumerate(cp):
        e_lo = 0.5 * cpj ** 2
        e_mid = min(e_lo + 10.0 * quad.T_ref, e_cap)
        if e_mid >= e_cap:
            e, we = _gl_nodes(e_lo, e_cap, quad.n_mu)
        else:
            e, we = _gl_panels([e_lo, e_mid, e_cap], [n_core, n_tail])
        vals = _eval_grid(lambda xx, a, b, tt: G.G(xx, a, b, tt),
                          x, e, np.full_like(e, cpj), t)
        mu_eq = (e - 0.5 * cpj ** 2) / magB
        total += wcp[j] * np.sum(we * vals * weight(mu_eq, np.full_like(e, cpj)))
    return float(2.0 * np.pi * total)


def density(G, x, t=0.0, quad=DEFAULT_QUAD, config=None, sample=None,
            variables="mu"):
    """Number density: the zeroth moment of the distribution."""
    sample = sample or eval_field(config, x, t)
    integrate = _mu_quadrature if variables == "mu" else _energy_quadrature
    return integrate(G, lambda MU, CP: np.ones_like(MU), x, t, quad, sample)


def pressures(G, x, t=0.0, quad=DEFAULT_QUAD, config=None, sample=None,
              variables="mu"):
    """(p_perp, p_par, P) with P = p_perp (I - bb) + p_par bb."""
    sample = sample or eval_field(config, x, t)
    integrate = _mu_quadrature if variables == "mu" else _energy_quadrature
    p_perp = integrate(G, lambda MU, CP: MU * sample.magB, x, t, quad, sample)
    p_par = integrate(G, lambda MU, CP: CP ** 2, x, t, quad, sample)
    bb = np.outer(sample.b, sample.b)
    P = p_perp * (np.eye(3) - bb) + p_par * bb
    return p_perp, p_par, P


def general_moment(G_or_K, m, q, x, t=0.0, quad=DEFAULT_QUAD, config=None,
                   sample=None):
    """Moment with weight c_par^m mu^q; negative orders are zero by
    convention."""
    if m < 0 or q < 0:
        return 0.0
    if m + 2 * q > quad.max_order:
        raise TruncationError(
            f"moment order m + 2q = {m + 2 * q} beyond configured "
            f"max_order = {quad.max_order}")
    sample = sample or eval_field(config, x, t)
    return _mu_quadrature(G_or_K, lambda MU, CP: CP ** m * MU ** q,
                          x, t, quad, sample)


def assemble_pressure_tensor(p_perp, p_par, b):
    bb = np.outer(b, b)
    return p_perp * (np.eye(3) - bb) + p_par * bb


def div_pressure_tensor(p_perp_field, p_par_field, x, t=0.0, config=None,
                        sample=None, h=1e-3):
    """Divergence of the gyrotropic pressure tensor,

        grad p_perp + [b . grad(p_par - p_perp)
                       + (p_par - p_perp) div b] b
                    + (p_par - p_perp) (b . grad) b,

    using analytic field-aligned geometry and the scalar fields'
    gradients (analytic when available, 4th-order differences
    otherwise)."""
    sample = sample or eval_field(config, x, t)
    x = np.asarray(x, dtype=float)

    def grad_of(fld):
        if hasattr(fld, "grad"):
            return np.asarray(fld.grad(x, t), dtype=float)
        return numdiff.grad(lambda y: fld(y, t), x, h)

    gpp = grad_of(p_perp_field)
    gpl = grad_of(p_par_field)
    dp = (p_par_field(x, t) if callable(p_par_field) else p_par_field.value(x, t)) \
        - (p_perp_field(x, t) if callable(p_perp_field) else p_perp_field.value(x, t))
    aniso = gpl - gpp
    return (gpp + (float(sample.b @ aniso) + dp * sample.div_b) * sample.b
            + dp * sample.curvature)


def parallel_redundancy_residual(n_field, p_perp_field, p_par_field, x, t=0.0,
                                 config=None, h=1e-3):
    """div(p_par b) - b . (n F) + (b . grad|B| / |B|) p_perp, with the
    mean force F = div P / n built from the same fields.  Vanishes
    identically for any divergence-free configuration."""
    sample = eval_field(config, x, t)
    x = np.asarray(x, dtype=float)
    divP = div_pressure_tensor(p_perp_field, p_par_field, x, t, sample=sample,
                               h=h)
    if hasattr(p_par_field, "grad"):
        gpl = np.asarray(p_par_field.grad(x, t), dtype=float)
    else:
        gpl = numdiff.grad(lambda y: p_par_field(y, t), x, h)
    p_par = p_par_field(x, t)
    p_perp = p_perp_field(x, t)
    div_ppar_b = float(sample.b @ gpl) + p_par * sample.div_b
    return (div_ppar_b - float(sample.b @ divP)
            + float(sample.b @ sample.gradB_mag) / sample.magB * p_perp)


@dataclass
class MomentTable:
    """Moment values at one point, with quadrature metadata."""

    n: float
    p_perp: float
    p_par: float
    M: dict
    K: dict = dataclass_field(default_factory=dict)
    quadrature_meta: Optional[QuadratureSpec] = None

    def k_value(self, m, q):
        if m < 0 or q < 0:
            return 0.0
        return self.K.get((m, q), 0.0)

    def validate(self, rtol=1e-7):
        scale = max(abs(self.n), 1.0)
        if abs(self.n - self.M.get((0, 0), self.n)) > rtol * scale:
            raise ValueError("n must equal the (0,0) moment")
        if abs(self.k_value(1, 0)) > rtol * scale:
            raise ValueError("user-supplied multiplier moments must satisfy "
                             "K(1,0) = 0")
        return self


def moment_table(G, x, t=0.0, quad=DEFAULT_QUAD, config=None, orders=(),
                 K=None):
    """Tabulate n, pressures, and the requested (m, q) moments at x."""
    sample = eval_field(config, x, t)
    n = density(G, x, t, quad, sample=sample)
    p_perp, p_par, _ = pressures(G, x, t, quad, sample=sample)
    M = {(0, 0): n, (2, 0): p_par, (0, 1): p_perp / sample.magB}
    for (m, q) in orders:
        M[(m, q)] = general_moment(G, m, q, x, t, quad, sample=sample)
    Kd = {}
    if K is not None:
        for (m, q) in set(list(M) + list(orders)):
            Kd[(m, q)] = general_moment(K, m, q, x, t, quad, sample=sample)
    return MomentTable(n=n, p_perp=p_perp, p_par=p_par, M=M, K=Kd,
                       quadrature_meta=quad).validate()


def write_moment_csv(path, rows):
    """Write (x, m, q, value) rows as CSV: x1,x2,x3,m,q,value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "x3", "m", "q", "value"])
        for x, m, q, value in rows:
            writer.writerow([f"{x[0]:.17e}", f"{x[1]:.17e}", f"{x[2]:.17e}",
                             m, q, f"{value:.17e}"])
