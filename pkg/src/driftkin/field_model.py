"""Analytic electromagnetic field configurations and field-line tracing.

Four built-in field families are provided, each exercising a distinct
geometric feature:

* ``uniform``       -- straight homogeneous field (zero geometry),
* ``gradient_slab`` -- straight field with a transverse |B| gradient,
* ``screw_pinch``   -- helical field with curvature and twist, closed
                       field lines on a z-periodic cylinder,
* ``axisymmetric_mirror`` -- field strength growing along the axis,
                       producing a mirror force.

Built-ins carry exact analytic first derivatives; ``user_defined``
configurations fall back to 4th-order central differences with step
``h_fd``.  Configurations are immutable and all evaluations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import numdiff
from .errors import DegenerateFieldError, DomainError

MAGB_FLOOR = 1e-12

KINDS = ("uniform", "gradient_slab", "screw_pinch", "axisymmetric_mirror",
         "user_defined")

_ZHAT = np.array([0.0, 0.0, 1.0])


def _zero_e(x, t):
    return np.zeros(3)


@dataclass(frozen=True)
class ElectricSpec:
    """Electric field with an optional analytic time derivative."""

    value: Callable = _zero_e
    dt: Optional[Callable] = None

    def dt_value(self, x, t, h=1e-5):
        if self.dt is not None:
            return np.asarray(self.dt(x, t), dtype=float)
        return np.array([numdiff.d1(lambda s: np.asarray(self.value(x, s))[k], t, h)
                         for k in range(3)])


def uniform_e(E0):
    E0 = np.asarray(E0, dtype=float)
    return ElectricSpec(lambda x, t: E0, lambda x, t: np.zeros(3))


def oscillating_e(E0, omega):
    """E(x, t) = E0 * sin(omega * t)."""
    E0 = np.asarray(E0, dtype=float)
    return ElectricSpec(lambda x, t: E0 * np.sin(omega * t),
                        lambda x, t: E0 * omega * np.cos(omega * t))


@dataclass(frozen=True)
class FieldSample:
    """Field values and first-order geometry at one point.

    ``jac_b[i, j]`` is d(b_j)/d(x_i); ``curvature`` is (b . grad) b and
    ``f_vec`` is b x curvature (the binormal direction scaled by the
    curvature magnitude).
    """

    B: np.ndarray
    E: np.ndarray
    b: np.ndarray
    magB: float
    gradB_mag: np.ndarray
    jac_b: np.ndarray
    div_b: float
    curl_b: np.ndarray
    curvature: np.ndarray
    f_vec: np.ndarray
    dt_b: np.ndarray
    dt_lnB: float
    dt_E: np.ndarray


@dataclass(frozen=True)
class FieldConfiguration:
    """An analytic electromagnetic field family with derivatives.

    Use the module-level constructors (:func:`uniform_field`,
    :func:`gradient_slab`, :func:`screw_pinch`,
    :func:`axisymmetric_mirror`, :func:`user_field`) rather than
    building instances by hand.
    """

    kind: str
    parameters: dict
    electric: ElectricSpec = dataclass_field(default_factory=ElectricSpec)
    b_callable: Optional[Callable] = None   # user_defined only: B(x, t)
    h_fd: float = 1e-5
    bounds: Optional[tuple] = None          # ((lo3,), (hi3,)) box or None
    z_period: Optional[float] = None
    mod_amp: float = 0.0
    mod_freq: float = 0.0
    rotation_freq: float = 0.0              # uniform only: b rotates in x-z

    # -- time modulation of |B| -------------------------------------------
    def _mod(self, t):
        if self.mod_amp == 0.0:
            return 1.0, 0.0
        m = 1.0 + self.mod_amp * np.sin(self.mod_freq * t)
        dm = self.mod_amp * self.mod_freq * np.cos(self.mod_freq * t)
        return m, dm

    def contains(self, x):
        if self.bounds is None:
            return True
        lo, hi = self.bounds
        return bool(np.all(np.asarray(x) >= lo) and np.all(np.asarray(x) <= hi))

    # -- raw field and Jacobian (before time modulation) ------------------
    def _base_field(self, x, t):
        """Return (B, JB) with JB[i, j] = d B_j / d x_i."""
        p = self.parameters
        kind = self.kind
        if kind == "uniform":
            B0 = p["B0"]
            if self.rotation_freq != 0.0:
                th = self.rotation_freq * t
                bdir = np.array([np.sin(th), 0.0, np.cos(th)])
            else:
                bdir = _ZHAT
            return B0 * bdir, np.zeros((3, 3))
        if kind == "gradient_slab":
            B0, kappa = p["B0"], p["kappa"]
            fac = 1.0 + kappa * x[0]
            B = np.array([0.0, 0.0, B0 * fac])
            JB = np.zeros((3, 3))
            JB[0, 2] = B0 * kappa
            return B, JB
        if kind == "screw_pinch":
            B0, Bth, a = p["B0"], p["Btheta"], p["a"]
            rho = x[0] ** 2 + x[1] ** 2
            h = 1.0 / (1.0 + rho / a ** 2)
            hp = -h * h / a ** 2
            B = np.array([-Bth * h * x[1], Bth * h * x[0], B0])
            JB = np.zeros((3, 3))
            JB[0, 0] = -Bth * hp * 2 * x[0] * x[1]
            JB[1, 0] = -Bth * (h + hp * 2 * x[1] ** 2)
            JB[0, 1] = Bth * (h + hp * 2 * x[0] ** 2)
            JB[1, 1] = Bth * hp * 2 * x[1] * x[0]
            return B, JB
        if kind == "axisymmetric_mirror":
            B0, L = p["B0"], p["L"]
            c = B0 / L ** 2
            B = np.array([-c * x[2] * x[0], -c * x[2] * x[1],
                          B0 + c * x[2] ** 2])
            JB = np.zeros((3, 3))
            JB[0, 0] = -c * x[2]
            JB[1, 1] = -c * x[2]
            JB[2, 0] = -c * x[0]
            JB[2, 1] = -c * x[1]
            JB[2, 2] = 2 * c * x[2]
            return B, JB
        if kind == "user_defined":
            B = np.asarray(self.b_callable(x, t), dtype=float)
            JB = numdiff.jacobian(lambda y: self.b_callable(y, t), x, self.h_fd)
            return B, JB
        raise ValueError(f"unknown field kind {kind!r}")

    def b_field(self, x, t):
        """Magnetic field vector at (x, t), including time modulation."""
        m, _ = self._mod(t)
        B, _ = self._base_field(np.asarray(x, dtype=float), t)
        return m * B


def eval_field(config: FieldConfiguration, x, t=0.0) -> FieldSample:
    """Evaluate the field and its full first-order geometry at (x, t)."""
    x = np.asarray(x, dtype=float)
    if not config.contains(x):
        raise DomainError(f"point {x} outside the declared domain")
    m, dm = config._mod(t)
    B0, JB = config._base_field(x, t)
    B = m * B0
    JB = m * JB
    magB = float(np.linalg.norm(B))
    if magB < MAGB_FLOOR:
        raise DegenerateFieldError(f"|B| = {magB:.3e} below floor at x = {x}")
    b = B / magB
    gradB_mag = JB @ B / magB
    jac_b = JB / magB - np.outer(gradB_mag, B) / magB ** 2
    div_b = float(np.trace(jac_b))
    curl_b = np.array([jac_b[1, 2] - jac_b[2, 1],
                       jac_b[2, 0] - jac_b[0, 2],
                       jac_b[0, 1] - jac_b[1, 0]])
    curvature = b @ jac_b
    f_vec = np.cross(b, curvature)
    if config.kind == "uniform" and config.rotation_freq != 0.0:
        th = config.rotation_freq * t
        dt_b = config.rotation_freq * np.array([np.cos(th), 0.0, -np.sin(th)])
    else:
        dt_b = np.zeros(3)
    dt_lnB = dm / m
    E = np.asarray(config.electric.value(x, t), dtype=float)
    dt_E = config.electric.dt_value(x, t)
    return FieldSample(B=B, E=E, b=b, magB=magB, gradB_mag=gradB_mag,
                       jac_b=jac_b, div_b=div_b, curl_b=curl_b,
                       curvature=curvature, f_vec=f_vec, dt_b=dt_b,
                       dt_lnB=dt_lnB, dt_E=dt_E)


# -- constructors ----------------------------------------------------------

def uniform_field(B0=1.0, electric=None, z_period=None, rotation_freq=0.0,
                  mod_amp=0.0, mod_freq=0.0):
    return FieldConfiguration("uniform", {"B0": float(B0)},
                              electric=electric or ElectricSpec(),
                              z_period=z_period, rotation_freq=rotation_freq,
                              mod_amp=mod_amp, mod_freq=mod_freq)


def gradient_slab(B0=1.0, kappa=0.5, electric=None, mod_amp=0.0, mod_freq=0.0):
    # Domain excludes the |B| = 0 plane: 1 + kappa*x1 must stay positive.
    if kappa > 0:
        lo = np.array([(-1.0 + 1e-6) / kappa, -np.inf, -np.inf])
        bounds = (lo, np.full(3, np.inf))
    elif kappa < 0:
        hi = np.array([(-1.0 + 1e-6) / kappa, np.inf, np.inf])
        bounds = (np.full(3, -np.inf), hi)
    else:
        bounds = None
    return FieldConfiguration("gradient_slab",
                              {"B0": float(B0), "kappa": float(kappa)},
                              electric=electric or ElectricSpec(),
                              bounds=bounds, mod_amp=mod_amp, mod_freq=mod_freq)


def screw_pinch(B0=1.0, Btheta=2.0, a=1.0, z_period=2 * np.pi, electric=None,
                mod_amp=0.0, mod_freq=0.0):
    return FieldConfiguration("screw_pinch",
                              {"B0": float(B0), "Btheta": float(Btheta),
                               "a": float(a)},
                              electric=electric or ElectricSpec(),
                              z_period=float(z_period),
                              mod_amp=mod_amp, mod_freq=mod_freq)


def axisymmetric_mirror(B0=1.0, L=1.0, electric=None, mod_amp=0.0,
                        mod_freq=0.0):
    return FieldConfiguration("axisymmetric_mirror",
                              {"B0": float(B0), "L": float(L)},
                              electric=electric or ElectricSpec(),
                              mod_amp=mod_amp, mod_freq=mod_freq)


def user_field(b_callable, electric=None, h_fd=1e-5, bounds=None,
               z_period=None):
    return FieldConfiguration("user_defined", {}, b_callable=b_callable,
                              electric=electric or ElectricSpec(), h_fd=h_fd,
                              bounds=bounds, z_period=z_period)


def from_kind(kind, params=None, **kw):
    """Build a configuration from a kind name and a flat parameter map."""
    params = dict(params or {})
    if kind == "uniform":
        return uniform_field(B0=params.pop("B0", 1.0), **kw)
    if kind == "gradient_slab":
        return gradient_slab(B0=params.pop("B0", 1.0),
                             kappa=params.pop("kappa", 0.5), **kw)
    if kind == "screw_pinch":
        return screw_pinch(B0=params.pop("B0", 1.0),
                           Btheta=params.pop("Btheta", 2.0),
                           a=params.pop("a", 1.0),
                           z_period=params.pop("z_period", 2 * np.pi), **kw)
    if kind == "axisymmetric_mirror":
        return axisymmetric_mirror(B0=params.pop("B0", 1.0),
                                   L=params.pop("L", 1.0), **kw)
    raise ValueError(f"unknown field kind {kind!r}; valid kinds: "
                     + ", ".join(k for k in KINDS if k != "user_defined"))


# -- field lines -----------------------------------------------------------

@dataclass
class FieldLine:
    """A discretized magnetic field line parametrized by arc length."""

    nodes: np.ndarray          # (N, 3)
    s: np.ndarray              # (N,)
    samples: list              # per-node FieldSample
    closed: bool
    period: Optional[float]
    exited: bool
    config: FieldConfiguration
    t: float

    def spline(self):
        # Built on the raw (unwrapped) trajectory; closed-line consumers
        # handle periodicity through `period`.
        return CubicSpline(self.s, self.nodes, axis=0)

    def position(self, s):
        return self.spline()(s)


def trace_field_line(config: FieldConfiguration, x0, t=0.0, max_arc=10.0,
                     tol=1e-9, n_nodes=257) -> FieldLine:
    """Trace the field line through x0, following dX/ds = b.

    Closure is detected when the trajectory returns to x0 (modulo the
    configuration's z-period, when one is declared) within ``tol`` of
    the start with an aligned tangent.  Lines that leave a bounded
    domain are returned truncated with ``exited=True``.
    """
    if tol <= 0:
        raise ValueError("tracer tolerance must be positive")
    x0 = np.asarray(x0, dtype=float)
    s0_sample = eval_field(config, x0, t)
    b0 = s0_sample.b

    def rhs(s, y):
        return eval_field(config, y, t).b

    events = []
    if config.bounds is not None:
        lo, hi = config.bounds

        def exit_event(s, y):
            return float(np.min(np.concatenate([y - lo, hi - y])))
        exit_event.terminal = True
        exit_event.direction = -1
        events.append(exit_event)

    zp = config.z_period
    if zp is not None and abs(b0[2]) > 1e-12:
        # b_z keeps a constant sign for the built-in periodic kinds, so the
        # first return to the start plane happens after exactly one period.
        ztarget = x0[2] + np.sign(b0[2]) * zp

        def period_event(s, y):
            return (y[2] - ztarget) * np.sign(b0[2])
        period_event.terminal = True
        period_event.direction = 1
        events.append(period_event)

    sol = solve_ivp(rhs, (0.0, max_arc), x0, method="DOP853",
                    rtol=tol, atol=tol, dense_output=True, events=events)
    exited = bool(config.bounds is not None and len(sol.t_events[0]) > 0)

    closed = False
    period = None
    if zp is not None and not exited and len(sol.t_events[-1]) > 0:
        s_ret = float(sol.t_events[-1][0])
        x_ret = sol.sol(s_ret)
        x_quot = x_ret - np.array([0.0, 0.0, np.sign(b0[2]) * zp])
        dist = float(np.linalg.norm(x_quot - x0))
        tangent = eval_field(config, x_ret, t).b
        aligned = float(tangent @ b0)
        if dist <= max(100 * tol * (1 + s_ret), 1e-7) and aligned > 1 - 1e-6:
            closed = True
            period = s_ret

    s_end = period if closed else float(sol.t[-1])
    s_grid = np.linspace(0.0, s_end, n_nodes)
    nodes = sol.sol(s_grid).T
    samples = [eval_field(config, xx, t) for xx in nodes]
    return FieldLine(nodes=nodes, s=s_grid, samples=samples, closed=closed,
                     period=period, exited=exited, config=config, t=t)


def trace_segment(config: FieldConfiguration, x0, t=0.0, s_span=(-5.0, 5.0),
                  tol=1e-9, n_nodes=401) -> FieldLine:
    """Trace the line through x0 over a signed arc-length window.

    Unlike :func:`trace_field_line` this integrates in both directions
    (s=0 at x0) and performs no closure detection; it is the workhorse
    for bounce-motion analysis, where the potential well straddles the
    starting point.
    """
    if tol <= 0:
        raise ValueError("tracer tolerance must be positive")
    x0 = np.asarray(x0, dtype=float)
    s_min, s_max = s_span
    if not (s_min <= 0.0 <= s_max):
        raise ValueError("s_span must contain 0")

    def rhs(s, y):
        return eval_field(config, y, t).b

    s_grid = np.linspace(s_min, s_max, n_nodes)
    nodes = np.empty((n_nodes, 3))
    i0 = int(np.searchsorted(s_grid, 0.0))
    if s_max > 0:
        fwd = solve_ivp(rhs, (0.0, s_max), x0, method="DOP853", rtol=tol,
                        atol=tol, dense_output=True)
        nodes[i0:] = fwd.sol(s_grid[i0:]).T
    if s_min < 0:
        bwd = solve_ivp(rhs, (0.0, s_min), x0, method="DOP853", rtol=tol,
                        atol=tol, dense_output=True)
        nodes[:i0] = bwd.sol(s_grid[:i0]).T
    samples = [eval_field(config, xx, t) for xx in nodes]
    return FieldLine(nodes=nodes, s=s_grid, samples=samples, closed=False,
                     period=None, exited=False, config=config, t=t)


def resample_line(line: FieldLine, n: int) -> FieldLine:
    """Resample a traced line on a uniform arc-length grid of n nodes.

    For closed lines the grid covers [0, period) so that node 0's
    periodic image is node n (conservative stencils wrap around).
    """
    if line.closed:
        s_grid = np.linspace(0.0, line.period, n, endpoint=False)
    else:
        s_grid = np.linspace(line.s[0], line.s[-1], n)
    sp = line.spline()
    nodes = sp(s_grid)
    samples = [eval_field(line.config, xx, line.t) for xx in nodes]
    return FieldLine(nodes=nodes, s=s_grid, samples=samples,
                     closed=line.closed, period=line.period,
                     exited=line.exited, config=line.config, t=line.t)


def check_divergence_free(config: FieldConfiguration, sample_points, t=0.0,
                          h_fd=1e-4) -> float:
    """Max |div B| over the sample points, via central differences."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("sample point set must be nonempty")
    worst = 0.0
    for x in pts:
        d = numdiff.divergence(lambda y: config.b_field(y, t), x, h_fd)
        worst = max(worst, abs(float(d)))
    return worst
