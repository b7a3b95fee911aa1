"""Anisotropic elliptic problem for the parallel bulk velocity along a
closed magnetic field line.

The operator acting on u(s) is assembled in conservative form from the
per-node coefficient arrays (pressures, density, parallel electric
field, div b) using

    b . grad f  ->  df/ds,        div(f b)  ->  df/ds + (div b) f,

with second-order centered differences and periodic wrap:

    -3 D (D + K) P u + 2 (D + K) W u + E (D + K) N u
        + K (D + K) Q u + diag(p_perp (div b)^2) u  =  rhs,

where D is the periodic derivative matrix, K = diag(div b),
P = diag(p_par), W = diag(div(p_par b)), N = diag(n) scaled by E_par,
and Q = diag(-3 p_par + p_perp).  When E_par vanishes and the
coefficient structure annihilates constants the system is solved in
the least-squares sense after a compatibility check, and the null
component is fixed by the requested gauge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import numdiff
from .errors import ConditioningError, GeometryError, SolvabilityError
from .field_model import FieldLine, eval_field


# -- cyclic banded solve ------------------------------------------------------

def cyclic_banded_solve(A, rhs, bw=2):
    """Solve a cyclic banded system via banded LU plus a low-rank update.

    The matrix is split as A = B + U W with B strictly banded (wrap
    entries zeroed) and U selecting the first/last ``bw`` rows; the
    Woodbury identity then needs one banded factorization and a small
    dense solve.  Raises if the banded core is singular.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n <= 4 * bw:
        return np.linalg.solve(A, rhs)
    B = A.copy()
    rows = list(range(bw)) + list(range(n - bw, n))
    # Zero the wrap-around entries (outside the band) in the corner rows.
    for i in rows:
        for j in range(n):
            if min(abs(i - j), n - abs(i - j)) <= bw and abs(i - j) > bw:
                B[i, j] = 0.0
    U = np.zeros((n, 2 * bw))
    for k, i in enumerate(rows):
        U[i, k] = 1.0
    W = A[rows, :] - B[rows, :]
    ab = np.zeros((2 * bw + 1, n))
    for off in range(-bw, bw + 1):
        ab[bw - off, max(off, 0):n + min(off, 0)] = np.diagonal(B, off)
    try:
        y = scipy.linalg.solve_banded((bw, bw), ab, rhs)
        Z = scipy.linalg.solve_banded((bw, bw), ab, U)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("banded core is singular") from exc
    cap = np.eye(2 * bw) + W @ Z
    try:
        small = np.linalg.solve(cap, W @ y)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("capacitance matrix is singular") from exc
    return y - Z @ small


# -- problem container --------------------------------------------------------

@dataclass
class LineProblem:
    """Closed-line coefficients and right-hand side on a uniform s-grid."""

    line: FieldLine
    n: np.ndarray
    p_par: np.ndarray
    p_perp: np.ndarray
    E_par: np.ndarray
    div_b: np.ndarray
    rhs: Optional[np.ndarray] = None
    grid_h: float = 0.0

    def __post_init__(self):
        if not self.line.closed:
            raise GeometryError("the parallel elliptic problem is posed on "
                                "closed field lines only")
        N = len(self.line.s)
        for name in ("n", "p_par", "p_perp", "E_par", "div_b"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N,):
                raise ValueError(f"coefficient {name} must have length {N}")
            setattr(self, name, arr)
        ds = np.diff(self.line.s)
        if not np.allclose(ds, ds[0], rtol=1e-10, atol=1e-12):
            raise ValueError("the discretization needs a uniform s-grid")
        self.grid_h = float(self.line.period / N) if self.line.period \
            else float(ds[0])


def make_line_problem(line: FieldLine, n_field, p_perp_field, p_par_field,
                      t=0.0, E=None, rhs=None) -> LineProblem:
    """Sample the coefficient fields at the line nodes."""
    nodes = line.nodes
    nvals = np.array([n_field(x, t) for x in nodes])
    ppar = np.array([p_par_field(x, t) for x in nodes])
    pperp = np.array([p_perp_field(x, t) for x in nodes])
    epar = np.empty(len(nodes))
    divb = np.empty(len(nodes))
    for k, (x, sample) in enumerate(zip(nodes, line.samples)):
        Evec = sample.E if E is None else np.asarray(E(x, t), dtype=float)
        epar[k] = float(Evec @ sample.b)
        divb[k] = sample.div_b
    return LineProblem(line=line, n=nvals, p_par=ppar, p_perp=pperp,
                       E_par=epar, div_b=divb, rhs=rhs)


def periodic_derivative_matrix(n, h):
    """Second-order centered d/ds with periodic wrap."""
    D = np.zeros((n, n))
    for i in range(n):
        D[i, (i + 1) % n] = 1.0 / (2 * h)
        D[i, (i - 1) % n] = -1.0 / (2 * h)
    return D


def assemble_parallel_operator(problem: LineProblem) -> np.ndarray:
    """Dense matrix of the conservative parallel operator."""
    N = len(problem.line.s)
    h = problem.grid_h
    D = periodic_derivative_matrix(N, h)
    K = np.diag(problem.div_b)
    DK = D + K
    P = np.diag(problem.p_par)
    w = DK @ problem.p_par                 # div(p_par b) at the nodes
    A = (-3.0 * D @ DK @ P
         + 2.0 * DK @ np.diag(w)
         + np.diag(problem.E_par) @ DK @ np.diag(problem.n)
         + K @ DK @ np.diag(-3.0 * problem.p_par + problem.p_perp)
         + np.diag(problem.p_perp * problem.div_b ** 2))
    return A


def solve_u_parallel(operator, rhs, gauge="zero_mean", tol_compat=1e-8,
                     singular_tol=1e-10):
    """Solve the cyclic system, handling the constant null space.

    gauge is either "zero_mean" or ("pinned", index, value); it only
    acts when the operator has a null space.  Returns (u, report) with
    the compatibility residual and conditioning diagnostics.
    """
    A = np.asarray(operator, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    N = A.shape[0]
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / max(sv[-1], 1e-300))
    report = {"n": N, "cond_estimate": cond, "compatibility_residual": 0.0}
    if sv[-1] > singular_tol * sv[0]:
        try:
            u = cyclic_banded_solve(A, rhs)
            method = "cyclic_banded"
        except ConditioningError:
            u = np.linalg.solve(A, rhs)
            method = "dense"
        resid = np.linalg.norm(A @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if resid > 1e-8:
            u = np.linalg.solve(A, rhs)
            method = "dense"
        report["method"] = method
        return u, report

    # Singular path: check the rank deficiency and rhs compatibility.
    n_null = int(np.sum(sv <= singular_tol * sv[0]))
    if n_null > 2:
        raise ConditioningError(
            f"operator is singular beyond its null space (rank deficiency "
            f"{n_null})")
    U, s, Vt = np.linalg.svd(A)
    null_left = U[:, -n_null:]
    proj = null_left.T @ rhs
    compat = float(np.linalg.norm(proj)
                   / max(np.linalg.norm(rhs), 1e-300))
    report["compatibility_residual"] = compat
    if compat > tol_compat:
        raise SolvabilityError(
            f"right-hand side violates the periodic compatibility "
            f"condition (residual {compat:.3e} > {tol_compat:.1e})")
    u, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if gauge == "zero_mean":
        u = u - np.mean(u)
    elif isinstance(gauge, tuple) and gauge[0] == "pinned":
        _, idx, value = gauge
        u = u + (value - u[idx])
    else:
        raise ValueError("gauge must be 'zero_mean' or ('pinned', i, value)")
    report["method"] = "lstsq"
    return u, report


def rhs_compatibility(problem: LineProblem):
    """|integral rhs ds| / integral |rhs| ds on the periodic grid."""
    if problem.rhs is None:
        return 0.0
    total = float(np.sum(problem.rhs) * problem.grid_h)
    scale = float(np.sum(np.abs(problem.rhs)) * problem.grid_h)
    return abs(total) / max(scale, 1e-300)


def parallel_constraint_residual(n_field, p_par_field, p_perp_field, x, t=0.0,
                                 config=None, sample=None, E=None, h=1e-3):
    """Zero-Mach parallel force balance:
    n (E . b) - [b . grad p_par + (p_par - p_perp) div b]."""
    sample = sample or eval_field(config, x, t)
    x = np.asarray(x, dtype=float)
    Evec = sample.E if E is None else np.asarray(E(x, t), dtype=float)
    if hasattr(p_par_field, "grad"):
        gpl = np.asarray(p_par_field.grad(x, t), dtype=float)
    else:
        gpl = numdiff.grad(lambda y: p_par_field(y, t), x, h)
    dp = p_par_field(x, t) - p_perp_field(x, t)
    return (n_field(x, t) * float(Evec @ sample.b)
            - (float(sample.b @ gpl) + dp * sample.div_b))


# -- the right-hand side R3 ---------------------------------------------------

@dataclass
class R3Inputs:
    """Everything the u-parallel right-hand side needs along a line.

    ``moment`` maps (m, q) to a moment field callable(x, t); the
    multiplier moments default to zero (no constructive recipe exists
    for the multiplier, so it enters as validated data only).
    """

    background: object                       # transport.Background
    u_perp: Callable                         # (x, t) -> 3-vector, with .jac
    n_field: Callable
    p_par_field: Callable
    p_perp_field: Callable
    moment: Callable                         # (m, q) -> field
    k_moment: Optional[Callable] = None

    def k(self, m, q):
        if self.k_moment is None:
            return lambda x, t: 0.0
        return self.k_moment(m, q)


def _jac_of(u_field, x, t, h):
    if hasattr(u_field, "jac"):
        return np.asarray(u_field.jac(x, t), dtype=float)
    return numdiff.jacobian(lambda y: u_field(y, t), np.asarray(x, float), h)


def _r1_value(inputs: R3Inputs, x, t, h=1e-3):
    bg = inputs.background
    x = np.asarray(x, dtype=float)
    sample = bg.sample(x, t)

    def flux(y):
        s = bg.sample(y, t)
        Fy = bg.F(y, t)
        up = np.asarray(inputs.u_perp(y, t), dtype=float)
        curl_bB = s.curl_b / s.magB - np.cross(s.gradB_mag, s.b) / s.magB ** 2
        v2 = s.magB * curl_bB - s.f_vec
        return (inputs.p_par_field(y, t) * (up - np.cross(s.b, Fy) / s.magB)
                + v2 * inputs.moment(2, 1)(y, t)
                + s.f_vec / s.magB * inputs.moment(4, 0)(y, t))

    div_flux = numdiff.divergence(flux, x, h)
    Ju = _jac_of(inputs.u_perp, x, t, h)
    bJub = float(sample.b @ Ju @ sample.b)
    F = bg.F(x, t)
    div_f_over_B = numdiff.divergence(
        lambda y: bg.sample(y, t).f_vec / bg.sample(y, t).magB, x, h)
    div_K30b = numdiff.divergence(
        lambda y: inputs.k(3, 0)(y, t) * bg.sample(y, t).b, x, h)
    return (-div_flux
            + 2.0 * (-bJub + float(F @ sample.f_vec) / sample.magB)
            * inputs.p_par_field(x, t)
            + 2.0 * sample.magB * div_f_over_B * inputs.moment(2, 1)(x, t)
            - div_K30b + 2.0 * float(sample.b @ F) * inputs.k(1, 0)(x, t)
            - 2.0 * float(sample.b @ sample.gradB_mag) * inputs.k(1, 1)(x, t))


def _r2_value(inputs: R3Inputs, x, t, h=1e-3):
    bg = inputs.background
    x = np.asarray(x, dtype=float)
    sample = bg.sample(x, t)

    def flux(y):
        s = bg.sample(y, t)
        Fy = bg.F(y, t)
        up = np.asarray(inputs.u_perp(y, t), dtype=float)
        curl_bB = s.curl_b / s.magB - np.cross(s.gradB_mag, s.b) / s.magB ** 2
        v2 = s.magB * curl_bB - s.f_vec
        return ((up - np.cross(s.b, Fy) / s.magB) * inputs.p_perp_field(y, t)
                + v2 * s.magB * inputs.moment(0, 2)(y, t)
                + s.f_vec * inputs.moment(2, 1)(y, t))

    div_flux = numdiff.divergence(flux, x, h)
    Ju = _jac_of(inputs.u_perp, x, t, h)
    bJub = float(sample.b @ Ju @ sample.b)
    div_up = float(np.trace(Ju))
    F = bg.F(x, t)
    div_bxF_over_B = numdiff.divergence(
        lambda y: np.cross(bg.sample(y, t).b, bg.F(y, t))
        / bg.sample(y, t).magB, x, h)
    div_f_over_B = numdiff.divergence(
        lambda y: bg.sample(y, t).f_vec / bg.sample(y, t).magB, x, h)
    div_K11b = numdiff.divergence(
        lambda y: inputs.k(1, 1)(y, t) * bg.sample(y, t).b, x, h)
    return (-div_flux
            + (bJub - float(F @ sample.f_vec) / sample.magB - div_up
               + div_bxF_over_B) * inputs.p_perp_field(x, t)
            - div_f_over_B * sample.magB * inputs.moment(2, 1)(x, t)
            - sample.magB * div_K11b)


def r3_value(inputs: R3Inputs, x, t=0.0, h=1e-3):
    """Pointwise right-hand side of the u-parallel equation."""
    bg = inputs.background
    x = np.asarray(x, dtype=float)
    sample = bg.sample(x, t)
    b_grad_R1 = float(sample.b @ numdiff.grad(
        lambda y: _r1_value(inputs, y, t, h), x, h))
    r1 = _r1_value(inputs, x, t, h)
    r2 = _r2_value(inputs, x, t, h)
    div_n_uperp = numdiff.divergence(
        lambda y: inputs.n_field(y, t) * np.asarray(inputs.u_perp(y, t),
                                                    dtype=float), x, h)
    E = bg.E(x, t)
    dt_Eb = float(sample.dt_E @ sample.b) + float(E @ sample.dt_b)
    if hasattr(inputs.p_par_field, "grad"):
        gpl = np.asarray(inputs.p_par_field.grad(x, t), dtype=float)
    else:
        gpl = numdiff.grad(lambda y: inputs.p_par_field(y, t), x, h)
    div_dtb = numdiff.divergence(lambda y: bg.sample(y, t).dt_b, x, h)
    dp = inputs.p_par_field(x, t) - inputs.p_perp_field(x, t)
    return (-b_grad_R1 - float(E @ sample.b) * div_n_uperp
            - sample.div_b * (r1 - r2)
            + inputs.n_field(x, t) * dt_Eb
            - float(sample.dt_b @ gpl) - dp * div_dtb)


def compute_R3(problem: LineProblem, inputs: R3Inputs, t=0.0, h=1e-3):
    """Evaluate the right-hand side at every node of the line problem."""
    return np.array([r3_value(inputs, x, t, h) for x in problem.line.nodes])


def write_solution_csv(path, s, u_par, residual):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "u_par", "residual"])
        for k in range(len(s)):
            w.writerow([f"{s[k]:.17e}", f"{u_par[k]:.17e}",
                        f"{residual[k]:.17e}"])
