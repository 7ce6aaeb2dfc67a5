"""Picard fixed-point solvers for the two initial value problems.

Both problems are solved through their Volterra forms.  The unknown is kept
in the weighted representation y(t) = tau(t)^(1-gamma) x(t), which is
continuous up to t = a even though x itself carries the tau^(gamma-1)
singularity; the singular factor is handled in closed form, never quadratured.

Explicit problem (right-hand side f(t, x)):
    y_{k+1} = c/Gamma(gamma) + tau^(1-gamma) * I^alpha [f(., tau^(gamma-1) y_k)]

Implicit problem (right-hand side f(t, x, y) with y standing for the
generalized derivative of x): iterate the auxiliary function
    g_{k+1}(t) = f(t, c/Gamma(gamma) tau^(gamma-1) + (I^alpha g_k)(t), g_k(t))
and reconstruct x from the converged g.
"""

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .numerics import GridFn, Mesh, Params, gamma_fn
from .operators import (
    _check_compatible,
    generalized_derivative_weighted,
    quad_weights,
)

__all__ = [
    "ProblemKind",
    "ProblemSpec",
    "WeightedFn",
    "SolveReport",
    "NonConvergenceError",
    "solve_explicit",
    "solve_implicit",
    "residual",
    "picard_contraction_trace",
]


class ProblemKind(enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class NonConvergenceError(RuntimeError):
    """Picard iteration exhausted max_iter; carries the last report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class ProblemSpec:
    """One initial value problem plus optional stability envelopes.

    Exactly one right-hand side must be populated, matching ``kind``.  The
    envelopes, when present, are callables of t: p bounds the right-hand
    side, Phi is the comparison function of the Ulam-type inequalities,
    q dominates p/Phi, and lip is the weighted Lipschitz envelope.
    ``f_at_a`` is the defined limit of the right-hand side at t = a (the
    solver never evaluates f at the singular endpoint itself).
    """

    params: Params
    kind: ProblemKind
    rhs_explicit: Optional[Callable] = None
    rhs_implicit: Optional[Callable] = None
    p: Optional[Callable] = None
    Phi: Optional[Callable] = None
    q: Optional[Callable] = None
    lip: Optional[Callable] = None
    f_at_a: float = 0.0
    p_kinks: Optional[Callable] = None  # t-locations where p is not smooth
    exact_x: Optional[Callable] = None  # manufactured problems only
    label: str = ""

    def __post_init__(self):
        if self.kind is ProblemKind.EXPLICIT:
            if self.rhs_explicit is None or self.rhs_implicit is not None:
                raise ValueError("explicit spec needs exactly rhs_explicit")
        elif self.kind is ProblemKind.IMPLICIT:
            if self.rhs_implicit is None or self.rhs_explicit is not None:
                raise ValueError("implicit spec needs exactly rhs_implicit")
        else:
            raise ValueError(f"unknown problem kind {self.kind!r}")

    def with_params(self, **changes):
        return replace(self, params=replace(self.params, **changes))


@dataclass
class WeightedFn:
    """A solution in the weighted space: stores y = tau^(1-gamma) x."""

    mesh: Mesh
    gamma: float
    y_values: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y_values, dtype=float)
        if y.shape != (self.mesh.n + 1,):
            raise ValueError("y_values length must be n+1")
        if not np.all(np.isfinite(y)):
            raise ValueError("weighted values must be finite")
        self.y_values = y

    def x_values(self):
        """Reconstruct x at the nodes; node 0 is nan unless gamma == 1."""
        tau = self.mesh.u_nodes
        x = np.empty_like(self.y_values)
        if self.gamma == 1.0:
            return self.y_values.copy()
        x[0] = np.nan
        x[1:] = tau[1:] ** (self.gamma - 1.0) * self.y_values[1:]
        return x


@dataclass
class SolveReport:
    solution: WeightedFn
    iterations: int
    final_update_norm: float
    residual_sup: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def _eval_rhs2(f, t, x):
    try:
        v = np.asarray(f(t, x), dtype=float)
        if v.shape == t.shape:
            return v
    except Exception:
        pass
    return np.array([float(f(ti, xi)) for ti, xi in zip(t, x)])


def _eval_rhs3(f, t, x, y):
    try:
        v = np.asarray(f(t, x, y), dtype=float)
        if v.shape == t.shape:
            return v
    except Exception:
        pass
    return np.array([float(f(ti, xi, yi)) for ti, xi, yi in zip(t, x, y)])


def _validate_solve_args(spec, mesh, tol, max_iter):
    _check_compatible(mesh, spec.params)
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not max_iter >= 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")


def _explicit_map(spec, mesh, W):
    """Returns a function advancing the weighted iterate one Picard step."""
    params = spec.params
    gam = params.gamma
    t = mesh.t_nodes
    tau = mesh.u_nodes
    x_pow = tau[1:] ** (gam - 1.0)
    y_pow = tau[1:] ** (1.0 - gam)
    y0c = params.c / gamma_fn(gam)
    f = spec.rhs_explicit
    F = np.empty(mesh.n + 1)

    def step(y):
        x1 = x_pow * y[1:]
        if gam == 1.0:
            F[0] = float(f(t[0], y[0]))
        else:
            F[0] = spec.f_at_a
        F[1:] = _eval_rhs2(f, t[1:], x1)
        integ = W @ F
        y_new = np.empty_like(y)
        y_new[0] = y0c
        y_new[1:] = y0c + y_pow * integ[1:]
        return y_new

    return step, y0c


def solve_explicit(spec, mesh, tol=1e-10, max_iter=200):
    """Picard iteration on the weighted unknown for the explicit problem."""
    if spec.kind is not ProblemKind.EXPLICIT:
        raise ValueError("solve_explicit requires an explicit problem")
    _validate_solve_args(spec, mesh, tol, max_iter)
    W = quad_weights(mesh, spec.params.alpha)
    step, y0c = _explicit_map(spec, mesh, W)
    y = np.full(mesh.n + 1, y0c)
    upd = np.inf
    iterations = 0
    for _ in range(max_iter):
        y_new = step(y)
        upd = float(np.max(np.abs(y_new - y)))
        y = y_new
        iterations += 1
        if upd <= tol:
            break
    converged = upd <= tol
    sol = WeightedFn(mesh, spec.params.gamma, y)
    res = residual(sol, spec)
    res_sup = float(np.nanmax(res.values[1:]))
    return SolveReport(
        solution=sol,
        iterations=iterations,
        final_update_norm=upd,
        residual_sup=res_sup,
        converged=converged,
    )


def solve_implicit(spec, mesh, tol=1e-10, max_iter=200, g_init=None):
    """Iterate the auxiliary-function equation of the implicit problem.

    residual_sup reports the defect of the auxiliary equation
    g = f(., x(g), g) over the interior nodes.
    """
    if spec.kind is not ProblemKind.IMPLICIT:
        raise ValueError("solve_implicit requires an implicit problem")
    _validate_solve_args(spec, mesh, tol, max_iter)
    params = spec.params
    gam = params.gamma
    t = mesh.t_nodes
    tau = mesh.u_nodes
    W = quad_weights(mesh, params.alpha)
    x_sing = (params.c / gamma_fn(gam)) * tau[1:] ** (gam - 1.0)
    f = spec.rhs_implicit

    if g_init is None:
        g = np.zeros(mesh.n + 1)
    else:
        g = np.asarray(g_init, dtype=float).copy()
        if g.shape != (mesh.n + 1,):
            raise ValueError("g_init must have length n+1")

    def g_step(g):
        integ = W @ g
        x1 = x_sing + integ[1:]
        g_new = np.empty_like(g)
        g_new[0] = spec.f_at_a
        g_new[1:] = _eval_rhs3(f, t[1:], x1, g[1:])
        return g_new

    upd = np.inf
    iterations = 0
    for _ in range(max_iter):
        g_new = g_step(g)
        upd = float(np.max(np.abs(g_new - g)))
        g = g_new
        iterations += 1
        if upd <= tol:
            break
    converged = upd <= tol

    integ = W @ g
    y = np.empty(mesh.n + 1)
    y[0] = params.c / gamma_fn(gam)
    y[1:] = y[0] + tau[1:] ** (1.0 - gam) * integ[1:]
    sol = WeightedFn(mesh, gam, y)
    defect = np.abs(g_step(g) - g)
    return SolveReport(
        solution=sol,
        iterations=iterations,
        final_update_norm=upd,
        residual_sup=float(np.max(defect[1:])),
        converged=converged,
        diagnostics={"g": g},
    )


def residual(sol, spec):
    """Nodewise defect |D^(alpha,beta) x - f(t, x)| of a weighted solution.

    Node 0 carries the nan sentinel (the derivative is not reported at the
    singular endpoint).  For implicit problems the derivative itself feeds
    the third argument of f.
    """
    params = spec.params
    mesh = sol.mesh
    _check_compatible(mesh, params)
    gam = params.gamma
    tau = mesh.u_nodes
    t = mesh.t_nodes
    y0c = params.c / gamma_fn(gam)
    # regular part of x: x - c/Gamma(gamma) tau^(gamma-1), which vanishes at a
    reg = np.empty(mesh.n + 1)
    reg[0] = 0.0
    if gam == 1.0:
        reg[1:] = sol.y_values[1:] - y0c
    else:
        reg[1:] = tau[1:] ** (gam - 1.0) * (sol.y_values[1:] - y0c)
    dx = generalized_derivative_weighted(
        params.c / gamma_fn(gam), gam, GridFn(mesh, reg), params
    )
    x = sol.x_values()
    out = np.empty(mesh.n + 1)
    out[0] = np.nan
    if spec.kind is ProblemKind.EXPLICIT:
        fx = _eval_rhs2(spec.rhs_explicit, t[1:], x[1:])
    else:
        fx = _eval_rhs3(spec.rhs_implicit, t[1:], x[1:], dx.values[1:])
    out[1:] = np.abs(dx.values[1:] - fx)
    return GridFn(mesh, out)


def picard_contraction_trace(spec, mesh, y_init_a, y_init_b, max_iter=50):
    """Weighted sup distance between two Picard trajectories, per iteration.

    Entry 0 is the distance between the initial iterates; the trace stops
    once the distance falls below rounding level.  Explicit problems only:
    the implicit iteration lives in the auxiliary-function space, where a
    weighted initial iterate has no canonical image.
    """
    if spec.kind is not ProblemKind.EXPLICIT:
        raise ValueError("contraction traces are defined for explicit specs")
    _check_compatible(mesh, spec.params)
    W = quad_weights(mesh, spec.params.alpha)
    step, _ = _explicit_map(spec, mesh, W)
    ya = np.asarray(y_init_a.y_values, dtype=float).copy()
    yb = np.asarray(y_init_b.y_values, dtype=float).copy()
    dists = [float(np.max(np.abs(ya - yb)))]
    for _ in range(max_iter):
        ya = step(ya)
        yb = step(yb)
        dists.append(float(np.max(np.abs(ya - yb))))
        if dists[-1] < 1e-15:
            break
    return np.array(dists)
