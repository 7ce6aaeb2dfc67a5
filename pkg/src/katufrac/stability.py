"""Stability apparatus: envelope hypothesis checks, the integral-gain and
contraction constants, attractivity ladders, and Ulam-type bound checks.

Conventions.  ``p`` is a uniform envelope of the right-hand side (for the
catalog problems it enters through the state-damped form |f|*(1+|x|(+|y|))
<= p).  ``Phi`` is the comparison function of the perturbation inequalities,
``q`` dominates p/Phi, and ``lip`` is the weighted Lipschitz envelope with
|f(t,x) - f(t,xb)| <= tau^(1-gamma) lip(t) Phi(t) |x - xb|.  The derived
constants: integral_gain is the smallest lattice-certified constant with
I^alpha Phi <= gain * Phi; uhr_factor = 1 + 2 q_sup * gain bounds
|x - xb| / Phi for perturbed solutions; contraction = tau(b)^(1-gamma) *
lip_sup * gain decides uniqueness.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .numerics import build_mesh, gamma_fn, GridFn
from .operators import frac_integral
from .solver import (
    NonConvergenceError,
    ProblemKind,
    WeightedFn,
    residual,
    solve_explicit,
    solve_implicit,
)

__all__ = [
    "EnvelopeReport",
    "StabilityReport",
    "AttractivityReport",
    "HypothesisError",
    "check_envelope",
    "envelope_decay",
    "estimate_integral_gain",
    "uhr_bound_check",
    "make_perturbed_solution",
    "attractivity_experiment",
    "contraction_constant",
]


class HypothesisError(ValueError):
    """A stated hypothesis or precondition fails on the supplied problem."""


@dataclass
class EnvelopeReport:
    max_violation: float
    holds: bool
    lattice_shape: tuple


@dataclass
class StabilityReport:
    integral_gain: Optional[float] = None
    q_sup: Optional[float] = None
    p_sup: Optional[float] = None
    p_sup_weighted: Optional[float] = None
    lipschitz_sup: Optional[float] = None
    contraction: Optional[float] = None
    uhr_factor: Optional[float] = None
    bounds_hold: Optional[bool] = None
    max_violation: Optional[float] = None
    unique: Optional[bool] = None
    unique_bound: Optional[Callable] = None


@dataclass
class AttractivityReport:
    horizons: np.ndarray  # requested values of tau(T)
    t_values: np.ndarray
    envelope: np.ndarray  # 2 (I^alpha p)(T)
    weighted_envelope: np.ndarray  # tau(T)^(1-gamma) * envelope
    pair_diff_sup: np.ndarray
    pointwise_ok: np.ndarray
    decreasing: bool
    ball_radius: float


def _sample(fn, t):
    t = np.asarray(t, dtype=float)
    try:
        v = np.asarray(fn(t), dtype=float)
        if v.shape == t.shape:
            return v
    except Exception:
        pass
    return np.array([float(fn(ti)) for ti in t])


def check_envelope(spec, t_samples=64, xy_samples=7):
    """Lattice check that the right-hand side obeys its damped envelope.

    Implicit problems: max over (t, x, y) of |f(t,x,y)|(1+|x|+|y|) - p(t);
    explicit problems drop the y leg.  State values are log-spaced over
    [-1e3, 1e3] plus zero.  A nonpositive max means the envelope holds on
    the lattice.
    """
    if spec.p is None:
        raise HypothesisError("problem carries no envelope p")
    mesh = build_mesh(spec.params, t_samples)
    t = mesh.t_nodes
    p_v = _sample(spec.p, t)
    mags = np.logspace(-3.0, 3.0, xy_samples)
    states = np.concatenate([-mags[::-1], [0.0], mags])
    worst = -np.inf
    if spec.kind is ProblemKind.IMPLICIT:
        f = spec.rhs_implicit
        for xv in states:
            for yv in states:
                fv = np.abs(f(t, xv, yv)) * (1.0 + abs(xv) + abs(yv))
                worst = max(worst, float(np.max(fv - p_v)))
    else:
        f = spec.rhs_explicit
        for xv in states:
            fv = np.abs(f(t, xv)) * (1.0 + abs(xv))
            worst = max(worst, float(np.max(fv - p_v)))
    return EnvelopeReport(
        max_violation=worst,
        holds=worst <= 1e-12,
        lattice_shape=(len(t), len(states)),
    )


def _gauss_sum(fn_of_u, lo, hi, nodes, weights):
    """Composite Gauss over the pieces [lo_k, hi_k], chunked for memory."""
    total = 0.0
    CH = 200_000
    for s in range(0, len(lo), CH):
        lo_c = lo[s : s + CH]
        hi_c = hi[s : s + CH]
        mid = 0.5 * (lo_c + hi_c)
        half = 0.5 * (hi_c - lo_c)
        uu = mid[:, None] + half[:, None] * nodes[None, :]
        total += float(np.sum(half[:, None] * weights[None, :] * fn_of_u(uu)))
    return total


def _tail_integral(spec, T, gauss_n=6):
    """(weighted, plain) value of the envelope integral I^alpha p at T.

    Piecewise Gauss over a subdivision that follows the envelope's kinks
    (essential once |sin|-type oscillations outrun any graded mesh), with
    geometric refinement toward u = 0 and a square-root substitution under
    the kernel singularity at u = U.  Each horizon gets its own rule.
    """
    params = spec.params
    rho, a, alpha, gam = params.rho, params.a, params.alpha, params.gamma
    U = (T**rho - a**rho) / rho

    def t_of_u(u):
        if rho == 1.0:
            return a + u
        return (a**rho + rho * u) ** (1.0 / rho)

    breaks = np.array([], dtype=float)
    if spec.p_kinks is not None:
        tk = np.asarray(spec.p_kinks(T), dtype=float)
        tk = tk[(tk > a) & (tk < T)]
        uk = (tk**rho - a**rho) / rho
        breaks = uk[(uk > 0.0) & (uk < U)]
    if len(breaks) < 32:
        base = U * np.linspace(0.0, 1.0, 65)[1:-1]
        breaks = np.unique(np.concatenate([breaks, base]))
    first = breaks[0]
    left = first * 10.0 ** np.arange(-20.0, 0.0)
    # keep the last piece clear of the kernel singularity for the v-change
    inner = breaks[breaks < U * (1.0 - 1e-9)]
    u_last = inner[-1]
    grid = np.concatenate([[0.0], left, inner])
    grid = np.unique(grid)
    nodes, weights = np.polynomial.legendre.leggauss(gauss_n)

    def bulk(uu):
        return (U - uu) ** (alpha - 1.0) * _p_of_u(spec, t_of_u(uu), a)

    total = _gauss_sum(bulk, grid[:-1], grid[1:], nodes, weights)
    # last piece [u_last, U]: u = U - v^2 turns the kernel into 2 v^(2a-1)
    V = np.sqrt(U - u_last)
    vgrid = np.concatenate([[0.0], V * 10.0 ** np.arange(-14.0, 1.0)])
    vgrid[-1] = V

    def near(vv):
        return 2.0 * vv ** (2.0 * alpha - 1.0) * _p_of_u(
            spec, t_of_u(U - vv * vv), a
        )

    total += _gauss_sum(near, vgrid[:-1], vgrid[1:], nodes, weights)
    plain = total / gamma_fn(alpha)
    return U ** (1.0 - gam) * plain, plain


def _p_of_u(spec, t, a):
    t = np.maximum(t, a)
    return spec.p(t)


def envelope_decay(spec, t_values, gauss_n=6):
    """Weighted envelope tau(t)^(1-gamma) (I^alpha p)(t) at each horizon.

    Each horizon is integrated on its own subdivision; the caller asserts
    monotone decay toward zero.
    """
    if spec.p is None:
        raise HypothesisError("problem carries no envelope p")
    out = np.empty(len(t_values))
    for i, T in enumerate(t_values):
        if not T > spec.params.a:
            raise ValueError("horizons must exceed the left endpoint")
        out[i], _ = _tail_integral(spec, float(T), gauss_n)
    return out


def estimate_integral_gain(Phi, params, mesh):
    """Smallest lattice-certified constant with I^alpha Phi <= gain * Phi.

    Max over the reported nodes (all except t = a) of the quadratured ratio;
    a lower bound on the true constant, so claimed constants are validated
    as upper bounds on this estimate.
    """
    phi_v = _sample(Phi, mesh.t_nodes)
    if np.any(phi_v[1:] <= 0.0):
        raise ValueError("comparison function must be positive on (a, b]")
    integ = frac_integral(GridFn(mesh, phi_v), params.alpha, params)
    return float(np.max(integ.values[1:] / phi_v[1:]))


def make_perturbed_solution(spec, delta, mesh, tol=1e-10, max_iter=200):
    """Solve with right-hand side f + delta; the witness of the perturbation
    inequalities.  Requires |delta| <= Phi on the mesh."""
    if spec.kind is not ProblemKind.EXPLICIT:
        raise ValueError("perturbation witnesses are built for explicit specs")
    if spec.Phi is None:
        raise HypothesisError("problem carries no comparison function Phi")
    d_v = _sample(delta, mesh.t_nodes)
    phi_v = _sample(spec.Phi, mesh.t_nodes)
    if np.any(np.abs(d_v) > phi_v * (1.0 + 1e-9)):
        raise ValueError("perturbation exceeds the comparison function")
    f = spec.rhs_explicit

    def f_pert(t, x):
        return f(t, x) + delta(t)

    pspec = replace(
        spec,
        rhs_explicit=f_pert,
        f_at_a=spec.f_at_a + float(np.asarray(delta(spec.params.a))),
        exact_x=None,
        label=spec.label + "+perturbation",
    )
    rep = solve_explicit(pspec, mesh, tol, max_iter)
    if not rep.converged:
        raise NonConvergenceError(
            "perturbed solve did not converge", report=rep
        )
    return rep.solution


def uhr_bound_check(spec, x_perturbed, x_exact, residual_slack=0.15):
    """Check the Ulam-Hyers-Rassias bound |x_p - x_e| <= uhr_factor * Phi.

    Precondition (verified here): the perturbed input actually satisfies the
    comparison inequality, i.e. its equation defect stays below Phi.  The
    defect is measured with the derivative stencil, whose accuracy class is
    percent-level, hence the multiplicative slack.
    """
    if spec.Phi is None or spec.q is None:
        raise HypothesisError("uhr check needs both Phi and q envelopes")
    if x_perturbed.mesh.key != x_exact.mesh.key:
        raise ValueError("solutions live on different meshes")
    mesh = x_perturbed.mesh
    phi_v = _sample(spec.Phi, mesh.t_nodes)
    res = residual(x_perturbed, spec).values[1:]
    if np.any(res > phi_v[1:] * (1.0 + residual_slack)):
        raise HypothesisError(
            "input does not satisfy the comparison inequality: defect "
            f"{np.max(res / phi_v[1:]):.3g} * Phi exceeds the slack"
        )
    gain = estimate_integral_gain(spec.Phi, spec.params, mesh)
    q_sup = float(np.max(_sample(spec.q, mesh.t_nodes)))
    psi = 1.0 + 2.0 * q_sup * gain
    gam = spec.params.gamma
    tau = mesh.u_nodes
    dy = np.abs(x_perturbed.y_values[1:] - x_exact.y_values[1:])
    diff = dy if gam == 1.0 else tau[1:] ** (gam - 1.0) * dy
    viol = float(np.max(diff - psi * phi_v[1:]))
    return StabilityReport(
        integral_gain=gain,
        q_sup=q_sup,
        uhr_factor=psi,
        bounds_hold=viol < 0.0,
        max_violation=viol,
    )


def attractivity_experiment(
    spec, horizons, tol=1e-10, n=1024, max_iter=200, grading="auto"
):
    """Pairwise Picard limits against the attractivity envelope on a horizon
    ladder.

    ``horizons`` are values of tau(T), strictly increasing.  At each horizon
    two solutions are computed from distinct initial iterates (zero and the
    envelope itself); the experiment records the pointwise bound
    |x - x0| <= 2 (I^alpha p)(t) and the weighted envelope, whose monotone
    decay across the ladder is the desk-scale rendering of attractivity.
    """
    if spec.kind is not ProblemKind.IMPLICIT:
        raise ValueError("attractivity experiments run on implicit specs")
    if spec.p is None:
        raise HypothesisError("problem carries no envelope p")
    horizons = np.asarray(horizons, dtype=float)
    if np.any(np.diff(horizons) <= 0.0):
        raise ValueError("horizons must be strictly increasing")
    params = spec.params
    rho, a, gam = params.rho, params.a, params.gamma
    t_vals, env_T, wenv, pair, ok = [], [], [], [], []
    for Uh in horizons:
        T = (a**rho + rho * Uh) ** (1.0 / rho)
        spec_h = spec.with_params(b=T)
        mesh = build_mesh(spec_h.params, n, grading)
        rep0 = solve_implicit(spec_h, mesh, tol, max_iter)
        p_v = _sample(spec.p, mesh.t_nodes)
        rep1 = solve_implicit(spec_h, mesh, tol, max_iter, g_init=p_v)
        if not (rep0.converged and rep1.converged):
            raise NonConvergenceError(
                f"attractivity solve at horizon tau={Uh} did not converge"
            )
        tau = mesh.u_nodes
        dy = np.abs(rep0.solution.y_values[1:] - rep1.solution.y_values[1:])
        diff = dy if gam == 1.0 else tau[1:] ** (gam - 1.0) * dy
        env = 2.0 * frac_integral(
            GridFn(mesh, p_v), params.alpha, spec_h.params
        ).values[1:]
        wv, pv = _tail_integral(spec_h, T)
        t_vals.append(T)
        env_T.append(2.0 * pv)
        wenv.append(2.0 * wv)
        pair.append(float(np.max(diff)))
        ok.append(bool(np.all(diff <= env)))
    wenv = np.array(wenv)
    return AttractivityReport(
        horizons=horizons,
        t_values=np.array(t_vals),
        envelope=np.array(env_T),
        weighted_envelope=wenv,
        pair_diff_sup=np.array(pair),
        pointwise_ok=np.array(ok),
        decreasing=bool(np.all(np.diff(wenv) < 0.0)),
        ball_radius=float(np.max(wenv)),
    )


def contraction_constant(spec, mesh):
    """Contraction constant tau(b)^(1-gamma) * lip_sup * gain and, when it is
    below one, the uniqueness bound t -> Phi(t)/(1 - L)."""
    if spec.lip is None or spec.Phi is None:
        raise HypothesisError(
            "contraction constant needs the lip and Phi envelopes"
        )
    params = spec.params
    lip_sup = float(np.max(_sample(spec.lip, mesh.t_nodes)))
    gain = estimate_integral_gain(spec.Phi, params, mesh)
    U = mesh.u_nodes[-1]
    L = U ** (1.0 - params.gamma) * lip_sup * gain
    unique = L < 1.0
    Phi = spec.Phi

    def bound(t):
        return np.asarray(Phi(t), dtype=float) / (1.0 - L)

    return StabilityReport(
        integral_gain=gain,
        lipschitz_sup=lip_sup,
        contraction=L,
        unique=unique,
        unique_bound=bound if unique else None,
    )
