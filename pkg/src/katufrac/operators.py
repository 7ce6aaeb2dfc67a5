"""Discrete fractional operators on mesh samples.

All operators act in the transformed variable u = (t^rho - a^rho)/rho, where
the integral of order ``alpha`` is an Abel convolution and the scaled
derivative t^(1-rho) d/dt is plainly d/du.  Integrals use product-trapezoidal
quadrature (exact for piecewise-linear data against the singular kernel);
derivatives use second-order nonuniform stencils on the u-grid.

Functions with a power singularity at t = a are handled through their
decomposition coef * tau^(mu-1) + h with h regular: the power term flows
through the exact gamma-ratio identities, only h is quadratured.  Derivative
outputs carry nan at node 0, the sentinel for "not reported at the left
endpoint"; it is excluded from every norm in this package.
"""

import threading
from collections import OrderedDict

import numpy as np

from ._kernels import abel_weights, nonuniform_derivative
from .numerics import GridFn, gamma_fn

__all__ = [
    "MeshMismatchError",
    "frac_integral",
    "frac_integral_weighted",
    "frac_derivative",
    "frac_derivative_weighted",
    "caputo_derivative",
    "generalized_derivative",
    "generalized_derivative_weighted",
    "generalized_derivative_alt",
    "u_derivative",
    "power_integral_multiplier",
]


class MeshMismatchError(ValueError):
    pass


_WCACHE = OrderedDict()
_WCACHE_LOCK = threading.Lock()
_WCACHE_MAX = 4


def quad_weights(mesh, order):
    """Cached product-trapezoidal weight matrix for (mesh, order)."""
    key = (mesh.key, float(order))
    with _WCACHE_LOCK:
        W = _WCACHE.get(key)
        if W is not None:
            _WCACHE.move_to_end(key)
            return W
    W = abel_weights(mesh.u_nodes, order)
    W.setflags(write=False)
    with _WCACHE_LOCK:
        _WCACHE[key] = W
        while len(_WCACHE) > _WCACHE_MAX:
            _WCACHE.popitem(last=False)
    return W


def _check_compatible(mesh, params):
    if (mesh.a, mesh.b, mesh.rho) != (params.a, params.b, params.rho):
        raise MeshMismatchError(
            f"mesh built for (a={mesh.a}, b={mesh.b}, rho={mesh.rho}) does not "
            f"match params (a={params.a}, b={params.b}, rho={params.rho})"
        )


def _finite_samples(g):
    if not np.all(np.isfinite(g.values)):
        raise ValueError("operator input has non-finite samples")


def power_integral_multiplier(sigma, order):
    """Gamma(sigma+1)/Gamma(sigma+order+1): I^order tau^sigma = m * tau^(sigma+order).

    Valid for sigma > -1 (the classical identity extends below 0 down to the
    integrability threshold).
    """
    if not sigma > -1.0:
        raise ValueError(f"power exponent must exceed -1, got {sigma}")
    return gamma_fn(sigma + 1.0) / gamma_fn(sigma + order + 1.0)


def frac_integral(g, order, params):
    """Fractional integral of order ``order`` in (0, 1] of grid samples."""
    _check_compatible(g.mesh, params)
    _finite_samples(g)
    if not 0.0 < order <= 1.0:
        raise ValueError(f"integral order must lie in (0, 1], got {order}")
    W = quad_weights(g.mesh, order)
    vals = W @ g.values
    vals[0] = 0.0
    return GridFn(g.mesh, vals)


def frac_integral_weighted(coef, mu, h, order, params):
    """Integral of coef * tau^(mu-1) + h with the power term done exactly.

    The singular power integrates to coef * G(mu)/G(mu+order) * tau^(mu+order-1)
    by the gamma-ratio identity; only the regular part h is quadratured.
    """
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"mu must lie in (0, 1], got {mu}")
    out = frac_integral(h, order, params)
    if coef != 0.0:
        mult = coef * gamma_fn(mu) / gamma_fn(mu + order)
        e = mu + order - 1.0
        t_pow = out.mesh.u_nodes[1:] ** e
        out.values[1:] += mult * t_pow
        if e > 0.0:
            pass  # power term vanishes at u = 0
        elif e == 0.0:
            out.values[0] += mult
        else:
            out.values[0] = np.inf if mult > 0 else -np.inf
    return out


def u_derivative(g):
    """d/du of grid samples (the scaled derivative t^(1-rho) d/dt)."""
    _finite_samples(g)
    return GridFn(g.mesh, nonuniform_derivative(g.values, g.mesh.u_nodes))


def _derivative_pipeline(g, inner, outer, sing_coef, sing_exp):
    """Core of every derivative operator.

    Computes I^outer d/du I^inner [g - g(a)] by quadrature and stencil, then
    adds sing_coef * tau^sing_exp, the closed form of the g(a) part.  Node 0
    is always the nan sentinel.
    """
    if g.mesh.n < 8:
        raise ValueError("mesh too coarse for the derivative stencil (n < 8)")
    u = g.mesh.u_nodes
    shifted = g.values - g.values[0]
    if inner > 0.0:
        W = quad_weights(g.mesh, inner)
        F = W @ shifted
        F[0] = 0.0
    else:
        F = shifted
    mid = nonuniform_derivative(F, u)
    if inner > 0.0:
        mid[0] = 0.0  # true limit of d/du I^inner h for h vanishing at a
    if outer > 0.0:
        out = quad_weights(g.mesh, outer) @ mid
    else:
        out = mid.copy()
    if sing_coef != 0.0:
        out[1:] += sing_coef * u[1:] ** sing_exp
    out[0] = np.nan
    return GridFn(g.mesh, out)


def frac_derivative(g, order, params):
    """Fractional derivative of order in (0, 1): d/du applied to I^(1-order)."""
    _check_compatible(g.mesh, params)
    _finite_samples(g)
    if not 0.0 < order < 1.0:
        raise ValueError(f"derivative order must lie in (0, 1), got {order}")
    coef = g.values[0] / gamma_fn(1.0 - order)
    return _derivative_pipeline(g, 1.0 - order, 0.0, coef, -order)


def caputo_derivative(g, order, params):
    """Derivative of order in (0, 1) applied to the shifted samples g - g(a)."""
    _check_compatible(g.mesh, params)
    _finite_samples(g)
    if not 0.0 < order < 1.0:
        raise ValueError(f"derivative order must lie in (0, 1), got {order}")
    return _derivative_pipeline(g, 1.0 - order, 0.0, 0.0, 0.0)


def generalized_derivative(g, params):
    """Two-parameter derivative of order alpha and type beta.

    Composition I^(beta(1-alpha)) o d/du o I^((1-beta)(1-alpha)); the g(a)
    part contributes g(a) tau^(-alpha) / Gamma(1-alpha) in closed form,
    independent of beta.
    """
    _check_compatible(g.mesh, params)
    _finite_samples(g)
    alpha, beta = params.alpha, params.beta
    inner = (1.0 - beta) * (1.0 - alpha)
    outer = beta * (1.0 - alpha)
    coef = g.values[0] / gamma_fn(1.0 - alpha)
    return _derivative_pipeline(g, inner, outer, coef, -alpha)


def generalized_derivative_alt(g, params):
    """Cross-check path: outer integral applied to the order-gamma derivative.

    Algebraically identical to :func:`generalized_derivative`; composed here
    from the public single-order pieces with independently rounded orders, so
    agreement certifies the discretization is consistent with the two-sided
    factorization.
    """
    _check_compatible(g.mesh, params)
    _finite_samples(g)
    gam = params.gamma
    outer = params.beta * (1.0 - params.alpha)
    if gam < 1.0:
        dg = frac_derivative(g, gam, params)
    else:
        dg = _derivative_pipeline(g, 0.0, 0.0, 0.0, 0.0)  # plain d/du
    if outer == 0.0:
        return dg
    u = g.mesh.u_nodes
    reg = dg.values.copy()
    if gam < 1.0 and g.values[0] != 0.0:
        # peel off the closed-form singular component before quadrature
        reg[1:] -= (g.values[0] / gamma_fn(1.0 - gam)) * u[1:] ** (-gam)
    if not np.isfinite(reg[0]):
        reg[0] = 0.0
    out = quad_weights(g.mesh, outer) @ reg
    # closed form of I^outer applied to the singular g(a) tau^(-gam) part
    if gam < 1.0 and g.values[0] != 0.0:
        coef = g.values[0] / gamma_fn(1.0 - params.alpha)
        out[1:] += coef * u[1:] ** (-params.alpha)
    out[0] = np.nan
    return GridFn(g.mesh, out)


def frac_derivative_weighted(coef, mu, h, order, params):
    """Derivative of coef * tau^(mu-1) + h, the power term in closed form.

    D^order tau^(mu-1) = G(mu)/G(mu-order) tau^(mu-order-1), which is exactly
    zero when mu == order (the kernel power of the operator).
    """
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"mu must lie in (0, 1], got {mu}")
    out = frac_derivative(h, order, params)
    if coef != 0.0 and mu != order:
        if mu <= order:
            raise ValueError(
                "power exponent below the derivative order is outside the "
                f"weighted class (mu={mu}, order={order})"
            )
        mult = coef * gamma_fn(mu) / gamma_fn(mu - order)
        out.values[1:] += mult * out.mesh.u_nodes[1:] ** (mu - order - 1.0)
    return out


def generalized_derivative_weighted(coef, mu, h, params):
    """Two-parameter derivative of coef * tau^(mu-1) + h.

    On pure powers the two-parameter derivative coincides with the
    single-order one; at mu == gamma the power term is annihilated exactly.
    """
    out = generalized_derivative(h, params)
    gam = params.gamma
    if coef != 0.0 and abs(mu - gam) > 1e-14:
        if mu <= params.alpha:
            raise ValueError(
                f"power exponent tau^(mu-1) with mu={mu} <= alpha is outside "
                "the weighted class"
            )
        mult = coef * gamma_fn(mu) / gamma_fn(mu - params.alpha)
        out.values[1:] += mult * out.mesh.u_nodes[1:] ** (
            mu - params.alpha - 1.0
        )
    return out
