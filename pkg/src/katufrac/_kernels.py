"""Hot quadrature kernels: product-trapezoidal weights for the Abel transform.

After the substitution u = (t^rho - a^rho)/rho the fractional integral of
order ``alpha`` becomes a convolution against the weakly singular kernel
(u_j - u)^(alpha-1).  ``abel_weights`` builds the lower-triangular matrix W
with (I^alpha g)(u_j) = sum_i W[j, i] g(u_i), obtained by integrating the
piecewise-linear interpolant of g exactly against the kernel.

Backend selection: the environment variable KATUFRAC_BACKEND chooses between
the numba-jitted kernel and the pure-numpy one.  Values: "auto" (numba when
importable, default), "numba", "numpy".
"""

import math
import os

import numpy as np

ENV_BACKEND = "KATUFRAC_BACKEND"


def _abel_weights_numpy(u, alpha):
    # Row-chunked so peak memory stays O(chunk * m) instead of O(m^2) extra.
    m = u.shape[0]
    W = np.zeros((m, m))
    h = np.diff(u)
    inv_g = 1.0 / math.gamma(alpha)
    chunk = max(1, 4_000_000 // m)
    for s in range(1, m, chunk):
        e = min(m, s + chunk)
        B = u[s:e, None] - u[None, :-1]  # u_j - u_i
        A = u[s:e, None] - u[None, 1:]   # u_j - u_{i+1}
        valid = A >= 0.0                 # cells fully left of the target node
        Bc = np.where(valid, B, 0.0)
        Ac = np.where(valid, A, 0.0)
        M0 = (Bc**alpha - Ac**alpha) / alpha
        M1 = Bc * M0 - (Bc ** (alpha + 1.0) - Ac ** (alpha + 1.0)) / (alpha + 1.0)
        lin = M1 / h[None, :]
        W[s:e, :-1] += (M0 - lin) * inv_g
        W[s:e, 1:] += lin * inv_g
    return W


def _abel_weights_python(u, alpha):
    # Same loop the numba kernel compiles; reuses the power chain B_{i+1} = A_i.
    m = u.shape[0]
    W = np.zeros((m, m))
    inv_g = 1.0 / math.gamma(alpha)
    ap1 = alpha + 1.0
    for j in range(1, m):
        uj = u[j]
        B = uj - u[0]
        Bp = B**alpha
        Bp1 = B**ap1
        for i in range(j):
            A = uj - u[i + 1]
            Ap = A**alpha
            Ap1 = A**ap1
            h = u[i + 1] - u[i]
            M0 = (Bp - Ap) / alpha
            M1 = B * M0 - (Bp1 - Ap1) / ap1
            lin = M1 / h
            W[j, i] += (M0 - lin) * inv_g
            W[j, i + 1] += lin * inv_g
            B = A
            Bp = Ap
            Bp1 = Ap1
    return W


def _requested():
    val = os.environ.get(ENV_BACKEND, "auto").strip().lower()
    if val not in ("auto", "numba", "numpy"):
        raise RuntimeError(
            f"{ENV_BACKEND} must be one of auto|numba|numpy, got {val!r}"
        )
    return val


_choice = _requested()
if _choice in ("auto", "numba"):
    try:
        import numba

        _abel_weights_numba = numba.njit(cache=True, fastmath=False)(
            _abel_weights_python
        )
        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        BACKEND = "numpy"
else:
    BACKEND = "numpy"


def abel_weights(u, alpha):
    """Product-trapezoidal weight matrix for dispersion order ``alpha``.

    ``u`` must be strictly increasing with u[0] == 0.  Row 0 is zero
    (integral over an empty interval); row j only touches columns 0..j.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    if BACKEND == "numba":
        return _abel_weights_numba(u, float(alpha))
    return _abel_weights_numpy(u, float(alpha))


def nonuniform_derivative(y, u):
    """Second-order 3-point derivative dy/du on a nonuniform grid.

    Difference form (weights applied to successive differences), so constant
    inputs map to exactly zero even on strongly graded grids.
    """
    m = y.shape[0]
    if m < 3:
        raise ValueError("need at least 3 nodes for the derivative stencil")
    d = np.empty_like(y)
    du = np.diff(u)
    dy = np.diff(y)
    h1, h2 = du[:-1], du[1:]
    r1, r2 = dy[:-1], dy[1:]
    s = h1 + h2
    d[1:-1] = (h1 / (h2 * s)) * r2 + (h2 / (h1 * s)) * r1
    a1, a2 = du[0], du[1]
    d[0] = ((2 * a1 + a2) / (a1 * (a1 + a2))) * dy[0] - (
        a1 / (a2 * (a1 + a2))
    ) * dy[1]
    b1, b2 = du[-2], du[-1]
    d[-1] = ((b1 + 2 * b2) / (b2 * (b1 + b2))) * dy[-1] - (
        b2 / (b1 * (b1 + b2))
    ) * dy[-2]
    return d
