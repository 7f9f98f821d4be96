"""Independent reference computations used by the tests.

These rely on scipy's adaptive integrators and optimizers rather than on
any code path inside the package.
"""

import numpy as np
from scipy.integrate import solve_ivp


def reference_endpoint(p, e, u, init, tf, rtol=1e-11, atol=1e-12):
    """High-accuracy state at ``tf`` under a constant dose ``u``."""
    c_a, c_b = (e.c_a, e.c_b) if e is not None else (0.0, 0.0)

    def f(_, x):
        s = x[0] + x[1]
        return [p.r_a * (1 - s / p.k_a) * x[0] - c_a * u * x[0],
                p.r_b * (1 - s / p.k_b) * x[1] - c_b * u * x[1]]

    sol = solve_ivp(f, (0.0, tf), init, method="DOP853", rtol=rtol, atol=atol)
    return sol.y[:, -1]


def trapezoid(y, x):
    y = np.asarray(y, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))
