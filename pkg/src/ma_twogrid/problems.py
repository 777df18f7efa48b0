"""Built-in benchmark problems on the unit square."""

from __future__ import annotations

import numpy as np

from .solvers import ProblemSpec


def exponential_problem() -> ProblemSpec:
    """Radially symmetric convex benchmark u = exp((x^2+y^2)/2).

    Its Hessian is exp((x^2+y^2)/2) [[1+x^2, xy], [xy, 1+y^2]], so the
    determinant equals (1+x^2+y^2) exp(x^2+y^2), which serves as the source
    term; the boundary data is the trace of u.
    """

    def u(x, y):
        return np.exp(0.5 * (x * x + y * y))

    def du(x, y):
        e = np.exp(0.5 * (x * x + y * y))
        return np.stack([x * e, y * e], axis=-1)

    def f(x, y):
        s = x * x + y * y
        return (1.0 + s) * np.exp(s)

    return ProblemSpec(f=f, g=u, exact_u=u, exact_Du=du)


def quadratic_problem() -> ProblemSpec:
    """u = (x^2+y^2)/2 with unit determinant; exactly representable in P_k."""

    def u(x, y):
        return 0.5 * (x * x + y * y)

    def du(x, y):
        return np.stack([x, y], axis=-1)

    def f(x, y):
        return np.ones_like(np.asarray(x, dtype=float))

    return ProblemSpec(f=f, g=u, exact_u=u, exact_Du=du)
