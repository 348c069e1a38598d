"""Explicit finite-difference solver for the diffusion-logistic equation.

Scheme: forward Euler in time, central second difference in space, on the
domain [l1, l2] x [1, t_end] with zero-flux (Neumann) boundaries realized by
mirror ghost nodes.  Approximation order O(tau + h^2).  The time step must
respect the stability bound from ``stability_check``; within that bound the
scheme preserves positivity and the carrying-capacity ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Grid, ModelParams, SourceParam, spline_phi

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

__all__ = [
    "StabilityError",
    "DivergenceError",
    "GridAlignmentError",
    "Field",
    "stability_check",
    "build_grid",
    "solve",
    "solve_phi",
    "observe",
]

# margin of the stability bound kept in reserve; 0.5 also caps tau*r_max at
# 1/2, which is what makes the positivity argument go through
SAFETY = 0.5

# any node magnitude beyond this is treated as blow-up
_DIVERGENCE_LIMIT = 1e30

_ALIGN_TOL = 1e-9


class StabilityError(ValueError):
    """Time step violates the explicit-scheme stability bound."""


class GridAlignmentError(ValueError):
    """Requested point does not coincide with a grid node."""


class DivergenceError(RuntimeError):
    """Solution blew up or became non-finite during time stepping."""

    def __init__(self, level: int, t: float):
        self.level = level
        self.t = t
        super().__init__(
            f"solution diverged at time level {level} (t = {t:g}); "
            "check the initial condition and coefficients"
        )


@dataclass(frozen=True)
class Field:
    """Space-time solution values[n, i] at time level n, spatial node i."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.nt, self.grid.nx):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.nt}, {self.grid.nx})"
            )

    def to_csv(self, path, t_points=None) -> None:
        """Write columns x, then one column of u per requested time level."""
        if t_points is None:
            t_points = self.grid.t_nodes
        t_points = np.atleast_1d(np.asarray(t_points, dtype=float))
        idx = [_node_index(self.grid.t_nodes, t, "time") for t in t_points]
        header = "x," + ",".join(f"t={t:g}" for t in t_points)
        cols = np.column_stack([self.grid.x_nodes] + [self.values[k] for k in idx])
        np.savetxt(path, cols, delimiter=",", header=header, comments="")


def stability_check(params: ModelParams, h: float) -> float:
    """Largest stable time step for the explicit scheme at spatial step h.

    tau_max = SAFETY * h^2 / (2 D + h^2 * r_max) with r_max the supremum of
    the growth rate over [1, t_end].  Below this bound the update is a convex
    combination plus a logistic increment, so 0 <= u <= K is preserved.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    r_max = params.growth.max_on(1.0, params.t_end)
    return SAFETY * h * h / (2.0 * params.D + h * h * r_max)


def build_grid(params: ModelParams, h: float = 0.05, tau: float | None = None) -> Grid:
    """Uniform grid on [l1, l2] x [1, t_end] with observation-friendly steps.

    h must divide l2 - l1.  When tau is omitted it is set to 1/ceil(1/tau_max)
    so that every integer time is a grid node; an explicit tau must divide 1
    and satisfy the stability bound.
    """
    span = params.l2 - params.l1
    nseg = span / h
    if abs(nseg - round(nseg)) > _ALIGN_TOL * max(1.0, nseg):
        raise GridAlignmentError(
            f"h={h} does not divide the domain span {span}; observation "
            "points would fall off the grid"
        )
    nseg = round(nseg)
    x_nodes = np.linspace(params.l1, params.l2, nseg + 1)

    tau_max = stability_check(params, h)
    if tau is None:
        nsub = max(1, math.ceil(1.0 / tau_max - 1e-12))
    else:
        if tau > tau_max * (1.0 + 1e-9):
            raise StabilityError(
                f"tau={tau} exceeds the stability bound {tau_max:.6g}"
            )
        nsub = 1.0 / tau
        if abs(nsub - round(nsub)) > _ALIGN_TOL * nsub:
            raise GridAlignmentError(
                f"tau={tau} must divide 1 so integer observation times are nodes"
            )
        nsub = round(nsub)
    steps = (params.t_end - 1.0) * nsub
    if abs(steps - round(steps)) > _ALIGN_TOL * max(1.0, steps):
        raise GridAlignmentError(
            f"time span {params.t_end - 1.0} is not an integer number of "
            f"steps tau=1/{nsub}"
        )
    steps = round(steps)
    # integer times fall exactly on nodes: k/nsub is exact there
    t_nodes = 1.0 + np.arange(steps + 1) / nsub
    return Grid(h=h, tau=1.0 / nsub, x_nodes=x_nodes, t_nodes=t_nodes)


def _time_kernel(phi0, coef, tau, K, rvals, gvals, use_g, nt):
    nx = phi0.size
    U = np.empty((nt, nx))
    for i in range(nx):
        U[0, i] = phi0[i]
    for m in range(nt - 1):
        r = rvals[m]
        for i in range(nx):
            if i == 0:
                lap = 2.0 * (U[m, 1] - U[m, 0])
            elif i == nx - 1:
                lap = 2.0 * (U[m, nx - 2] - U[m, nx - 1])
            else:
                lap = U[m, i + 1] - 2.0 * U[m, i] + U[m, i - 1]
            u = U[m, i]
            react = (1.0 - u / K) * r * u
            g = gvals[m, i] if use_g else 0.0
            U[m + 1, i] = u + tau * (coef * lap + react + g)
        for i in range(nx):
            v = U[m + 1, i]
            if not (-_DIVERGENCE_LIMIT < v < _DIVERGENCE_LIMIT):
                return U, m + 1
    return U, -1


if _HAVE_NUMBA:
    _time_kernel_nb = njit(cache=True, nogil=True)(_time_kernel)


def _run_kernel(phi0, coef, tau, K, rvals, gvals, use_g, nt, backend):
    if backend == "auto":
        backend = "numba" if _HAVE_NUMBA else "python"
    if backend == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return _time_kernel_nb(phi0, coef, tau, K, rvals, gvals, use_g, nt)
    if backend == "python":
        return _time_kernel(phi0, coef, tau, K, rvals, gvals, use_g, nt)
    raise ValueError(f"unknown backend {backend!r}")


def solve_phi(
    params: ModelParams,
    phi0,
    grid: Grid,
    forcing=None,
    backend: str = "auto",
) -> Field:
    """Run the explicit scheme from raw initial values phi0 on grid nodes.

    forcing, if given, is either a callable g(x, t) evaluated on the grid or
    an array of shape (nt-1, nx) or (nt, nx) sampled at (t_m, x_i); it is
    added to the right-hand side, which is how manufactured-solution tests
    drive the scheme.
    """
    phi0 = np.ascontiguousarray(phi0, dtype=float)
    if phi0.shape != (grid.nx,):
        raise ValueError(f"phi0 shape {phi0.shape} does not match grid ({grid.nx},)")
    tau_max = stability_check(params, grid.h)
    if grid.tau > tau_max * (1.0 + 1e-9):
        raise StabilityError(
            f"grid.tau={grid.tau} exceeds the stability bound {tau_max:.6g}"
        )
    if (
        abs(grid.x_nodes[0] - params.l1) > _ALIGN_TOL
        or abs(grid.x_nodes[-1] - params.l2) > _ALIGN_TOL
    ):
        raise GridAlignmentError("grid does not span [l1, l2] of the model")

    rvals = np.ascontiguousarray(params.growth(grid.t_nodes), dtype=float)
    if forcing is None:
        gvals = np.zeros((1, 1))
        use_g = False
    else:
        if callable(forcing):
            tq, xq = np.meshgrid(grid.t_nodes[:-1], grid.x_nodes, indexing="ij")
            gvals = np.asarray(forcing(xq, tq), dtype=float)
        else:
            gvals = np.asarray(forcing, dtype=float)[: grid.nt - 1]
        if gvals.shape != (grid.nt - 1, grid.nx):
            raise ValueError(
                f"forcing shape {gvals.shape} does not match ({grid.nt - 1}, {grid.nx})"
            )
        gvals = np.ascontiguousarray(gvals)
        use_g = True

    U, bad_level = _run_kernel(
        phi0, params.D / grid.h**2, grid.tau, params.K, rvals, gvals, use_g, grid.nt, backend
    )
    if bad_level >= 0:
        raise DivergenceError(bad_level, float(grid.t_nodes[bad_level]))
    U.flags.writeable = False
    return Field(grid=grid, values=U)


def solve(
    params: ModelParams,
    src: SourceParam,
    grid: Grid,
    forcing=None,
    backend: str = "auto",
) -> Field:
    """Solve the initial-boundary value problem with phi given by the spline of src."""
    return solve_phi(params, spline_phi(src, grid.x_nodes), grid, forcing, backend)


def _node_index(nodes: np.ndarray, value: float, what: str) -> int:
    step = nodes[1] - nodes[0]
    idx = int(round((value - nodes[0]) / step))
    if idx < 0 or idx >= nodes.size or abs(nodes[idx] - value) > _ALIGN_TOL * max(
        1.0, abs(value)
    ):
        raise GridAlignmentError(f"{what} point {value} is not a grid node")
    return idx


def observe(field: Field, x_points, t_points) -> np.ndarray:
    """Point values u(x_i, t_k) as a matrix of shape (len(x_points), len(t_points)).

    Pure node extraction: every requested coordinate must sit on a grid node.
    """
    x_points = np.atleast_1d(np.asarray(x_points, dtype=float))
    t_points = np.atleast_1d(np.asarray(t_points, dtype=float))
    xi = np.array([_node_index(field.grid.x_nodes, x, "space") for x in x_points])
    ti = np.array([_node_index(field.grid.t_nodes, t, "time") for t in t_points])
    return field.values[np.ix_(ti, xi)].T.copy()
