"""Domain types for the diffusion-logistic source problem.

The unknown initial density is parametrized by a vector ``q`` of values at a
small set of knot positions; between knots it is filled in by a cubic spline
(not-a-knot end conditions, so that with enough knots the interpolant carries
no artificial flatness at the boundary).  This module holds the model
parameter containers, knot-grid construction, the spline mapping, and the
relative-error metric used to judge reconstructions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Constant",
    "ExpDecay",
    "Tabulated",
    "GrowthRate",
    "ModelParams",
    "SourceParam",
    "Grid",
    "DEFAULT_BOUNDS",
    "build_knots",
    "spline_coefficients",
    "spline_phi",
    "err_metric",
]

# Admissible range for source values, shared by the optimizer box and the
# prior presets.
DEFAULT_BOUNDS = (0.0, 6.0)


def _frozen_array(obj, name, value, dtype=float):
    arr = np.asarray(value, dtype=dtype)
    arr.flags.writeable = False
    object.__setattr__(obj, name, arr)
    return arr


@dataclass(frozen=True)
class Constant:
    """Time-independent growth rate."""

    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"growth rate must be nonnegative, got {self.r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.r + 0.0 * t

    def max_on(self, t0: float, t1: float) -> float:
        return self.r


@dataclass(frozen=True)
class ExpDecay:
    """Growth rate decaying exponentially from the initial time, r * exp(-b (t - 1))."""

    r: float
    b: float

    def __post_init__(self):
        if self.r < 0 or self.b < 0:
            raise ValueError(f"ExpDecay requires r >= 0 and b >= 0, got r={self.r}, b={self.b}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.r * np.exp(-self.b * (t - 1.0))

    def max_on(self, t0: float, t1: float) -> float:
        # decreasing in t, so the supremum sits at the left end
        return float(self(min(t0, t1)))


@dataclass(frozen=True)
class Tabulated:
    """Growth rate given at sample times, linearly interpolated in between."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen_array(self, "times", self.times)
        values = _frozen_array(self, "values", self.values)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("Tabulated needs at least two sample times")
        if values.shape != times.shape:
            raise ValueError("times and values must have equal length")
        if not np.all(np.diff(times) > 0):
            raise ValueError("sample times must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("growth rate values must be nonnegative")

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.times, self.values)

    def __eq__(self, other):
        if not isinstance(other, Tabulated):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None

    def max_on(self, t0: float, t1: float) -> float:
        lo, hi = min(t0, t1), max(t0, t1)
        # piecewise linear, so the supremum is attained at a breakpoint or
        # at the interval ends
        inside = self.values[(self.times >= lo) & (self.times <= hi)]
        ends = self(np.array([lo, hi]))
        return float(max(np.max(ends), np.max(inside) if inside.size else -np.inf))


GrowthRate = Union[Constant, ExpDecay, Tabulated]


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the diffusion-logistic equation on [l1, l2] x [1, t_end].

    Attributes
    ----------
    D : float
        Diffusivity (popularity of the information item).
    K : float
        Carrying capacity (maximum user density the network supports).
    growth : GrowthRate
        Time-dependent growth rate of the number of active users.
    l1, l2 : float
        End points of the distance domain.
    t_end : float
        Final simulation time; the process starts at t = 1.
    """

    D: float = 0.01
    K: float = 25.0
    growth: GrowthRate = ExpDecay(r=1.5, b=0.5)
    l1: float = 1.0
    l2: float = 6.0
    t_end: float = 24.0

    def __post_init__(self):
        if self.D <= 0:
            raise ValueError(f"D must be positive, got {self.D}")
        if self.K <= 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if not self.l1 < self.l2:
            raise ValueError(f"need l1 < l2, got l1={self.l1}, l2={self.l2}")
        if not self.t_end > 1.0:
            raise ValueError(f"t_end must exceed the initial time 1, got {self.t_end}")


@dataclass(frozen=True)
class SourceParam:
    """Discrete source: values of the initial density at knot positions.

    ``pinned`` marks components whose values are known a priori; the
    optimizer must treat those entries of ``values`` as fixed.
    """

    knots: np.ndarray
    values: np.ndarray
    pinned: np.ndarray | None = None

    def __post_init__(self):
        knots = _frozen_array(self, "knots", self.knots)
        values = _frozen_array(self, "values", self.values)
        if knots.ndim != 1 or knots.size < 1:
            raise ValueError("knots must be a nonempty 1-d array")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knot positions must be strictly increasing")
        if values.shape != knots.shape:
            raise ValueError(
                f"values length {values.size} does not match {knots.size} knots"
            )
        if self.pinned is not None:
            pinned = _frozen_array(self, "pinned", self.pinned, dtype=bool)
            if pinned.shape != knots.shape:
                raise ValueError("pinned mask length must match the knot count")

    @property
    def d(self) -> int:
        return self.knots.size

    def with_values(self, values) -> "SourceParam":
        """Same knots and pin mask, new value vector."""
        return SourceParam(self.knots, values, self.pinned)

    def to_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "pinned": None if self.pinned is None else self.pinned.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceParam":
        pinned = data.get("pinned")
        return cls(
            np.asarray(data["knots"], dtype=float),
            np.asarray(data["values"], dtype=float),
            None if pinned is None else np.asarray(pinned, dtype=bool),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SourceParam":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid for the explicit scheme."""

    h: float
    tau: float
    x_nodes: np.ndarray
    t_nodes: np.ndarray

    def __post_init__(self):
        _frozen_array(self, "x_nodes", self.x_nodes)
        _frozen_array(self, "t_nodes", self.t_nodes)
        if self.h <= 0 or self.tau <= 0:
            raise ValueError("grid steps must be positive")
        if self.x_nodes.size < 3 or self.t_nodes.size < 2:
            raise ValueError("grid too small")

    @property
    def nx(self) -> int:
        return self.x_nodes.size

    @property
    def nt(self) -> int:
        return self.t_nodes.size


def build_knots(d: int) -> np.ndarray:
    """Knot positions for a ``d``-component source on [1, 6].

    d = 14 uses the refined layout with knots every 0.2 on [1, 3] (the region
    closest to the propagation source) plus coarse knots at 4, 5, 6; every
    other dimension gets a uniform grid, which for d = 6 is the integer
    positions 1..6.
    """
    if d < 2:
        raise ValueError(f"need at least two knots, got d={d}")
    if d == 14:
        return np.concatenate([np.linspace(1.0, 3.0, 11), [4.0, 5.0, 6.0]])
    return np.linspace(1.0, 6.0, d)


def _divided_diff2(x, y):
    # second divided difference f[x0, x1, x2] times 2 = curvature of the
    # parabola through three points
    d01 = (y[1] - y[0]) / (x[1] - x[0])
    d12 = (y[2] - y[1]) / (x[2] - x[1])
    return 2.0 * (d12 - d01) / (x[2] - x[0])


def spline_coefficients(knots: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Second derivatives of the interpolating cubic spline at the knots.

    Uses not-a-knot end conditions for four or more knots (the first two and
    the last two segments each share one cubic).  Three knots degenerate to
    the parabola through them, two knots to the straight line.
    """
    x = np.asarray(knots, dtype=float)
    y = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("spline parametrization needs at least two knots")
    if n == 2:
        return np.zeros(2)
    if n == 3:
        return np.full(3, _divided_diff2(x, y))

    h = np.diff(x)
    rhs = np.zeros(n)
    mat = np.zeros((n, n))
    for i in range(1, n - 1):
        mat[i, i - 1] = h[i - 1]
        mat[i, i] = 2.0 * (h[i - 1] + h[i])
        mat[i, i + 1] = h[i]
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
    # not-a-knot: third derivative continuous across the first and last
    # interior knots
    mat[0, 0] = h[1]
    mat[0, 1] = -(h[0] + h[1])
    mat[0, 2] = h[0]
    mat[-1, -3] = h[-1]
    mat[-1, -2] = -(h[-2] + h[-1])
    mat[-1, -1] = h[-2]
    return np.linalg.solve(mat, rhs)


def spline_phi(src: SourceParam, x) -> np.ndarray:
    """Initial density phi at positions ``x`` from the knot values of ``src``.

    Interpolates the knot data exactly; positions outside the knot range are
    extrapolated with the boundary polynomial.
    """
    xq = np.asarray(x, dtype=float)
    scalar = xq.ndim == 0
    xq = np.atleast_1d(xq)

    kx = src.knots
    ky = src.values
    m = spline_coefficients(kx, ky)
    h = np.diff(kx)

    seg = np.clip(np.searchsorted(kx, xq, side="right") - 1, 0, kx.size - 2)
    x0, x1 = kx[seg], kx[seg + 1]
    m0, m1 = m[seg], m[seg + 1]
    hs = h[seg]
    a = (x1 - xq) / hs
    b = (xq - x0) / hs
    out = (
        a * ky[seg]
        + b * ky[seg + 1]
        + ((a**3 - a) * m0 + (b**3 - b) * m1) * hs**2 / 6.0
    )
    return float(out[0]) if scalar else out


def err_metric(q_ex, q_m) -> float:
    """Relative Euclidean error of a reconstruction against the exact source."""
    q_ex = np.asarray(q_ex, dtype=float)
    q_m = np.asarray(q_m, dtype=float)
    if q_ex.shape != q_m.shape:
        raise ValueError(f"shape mismatch: {q_ex.shape} vs {q_m.shape}")
    ref = np.linalg.norm(q_ex)
    if ref == 0.0:
        raise ZeroDivisionError("err_metric undefined for a zero reference vector")
    return float(np.linalg.norm(q_ex - q_m) / ref)
