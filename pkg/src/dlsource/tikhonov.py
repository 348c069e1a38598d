"""Regularized data-misfit functional for the source recovery problem.

T(q) = weight * sum_k |sum_i u(x_i, t_k; q) - f_k_delta|^2
       + alpha_reg * ||q - q0||^2

where u(.; q) is the forward solution started from the spline through the
knot values q, and weight defaults to (T - 1)/N2 with T the last observation
time.  ``TikhonovFunctional`` adds per-grid-point memoization for use inside
the discrete optimizer, where candidates repeat across sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import DivergenceError, observe, solve
from .model import Grid, ModelParams, SourceParam
from .observation import DataSet

__all__ = [
    "EvaluationError",
    "TikhonovConfig",
    "TikhonovFunctional",
    "misfit",
    "penalty",
    "evaluate",
]


class EvaluationError(RuntimeError):
    """Forward solve failed at a candidate q; the candidate is attached."""

    def __init__(self, q, cause: Exception):
        self.q = np.array(q, dtype=float)
        self.cause = cause
        super().__init__(
            f"objective evaluation failed at q = "
            f"{np.array2string(self.q, precision=6)}: {cause}"
        )


@dataclass(frozen=True)
class TikhonovConfig:
    """Everything needed to evaluate the functional at a candidate q."""

    dataset: DataSet
    params: ModelParams
    grid: Grid
    knots: np.ndarray
    q0: np.ndarray
    alpha_reg: float = 0.0
    weight: float | None = None
    x_points: np.ndarray = None

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        q0 = np.asarray(self.q0, dtype=float)
        x = (
            np.arange(1.0, 1.0 + self.dataset.N1)
            if self.x_points is None
            else np.asarray(self.x_points, dtype=float)
        )
        for name, arr in (("knots", knots), ("q0", q0), ("x_points", x)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.alpha_reg < 0:
            raise ValueError(f"alpha_reg must be nonnegative, got {self.alpha_reg}")
        if self.q0.shape != self.knots.shape:
            raise ValueError(
                f"q0 length {self.q0.size} does not match {self.knots.size} knots"
            )
        if self.x_points.size != self.dataset.N1:
            raise ValueError(
                f"{self.x_points.size} observation positions for N1="
                f"{self.dataset.N1} dataset"
            )
        if self.weight is None:
            # (T - 1)/N2 with T the final observation time
            object.__setattr__(
                self,
                "weight",
                (float(self.dataset.t_k[-1]) - 1.0) / self.dataset.N2,
            )
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")

    @property
    def d(self) -> int:
        return self.knots.size


def _model_sums(q: np.ndarray, cfg: TikhonovConfig) -> np.ndarray:
    src = SourceParam(cfg.knots, q)
    try:
        fld = solve(cfg.params, src, cfg.grid)
    except DivergenceError as exc:
        raise EvaluationError(q, exc) from exc
    return observe(fld, cfg.x_points, cfg.dataset.t_k).sum(axis=0)


def _check_q(q, cfg: TikhonovConfig) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (cfg.d,):
        raise ValueError(f"q shape {q.shape} does not match d={cfg.d}")
    return q


def misfit(q, cfg: TikhonovConfig) -> float:
    """Weighted squared distance between model sums and the noisy data."""
    q = _check_q(q, cfg)
    res = _model_sums(q, cfg) - cfg.dataset.f_delta
    return cfg.weight * float(res @ res)


def penalty(q, cfg: TikhonovConfig) -> float:
    """Regularization term alpha_reg * ||q - q0||^2."""
    q = _check_q(q, cfg)
    dq = q - cfg.q0
    return cfg.alpha_reg * float(dq @ dq)


def evaluate(q, cfg: TikhonovConfig) -> float:
    """Full functional: misfit plus penalty."""
    return misfit(q, cfg) + penalty(q, cfg)


@dataclass
class _TraceRecord:
    q: np.ndarray
    misfit: float
    penalty: float
    total: float


class TikhonovFunctional:
    """Memoized functional: repeated grid candidates trigger one solve only.

    The cache key is the exact byte pattern of the candidate vector, which is
    stable because the optimizer always hands back identical grid-node
    floats.  Cached and uncached evaluation agree bit-for-bit.
    """

    def __init__(self, cfg: TikhonovConfig, cache: bool = True, trace: bool = False):
        self.cfg = cfg
        self._cache: dict[bytes, float] | None = {} if cache else None
        self._trace: list[_TraceRecord] | None = [] if trace else None
        self.solve_count = 0

    def __call__(self, q) -> float:
        q = _check_q(q, self.cfg)
        key = q.tobytes() if self._cache is not None else None
        if key is not None and key in self._cache:
            return self._cache[key]
        m = misfit(q, self.cfg)
        p = penalty(q, self.cfg)
        total = m + p
        self.solve_count += 1
        if key is not None:
            self._cache[key] = total
        if self._trace is not None:
            self._trace.append(_TraceRecord(q.copy(), m, p, total))
        return total

    def write_trace(self, path) -> None:
        """CSV of every actual (non-cached) evaluation in call order."""
        if self._trace is None:
            raise ValueError("functional was created with trace=False")
        d = self.cfg.d
        header = ",".join(f"q_{j}" for j in range(d)) + ",misfit,penalty,total"
        lines = [header]
        for rec in self._trace:
            cells = [repr(float(v)) for v in rec.q]
            cells += [repr(float(rec.misfit)), repr(float(rec.penalty)), repr(float(rec.total))]
            lines.append(",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n")
