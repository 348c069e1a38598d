"""Integral-type observations: generation, noise, and persistence.

Observations are sums of the field over the observation points,
f_k = sum_i u(x_i, t_k).  Noise is multiplicative Gaussian,
f_k_delta = f_k (1 + delta gamma_k / 100) with gamma_k i.i.d. standard
normal.  Random draws come from numpy's default generator (PCG64), so a
dataset is fully reproducible from (delta, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .forward import build_grid, observe, solve
from .model import ModelParams, SourceParam

__all__ = [
    "DatasetFormatError",
    "ObservationSpec",
    "DataSet",
    "generate_exact",
    "add_noise",
    "save",
    "load",
    "reference_dataset",
]


class DatasetFormatError(ValueError):
    """Dataset file cannot be parsed; the message names the offending line."""


def _frozen(arr):
    arr = np.asarray(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ObservationSpec:
    """Where and when the field is sampled, and on which grid."""

    x_points: np.ndarray = None
    t_points: np.ndarray = None
    h: float = 0.05

    def __post_init__(self):
        x = np.arange(1.0, 6.0) if self.x_points is None else self.x_points
        t = np.arange(3.0, 25.0) if self.t_points is None else self.t_points
        object.__setattr__(self, "x_points", _frozen(x))
        object.__setattr__(self, "t_points", _frozen(t))
        if self.x_points.size < 1 or self.t_points.size < 1:
            raise ValueError("observation spec needs at least one point in x and t")

    @property
    def N1(self) -> int:
        return self.x_points.size

    @property
    def N2(self) -> int:
        return self.t_points.size


@dataclass(frozen=True)
class DataSet:
    """Observed sums at times t_k: exact (f) and noisy (f_delta)."""

    t_k: np.ndarray
    f: np.ndarray
    f_delta: np.ndarray
    delta: float
    seed: int | None
    N1: int

    def __post_init__(self):
        t_k = _frozen(self.t_k)
        f = _frozen(self.f)
        f_delta = _frozen(self.f_delta)
        for name, arr in (("t_k", t_k), ("f", f), ("f_delta", f_delta)):
            object.__setattr__(self, name, arr)
        if not (self.t_k.size == self.f.size == self.f_delta.size):
            raise ValueError("t_k, f and f_delta must have equal length")
        if self.delta < 0:
            raise ValueError(f"noise level must be nonnegative, got {self.delta}")
        if not np.all(np.isfinite(self.f)):
            raise ValueError("exact observations must be finite")

    @property
    def N2(self) -> int:
        return self.t_k.size


def generate_exact(
    params: ModelParams,
    src: SourceParam,
    spec: ObservationSpec | None = None,
    backend: str = "auto",
) -> DataSet:
    """Noise-free dataset from a forward solve: f_k = sum_i u(x_i, t_k)."""
    if spec is None:
        spec = ObservationSpec()
    grid = build_grid(params, h=spec.h)
    fld = solve(params, src, grid, backend=backend)
    samples = observe(fld, spec.x_points, spec.t_points)
    f = samples.sum(axis=0)
    return DataSet(
        t_k=spec.t_points, f=f, f_delta=f.copy(), delta=0.0, seed=None, N1=spec.N1
    )


def add_noise(ds: DataSet, delta: float, seed: int) -> DataSet:
    """Multiplicative Gaussian perturbation of the exact sums.

    f_delta_k = f_k (1 + delta gamma_k / 100), gamma_k ~ N(0, 1) drawn in one
    batch from numpy's default generator (PCG64) seeded with ``seed``.  Large
    delta may produce negative values; they are kept as-is.
    """
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    gamma = np.random.default_rng(seed).standard_normal(ds.N2)
    f_delta = ds.f * (1.0 + delta * gamma / 100.0)
    return DataSet(
        t_k=ds.t_k, f=ds.f, f_delta=f_delta, delta=float(delta), seed=seed, N1=ds.N1
    )


def save(ds: DataSet, path) -> None:
    """CSV with header t,f,f_delta plus a JSON metadata sidecar.

    Floats are written with shortest round-trip precision, so load(save(ds))
    is lossless.
    """
    path = Path(path)
    lines = ["t,f,f_delta"]
    for t, f, fd in zip(ds.t_k, ds.f, ds.f_delta):
        lines.append(f"{float(t)!r},{float(f)!r},{float(fd)!r}")
    path.write_text("\n".join(lines) + "\n")
    meta = {"delta": ds.delta, "seed": ds.seed, "N1": ds.N1}
    _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n")


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def load(path) -> DataSet:
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: line 1: empty file")
    if [c.strip() for c in lines[0].split(",")] != ["t", "f", "f_delta"]:
        raise DatasetFormatError(
            f"{path}: line 1: expected header 't,f,f_delta', got {lines[0]!r}"
        )
    t_k, f, f_delta = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 3:
            raise DatasetFormatError(
                f"{path}: line {lineno}: expected 3 columns, got {len(cells)}"
            )
        try:
            t_k.append(float(cells[0]))
            f.append(float(cells[1]))
            f_delta.append(float(cells[2]))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from None
    meta_path = _sidecar(path)
    if not meta_path.exists():
        raise DatasetFormatError(f"{meta_path}: missing metadata sidecar")
    try:
        meta = json.loads(meta_path.read_text())
        delta = float(meta["delta"])
        seed = meta["seed"]
        n1 = int(meta["N1"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetFormatError(f"{meta_path}: bad metadata: {exc}") from None
    return DataSet(
        t_k=np.array(t_k),
        f=np.array(f),
        f_delta=np.array(f_delta),
        delta=delta,
        seed=None if seed is None else int(seed),
        N1=n1,
    )


def reference_dataset() -> DataSet:
    """The shipped noise-free d=6 reference dataset (default model, h=0.05)."""
    data_dir = resources.files("dlsource") / "data"
    with resources.as_file(data_dir) as d:
        return load(Path(d) / "reference_d6.csv")
