"""Config-driven experiment harness for the source-recovery studies.

A ScenarioConfig bundles everything one study needs: model coefficients,
knot layout, the exact source, the prior, noise levels, regularization
values, seeds, and the search budget.  The command functions below generate
self-consistent synthetic data from the scenario's exact source, run the
regularized inversion for every (delta, seed, alpha) combination, and write
plot-ready CSV files with JSON sidecars recording the exact configuration.

Determinism contract: a command run twice from the same config produces a
byte-identical runs.csv.  Wall times are therefore kept out of runs.csv and
reported only in the sidecar.  Independent runs execute concurrently when
``workers`` allows; each run owns its state and results are assembled in
config order, so concurrency never changes the output.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .model import (
    Constant,
    ExpDecay,
    GrowthRate,
    ModelParams,
    SourceParam,
    Tabulated,
    build_knots,
    err_metric,
    spline_phi,
)
from .forward import build_grid, observe, solve
from .observation import DataSet, ObservationSpec, add_noise, generate_exact, save
from .tikhonov import TikhonovConfig, TikhonovFunctional
from .ttopt import TTConfig, optimize

__all__ = [
    "DEFAULT_Q_EX",
    "DEFAULT_ALPHAS",
    "ScenarioConfig",
    "RunRecord",
    "run_inversion",
    "write_runs_csv",
    "write_phi_csv",
    "cmd_forward",
    "cmd_generate_data",
    "cmd_invert",
    "cmd_alpha_sweep",
    "cmd_noise_table",
    "cmd_apriori",
]

# default exact source for synthetic studies (knot values at d=6 layout)
DEFAULT_Q_EX = (5.8, 1.7, 1.9, 1.0, 0.95, 0.7)

# regularization sweep covering seven decades down to the unregularized case
DEFAULT_ALPHAS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 0.0)

# optimizer seeds are offset from noise seeds so the two streams never share
# a generator state
_TT_SEED_OFFSET = 7919

_GROWTH_KINDS = {"constant": Constant, "exp-decay": ExpDecay, "tabulated": Tabulated}


def _growth_to_dict(growth: GrowthRate) -> dict:
    if isinstance(growth, Constant):
        return {"kind": "constant", "r": growth.r}
    if isinstance(growth, ExpDecay):
        return {"kind": "exp-decay", "r": growth.r, "b": growth.b}
    if isinstance(growth, Tabulated):
        return {
            "kind": "tabulated",
            "times": [float(t) for t in growth.times],
            "values": [float(v) for v in growth.values],
        }
    raise TypeError(f"unknown growth rate type {type(growth).__name__}")


def _growth_from_dict(data: dict) -> GrowthRate:
    kind = data.get("kind")
    if kind not in _GROWTH_KINDS:
        raise ValueError(f"unknown growth kind {kind!r}")
    if kind == "constant":
        return Constant(float(data["r"]))
    if kind == "exp-decay":
        return ExpDecay(float(data["r"]), float(data["b"]))
    return Tabulated(np.asarray(data["times"], float), np.asarray(data["values"], float))


@dataclass(frozen=True)
class ScenarioConfig:
    """One study: model, source parameterization, data protocol, and budget.

    ``knots=None`` uses the standard layout for ``d`` (uniform on the
    domain, except d=14 which refines [1, 3]).  ``q_ex=None`` derives the
    exact knot values by sampling the default d=6 source curve at the
    scenario's knots, so studies with different d share one ground truth.
    ``q0`` is either an explicit vector or one of the presets
    "linear-decrease" (values falling uniformly from 6 to 0) and "zero".
    """

    name: str = "scenario"
    D: float = 0.01
    K: float = 25.0
    growth: GrowthRate = field(default_factory=lambda: ExpDecay(r=1.5, b=0.5))
    l1: float = 1.0
    l2: float = 6.0
    t_end: float = 24.0
    h: float = 0.05
    x_points: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    t_points: tuple = tuple(float(t) for t in range(3, 25))
    d: int = 6
    knots: tuple | None = None
    q_ex: tuple | None = None
    q0: str | tuple = "linear-decrease"
    pinned_indices: tuple | None = None
    deltas: tuple = (0.0,)
    alphas: tuple = DEFAULT_ALPHAS
    seeds: tuple = (0,)
    n: int = 601
    r_max: int = 4
    N_TT: int = 10
    b_min: float = 0.0
    b_max: float = 6.0
    weight: float | None = None
    workers: int | None = None
    out_dir: str = "runs"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"need at least two knots, got d={self.d}")
        for attr in ("x_points", "t_points", "deltas", "alphas", "seeds"):
            object.__setattr__(self, attr, tuple(float(v) for v in getattr(self, attr)))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.knots is not None:
            knots = tuple(float(v) for v in self.knots)
            if len(knots) != self.d:
                raise ValueError(f"{len(knots)} knots for d={self.d}")
            object.__setattr__(self, "knots", knots)
        if self.q_ex is not None:
            q_ex = tuple(float(v) for v in self.q_ex)
            if len(q_ex) != self.d:
                raise ValueError(f"q_ex length {len(q_ex)} does not match d={self.d}")
            object.__setattr__(self, "q_ex", q_ex)
        if isinstance(self.q0, str):
            if self.q0 not in ("linear-decrease", "zero"):
                raise ValueError(f"unknown q0 preset {self.q0!r}")
        else:
            q0 = tuple(float(v) for v in self.q0)
            if len(q0) != self.d:
                raise ValueError(f"q0 length {len(q0)} does not match d={self.d}")
            object.__setattr__(self, "q0", q0)
        if self.pinned_indices is not None:
            idx = tuple(int(i) for i in self.pinned_indices)
            if len(set(idx)) != len(idx):
                raise ValueError("pinned indices must be unique")
            if idx and not all(0 <= i < self.d for i in idx):
                raise ValueError(f"pinned indices must lie in [0, {self.d})")
            object.__setattr__(self, "pinned_indices", idx)
        if any(a < 0 for a in self.alphas):
            raise ValueError("regularization values must be nonnegative")
        if any(dl < 0 for dl in self.deltas):
            raise ValueError("noise levels must be nonnegative")
        if not self.deltas or not self.alphas or not self.seeds:
            raise ValueError("deltas, alphas and seeds must be non-empty")

    # --- resolved pieces -------------------------------------------------

    def params(self) -> ModelParams:
        return ModelParams(
            D=self.D, K=self.K, growth=self.growth,
            l1=self.l1, l2=self.l2, t_end=self.t_end,
        )

    def obs_spec(self) -> ObservationSpec:
        return ObservationSpec(
            x_points=np.array(self.x_points),
            t_points=np.array(self.t_points),
            h=self.h,
        )

    def resolved_knots(self) -> np.ndarray:
        if self.knots is not None:
            return np.array(self.knots)
        return build_knots(self.d)

    def resolved_q_ex(self) -> np.ndarray:
        if self.q_ex is not None:
            return np.array(self.q_ex)
        knots = self.resolved_knots()
        ref = SourceParam(build_knots(6), np.array(DEFAULT_Q_EX))
        if np.array_equal(knots, ref.knots):
            return np.array(DEFAULT_Q_EX)
        return np.atleast_1d(spline_phi(ref, knots))

    def resolved_q0(self) -> np.ndarray:
        if isinstance(self.q0, str):
            if self.q0 == "zero":
                return np.zeros(self.d)
            return np.linspace(6.0, 0.0, self.d)
        return np.array(self.q0)

    def exact_source(self) -> SourceParam:
        return SourceParam(self.resolved_knots(), self.resolved_q_ex())

    def tt_config(self, seed: int, pinned: np.ndarray | None = None) -> TTConfig:
        return TTConfig(
            d=self.d, b_min=self.b_min, b_max=self.b_max, n=self.n,
            r_max=self.r_max, N_TT=self.N_TT,
            seed=seed + _TT_SEED_OFFSET, pinned=pinned,
        )

    # --- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = _growth_to_dict(v) if f.name == "growth" else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "growth" in kwargs and isinstance(kwargs["growth"], dict):
            kwargs["growth"] = _growth_from_dict(kwargs["growth"])
        if "q0" in kwargs and not isinstance(kwargs["q0"], str):
            kwargs["q0"] = tuple(kwargs["q0"])
        for name in ("x_points", "t_points", "knots", "q_ex", "pinned_indices",
                     "deltas", "alphas", "seeds"):
            if kwargs.get(name) is not None:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one inversion; err compares q_best with the exact source."""

    scenario: str
    delta: float
    alpha_reg: float
    seed: int
    q_best: np.ndarray
    err: float
    T_best: float
    eval_count: int
    wall_time: float


def run_inversion(
    scn: ScenarioConfig,
    exact: DataSet,
    delta: float,
    alpha: float,
    seed: int,
    pinned: np.ndarray | None = None,
) -> RunRecord:
    """Invert one noisy dataset: minimize the regularized functional.

    ``pinned`` is an optional length-d vector with NaN marking free
    components; finite entries are held fixed during the search.
    """
    t0 = time.perf_counter()
    ds = add_noise(exact, delta, seed) if delta > 0 else exact
    knots = scn.resolved_knots()
    cfg = TikhonovConfig(
        dataset=ds,
        params=scn.params(),
        grid=build_grid(scn.params(), h=scn.h),
        knots=knots,
        q0=scn.resolved_q0(),
        alpha_reg=alpha,
        weight=scn.weight,
        x_points=np.array(scn.x_points),
    )
    functional = TikhonovFunctional(cfg)
    res = optimize(functional, scn.tt_config(seed, pinned), log_evals=True)
    if res.evals.size and res.J_best != float(res.evals.min()):
        raise RuntimeError("best functional value disagrees with the evaluation log")
    return RunRecord(
        scenario=scn.name,
        delta=float(delta),
        alpha_reg=float(alpha),
        seed=int(seed),
        q_best=res.q_best,
        err=err_metric(scn.resolved_q_ex(), res.q_best),
        T_best=res.J_best,
        eval_count=res.eval_count,
        wall_time=time.perf_counter() - t0,
    )


def _pin_vector(scn: ScenarioConfig) -> np.ndarray | None:
    if not scn.pinned_indices:
        return None
    pin = np.full(scn.d, np.nan)
    pin[list(scn.pinned_indices)] = scn.resolved_q_ex()[list(scn.pinned_indices)]
    return pin


def _map_runs(fn, items, workers):
    if workers is None:
        workers = min(32, os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_sidecar(path: Path, scn: ScenarioConfig, command: str, extra=None) -> None:
    meta = {"command": command, "config": scn.to_dict()}
    if extra:
        meta.update(extra)
    _write_atomic(path.with_name(path.name + ".meta.json"),
                  json.dumps(meta, indent=2) + "\n")


def write_runs_csv(path, records, q_ex) -> Path:
    """runs.csv: one row per inversion, err recomputed from q_best.

    Columns: scenario, delta, alpha_reg, seed, err, T_best, eval_count and
    the recovered knot values.  Wall time is deliberately absent so repeated
    runs are byte-identical; it lives in the sidecar.
    """
    path = Path(path)
    q_ex = np.asarray(q_ex, dtype=float)
    d = records[0].q_best.size
    header = "scenario,delta,alpha_reg,seed,err,T_best,eval_count," + ",".join(
        f"q_{j}" for j in range(d)
    )
    lines = [header]
    for rec in records:
        cells = [
            rec.scenario,
            repr(float(rec.delta)),
            repr(float(rec.alpha_reg)),
            str(rec.seed),
            repr(err_metric(q_ex, rec.q_best)),
            repr(float(rec.T_best)),
            str(rec.eval_count),
        ]
        cells += [repr(float(v)) for v in rec.q_best]
        lines.append(",".join(cells))
    _write_atomic(path, "\n".join(lines) + "\n")
    return path


def write_phi_csv(path, scn: ScenarioConfig, q_best: np.ndarray, n_samples: int = 201) -> Path:
    """Recovered source curve sampled densely for plotting.

    Columns: x, phi_exact, phi_recovered, phi_prior (all spline values on
    the scenario's knots).
    """
    path = Path(path)
    knots = scn.resolved_knots()
    x = np.linspace(scn.l1, scn.l2, n_samples)
    curves = [
        np.atleast_1d(spline_phi(SourceParam(knots, qv), x))
        for qv in (scn.resolved_q_ex(), np.asarray(q_best, float), scn.resolved_q0())
    ]
    lines = ["x,phi_exact,phi_recovered,phi_prior"]
    for row in zip(x, *curves):
        lines.append(",".join(repr(float(v)) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")
    return path


def _out_dir(scn: ScenarioConfig, out: str | None) -> Path:
    out_dir = Path(out if out is not None else scn.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def cmd_forward(scn: ScenarioConfig, out: str | None = None) -> Path:
    """Solve the forward problem once and export field and observations.

    Writes field.csv (full spatial profiles at the observation times) and
    observations.csv (the matrix u(x_i, t_k) at the observation points).
    """
    out_dir = _out_dir(scn, out)
    params = scn.params()
    grid = build_grid(params, h=scn.h)
    fld = solve(params, scn.exact_source(), grid)

    t = np.array(scn.t_points)
    field_path = out_dir / "field.csv"
    fld.to_csv(field_path, t_points=t)
    _write_sidecar(field_path, scn, "forward")

    x = np.array(scn.x_points)
    samples = observe(fld, x, t)
    lines = ["x," + ",".join(f"t={tk:g}" for tk in t)]
    for i, xi in enumerate(x):
        lines.append(",".join([repr(float(xi))] + [repr(float(v)) for v in samples[i]]))
    obs_path = out_dir / "observations.csv"
    _write_atomic(obs_path, "\n".join(lines) + "\n")
    _write_sidecar(obs_path, scn, "forward")
    return out_dir


def cmd_generate_data(scn: ScenarioConfig, out: str | None = None) -> list[Path]:
    """Write one dataset file per (delta, seed): exact sums plus noisy sums.

    delta=0 produces a single file per delta (no seed in the name) whose
    noisy column equals the exact one.
    """
    out_dir = _out_dir(scn, out)
    exact = generate_exact(scn.params(), scn.exact_source(), scn.obs_spec())
    paths = []
    for delta in scn.deltas:
        if delta == 0:
            ds, stem = exact, f"data_delta{delta:g}"
            save(ds, out_dir / f"{stem}.csv")
            paths.append(out_dir / f"{stem}.csv")
            continue
        for seed in scn.seeds:
            ds = add_noise(exact, delta, seed)
            p = out_dir / f"data_delta{delta:g}_seed{seed}.csv"
            save(ds, p)
            paths.append(p)
    _write_sidecar(out_dir / "data", scn, "generate-data",
                   {"files": [p.name for p in paths]})
    return paths


def _run_grid(scn, exact, combos, pinned=None):
    records = _map_runs(
        lambda c: run_inversion(scn, exact, c[0], c[1], c[2], pinned=pinned),
        combos,
        scn.workers,
    )
    return list(records)


def _finish(scn, out_dir, records, command):
    runs_path = write_runs_csv(out_dir / "runs.csv", records, scn.resolved_q_ex())
    _write_sidecar(runs_path, scn, command,
                   {"wall_times": [rec.wall_time for rec in records]})
    return records


def cmd_invert(scn: ScenarioConfig, out: str | None = None,
               dataset: DataSet | None = None) -> list[RunRecord]:
    """Single inversion using the first delta, alpha and seed of the config.

    Writes runs.csv plus phi_recovered.csv with the exact, recovered and
    prior curves.  ``dataset`` substitutes pre-generated data for the
    scenario's own synthesis.
    """
    out_dir = _out_dir(scn, out)
    exact = dataset if dataset is not None else generate_exact(
        scn.params(), scn.exact_source(), scn.obs_spec()
    )
    combos = [(scn.deltas[0], scn.alphas[0], scn.seeds[0])]
    records = _run_grid(scn, exact, combos)
    _finish(scn, out_dir, records, "invert")
    phi_path = write_phi_csv(out_dir / "phi_recovered.csv", scn, records[0].q_best)
    _write_sidecar(phi_path, scn, "invert")
    return records


def cmd_alpha_sweep(scn: ScenarioConfig, out: str | None = None) -> list[RunRecord]:
    """Inversions over the full alpha list for every (delta, seed).

    All alphas within one (delta, seed) cell share the same noise draw and
    the same optimizer seed, so rows differ only through the penalty term.
    """
    out_dir = _out_dir(scn, out)
    exact = generate_exact(scn.params(), scn.exact_source(), scn.obs_spec())
    combos = [
        (delta, alpha, seed)
        for delta in scn.deltas
        for seed in scn.seeds
        for alpha in scn.alphas
    ]
    records = _run_grid(scn, exact, combos)
    return _finish(scn, out_dir, records, "alpha-sweep")


def cmd_noise_table(scn: ScenarioConfig, out: str | None = None) -> list[RunRecord]:
    """Error and functional value per noise level, aggregated over seeds.

    Uses the first alpha of the config for every run (0 reproduces the
    unregularized protocol).  Writes runs.csv plus noise_summary.csv with
    mean and standard deviation of err and T_best per delta.
    """
    out_dir = _out_dir(scn, out)
    exact = generate_exact(scn.params(), scn.exact_source(), scn.obs_spec())
    alpha = scn.alphas[0]
    combos = [(delta, alpha, seed) for delta in scn.deltas for seed in scn.seeds]
    records = _run_grid(scn, exact, combos)
    _finish(scn, out_dir, records, "noise-table")

    lines = ["delta,mean_err,std_err,mean_T,std_T,runs"]
    for delta in scn.deltas:
        errs = np.array([r.err for r in records if r.delta == delta])
        ts = np.array([r.T_best for r in records if r.delta == delta])
        lines.append(",".join([
            repr(float(delta)),
            repr(float(errs.mean())), repr(float(errs.std())),
            repr(float(ts.mean())), repr(float(ts.std())),
            str(errs.size),
        ]))
    summary_path = out_dir / "noise_summary.csv"
    _write_atomic(summary_path, "\n".join(lines) + "\n")
    _write_sidecar(summary_path, scn, "noise-table")
    return records


def cmd_apriori(scn: ScenarioConfig, out: str | None = None) -> list[RunRecord]:
    """Inversion with the configured components pinned to their exact values.

    The optimizer searches only the free components; with no pinned indices
    this is exactly cmd_invert.
    """
    out_dir = _out_dir(scn, out)
    exact = generate_exact(scn.params(), scn.exact_source(), scn.obs_spec())
    combos = [(scn.deltas[0], scn.alphas[0], scn.seeds[0])]
    records = _run_grid(scn, exact, combos, pinned=_pin_vector(scn))
    _finish(scn, out_dir, records, "apriori")
    phi_path = write_phi_csv(out_dir / "phi_recovered.csv", scn, records[0].q_best)
    _write_sidecar(phi_path, scn, "apriori")
    return records
