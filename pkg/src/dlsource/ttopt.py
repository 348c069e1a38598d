"""Derivative-free global minimization over a box via tensor-train sweeps.

The objective on the product grid is treated as an implicit tensor.  Each
sweep walks the dimensions left-to-right and back, evaluating the objective
on cross-shaped candidate sets (left prefixes x grid nodes x right
suffixes), keeping the best value seen, and selecting the next index sets
with maxvol on the mapped values h(J - shift).  The mapping
h(y) = pi/2 - arctan(y) with shift equal to the running best turns
near-optimal candidates into large-magnitude rows, which is what maxvol
prefers; failed evaluations carry +inf and map to 0, so they are never
selected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np
import scipy.linalg

__all__ = [
    "SubmatrixSelectionError",
    "ObjectiveEvaluationError",
    "TTConfig",
    "TTState",
    "TTResult",
    "discretize",
    "maxvol",
    "init_state",
    "sweep",
    "optimize",
]


class SubmatrixSelectionError(RuntimeError):
    """maxvol could not produce a nonsingular square submatrix."""


class ObjectiveEvaluationError(RuntimeError):
    """Objective failed at a candidate; the candidate is attached."""

    def __init__(self, q, cause: Exception):
        self.q = np.array(q, dtype=float)
        self.cause = cause
        super().__init__(
            f"objective failed at candidate "
            f"{np.array2string(self.q, precision=6)}: {cause}"
        )


@dataclass(frozen=True)
class TTConfig:
    """Box, grid and budget of the tensor-train search."""

    d: int
    b_min: float | np.ndarray = 0.0
    b_max: float | np.ndarray = 6.0
    n: int = 601
    r_max: int = 4
    N_TT: int = 10
    seed: int = 0
    mapping: str = "arctan"
    pinned: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        lo = np.broadcast_to(np.asarray(self.b_min, dtype=float), (self.d,)).copy()
        hi = np.broadcast_to(np.asarray(self.b_max, dtype=float), (self.d,)).copy()
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "b_min", lo)
        object.__setattr__(self, "b_max", hi)
        if not np.all(lo < hi):
            raise ValueError("b_min must be strictly below b_max in every dimension")
        if self.n < 2:
            raise ValueError(f"need at least two nodes per direction, got n={self.n}")
        if self.r_max < 1:
            raise ValueError(f"r_max must be at least 1, got {self.r_max}")
        if self.N_TT < 1:
            raise ValueError(f"N_TT must be at least 1, got {self.N_TT}")
        if self.pinned is not None:
            pin = np.asarray(self.pinned, dtype=float).copy()
            if pin.shape != (self.d,):
                raise ValueError(f"pinned must have length d={self.d}")
            pin.flags.writeable = False
            object.__setattr__(self, "pinned", pin)
        if not (callable(self.mapping) or self.mapping == "arctan"):
            raise ValueError(f"unknown mapping {self.mapping!r}")


@dataclass
class TTState:
    """Mutable sweep state: grids, index sets, shift, and bookkeeping."""

    grids: list
    left: list
    right: list
    shift: float
    q_best: np.ndarray | None
    J_best: float
    eval_count: int


@dataclass(frozen=True)
class TTResult:
    q_best: np.ndarray | None
    J_best: float
    eval_count: int
    trace: tuple
    evals: np.ndarray | None = None

    def write_trace(self, path) -> None:
        """CSV with one row per sweep: sweep, eval_count, J_best, q components."""
        d = 0 if self.q_best is None else self.q_best.size
        header = "sweep,eval_count,J_best," + ",".join(f"q_{j}" for j in range(d))
        lines = [header]
        for sweep_no, count, j_best, q in self.trace:
            cells = [str(sweep_no), str(count), repr(float(j_best))]
            cells += [repr(float(v)) for v in q]
            lines.append(",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n")


def discretize(cfg: TTConfig) -> list:
    """Per-dimension node arrays: node j = b_min + j (b_max - b_min)/(n - 1).

    Pinned dimensions collapse to the single pinned value (which need not
    lie on the uniform grid).
    """
    grids = []
    for k in range(cfg.d):
        if cfg.pinned is not None and not np.isnan(cfg.pinned[k]):
            grids.append(np.array([cfg.pinned[k]]))
            continue
        j = np.arange(cfg.n, dtype=float)
        # multiply before dividing: keeps decimal-fraction nodes exact
        grids.append(cfg.b_min[k] + j * (cfg.b_max[k] - cfg.b_min[k]) / (cfg.n - 1))
    return grids


def _lu_rows(M: np.ndarray) -> np.ndarray:
    rows, cols = M.shape
    with warnings.catch_warnings():
        # a singular factorization is expected for e.g. constant objectives;
        # it is handled by the caller's perturbation retry
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        piv = scipy.linalg.lu_factor(M)[1]
    perm = np.arange(rows)
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm[:cols].copy()


def _qr_rows(M: np.ndarray) -> np.ndarray:
    cols = M.shape[1]
    piv = scipy.linalg.qr(M.T, pivoting=True)[2]
    return piv[:cols].copy()


def _greedy_rows(M: np.ndarray) -> np.ndarray:
    # pick the longest row, then repeatedly the row farthest from the span
    # of the current selection
    cols = M.shape[1]
    norms = np.einsum("ij,ij->i", M, M)
    I = [int(np.argmax(norms))]
    for _ in range(1, cols):
        Q = np.linalg.qr(M[I].T)[0]
        resid = M - (M @ Q) @ Q.T
        norms = np.einsum("ij,ij->i", resid, resid)
        norms[I] = -1.0
        I.append(int(np.argmax(norms)))
    return np.array(I)


def _maxvol_iterate(M: np.ndarray, I0: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    cols = M.shape[1]
    I = np.array(I0[:cols], dtype=int)
    for _ in range(max_iters):
        B = np.linalg.solve(M[I].T, M.T).T
        if not np.all(np.isfinite(B)):
            raise np.linalg.LinAlgError("non-finite coefficients")
        flat = int(np.argmax(np.abs(B)))
        i, j = divmod(flat, cols)
        if abs(B[i, j]) <= 1.0 + tol:
            break
        I[j] = i
    return np.sort(I)


def _maxvol_multistart(M: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    # dominance is only a local property, so iterate from several
    # deterministic starting subsets and keep the largest volume
    candidates = []
    seen = set()
    for init in (_lu_rows, _qr_rows, _greedy_rows):
        try:
            I = _maxvol_iterate(M, init(M), tol, max_iters)
        except np.linalg.LinAlgError:
            continue
        key = tuple(I)
        if key not in seen:
            seen.add(key)
            candidates.append(I)
    if not candidates:
        raise np.linalg.LinAlgError("all starting subsets were singular")
    dets = [abs(np.linalg.det(M[I])) for I in candidates]
    return candidates[int(np.argmax(dets))]


# below this many row subsets the exact enumeration is cheaper than the
# swap iteration, and it is globally optimal instead of locally dominant
_EXACT_SUBSET_CAP = 1000


def maxvol(M, tol: float = 0.01, max_iters: int = 100) -> np.ndarray:
    """Row subset whose square submatrix has (near-)maximal |det|.

    Small matrices are solved exactly by enumerating every row subset.
    Large ones run the swap iteration (exchange rows while some entry of
    M x M[I]^-1 exceeds 1 + tol in magnitude) from several deterministic
    starting subsets, keeping the selection with the largest absolute
    determinant.  A singular matrix (e.g. constant objective values) is
    retried once with a tiny deterministic diagonal perturbation.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise SubmatrixSelectionError(f"expected a matrix, got shape {M.shape}")
    rows, cols = M.shape
    if rows < cols:
        raise SubmatrixSelectionError(
            f"need at least as many rows as columns, got {rows}x{cols}"
        )
    if cols == rows:
        return np.arange(cols)
    if comb(rows, cols) <= _EXACT_SUBSET_CAP:
        subsets = np.array(list(combinations(range(rows), cols)))
        dets = np.abs(np.linalg.det(M[subsets]))
        return subsets[int(np.argmax(dets))].copy()
    try:
        return _maxvol_multistart(M, tol, max_iters)
    except np.linalg.LinAlgError:
        work = M.copy()
        eps = 1e-12 * max(1.0, float(np.abs(M).max()))
        work[np.arange(cols), np.arange(cols)] += eps
        try:
            return _maxvol_multistart(work, tol, max_iters)
        except np.linalg.LinAlgError as exc:
            raise SubmatrixSelectionError(
                f"matrix of shape {rows}x{cols} is rank deficient beyond repair"
            ) from exc


def _bond_ranks(sizes: list[int], r_max: int) -> list[int]:
    # bond i sits between dims i-1 and i; capped by r_max and by the number
    # of distinct prefixes/suffixes so maxvol always sees rows >= cols
    d = len(sizes)
    cap = 10**9
    left_p = [1] * (d + 1)
    right_p = [1] * (d + 1)
    for i in range(1, d + 1):
        left_p[i] = min(left_p[i - 1] * sizes[i - 1], cap)
    for i in range(d - 1, -1, -1):
        right_p[i] = min(right_p[i + 1] * sizes[i], cap)
    bonds = [1] * (d + 1)
    for i in range(1, d):
        bonds[i] = min(r_max, left_p[i], right_p[i])
    return bonds


def init_state(cfg: TTConfig) -> TTState:
    """Step-2 initialization: seeded random unique right index sets."""
    grids = discretize(cfg)
    sizes = [g.size for g in grids]
    d = cfg.d
    bonds = _bond_ranks(sizes, cfg.r_max)
    rng = np.random.default_rng(cfg.seed)

    right = [None] * (d + 1)
    right[d] = np.zeros((1, 0), dtype=np.int64)
    for i in range(d - 1, 0, -1):
        tail = sizes[i:]
        r = bonds[i]
        total = 1
        for s in tail:
            total = min(total * s, 10**9)
        if total <= r:
            # tiny suffix space: enumerate it completely
            combos = np.indices(tail).reshape(len(tail), -1).T
            right[i] = np.ascontiguousarray(combos, dtype=np.int64)
            continue
        chosen = []
        seen = set()
        while len(chosen) < r:
            row = tuple(int(rng.integers(0, s)) for s in tail)
            if row not in seen:
                seen.add(row)
                chosen.append(row)
        right[i] = np.array(chosen, dtype=np.int64)

    left = [None] * d
    left[0] = np.zeros((1, 0), dtype=np.int64)
    return TTState(
        grids=grids,
        left=left,
        right=right,
        shift=np.inf,
        q_best=None,
        J_best=np.inf,
        eval_count=0,
    )


def _candidate_values(grids, cand_idx) -> np.ndarray:
    Q = np.empty((cand_idx.shape[0], len(grids)))
    for k, g in enumerate(grids):
        Q[:, k] = g[cand_idx[:, k]]
    return Q


def _eval_batch(objective, Q, on_error, eval_log) -> np.ndarray:
    vals = np.empty(Q.shape[0])
    for j in range(Q.shape[0]):
        try:
            v = float(objective(Q[j]))
        except Exception as exc:
            if on_error == "raise":
                raise ObjectiveEvaluationError(Q[j], exc) from exc
            v = np.inf
        # non-finite results (nan, -inf) cannot be ranked; demote them
        vals[j] = v if np.isfinite(v) else np.inf
    if eval_log is not None:
        eval_log.append(vals)
    return vals


def _update_best(state: TTState, Q, vals) -> None:
    j = int(np.argmin(vals))
    if vals[j] < state.J_best:
        state.J_best = float(vals[j])
        state.q_best = Q[j].copy()
    state.shift = state.J_best
    state.eval_count += vals.size


def _mapped(vals: np.ndarray, shift: float, mapping) -> np.ndarray:
    y = vals - (shift if np.isfinite(shift) else 0.0)
    if callable(mapping):
        out = np.asarray(mapping(y), dtype=float)
    else:
        out = np.pi / 2 - np.arctan(y)
    out[~np.isfinite(out)] = 0.0
    return out


def _cross_candidates(left, n_i, right) -> np.ndarray:
    r1, r2 = left.shape[0], right.shape[0]
    pre = np.repeat(left, n_i * r2, axis=0)
    mid = np.tile(np.repeat(np.arange(n_i, dtype=np.int64), r2), r1)[:, None]
    suf = np.tile(right, (r1 * n_i, 1))
    return np.hstack([pre, mid, suf])


def sweep(objective, state: TTState, cfg: TTConfig, on_error: str = "skip",
          eval_log: list | None = None) -> TTState:
    """One full iteration: a left-to-right pass plus a right-to-left pass.

    Each core evaluates its cross candidate set, updates the best solution
    and the shift, and exchanges an index set via maxvol on the mapped
    values.  ``on_error='skip'`` turns objective failures into +inf;
    ``'raise'`` propagates them with the candidate attached.
    """
    if on_error not in ("skip", "raise"):
        raise ValueError(f"unknown error policy {on_error!r}")
    d = len(state.grids)
    sizes = [g.size for g in state.grids]

    if d == 1:
        cand = np.arange(sizes[0], dtype=np.int64)[:, None]
        Q = _candidate_values(state.grids, cand)
        vals = _eval_batch(objective, Q, on_error, eval_log)
        _update_best(state, Q, vals)
        return state

    for i in range(d - 1):  # left-to-right: rebuild left[1..d-1]
        r1 = state.left[i].shape[0]
        r2 = state.right[i + 1].shape[0]
        cand = _cross_candidates(state.left[i], sizes[i], state.right[i + 1])
        Q = _candidate_values(state.grids, cand)
        vals = _eval_batch(objective, Q, on_error, eval_log)
        _update_best(state, Q, vals)
        mapped = _mapped(vals, state.shift, cfg.mapping)
        sel = maxvol(mapped.reshape(r1 * sizes[i], r2))
        new_left = np.empty((sel.size, i + 1), dtype=np.int64)
        for row, s in enumerate(sel):
            a, j = divmod(int(s), sizes[i])
            new_left[row, :i] = state.left[i][a]
            new_left[row, i] = j
        state.left[i + 1] = new_left

    for i in range(d - 1, 0, -1):  # right-to-left: rebuild right[d-1..1]
        r1 = state.left[i].shape[0]
        r2 = state.right[i + 1].shape[0]
        cand = _cross_candidates(state.left[i], sizes[i], state.right[i + 1])
        Q = _candidate_values(state.grids, cand)
        vals = _eval_batch(objective, Q, on_error, eval_log)
        _update_best(state, Q, vals)
        mapped = _mapped(vals, state.shift, cfg.mapping)
        sel = maxvol(mapped.reshape(r1, sizes[i] * r2).T)
        new_right = np.empty((sel.size, d - i), dtype=np.int64)
        for row, s in enumerate(sel):
            j, b = divmod(int(s), r2)
            new_right[row, 0] = j
            new_right[row, 1:] = state.right[i + 1][b]
        state.right[i] = new_right

    return state


def optimize(objective, cfg: TTConfig, on_error: str = "skip",
             log_evals: bool = False) -> TTResult:
    """Run N_TT sweeps and return the best grid point found.

    The returned q_best components are exact grid-node floats.  With
    ``log_evals=True`` every objective value is recorded in result.evals,
    whose minimum equals J_best.
    """
    state = init_state(cfg)
    eval_log: list | None = [] if log_evals else None
    trace = []

    total = 1
    for g in state.grids:
        total *= g.size

    if total == 1:
        # every dimension pinned: a single admissible point
        Q = _candidate_values(state.grids, np.zeros((1, cfg.d), dtype=np.int64))
        vals = _eval_batch(objective, Q, on_error, eval_log)
        _update_best(state, Q, vals)
        trace.append((1, state.eval_count, state.J_best,
                      tuple(state.q_best) if state.q_best is not None else ()))
    elif cfg.d == 1:
        # exhaustive: one sweep already covers the whole grid
        sweep(objective, state, cfg, on_error, eval_log)
        trace.append((1, state.eval_count, state.J_best,
                      tuple(state.q_best) if state.q_best is not None else ()))
    else:
        for sweep_no in range(1, cfg.N_TT + 1):
            sweep(objective, state, cfg, on_error, eval_log)
            trace.append((sweep_no, state.eval_count, state.J_best,
                          tuple(state.q_best) if state.q_best is not None else ()))

    evals = np.concatenate(eval_log) if eval_log else None
    return TTResult(
        q_best=state.q_best,
        J_best=state.J_best,
        eval_count=state.eval_count,
        trace=tuple(trace),
        evals=evals,
    )
