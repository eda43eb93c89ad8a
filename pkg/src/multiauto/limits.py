"""Numerical Bochner criterion, uniform continuity, supremum formula and
asymptotic decomposition.

Every check evaluates a *probeable* object on translated grid windows.  A
probeable is either a :class:`~multiauto.expr.FunctionExpr` or any object
exposing ``arity_time``, ``arity_state``, ``out_dim``, ``name`` and one of
``sample_points(points, states)`` / ``sample_window(window, states)``
returning an array of shape ``(N, S, q)``.  Solver outputs implement only
``sample_window`` and re-solve on each shifted window.

A pass is numerical evidence at a stated depth and tolerance, never a
proof; verdicts therefore carry depth, tolerances and seed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import expr as _expr
from .errors import FamilyNotUnbounded, NoConvergentSubsequence
from .families import (DEFAULT_SEED, BoundedSetSpec, GridWindow, ScalarSource, SequenceFamily,
                       rng_for)

CHUNK_ROWS = 1 << 15


def worker_count() -> int:
    """Worker cap taken from MULTIAUTO_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("MULTIAUTO_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# sampling helpers

def _states_for(f, state_set: BoundedSetSpec | None, seed: int) -> np.ndarray:
    p = f.arity_state
    if p == 0:
        return np.zeros((1, 0))
    if state_set is None:
        state_set = BoundedSetSpec.ball(p)
    if state_set.ambient_dim != p:
        raise ValueError(f"state set dimension {state_set.ambient_dim} != arity_state {p}")
    return state_set.sample(seed)


def sample_points(f, points: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Values on every (point, state) pair, shape ``(N, S, q)``."""
    points = np.asarray(points, dtype=float).reshape(-1, f.arity_time)
    if isinstance(f, _expr.FunctionExpr):
        out = []
        for start in range(0, len(points), CHUNK_ROWS):
            out.append(_expr.sample(f, points[start:start + CHUNK_ROWS], states))
        return np.concatenate(out, axis=0) if out else np.zeros((0, len(states), f.out_dim))
    if hasattr(f, "sample_points"):
        return f.sample_points(points, states)
    # window-only objects: one degenerate window per point
    rows = []
    for pt in points:
        w = GridWindow(f.arity_time, tuple(pt), tuple(pt + 1e-3), 2)
        rows.append(f.sample_window(w, states)[0])
    return np.stack(rows, axis=0)


def sample_window(f, window: GridWindow, states: np.ndarray) -> np.ndarray:
    if not isinstance(f, _expr.FunctionExpr) and hasattr(f, "sample_window"):
        return f.sample_window(window, states)
    return sample_points(f, window.points(), states)


def _translate_values(f, window: GridWindow, shifts: np.ndarray, states: np.ndarray,
                      mask: np.ndarray | None = None) -> np.ndarray:
    """Flattened values of ``f`` on ``window + shift`` for each shift: (K, M)."""
    def one(b):
        vals = sample_window(f, window.shifted(b), states)
        if mask is not None:
            vals = vals[mask]
        return vals.reshape(-1)

    workers = worker_count()
    if workers > 1 and len(shifts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, list(shifts)))
    else:
        rows = [one(b) for b in shifts]
    return np.stack(rows, axis=0)


def continuity_mask(window: GridWindow, axes: Sequence[int], atol: float = 1e-9) -> np.ndarray | None:
    """Drop probe points sitting on integer coordinates of the given axes."""
    if not axes:
        return None
    pts = window.points()
    bad = np.zeros(len(pts), bool)
    for a in axes:
        bad |= np.abs(pts[:, a] - np.round(pts[:, a])) <= atol
    return ~bad


# ---------------------------------------------------------------------------
# probes and verdicts

@dataclass(frozen=True)
class LimitProbe:
    window: GridWindow
    sequence: SequenceFamily
    state_set: BoundedSetSpec | None = None
    depth: int = 64
    tol_limit: float = 1e-2
    tol_subseq: float = 3e-2
    seed: int = DEFAULT_SEED
    discontinuity_axes: tuple = ()

    def __post_init__(self):
        if self.depth < 8:
            raise ValueError("depth must be >= 8")
        if self.tol_limit <= 0 or self.tol_subseq <= 0:
            raise ValueError("tolerances must be positive")
        if self.tol_subseq < self.tol_limit:
            raise ValueError("tol_subseq must be >= tol_limit")
        if self.sequence.ambient_dim != self.window.dim:
            raise ValueError("sequence and window dimensions differ")

    def with_tolerance(self, tol: float) -> "LimitProbe":
        return replace(self, tol_limit=tol, tol_subseq=max(self.tol_subseq, tol))

    def describe(self) -> dict:
        return {"window": self.window.describe(), "family": self.sequence.describe(),
                "depth": self.depth, "tol_limit": self.tol_limit, "tol_subseq": self.tol_subseq,
                "seed": self.seed}


@dataclass
class BochnerVerdict:
    passed: bool
    limit_table: np.ndarray
    subsequence_indices: list
    forward_residual: float
    backward_residual: float
    notes: list = field(default_factory=list)
    function_id: str = ""
    family: dict = field(default_factory=dict)
    depth: int = 0
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def survivors(self) -> int:
        return len(self.subsequence_indices)

    def to_json(self) -> dict:
        return {
            "function_id": self.function_id,
            "family": self.family,
            "depth": self.depth,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "survivors": self.survivors,
            "forward_residual": _clean(self.forward_residual),
            "backward_residual": _clean(self.backward_residual),
            "passed": bool(self.passed),
            "notes": list(self.notes),
        }


def _clean(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _fid(f) -> str:
    name = getattr(f, "name", "") or ""
    if not name and isinstance(f, _expr.FunctionExpr):
        name = f.to_prefix()
    return name


def _sup_distances(values: np.ndarray) -> np.ndarray:
    K = values.shape[0]
    dist = np.zeros((K, K))
    if values.shape[1]:
        for i in range(K):
            dist[i] = np.max(np.abs(values - values[i]), axis=1)
    return dist


def _clique(dist: np.ndarray, tol: float) -> list[int]:
    """Greedy largest set of rows with pairwise ``dist <= tol``.

    Seeded at the row with the most neighbours within ``tol`` (earliest index
    on ties) and grown over its neighbours in index order, keeping only rows
    within ``tol`` of every row already kept.
    """
    close = dist <= tol
    counts = close.sum(axis=1)
    center = int(np.argmax(counts))
    kept = [center]
    for j in np.nonzero(close[center])[0]:
        j = int(j)
        if j == center:
            continue
        if all(dist[j, k] <= tol for k in kept):
            kept.append(j)
    return sorted(kept)


# number of tolerance halvings tried when tightening a cluster
TIGHTEN_LEVELS = 6


def _tighten(dist: np.ndarray, idx: list[int], tol: float) -> list[int]:
    """Shrink a cluster through tolerances tol/2, tol/4, ... while at least
    two members remain, mimicking a Cauchy subsequence of shrinking spread."""
    for _ in range(TIGHTEN_LEVELS):
        if len(idx) <= 2:
            break
        tol *= 0.5
        sub = _clique(dist[np.ix_(idx, idx)], tol)
        if len(sub) < 2:
            break
        idx = sorted(idx[k] for k in sub)
    return idx


def _largest_cluster(values: np.ndarray, tol: float) -> list[int]:
    """Largest set of rows with pairwise sup distance <= tol."""
    return _clique(_sup_distances(values), tol)


def extract_subsequence(f, probe: LimitProbe):
    """Surviving translate indices and the limit table F* on the window.

    Returns ``(indices, limit_table, context)`` where ``limit_table`` has
    shape ``(N, S, q)``.  Raises :class:`NoConvergentSubsequence` when fewer
    than two translates cluster within ``tol_subseq``.
    """
    b = probe.sequence.draw(probe.depth, probe.seed)
    states = _states_for(f, probe.state_set, probe.seed)
    mask = continuity_mask(probe.window, probe.discontinuity_axes)
    vals = _translate_values(f, probe.window, b, states, mask)
    n_pts = int(mask.sum()) if mask is not None else probe.window.count
    shape = (n_pts, len(states), f.out_dim)
    dist = _sup_distances(vals)
    idx = _clique(dist, probe.tol_subseq)
    ctx = {"shifts": b, "states": states, "values": vals, "mask": mask, "shape": shape, "dist": dist}
    if len(idx) < 2:
        note = f"only {len(idx)} translate(s) within tol_subseq={probe.tol_subseq:g} at depth {probe.depth}"
        mags = np.max(np.abs(vals), axis=1)
        norms = np.linalg.norm(b, axis=1)
        if len(mags) > 2 and np.corrcoef(norms, mags)[0, 1] > 0.9 and mags.max() > 10 * max(mags.min(), 1e-12):
            note += "; translate magnitudes grow with |b| (function looks unbounded)"
        raise NoConvergentSubsequence(note)
    table = vals[idx].mean(axis=0).reshape(shape)
    return idx, table, ctx


def bochner_test(f, probe: LimitProbe, raise_on_no_cluster: bool = True) -> BochnerVerdict:
    """Forward and backward (double-limit) Bochner residuals."""
    meta = dict(function_id=_fid(f), family=probe.sequence.describe(), depth=probe.depth,
                seed=probe.seed, tolerances={"tol_limit": probe.tol_limit, "tol_subseq": probe.tol_subseq})
    try:
        idx, table, ctx = extract_subsequence(f, probe)
    except NoConvergentSubsequence as exc:
        if raise_on_no_cluster:
            raise
        return BochnerVerdict(False, np.zeros((0,)), [], math.inf, math.inf,
                              [f"NoConvergentSubsequence: {exc}"], **meta)
    vals = ctx["values"]
    b = ctx["shifts"]
    mask = ctx["mask"]
    states = ctx["states"]
    base = _translate_values(f, probe.window, np.zeros((1, probe.window.dim)), states, mask)[0]
    notes = [f"numerical verdict at depth {probe.depth}, tol {probe.tol_limit:g}"]
    forward = _forward_residual(vals, idx, table)
    backward = _backward_residual(f, probe, b, idx, states, mask, base)
    if max(forward, backward) > probe.tol_limit and len(idx) > 2:
        refined = _refine_by_near_periods(f, probe, b, idx, states, mask, base, ctx["dist"])
        if len(refined) >= 2 and refined != idx:
            notes.append(f"survivors refined from {len(idx)} to {len(refined)}: pairwise close "
                         "translates whose differences are near-periods on the window")
            idx = refined
            table = vals[idx].mean(axis=0).reshape(ctx["shape"])
            backward = _backward_residual(f, probe, b, idx, states, mask, base)
    forward = _forward_residual(vals, idx, table)
    passed = forward <= probe.tol_limit and backward <= probe.tol_limit
    notes.append(f"{len(idx)} survivors of {probe.depth}")
    if probe.discontinuity_axes:
        notes.append("piecewise function: probes restricted to continuity points")
    return BochnerVerdict(passed, table, [int(i) for i in idx], forward, backward, notes, **meta)


# at most this many survivors enter the double-limit average and the refinement
BACKWARD_CAP = 16


def _backward_residual(f, probe, b, idx, states, mask, base) -> float:
    """Double limit: ``F*(t - b_l) ~ mean_m f(t - b_l + b_m)`` compared with ``f(t)``."""
    deepest = idx[-1]
    others = [m for m in idx if m != deepest][-BACKWARD_CAP:]
    back_vals = _translate_values(f, probe.window, b[others] - b[deepest], states, mask)
    return float(np.max(np.abs(back_vals.mean(axis=0) - base)))


def _forward_residual(vals, idx, table) -> float:
    return float(np.max(np.abs(vals[idx[-1]] - table.reshape(-1))))


def _refine_by_near_periods(f, probe, b, idx, states, mask, base, dist) -> list[int]:
    """Tightest subset of survivors that is both a Cauchy cluster of
    translates and a set whose pairwise shifts ``b_m - b_l`` move ``f`` by
    little on the window (both limits of the criterion need this)."""
    cand = list(idx[:BACKWARD_CAP])
    c = len(cand)
    pairs = [(i, j) for i in range(c) for j in range(c) if i != j]
    shifts = np.array([b[cand[j]] - b[cand[i]] for i, j in pairs])
    moved = _translate_values(f, probe.window, shifts, states, mask)
    err = np.max(np.abs(moved - base[None, :]), axis=1)
    combined = dist[np.ix_(cand, cand)].copy()
    for (i, j), e in zip(pairs, err):
        combined[i, j] = max(combined[i, j], e)
        combined[j, i] = max(combined[j, i], e)
    keep = _clique(combined, probe.tol_subseq)
    if len(keep) < 2:
        return list(idx)
    keep = _tighten(combined, keep, probe.tol_subseq)
    return sorted(cand[k] for k in keep)


# ---------------------------------------------------------------------------
# uniform continuity

@dataclass
class ContinuityResult:
    passed: bool
    sup_diffs: list
    deltas: list
    witness: dict | None
    notes: list = field(default_factory=list)
    global_check: bool = True
    bad_points: np.ndarray | None = None

    def __bool__(self):
        return bool(self.passed)

    def to_json(self) -> dict:
        return {"passed": bool(self.passed), "deltas": list(self.deltas),
                "sup_diffs": [float(d) for d in self.sup_diffs], "witness": self.witness,
                "global": self.global_check, "notes": list(self.notes)}


DEFAULT_DELTAS = (1e-1, 1e-2, 1e-3, 1e-4)


def uniform_continuity_test(f, probe: LimitProbe, delta_sequence: Sequence[float] = DEFAULT_DELTAS,
                            samples: int = 1 << 16, window_only: bool = False,
                            keep_bad: int = 16) -> ContinuityResult:
    """Paired-sequence test of uniform continuity along the family pattern.

    Base points are ``a = u + b`` with ``u`` uniform in the probe window and
    ``b`` drawn from the family (``window_only`` drops ``b``); partners are
    ``a + delta * e`` for the family directions ``e``.  Passes when the
    sup difference at the last delta is at most ``tol_limit``.
    """
    deltas = [float(d) for d in delta_sequence]
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_sequence must be positive and strictly decreasing")
    rng = rng_for(probe.seed, 11)
    lo = np.asarray(probe.window.lo)
    hi = np.asarray(probe.window.hi)
    u = lo + (hi - lo) * rng.random((samples, probe.window.dim))
    if window_only:
        a = u
    else:
        b = probe.sequence.draw(probe.depth, probe.seed)
        a = u + b[rng.integers(0, len(b), samples)]
    states = _states_for(f, probe.state_set, probe.seed)
    base = sample_points(f, a, states)
    dirs = probe.sequence.directions()
    sup_diffs = []
    witness = None
    bad_points = None
    for k, d in enumerate(deltas):
        worst = np.zeros(samples)
        worst_dir = np.zeros(samples, int)
        for j, e in enumerate(dirs):
            other = sample_points(f, a + d * e, states)
            diff = np.max(np.linalg.norm(other - base, axis=-1), axis=1)
            better = diff > worst
            worst = np.where(better, diff, worst)
            worst_dir = np.where(better, j, worst_dir)
        i = int(np.argmax(worst))
        sup_diffs.append(float(worst[i]))
        if k == len(deltas) - 1:
            witness = {"a": a[i].tolist(), "b": (a[i] + d * dirs[worst_dir[i]]).tolist(),
                       "delta": d, "difference": float(worst[i])}
            order = np.argsort(-worst)[:keep_bad]
            bad_points = a[order[worst[order] > probe.tol_limit]]
    passed = sup_diffs[-1] <= probe.tol_limit
    notes = []
    if window_only:
        notes.append("window-only check: uniform continuity on the window, not global")
    if passed:
        witness = None
    return ContinuityResult(passed, sup_diffs, deltas, witness, notes, not window_only, bad_points)


# ---------------------------------------------------------------------------
# compactness equivalence

@dataclass
class CompactnessReport:
    pointwise: bool
    uniform_continuity: bool
    compact: bool
    agreement: bool
    counterexample: dict | None
    details: dict

    def to_json(self) -> dict:
        return {"pointwise": self.pointwise, "uniform_continuity": self.uniform_continuity,
                "compact": self.compact, "agreement": self.agreement,
                "counterexample": self.counterexample, "details": self.details}


def compactness_equivalence_check(f, probe: LimitProbe, refine: int = 4,
                                  delta_sequence: Sequence[float] = DEFAULT_DELTAS,
                                  samples: int = 1 << 16) -> CompactnessReport:
    """Pointwise Bochner, uniform continuity and uniform-on-window Bochner.

    The uniform verdict runs the Bochner test on the window refined
    ``refine`` times and, when a continuity witness exists, on an
    adversarial sequence that moves the worst continuity points to the
    window centre.
    """
    pointwise = bochner_test(f, probe, raise_on_no_cluster=False)
    uc = uniform_continuity_test(f, probe, delta_sequence, samples=samples)
    fine = replace(probe, window=probe.window.refined(refine))
    uniform = bochner_test(f, fine, raise_on_no_cluster=False)
    details = {"pointwise": pointwise.to_json(), "uniform_continuity": uc.to_json(),
               "uniform_window": uniform.to_json()}
    counterexample = None
    compact = uniform.passed
    if not uc.passed and uc.bad_points is not None and len(uc.bad_points) >= 8:
        pts = uc.bad_points
        pts = pts[np.argsort(np.linalg.norm(pts, axis=1), kind="stable")]
        shifts = pts - probe.window.center()
        adversarial = replace(fine, sequence=SequenceFamily.explicit(shifts), depth=len(shifts))
        adv = bochner_test(f, adversarial, raise_on_no_cluster=False)
        details["adversarial"] = adv.to_json()
        if not adv.passed:
            compact = False
            counterexample = {"sequence": shifts[:4].tolist(), "reason": adv.notes[0] if adv.notes else ""}
    if not uniform.passed and counterexample is None:
        counterexample = {"reason": "uniform-on-window Bochner residual above tolerance",
                          "forward": _clean(uniform.forward_residual),
                          "backward": _clean(uniform.backward_residual)}
    agreement = compact == (pointwise.passed and uc.passed)
    return CompactnessReport(bool(pointwise.passed), bool(uc.passed), bool(compact), bool(agreement),
                             counterexample, details)


# ---------------------------------------------------------------------------
# supremum formula

@dataclass
class SupremumResult:
    sup_all: float
    sup_tail: float
    gap: float
    samples: int

    def to_json(self) -> dict:
        return {"sup_all": self.sup_all, "sup_tail": self.sup_tail, "gap": self.gap,
                "samples": self.samples}


def supremum_formula_check(f, family: SequenceFamily, a: float, window_radius: float,
                           state_set: BoundedSetSpec | None = None, step: float | None = None,
                           max_points: int = 1 << 22, seed: int = DEFAULT_SEED) -> SupremumResult:
    """Dense-sampling estimates of sup over |t| <= R and over a <= |t| <= R."""
    family.require_unbounded()
    if a < 0:
        raise ValueError("a must be nonnegative")
    if window_radius < 4 * a:
        raise ValueError("window_radius must be at least 4a")
    n = f.arity_time
    if n == 1:
        h = step if step is not None else min(1e-3, 2 * window_radius / max_points)
        pts = np.arange(-window_radius, window_radius + 0.5 * h, h)[:, None]
    else:
        ppa = int(max_points ** (1.0 / n))
        if step is not None:
            ppa = min(ppa, int(2 * window_radius / step) + 1)
        pts = GridWindow.cube(n, -window_radius, window_radius, max(ppa, 2)).points()
    states = _states_for(f, state_set, seed)
    vals = sample_points(f, pts, states)
    norms = np.max(np.linalg.norm(vals, axis=-1), axis=1)
    radius = np.linalg.norm(pts, axis=1)
    sup_all = float(norms.max())
    tail = norms[radius >= a]
    sup_tail = float(tail.max()) if tail.size else -math.inf
    return SupremumResult(sup_all, sup_tail, sup_all - sup_tail, len(pts))


# ---------------------------------------------------------------------------
# asymptotic decomposition

@dataclass
class DecompositionResult:
    g_est: np.ndarray
    q_est: np.ndarray
    residual: float
    aa_part_sup: float
    aa_part_spread: float
    ray_report: list
    decay_passed: bool
    passed: bool
    witness_ray: dict | None
    notes: list = field(default_factory=list)
    pairs: int = 0

    def to_json(self) -> dict:
        return {"residual": self.residual, "aa_part_sup": self.aa_part_sup,
                "aa_part_spread": self.aa_part_spread, "rays": self.ray_report,
                "decay_passed": self.decay_passed, "passed": self.passed,
                "witness_ray": self.witness_ray, "pairs": self.pairs, "notes": list(self.notes)}


DEFAULT_RADII = (10.0, 20.0, 40.0, 80.0, 160.0)


def asymptotic_decompose(f, family: SequenceFamily, domain_D, window: GridWindow,
                         min_translate_norm: float = 50.0, depth: int = 64, tol: float = 1e-2,
                         tol_subseq: float | None = None, seed: int = DEFAULT_SEED,
                         radii: Sequence[float] = DEFAULT_RADII, rays=None,
                         state_set: BoundedSetSpec | None = None, max_pairs: int = 8):
    """Split ``f = G + Q`` with ``G`` from large-translate double limits.

    ``G(t) = mean f(t + b_m - b_l)`` over surviving pairs whose difference
    has norm >= ``min_translate_norm`` and keeps the window inside ``D``.
    ``Q = f - G`` must then fall below ``tol`` along every probe ray in
    ``D`` (the default rays include the diagonal and rays parallel to each
    edge of an orthant).  Returns ``(g_est, q_est, residual)`` plus
    diagnostics via :class:`DecompositionResult`.
    """
    from .volterra import DomainDescriptor

    if domain_D is None:
        domain_D = DomainDescriptor.full_space(window.dim)
    family.require_unbounded()
    tol_subseq = tol if tol_subseq is None else tol_subseq
    states = _states_for(f, state_set, seed)
    b = family.draw(depth, seed)
    keep = [k for k in range(len(b))
            if np.linalg.norm(b[k]) >= min_translate_norm and domain_D.contains_window(window.shifted(b[k]))]
    if len(keep) < 2:
        raise NoConvergentSubsequence(
            f"only {len(keep)} translates with |b| >= {min_translate_norm:g} keep the window in D")
    b = b[keep]
    vals = _translate_values(f, window, b, states)
    idx = _largest_cluster(vals, tol_subseq)
    if len(idx) < 2:
        raise NoConvergentSubsequence("large translates do not cluster")
    pairs = []
    for l in idx:
        for m in idx:
            if l == m:
                continue
            d = b[m] - b[l]
            if np.linalg.norm(d) >= min_translate_norm and domain_D.contains_window(window.shifted(d)):
                pairs.append(d)
    notes = []
    if not pairs:
        notes.append("no admissible translate differences; AA part taken as the forward limit table")
        g_vals = vals[idx].mean(axis=0)
        spread = float(np.max(np.abs(vals[idx] - g_vals))) if len(idx) else 0.0
        diffs = None
    else:
        pairs = pairs[:max_pairs]
        diffs = np.asarray(pairs)
        est = _translate_values(f, window, diffs, states)
        g_vals = est.mean(axis=0)
        spread = float(np.max(np.abs(est - g_vals)))
    shape = (window.count, len(states), f.out_dim)
    base = sample_window(f, window, states).reshape(-1)
    g_est = g_vals.reshape(shape)
    q_est = (base - g_vals).reshape(shape)
    residual = float(np.max(np.abs(base.reshape(shape) - (g_est + q_est))))

    def g_at(points):
        if diffs is None:
            return np.zeros((len(points), len(states), f.out_dim))
        # per point, only differences that keep t + d far from the origin
        acc = np.zeros((len(points), len(states), f.out_dim))
        cnt = np.zeros(len(points))
        for d in diffs:
            far = np.linalg.norm(points + d, axis=1) >= min_translate_norm
            acc[far] += sample_points(f, points[far] + d, states)
            cnt += far
        if np.any(cnt == 0):
            empty = cnt == 0
            for d in diffs:
                acc[empty] += sample_points(f, points[empty] + d, states)
            cnt[empty] = len(diffs)
        return acc / cnt[:, None, None]

    ray_list = rays if rays is not None else domain_D.probe_rays()
    ray_report = []
    worst = None
    decay_ok = True
    for origin, direction in ray_list:
        origin = np.asarray(origin, float)
        direction = np.asarray(direction, float)
        direction = direction / np.linalg.norm(direction)
        pts = np.stack([origin + r * direction for r in radii])
        q = sample_points(f, pts, states) - g_at(pts)
        mags = np.max(np.linalg.norm(q, axis=-1), axis=1)
        ok = bool(mags[-1] <= tol and (len(mags) < 2 or mags[-2] <= tol))
        entry = {"origin": origin.tolist(), "direction": direction.tolist(),
                 "radii": list(radii), "q_abs": mags.tolist(), "passed": ok}
        ray_report.append(entry)
        if not ok:
            decay_ok = False
            if worst is None or mags[-1] > worst["q_abs"][-1]:
                worst = entry
    passed = decay_ok and spread <= tol
    if spread > tol:
        notes.append(f"double-limit estimates spread {spread:.3g} > tol")
    return DecompositionResult(g_est, q_est, residual, float(np.max(np.abs(g_est))), spread,
                               ray_report, decay_ok, passed, worst, notes, len(pairs))


# ---------------------------------------------------------------------------
# derivative check

def derivative_aa_check(f, axis: int, probe: LimitProbe, h_fd: float = 1e-3,
                        check_continuity: bool = True) -> BochnerVerdict:
    """Bochner test on the central finite difference along ``axis``."""
    d = _expr.partial_difference(f, axis, h_fd)
    d2 = _expr.partial_difference(f, axis, 2 * h_fd)
    pts = probe.window.points()
    states = _states_for(f, probe.state_set, probe.seed)
    err = float(np.max(np.abs(sample_points(d, pts, states) - sample_points(d2, pts, states)))) / 3.0
    verdict = bochner_test(d, probe, raise_on_no_cluster=False)
    verdict.notes.append(f"central difference h={h_fd:g}; Richardson error estimate {err:.3g}")
    verdict.extras["fd_error_estimate"] = err
    if check_continuity:
        uc = uniform_continuity_test(d, probe, samples=1 << 14)
        verdict.extras["uniform_continuity"] = uc.to_json()
        verdict.notes.append(f"uniform continuity of derivative: {'pass' if uc.passed else 'fail'}")
    return verdict
