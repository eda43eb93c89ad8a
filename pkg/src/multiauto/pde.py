"""Heat-kernel convolution and synthetic Poisson checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as _expr
from .errors import (ConfigError, MissingBound, NonpositiveTime, TruncationUnstable,
                     UnboundedInitialData)
from .expr import FunctionExpr
from .families import GridWindow
from .limits import LimitProbe, bochner_test, compactness_equivalence_check
from .volterra import GridValues, QuadratureScheme


def heat_kernel(xi, t: float) -> np.ndarray:
    """Fundamental solution ``(4 pi t)^(-n/2) exp(-|xi|^2 / (4t))``.

    ``xi`` has shape ``(..., n)``; the result has shape ``(...)``.
    """
    if not t > 0:
        raise NonpositiveTime(f"heat kernel needs t > 0, got {t!r}")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    n = xi.shape[-1]
    return (4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-np.sum(xi * xi, axis=-1) / (4.0 * t))


def heat_radius(t: float, eps: float, dim: int = 1) -> float:
    """Per-axis radius whose complement carries Gaussian mass <= eps.

    Uses ``erfc(x) <= exp(-x^2)`` per axis and a union bound over axes.
    """
    if not t > 0:
        raise NonpositiveTime(f"t must be positive, got {t!r}")
    return max(10.0 * math.sqrt(t), 2.0 * math.sqrt(t * math.log(2.0 * dim / eps)))


def heat_tail_mass(t: float, radius: float, dim: int = 1) -> float:
    """Exact Gaussian mass outside the box ``[-radius, radius]^dim`` (upper bound)."""
    per_axis = math.erfc(radius / (2.0 * math.sqrt(t)))
    return min(1.0, dim * per_axis)


@dataclass
class HeatConfig:
    dim: int
    time: float
    initial: FunctionExpr
    quadrature: QuadratureScheme = field(default_factory=QuadratureScheme)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("heat experiments support dim 1 or 2")
        if not self.time > 0:
            raise NonpositiveTime(f"time must be positive, got {self.time!r}")
        if self.initial.arity_time != self.dim or self.initial.arity_state or self.initial.out_dim != 1:
            raise ConfigError("initial data must be scalar on R^dim without state")
        if self.initial.sup_bound is None:
            raise UnboundedInitialData(f"initial data {self.initial.name or '<anonymous>'} "
                                       "has no sup_bound (bounded data required)")

    @property
    def radius(self) -> float:
        return heat_radius(self.time, self.quadrature.eps_tail, self.dim)

    @property
    def tail_mass(self) -> float:
        return heat_tail_mass(self.time, self.radius, self.dim)

    @property
    def error_bound(self) -> float:
        return self.tail_mass * float(self.initial.sup_bound)

    def describe(self) -> dict:
        return {"dim": self.dim, "time": self.time, "initial": self.initial.to_prefix(),
                "quadrature": self.quadrature.describe(), "radius": self.radius,
                "tail_mass": self.tail_mass}


def _heat_nodes(cfg: HeatConfig, radius: float | None = None):
    R = cfg.radius if radius is None else radius
    # panels no wider than the Gaussian width, so the rule resolves the kernel
    width = math.sqrt(2.0 * cfg.time)
    q = cfg.quadrature
    per_unit = max(q.panels_per_unit, int(math.ceil(1.0 / width)))
    x, w = QuadratureScheme(q.rule, q.order, per_unit, q.eps_tail).nodes(-R, R)
    if cfg.dim == 1:
        pts = x[:, None]
        wts = w
    else:
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        wts = np.outer(w, w).ravel()
    return pts, wts * heat_kernel(pts, cfg.time)


class HeatField:
    """Probeable ``x -> u(x, t)`` for the heat equation with initial data ``g``."""

    def __init__(self, cfg: HeatConfig, radius: float | None = None):
        self.cfg = cfg
        self._pts, self._wk = _heat_nodes(cfg, radius)
        self.arity_time = cfg.dim
        self.arity_state = 0
        self.out_dim = 1
        self.name = f"heat[{cfg.initial.name or cfg.initial.to_prefix()},t={cfg.time:g}]"
        self.sup_bound = float(cfg.initial.sup_bound)

    def values_at(self, points) -> np.ndarray:
        points = np.asarray(points, float).reshape(-1, self.arity_time)
        out = np.empty(len(points))
        chunk = max(1, 2_000_000 // len(self._pts))
        for s in range(0, len(points), chunk):
            p = points[s:s + chunk]
            args = p[:, None, :] - self._pts[None, :, :]
            vals = self.cfg.initial.evaluate(args.reshape(-1, self.arity_time))[:, 0]
            out[s:s + chunk] = vals.reshape(len(p), len(self._pts)) @ self._wk
        return out

    def sample_points(self, points, states) -> np.ndarray:
        vals = self.values_at(points)
        return np.repeat(vals[:, None, None], max(1, len(states)), axis=1)


def heat_solve(cfg: HeatConfig, x_grid: GridWindow) -> GridValues:
    """``u(x, t) = int Phi(x - y, t) g(y) dy`` on the grid points."""
    if x_grid.dim != cfg.dim:
        raise ConfigError("grid and heat configuration dimensions differ")
    field_ = HeatField(cfg)
    pts = x_grid.points()
    vals = field_.values_at(pts)
    bound = cfg.error_bound
    # truncation doubling on a few points guards against mis-declared sup bounds
    probe = pts[: min(4, len(pts))]
    wide = HeatField(cfg, 2.0 * cfg.radius).values_at(probe)
    drift = float(np.max(np.abs(wide - vals[: len(probe)])))
    if drift > 2.0 * bound + 1e-9 * max(1.0, float(np.max(np.abs(vals)))):
        raise TruncationUnstable(f"heat solution changes by {drift:.3g} when the radius doubles")
    notes = [f"truncation radius {cfg.radius:.6g}, tail mass {cfg.tail_mass:.3g}"]
    return GridValues(x_grid, vals[:, None], np.full(len(pts), bound), notes)


def heat_mass(t: float, dim: int = 1, radius: float | None = None,
              q: QuadratureScheme | None = None) -> float:
    """Quadrature of the heat kernel over ``[-radius, radius]^dim``."""
    q = q or QuadratureScheme()
    cfg = HeatConfig(dim, t, FunctionExpr(dim, 0, (_expr.const(1.0),), sup_bound=1.0), q)
    _, wk = _heat_nodes(cfg, radius)
    return float(np.sum(wk))


@dataclass
class HeatAAReport:
    passed: bool
    initial_verdict: dict
    solution_verdict: dict
    error_bound: float
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"passed": self.passed, "initial": self.initial_verdict,
                "solution": self.solution_verdict, "error_bound": self.error_bound,
                "notes": list(self.notes)}


def heat_preserves_aa_check(cfg: HeatConfig, probe: LimitProbe) -> HeatAAReport:
    """Bochner test on ``x -> u(x, t)`` for AA initial data.

    The heat kernel has unit mass, so the tolerance is not inflated.
    """
    initial = bochner_test(cfg.initial, probe, raise_on_no_cluster=False)
    notes = []
    if not initial.passed:
        notes.append("initial data fails the Bochner test: precondition not met")
        return HeatAAReport(False, initial.to_json(), {}, cfg.error_bound, notes)
    sol = bochner_test(HeatField(cfg), probe, raise_on_no_cluster=False)
    return HeatAAReport(bool(sol.passed), initial.to_json(), sol.to_json(), cfg.error_bound, notes)


# ---------------------------------------------------------------------------
# Poisson


class LaplacianField:
    """Probeable central-difference Laplacian of ``u`` with step ``h``."""

    def __init__(self, u: FunctionExpr, h: float):
        if not h > 0:
            raise ConfigError("finite-difference step must be positive")
        self.u = u
        self.h = float(h)
        self.arity_time = u.arity_time
        self.arity_state = 0
        self.out_dim = 1
        self.name = f"laplacian[{u.name or u.to_prefix()}]"
        self.sup_bound = None

    def values_at(self, points) -> np.ndarray:
        points = np.asarray(points, float).reshape(-1, self.arity_time)
        h = self.h
        centre = self.u.evaluate(points)[:, 0]
        total = np.zeros(len(points))
        for i in range(self.arity_time):
            e = np.zeros(self.arity_time)
            e[i] = h
            total += (self.u.evaluate(points + e)[:, 0] - 2.0 * centre
                      + self.u.evaluate(points - e)[:, 0]) / (h * h)
        return total

    def sample_points(self, points, states) -> np.ndarray:
        vals = self.values_at(points)
        return np.repeat(vals[:, None, None], max(1, len(states)), axis=1)


@dataclass
class PoissonReport:
    passed: bool
    forcing_aa: bool
    solution_compact: bool
    fd_richardson: float
    forcing_verdict: dict
    solution_report: dict
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"passed": self.passed, "forcing_aa": self.forcing_aa,
                "solution_compact": self.solution_compact, "fd_richardson": self.fd_richardson,
                "forcing": self.forcing_verdict, "solution": self.solution_report,
                "notes": list(self.notes)}


def poisson_synthetic_check(u: FunctionExpr, probe: LimitProbe, h_fd: float = 1e-3) -> PoissonReport:
    """Derive ``f = Laplacian u`` and pair the AA verdict on ``f`` with the compact-AA verdict on ``u``.

    This checks the conclusion on constructed pairs ``(u, f)``; it does not
    solve ``Laplacian u = f`` for given ``f``.
    """
    if u.arity_state or u.out_dim != 1:
        raise ConfigError("u must be scalar without state")
    if not u.smooth:
        raise ConfigError("u must be declared twice differentiable (smooth=True)")
    if u.sup_bound is None:
        raise MissingBound("u must declare a sup_bound (bounded solutions only)")
    lap = LaplacianField(u, h_fd)
    pts = probe.window.points()
    rich = float(np.max(np.abs(lap.values_at(pts) - LaplacianField(u, 2.0 * h_fd).values_at(pts)))) / 3.0
    forcing = bochner_test(lap, probe, raise_on_no_cluster=False)
    comp = compactness_equivalence_check(u, probe)
    solution_ok = bool(comp.pointwise and comp.uniform_continuity and comp.compact)
    notes = ["synthetic direction: u is given and f is derived from it",
             f"finite-difference step {h_fd:g}, h/2h difference estimate {rich:.3g}"]
    return PoissonReport(bool(forcing.passed and solution_ok), bool(forcing.passed), solution_ok, rich,
                         forcing.to_json(), comp.to_json(), notes)
