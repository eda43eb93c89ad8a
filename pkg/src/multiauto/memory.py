"""Finite-dimensional materials with memory.

``u'(t) = A u(t) + int_0^t B(t - s) u(s) ds + f(t, u(t))``,
``u(0) = u0 + g(u)``, with ``B(t) = F(t) A`` and ``F`` a sum of decaying
exponentials.  The resolvent ``R`` solves the matrix problem with
``R(0) = I`` and ``f = 0``; mild solutions are fixed points of
``u(t) = R(t)(u0 + g(u)) + int_0^t R(t - s) f(s, u(s)) ds``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import (ConfigError, HorizonExceedsTable, MissingBound, NoDecay, StepUnstable)
from .expr import FunctionExpr
from .families import GridWindow
from .solvers import ContractionCertificate, IterationTrace


def laplacian1d(d: int, h: float = 1.0) -> np.ndarray:
    """Dirichlet second-difference matrix ``(1/h^2) tridiag(1, -2, 1)``."""
    if d < 1 or h <= 0:
        raise ConfigError("laplacian1d needs d >= 1 and h > 0")
    L = -2.0 * np.eye(d) + np.eye(d, k=1) + np.eye(d, k=-1)
    return L / (h * h)


@dataclass(frozen=True)
class DecayProfile:
    """Scalar memory profile ``F(t) = sum_j c_j exp(-r_j t)``."""

    terms: tuple = ()  # ((c_j, r_j), ...)

    def __post_init__(self):
        terms = tuple((float(c), float(r)) for c, r in self.terms)
        if any(r <= 0 for _, r in terms):
            raise ConfigError("memory profile rates must be positive")
        object.__setattr__(self, "terms", terms)

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c, _ in self.terms)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        for c, r in self.terms:
            out = out + c * np.exp(-r * t)
        return out

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        for c, r in self.terms:
            out = out - c * r * np.exp(-r * t)
        return out

    def describe(self) -> list:
        return [[c, r] for c, r in self.terms]


@dataclass(frozen=True)
class NonlocalTerm:
    """Nonlocal initial-condition functional ``g(u)`` on sampled trajectories.

    kinds: ``zero``; ``mean_clip`` (``coef * clip(mean_t u, -clip, clip)``);
    ``point`` (``coef * u(at)``).  All are ``|coef|``-Lipschitz in sup norm.
    """

    kind: str = "zero"
    coef: float = 0.0
    clip: float = 1.0
    at: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "mean_clip", "point"):
            raise ConfigError(f"unknown nonlocal term {self.kind!r}")
        if self.clip <= 0:
            raise ConfigError("clip must be positive")

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.kind == "zero" else abs(self.coef)

    def __call__(self, times: np.ndarray, traj: np.ndarray) -> np.ndarray:
        d = traj.shape[1]
        if self.kind == "zero":
            return np.zeros(d)
        if self.kind == "mean_clip":
            if len(times) > 1:
                mean = np.trapezoid(traj, times, axis=0) / (times[-1] - times[0])
            else:
                mean = traj[0]
            return self.coef * np.clip(mean, -self.clip, self.clip)
        k = int(np.argmin(np.abs(times - self.at)))
        return self.coef * traj[k]

    def describe(self) -> dict:
        return {"kind": self.kind, "coef": self.coef, "clip": self.clip, "at": self.at}


@dataclass
class MemorySystem:
    dim: int
    A: np.ndarray
    profile: DecayProfile = field(default_factory=DecayProfile)
    f: FunctionExpr | None = None
    g_nonlocal: NonlocalTerm = field(default_factory=NonlocalTerm)
    u0: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, float))
        if self.A.shape != (self.dim, self.dim):
            raise ConfigError(f"A must be {self.dim}x{self.dim}")
        self.u0 = np.zeros(self.dim) if self.u0 is None else np.asarray(self.u0, float).reshape(self.dim)
        if self.f is not None:
            if self.f.arity_time != 1 or self.f.arity_state != self.dim or self.f.out_dim != self.dim:
                raise ConfigError("forcing must map (t, u) in R x R^d to R^d")

    def B(self, t) -> np.ndarray:
        """Memory kernel values ``F(t) A`` with shape ``(..., d, d)``."""
        return np.asarray(self.profile(t))[..., None, None] * self.A

    @property
    def spectral_abscissa(self) -> float:
        return float(np.max(np.linalg.eigvals(self.A).real))

    def forcing(self, times: np.ndarray, traj: np.ndarray) -> np.ndarray:
        if self.f is None:
            return np.zeros_like(traj)
        return self.f.evaluate(times[:, None], traj)

    def profile_bound_check(self, M: float, p: float = 2.0, times=None) -> dict:
        """Spot check ``max(|F(t)|, |F'(t)|) <= gamma e^{-gamma t} / (p M)``."""
        gamma = -self.spectral_abscissa
        times = np.linspace(0.0, 10.0, 101) if times is None else np.asarray(times, float)
        lhs = np.maximum(np.abs(self.profile(times)), np.abs(self.profile.derivative(times)))
        rhs = gamma * np.exp(-gamma * times) / (p * M) if gamma > 0 else np.zeros_like(times)
        return {"gamma": gamma, "p": p, "M": M, "holds": bool(gamma > 0 and np.all(lhs <= rhs)),
                "worst_ratio": float(np.max(lhs / np.maximum(rhs, 1e-300)))}

    def describe(self) -> dict:
        return {"dim": self.dim, "A": self.A.tolist(), "profile": self.profile.describe(),
                "f": None if self.f is None else self.f.to_prefix(),
                "g_nonlocal": self.g_nonlocal.describe(), "u0": self.u0.tolist()}


@dataclass
class ResolventTable:
    times: np.ndarray
    R_values: np.ndarray  # (m+1, d, d)
    step: float
    M_est: float
    delta_est: float
    err_est: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.R_values, ord=2, axis=(1, 2))

    def to_csv(self) -> str:
        d = self.R_values.shape[1]
        header = ["t"] + [f"r{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        lines = [",".join(header)]
        for t, R in zip(self.times, self.R_values):
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in R.ravel()]))
        return "\n".join(lines) + "\n"


def _march(sys: MemorySystem, t_max: float, dt: float) -> np.ndarray:
    """Explicit midpoint in time with trapezoid memory sums; returns R on the grid.

    Each exponential term of ``F`` keeps its own running trapezoid sum
    ``m_j(t_k) = int_0^{t_k} e^{-r_j (t_k - s)} R(s) ds``, updated in O(1)
    per step with the same weights as the full sum, so no memory is cut off.
    """
    d = sys.dim
    n = int(round(t_max / dt))
    R = np.zeros((n + 1, d, d))
    R[0] = np.eye(d)
    A = sys.A
    terms = [(c, r) for c, r in sys.profile.terms if c != 0.0]
    full = [math.exp(-r * dt) for _, r in terms]
    half = [math.exp(-0.5 * r * dt) for _, r in terms]
    sums = [np.zeros((d, d)) for _ in terms]
    for k in range(n):
        rhs = A @ R[k]
        if terms:
            rhs = rhs + A @ sum(c * m for (c, _), m in zip(terms, sums))
        R_half = R[k] + 0.5 * dt * rhs
        rhs_half = A @ R_half
        if terms:
            mem = sum(c * (e * m + 0.25 * dt * (e * R[k] + R_half))
                      for (c, _), e, m in zip(terms, half, sums))
            rhs_half = rhs_half + A @ mem
        R[k + 1] = R[k] + dt * rhs_half
        if not np.all(np.isfinite(R[k + 1])):
            raise StepUnstable(f"resolvent overflowed at t={(k + 1) * dt:g}")
        for j, e in enumerate(full):
            sums[j] = e * sums[j] + 0.5 * dt * (e * R[k] + R[k + 1])
    return R


def _envelope(times: np.ndarray, norms: np.ndarray) -> tuple[float, float]:
    """Fit ``M e^{-delta t}``: delta from the tail half, M the smallest valid constant."""
    env = np.maximum.accumulate(norms[::-1])[::-1]  # running max of the future
    half = len(times) // 2
    tt, ee = times[half:], env[half:]
    good = ee > 1e-300
    if good.sum() < 2:
        delta = math.inf
    else:
        slope, _ = np.polyfit(tt[good], np.log(ee[good]), 1)
        delta = float(-slope)
    if not math.isfinite(delta):
        delta = 1.0 / max(times[-1], 1e-300)
    if abs(delta) * times[-1] < 1e-8:
        delta = 0.0  # flat envelope: no measurable decay
    M = float(np.max(norms * np.exp(delta * times)))
    return M, delta


def build_resolvent(sys: MemorySystem, t_max: float, dt: float, require_decay: bool = True,
                    halving_tol: float = 1e-3) -> ResolventTable:
    """Resolvent table on ``[0, t_max]`` with step ``dt``.

    The march is repeated with ``dt/2``; the returned table is the
    Richardson combination of the two (both are second order) and the
    difference gives the recorded error estimate.
    """
    if not (t_max > 0 and dt > 0) or dt > t_max:
        raise ConfigError("need 0 < dt <= t_max")
    n = int(round(t_max / dt))
    if abs(n * dt - t_max) > 1e-9 * t_max:
        raise ConfigError("t_max must be a multiple of dt")
    normA = float(np.linalg.norm(sys.A, 2))
    supB = float(np.max(np.abs(sys.profile(np.linspace(0.0, t_max, 257))))) * normA
    if dt * (normA + t_max * supB) >= 0.5 and dt * normA >= 0.5:
        raise StepUnstable(f"dt={dt:g} too large for |A|={normA:.3g} (stability heuristic)")
    coarse = _march(sys, t_max, dt)
    fine = _march(sys, t_max, dt / 2.0)[::2]
    diff = fine - coarse
    scale = max(1.0, float(np.max(np.abs(fine))))
    rel = float(np.max(np.abs(diff))) / scale
    if rel > halving_tol:
        raise StepUnstable(f"step halving changes the resolvent by {rel:.3g} (relative) > {halving_tol:g}")
    R = fine + diff / 3.0
    R[0] = np.eye(sys.dim)
    times = dt * np.arange(n + 1)
    table = ResolventTable(times, R, dt, 0.0, 0.0, float(np.max(np.abs(diff))) / 3.0,
                           notes=["explicit midpoint + trapezoid memory, Richardson over dt and dt/2"])
    table.M_est, table.delta_est = _envelope(times, table.norms())
    if require_decay and not table.delta_est > 0:
        raise NoDecay(f"envelope fit gives delta_est={table.delta_est:.4g} <= 0")
    return table


def verify_property_R(table: ResolventTable, slack: float = 0.05) -> tuple[float, float, bool]:
    norms = table.norms()
    env = table.M_est * np.exp(-table.delta_est * table.times) * (1.0 + slack)
    ok = bool(table.delta_est > 0 and np.all(norms <= env))
    return table.M_est, table.delta_est, ok


def resolvent_residual(sys: MemorySystem, table: ResolventTable) -> float:
    """Max residual of ``R' - A R - (B * R)`` at interior grid points.

    Central differences for ``R'`` and a trapezoid memory integral, so the
    value is O(dt^2) for a consistent table.
    """
    R, dt = table.R_values, table.step
    n = len(R) - 1
    terms = [(c, r) for c, r in sys.profile.terms if c != 0.0]
    sums = [np.zeros_like(R[0]) for _ in terms]
    worst = 0.0
    for k in range(1, n):
        for j, (_, r) in enumerate(terms):
            e = math.exp(-r * dt)
            sums[j] = e * sums[j] + 0.5 * dt * (e * R[k - 1] + R[k])
        mem = sys.A @ sum((c * m for (c, _), m in zip(terms, sums)), np.zeros_like(R[0]))
        deriv = (R[k + 1] - R[k - 1]) / (2.0 * dt)
        worst = max(worst, float(np.max(np.abs(deriv - sys.A @ R[k] - mem))))
    return worst


# ---------------------------------------------------------------------------
# mild solutions with nonlocal initial conditions


def _conv_R(R: np.ndarray, F: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid ``int_0^{t_n} R(t_n - s) F(s) ds`` for every grid time."""
    n1, d, _ = R.shape
    out = np.zeros((n1, d))
    for i in range(d):
        for j in range(d):
            out[:, i] += fftconvolve(R[:, i, j], F[:, j])[:n1]
    # trapezoid end corrections: half weight on s = 0 and s = t_n
    out -= 0.5 * np.einsum("nij,j->ni", R, F[0])
    out -= 0.5 * np.einsum("ij,nj->ni", R[0], F)
    out[0] = 0.0
    return dt * out


@dataclass
class MildOperator:
    sys: MemorySystem
    table: ResolventTable
    n: int

    @property
    def times(self) -> np.ndarray:
        return self.table.times[: self.n + 1]

    def __call__(self, u: np.ndarray) -> np.ndarray:
        R = self.table.R_values[: self.n + 1]
        t = self.times
        start = self.sys.u0 + self.sys.g_nonlocal(t, u)
        return np.einsum("nij,j->ni", R, start) + _conv_R(R, self.sys.forcing(t, u), self.table.step)


def solve_mild_nonlocal(sys: MemorySystem, table: ResolventTable, horizon: float, tol: float = 1e-8,
                        rho: float | None = None, max_sweeps: int = 200) -> IterationTrace:
    start_clock = time.perf_counter()
    if horizon > table.t_max * (1 + 1e-12):
        raise HorizonExceedsTable(f"horizon {horizon:g} exceeds the resolvent table ({table.t_max:g})")
    n = int(round(horizon / table.step))
    L_f = 0.0
    if sys.f is not None:
        if sys.f.lipschitz_in_state is None:
            raise MissingBound("forcing needs lipschitz_in_state for the certificate")
        L_f = float(sys.f.lipschitz_in_state)
    M, delta = table.M_est, table.delta_est
    if not delta > 0:
        raise NoDecay("resolvent table has no exponential decay")
    cert = ContractionCertificate(M * sys.g_nonlocal.lipschitz, L_f, M / delta)
    cert.require()
    op = MildOperator(sys, table, n)
    u = np.zeros((n + 1, sys.dim))
    diffs = []
    prev = u
    y0 = None
    for _ in range(max_sweeps):
        new = op(u)
        if y0 is None:
            y0 = new.copy()
        diffs.append(float(np.max(np.abs(new - u))))
        prev, u = u, new
        if cert.theta == 0.0 or diffs[-1] <= tol * (1.0 - cert.theta):
            break
    residual = float(np.max(np.abs(u - op(u))))
    quad_err = table.err_est * (float(np.max(np.abs(sys.u0))) + 1.0) * max(1.0, horizon)
    converged = bool(cert.theta == 0.0 or diffs[-1] <= tol * (1.0 - cert.theta))
    window = GridWindow(1, (0.0,), (float(op.times[-1]),), n + 1)
    trace = IterationTrace(cert, diffs, residual, len(diffs), quad_err, converged, window,
                           u.copy(), (prev, u), wall_clock=time.perf_counter() - start_clock,
                           notes=[f"M_est={M:.6g}, delta_est={delta:.6g}"])
    trace.fine_axes = (op.times.copy(),)
    trace.fine_values = u.copy()
    trace.extras["ball_distance"] = float(np.max(np.abs(u - y0)))
    if rho is not None:
        trace.extras["rho"] = float(rho)
        trace.extras["ball_ok"] = bool(trace.extras["ball_distance"] <= rho)
    return trace


class TrajectoryField:
    """Probeable cubic-spline interpolant of one component of a trajectory on ``[0, horizon]``."""

    def __init__(self, times: np.ndarray, values: np.ndarray, component: int = 0):
        from scipy.interpolate import CubicSpline
        self.times = np.asarray(times, float)
        vals = np.asarray(values, float)
        vals = vals[:, component] if vals.ndim == 2 else vals
        self._spline = CubicSpline(self.times, vals)
        self.arity_time = 1
        self.arity_state = 0
        self.out_dim = 1
        self.name = f"trajectory[{component}]"
        self.sup_bound = float(np.max(np.abs(vals)))

    def sample_points(self, points, states) -> np.ndarray:
        p = np.asarray(points, float).reshape(-1)
        if np.any(p < self.times[0] - 1e-12) or np.any(p > self.times[-1] + 1e-12):
            raise HorizonExceedsTable("trajectory probed outside the solved horizon")
        vals = self._spline(p)
        return np.repeat(vals[:, None, None], max(1, len(states)), axis=1)


def trajectory_asymptotic_check(trace: IterationTrace, component: int = 0, tol: float = 1e-2,
                                depth: int = 32, seed: int | None = None):
    """Asymptotic decomposition of a solved trajectory on the half-line.

    Shifts are multiples of ``2 pi`` drawn so every probe stays inside the
    solved horizon: shifts and ray radii are kept below a quarter of it.
    """
    from .families import DEFAULT_SEED, ScalarSource, SequenceFamily
    from .limits import asymptotic_decompose
    from .volterra import DomainDescriptor
    times = trace.fine_axes[0]
    horizon = float(times[-1])
    budget = horizon / 4.0
    if budget < 4 * math.pi:
        raise HorizonExceedsTable("horizon too short for an asymptotic check")
    field_ = TrajectoryField(times, trace.fine_values, component)
    growth = max(budget / 2.0 - 2.0 * math.pi, 0.0) / max(depth, 1)
    family = SequenceFamily.diagonal(1, ScalarSource("random_multiple", T0=budget / 2.0, growth=growth,
                                                     positive=True))
    window = GridWindow(1, (0.0,), (2.0 * math.pi,), 17)
    radii = tuple(r for r in (5.0, 10.0, 20.0, 40.0, 80.0, 160.0) if r <= budget)
    return asymptotic_decompose(field_, family, DomainDescriptor.orthant((0.0,)), window,
                                min_translate_norm=min(20.0, budget / 4.0), depth=depth, tol=tol,
                                seed=DEFAULT_SEED if seed is None else seed, radii=radii)
