"""Convolution kernels, kernel conditions and causal integral operators.

Integrals over the causal set ``I_t = (-inf, t_1] x ... x (-inf, t_n]``
restricted to a domain ``D`` are computed in the substituted variable
``r = t - eta``, where they become integrals over boxes (or boxes with an
indicator) inside ``[0, inf)^n``.  Truncation radii come from the declared
exponential envelope ``K(r) <= C exp(-sum alpha_i |r_i|)``, never from
sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as _expr
from .errors import (E1Violated, EmptyInterior, NegativeKernel, SingularKernel,
                     TruncationUnstable)
from .expr import FunctionExpr, T, exp, fabs, mul, scalar
from .families import GridWindow

# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureScheme:
    rule: str = "gauss_legendre"
    order: int = 8
    panels_per_unit: int = 1
    eps_tail: float = 1e-10

    def __post_init__(self):
        if self.rule not in ("gauss_legendre", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.order < 1 or self.panels_per_unit < 1:
            raise ValueError("order and panels_per_unit must be positive")
        if self.eps_tail <= 0:
            raise ValueError("eps_tail must be positive")

    def nodes(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Composite nodes and weights on [a, b] (empty when b <= a)."""
        if not b > a:
            return np.zeros(0), np.zeros(0)
        panels = max(1, int(math.ceil((b - a) * self.panels_per_unit - 1e-12)))
        edges = np.linspace(a, b, panels + 1)
        if self.rule == "trapezoid":
            m = panels * self.order
            x = np.linspace(a, b, m + 1)
            w = np.full(m + 1, (b - a) / m)
            w[0] *= 0.5
            w[-1] *= 0.5
            return x, w
        gx, gw = _gauss(self.order)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        w = (half[:, None] * gw[None, :]).ravel()
        return x, w

    def describe(self) -> dict:
        return {"rule": self.rule, "order": self.order, "panels_per_unit": self.panels_per_unit,
                "eps_tail": self.eps_tail}


_GAUSS_CACHE: dict = {}


def _gauss(order: int):
    if order not in _GAUSS_CACHE:
        _GAUSS_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GAUSS_CACHE[order]


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelSpec:
    """Kernel ``K(r)`` on R^n with a decay descriptor.

    ``decay``: ``"exponential"`` (with ``rates`` and envelope constant
    ``scale``), ``"integrable_declared"`` (truncation ``radius`` supplied by
    the author) or ``"none"`` (truncation found by doubling).  ``factors``
    optionally lists one-dimensional factors ``k_i`` with
    ``K(r) = prod k_i(r_i)``, which the solvers exploit.
    """

    dim: int
    expr: FunctionExpr
    decay: str = "exponential"
    rates: tuple = ()
    scale: float = 1.0
    singular: bool = False
    factors: tuple = ()
    radius: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.expr.arity_time != self.dim or self.expr.out_dim != 1 or self.expr.arity_state:
            raise ValueError("kernel expression must be scalar on R^dim without state")
        if self.decay not in ("exponential", "integrable_declared", "none"):
            raise ValueError(f"unknown decay kind {self.decay!r}")
        if self.decay == "exponential":
            if len(self.rates) != self.dim or any(r <= 0 for r in self.rates):
                raise ValueError("exponential decay needs one positive rate per axis")
        if self.decay == "integrable_declared" and (self.radius is None or self.radius <= 0):
            raise ValueError("integrable_declared decay needs a positive radius")
        if self.factors and len(self.factors) != self.dim:
            raise ValueError("separable kernels need one factor per axis")

    @property
    def separable(self) -> bool:
        return bool(self.factors)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.expr.evaluate(r)[..., 0]

    def factor_values(self, axis: int, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.factors[axis].evaluate(r[..., None])[..., 0]

    def truncation(self, eps: float, two_sided: bool = False) -> np.ndarray:
        """Per-axis radii whose complement carries envelope mass <= eps."""
        if self.decay == "exponential":
            rates = np.asarray(self.rates, float)
            n = self.dim
            sides = 2.0 ** n if two_sided else 1.0
            prod = float(np.prod(1.0 / rates))
            radii = np.log(max(n * sides * self.scale * prod / eps, 1.0 + 1e-12)) / rates
            return np.ceil(np.maximum(radii, 1.0))
        if self.decay == "integrable_declared":
            return np.full(self.dim, float(self.radius))
        return np.full(self.dim, 16.0)

    def tail_bound(self, radii, two_sided: bool = False) -> float:
        """Envelope mass outside the box of the given radii."""
        if self.decay != "exponential":
            return 0.0
        rates = np.asarray(self.rates, float)
        radii = np.asarray(radii, float)
        prod = float(np.prod(1.0 / rates))
        sides = 2.0 ** self.dim if two_sided else 1.0
        return float(sides * self.scale * prod * np.sum(np.exp(-rates * radii)))

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "expr": self.expr.to_prefix(), "decay": self.decay,
                "rates": list(self.rates), "scale": self.scale, "singular": self.singular}


def _separable(name: str, factors: Sequence[FunctionExpr], rates, scale: float) -> KernelSpec:
    n = len(factors)
    nodes = [_expr.substitute(f.body[0], [T(i)]) for i, f in enumerate(factors)]
    body = mul(*nodes) if n > 1 else nodes[0]
    e = FunctionExpr(n, 0, (body,), name=name)
    return KernelSpec(n, e, "exponential", tuple(float(r) for r in rates), float(scale),
                      factors=tuple(factors), name=name)


def _exp_factor(rate: float, coeff: float = 1.0) -> FunctionExpr:
    return scalar(mul(coeff, exp(-rate * fabs(T(0)))), sup_bound=abs(coeff))


def exponential_product_kernel(alpha: float = 1.0, beta: float = 1.0) -> KernelSpec:
    """``K(r) = exp(-alpha |r_1|) exp(-beta |r_2|)``; orthant mass 1/(alpha beta)."""
    return _separable("kernel_exp_product", [_exp_factor(alpha), _exp_factor(beta)], (alpha, beta), 1.0)


def laplace_kernel_2d() -> KernelSpec:
    return _separable("kernel_laplace_2d", [_exp_factor(1.0), _exp_factor(1.0)], (1.0, 1.0), 1.0)


def wave_kernel() -> KernelSpec:
    return _separable("kernel_wave", [_exp_factor(0.5), _exp_factor(0.5)], (0.5, 0.5), 1.0)


def laplace_kernel_1d() -> KernelSpec:
    return _separable("kernel_laplace_1d", [_exp_factor(1.0, 0.5)], (1.0,), 0.5)


def gaussian_kernel_1d() -> KernelSpec:
    # exp(-s^2/2) <= exp(8) exp(-4|s|)
    node = mul(1.0 / math.sqrt(2 * math.pi), exp(-0.5 * T(0) * T(0)))
    f = scalar(node, sup_bound=1.0 / math.sqrt(2 * math.pi))
    return _separable("kernel_gauss_1d", [f], (4.0,), math.exp(8.0) / math.sqrt(2 * math.pi))


def odd_kernel_1d() -> KernelSpec:
    # |s| e^{-|s|} <= 2 e^{-|s|/2}
    f = scalar(T(0) * exp(-fabs(T(0))), sup_bound=1.0 / math.e)
    return _separable("kernel_odd_1d", [f], (0.5,), 2.0)


def zero_kernel(dim: int = 2) -> KernelSpec:
    factors = [scalar(mul(0.0, T(0)), sup_bound=0.0, arity_time=1)] * dim
    return _separable("kernel_zero", factors, (1.0,) * dim, 0.0 + 1e-300)


# ---------------------------------------------------------------------------
# domains


DOMAIN_KINDS = ("full_space", "causal_cone", "orthant", "hyperplane", "custom_indicator")


@dataclass(frozen=True)
class DomainDescriptor:
    kind: str
    dim: int
    corner: tuple = ()
    signs: tuple = ()
    normal: tuple = ()
    offset: float = 0.0
    indicator: FunctionExpr | None = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "orthant":
            corner = tuple(float(c) for c in self.corner) if self.corner else (0.0,) * self.dim
            signs = tuple(int(s) for s in self.signs) if self.signs else (1,) * self.dim
            if len(corner) != self.dim or len(signs) != self.dim or any(s not in (1, -1) for s in signs):
                raise ValueError("orthant needs a corner and +-1 signs per axis")
            object.__setattr__(self, "corner", corner)
            object.__setattr__(self, "signs", signs)
        if self.kind == "hyperplane":
            nrm = np.asarray(self.normal, float)
            if nrm.shape != (self.dim,) or not np.any(nrm):
                raise ValueError("hyperplane needs a non-zero normal")
        if self.kind == "custom_indicator":
            if self.indicator is None or self.indicator.arity_time != self.dim:
                raise ValueError("custom_indicator needs an indicator expression on R^dim")

    @classmethod
    def full_space(cls, dim: int) -> "DomainDescriptor":
        return cls("full_space", dim)

    @classmethod
    def causal_cone(cls, dim: int) -> "DomainDescriptor":
        return cls("causal_cone", dim)

    @classmethod
    def orthant(cls, corner, signs=None) -> "DomainDescriptor":
        corner = tuple(float(c) for c in corner)
        return cls("orthant", len(corner), corner=corner,
                   signs=tuple(signs) if signs is not None else (1,) * len(corner))

    @classmethod
    def first_quadrant(cls) -> "DomainDescriptor":
        return cls.orthant((0.0, 0.0))

    @classmethod
    def line(cls, normal, offset: float = 0.0) -> "DomainDescriptor":
        return cls("hyperplane", len(normal), normal=tuple(float(v) for v in normal), offset=offset)

    @property
    def interior_nonempty(self) -> bool:
        if self.kind in ("full_space", "causal_cone", "orthant"):
            return True
        if self.kind == "hyperplane":
            return False
        # jittered sampling: measure-zero sets are missed almost surely
        from .families import rng_for
        pts = rng_for(0, 99).uniform(-50, 50, (4096, self.dim))
        vals = self.indicator.evaluate(pts)[..., 0]
        return bool(np.any(vals > 0.5))

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, self.dim)
        if self.kind in ("full_space", "causal_cone"):
            return np.ones(len(pts), bool)
        if self.kind == "orthant":
            s = np.asarray(self.signs)
            return np.all(s * (pts - np.asarray(self.corner)) >= -1e-12, axis=1)
        if self.kind == "hyperplane":
            return np.abs(pts @ np.asarray(self.normal) - self.offset) <= 1e-12
        return self.indicator.evaluate(pts)[..., 0] > 0.5

    def contains_window(self, window: GridWindow) -> bool:
        if self.kind in ("full_space", "causal_cone"):
            return True
        if self.kind == "orthant":
            corners = np.array([window.lo, window.hi])
            return bool(np.all(self.contains(corners)))
        return bool(np.all(self.contains(window.points())))

    def r_intervals(self, t) -> list[tuple[float, float]] | None:
        """Per-axis intervals of ``r = t - eta`` for eta in D_t (box domains).

        Returns ``None`` for domains that are not boxes in r.
        """
        t = np.asarray(t, float)
        if self.kind in ("full_space", "causal_cone"):
            return [(0.0, math.inf)] * self.dim
        if self.kind == "orthant":
            out = []
            for ti, ai, si in zip(t, self.corner, self.signs):
                if si > 0:
                    out.append((0.0, ti - ai))
                else:
                    out.append((max(0.0, ti - ai), math.inf))
            return out
        return None

    def probe_rays(self, offsets: Sequence[float] = (1.0, 2.0)) -> list:
        """Rays inside D used for vanishing-at-infinity checks.

        Orthants get the diagonal ray from the corner plus rays parallel to
        each edge at the given offsets from the other faces.
        """
        n = self.dim
        if self.kind == "orthant":
            c = np.asarray(self.corner)
            s = np.asarray(self.signs, float)
            rays = [(c, s)]
            for i in reversed(range(n)):
                for o in offsets:
                    origin = c + o * s
                    origin[i] = c[i]
                    e = np.zeros(n)
                    e[i] = s[i]
                    rays.append((origin, e))
            return rays
        rays = []
        for i in range(n):
            for sgn in (1.0, -1.0):
                e = np.zeros(n)
                e[i] = sgn
                rays.append((np.zeros(n), e))
        rays.append((np.zeros(n), np.ones(n)))
        return rays

    def describe(self) -> dict:
        d = {"kind": self.kind, "dim": self.dim, "interior_nonempty": self.interior_nonempty}
        if self.kind == "orthant":
            d.update(corner=list(self.corner), signs=list(self.signs))
        if self.kind == "hyperplane":
            d.update(normal=list(self.normal), offset=self.offset)
        return d


# ---------------------------------------------------------------------------
# box integration in r-coordinates


def _box_nodes(q: QuadratureScheme, intervals, radii):
    """Tensor nodes/weights over the box ``prod [a_i, min(b_i, radii_i)]``."""
    axes = []
    for (a, b), R in zip(intervals, radii):
        hi = min(b, R)
        x, w = q.nodes(a, hi)
        axes.append((x, w))
    return axes


def _tensor(axes):
    if any(len(x) == 0 for x, _ in axes):
        n = len(axes)
        return np.zeros((0, n)), np.zeros(0)
    mesh = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    wmesh = np.meshgrid(*[w for _, w in axes], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    w = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=1)
    return pts, w


def _kernel_mass_box(k: KernelSpec, q: QuadratureScheme, intervals, radii) -> float:
    axes = _box_nodes(q, intervals, radii)
    if k.separable:
        total = 1.0
        for i, (x, w) in enumerate(axes):
            if len(x) == 0:
                return 0.0
            total *= float(np.dot(w, k.factor_values(i, x)))
        return total
    pts, w = _tensor(axes)
    if len(w) == 0:
        return 0.0
    return float(np.dot(w, k(pts)))


# ---------------------------------------------------------------------------
# condition (E1)


@dataclass
class E1Result:
    sup_estimate: float
    passed: bool
    truncation: list
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"sup_estimate": self.sup_estimate, "passed": self.passed,
                "truncation": self.truncation, "notes": list(self.notes)}


def _check_nonnegative(k: KernelSpec, q: QuadratureScheme, radii):
    axes = _box_nodes(q, [(0.0, math.inf)] * k.dim, radii)
    if k.separable:
        for i, (x, _) in enumerate(axes):
            if len(x) and np.min(k.factor_values(i, x)) < 0:
                raise NegativeKernel(f"kernel factor {i} takes negative values on [0, inf)")
        return
    pts, _ = _tensor(axes)
    if len(pts) and np.min(k(pts)) < 0:
        raise NegativeKernel("kernel takes negative values on the causal orthant")


def verify_E1(k: KernelSpec, q: QuadratureScheme | None = None, t_samples=None) -> E1Result:
    """``sup_t int_{I_t} K(t - eta) d eta`` via ``r = t - eta``."""
    q = q or QuadratureScheme()
    radii = k.truncation(q.eps_tail)
    _check_nonnegative(k, q, radii)
    full = [(0.0, math.inf)] * k.dim
    value = _kernel_mass_box(k, q, full, radii)
    notes = ["kernel depends on t - eta only: the integral is the same for every t"]
    if k.decay == "none":
        for _ in range(8):
            doubled = _kernel_mass_box(k, q, full, 2 * radii)
            if abs(doubled - value) <= 1e-4 * max(abs(doubled), 1e-300):
                value = doubled
                break
            radii = 2 * radii
            value = doubled
        else:
            raise TruncationUnstable("kernel mass does not settle under truncation doubling")
    else:
        doubled = _kernel_mass_box(k, q, full, 2 * radii)
        if abs(doubled - value) > 1e-4 * max(abs(doubled), 1e-300) and abs(doubled - value) > q.eps_tail:
            raise TruncationUnstable(
                f"doubling the truncation changes the mass from {value:.10g} to {doubled:.10g}")
        value = doubled if k.decay == "integrable_declared" else value
    if t_samples is not None:
        notes.append(f"{len(np.atleast_2d(t_samples))} t samples share the same value")
    return E1Result(float(value), bool(np.isfinite(value)), [float(r) for r in radii], notes)


def kernel_mass(k: KernelSpec, d: "DomainDescriptor | None" = None, q: QuadratureScheme | None = None) -> float:
    """``sup_t`` of the kernel mass over ``D_t`` (bounded by the full mass)."""
    return verify_E1(k, q).sup_estimate


# ---------------------------------------------------------------------------
# conditions (E2)-(E3)


def _dt_integral(k: KernelSpec, d: DomainDescriptor, q: QuadratureScheme, t, radii, f=None,
                 ball: float | None = None) -> float:
    """``int_{D_t} K(t - eta) f(eta) d eta`` (``f = 1`` when None)."""
    t = np.asarray(t, float)
    if d.kind == "hyperplane":
        return 0.0
    intervals = d.r_intervals(t)
    indicator = None
    if intervals is None:
        intervals = [(0.0, math.inf)] * k.dim
        indicator = d
    if ball is not None:
        # eta in B(0, ball) forces r_i in [t_i - ball, t_i + ball]
        intervals = [(max(a, ti - ball), min(b, ti + ball)) for (a, b), ti in zip(intervals, t)]
    axes = _box_nodes(q, intervals, radii)
    pts, w = _tensor(axes)
    if len(w) == 0:
        return 0.0
    vals = k(pts)
    eta = t - pts
    if indicator is not None:
        vals = vals * indicator.contains(eta)
    if ball is not None:
        vals = vals * (np.linalg.norm(eta, axis=1) <= ball)
    if f is not None:
        vals = vals * f.evaluate(eta)[..., 0]
    return float(np.dot(w, vals))


@dataclass
class E2E3Report:
    radii: list
    rays: list
    e2: list
    e3: dict
    dt_integrals: list
    e2_passed: bool
    e3_passed: dict
    passed: bool
    degenerate: str | None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"radii": self.radii, "rays": self.rays, "e2": self.e2, "e3": self.e3,
                "dt_integrals": self.dt_integrals, "e2_passed": self.e2_passed,
                "e3_passed": self.e3_passed, "passed": self.passed, "degenerate": self.degenerate,
                "notes": list(self.notes)}


def _decreasing_below(values: Sequence[float], eps: float) -> bool:
    vals = [abs(v) for v in values]
    for a, b in zip(vals, vals[1:]):
        if a <= eps and b <= eps:
            continue
        if b > 1.1 * a:
            return False
    return vals[-1] <= eps


def verify_E2_E3(k: KernelSpec, d: DomainDescriptor, q: QuadratureScheme | None = None,
                 radii: Sequence[float] = (5.0, 10.0, 20.0, 40.0, 80.0),
                 ball_radii: Sequence[float] = (1.0, 2.0, 5.0), rays=None) -> E2E3Report:
    """Decay of the (E2) and (E3) integrals along rays inside D.

    The (E2) integral over ``I_t minus D`` is computed as the ``I_t`` mass
    minus the ``D_t`` integral.  Default rays: the diagonal of the domain
    (for an orthant, from its corner).  Values below ``eps_tail`` count as
    zero in the monotonicity test.
    """
    q = q or QuadratureScheme()
    kr = k.truncation(q.eps_tail)
    full = verify_E1(k, q).sup_estimate
    if rays is None:
        if d.kind == "orthant":
            rays = [(np.asarray(d.corner), np.asarray(d.signs, float))]
        elif d.kind == "hyperplane":
            nrm = np.asarray(d.normal, float)
            tangent = np.array([-nrm[1], nrm[0]]) if d.dim == 2 else np.ones(d.dim)
            base = nrm * d.offset / float(nrm @ nrm)
            rays = [(base, tangent)]
        else:
            rays = [(np.zeros(d.dim), np.ones(d.dim))]
    e2_all, dt_all, e3_all = [], [], {float(r): [] for r in ball_radii}
    ray_desc = []
    for origin, direction in rays:
        origin = np.asarray(origin, float)
        direction = np.asarray(direction, float) / np.linalg.norm(direction)
        ray_desc.append({"origin": origin.tolist(), "direction": direction.tolist()})
        e2, dts = [], []
        for R in radii:
            t = origin + R * direction
            dt = _dt_integral(k, d, q, t, kr)
            dts.append(dt)
            e2.append(full - dt)
            for rb in ball_radii:
                e3_all[float(rb)].append(_dt_integral(k, d, q, t, kr, ball=rb))
        e2_all.append(e2)
        dt_all.append(dts)
    eps = q.eps_tail
    e2_ok = all(_decreasing_below(v, eps) for v in e2_all)
    e3_ok = {}
    for rb, vals in e3_all.items():
        per_ray = [vals[i * len(radii):(i + 1) * len(radii)] for i in range(len(rays))]
        e3_ok[rb] = all(_decreasing_below(v, eps) for v in per_ray)
    degenerate = None
    notes = []
    if not d.interior_nonempty:
        degenerate = "int(D_t)=∅"
        notes.append("domain has empty interior: every D_t integral vanishes identically")
    passed = e2_ok and all(e3_ok.values())
    return E2E3Report(list(radii), ray_desc, e2_all, {str(k_): v for k_, v in e3_all.items()}, dt_all,
                      e2_ok, {str(k_): v for k_, v in e3_ok.items()}, passed, degenerate, notes)


# ---------------------------------------------------------------------------
# whole-space convolution


@dataclass
class ConvolutionValue:
    value: np.ndarray
    err_bound: float


def _whole_space_nodes(h: KernelSpec, q: QuadratureScheme):
    radii = h.truncation(q.eps_tail, two_sided=True)
    axes = []
    for R in radii:
        xl, wl = q.nodes(-float(R), 0.0)
        xr, wr = q.nodes(0.0, float(R))
        axes.append((np.concatenate([xl, xr]), np.concatenate([wl, wr])))
    pts, w = _tensor(axes)
    return pts, w * h(pts), radii


def _sup_of(f, fallback_vals=None) -> float:
    if getattr(f, "sup_bound", None) is not None:
        return float(f.sup_bound)
    if fallback_vals is not None and np.size(fallback_vals):
        return float(np.max(np.abs(fallback_vals)))
    return 1.0


def whole_space_convolve(h: KernelSpec, f: FunctionExpr, t, q: QuadratureScheme | None = None,
                         x=None, check_doubling: bool = True) -> ConvolutionValue:
    """``(h * f)(t) = int h(sigma) f(t - sigma) d sigma`` over R^n."""
    q = q or QuadratureScheme()
    if h.singular:
        raise SingularKernel("singular kernels are not supported")
    t = np.asarray(t, float).reshape(h.dim)
    pts, wk, radii = _whole_space_nodes(h, q)
    args = t - pts
    vals = f.evaluate(args, None if not f.arity_state else np.broadcast_to(np.asarray(x, float), (len(args), f.arity_state)))
    value = wk @ vals
    sup = _sup_of(f, vals)
    err = h.tail_bound(radii, two_sided=True) * sup + q.eps_tail * sup
    if check_doubling:
        q2 = QuadratureScheme(q.rule, q.order, q.panels_per_unit, q.eps_tail ** 2)
        pts2, wk2, _ = _whole_space_nodes(h, q2)
        vals2 = f.evaluate(t - pts2, None if not f.arity_state else np.broadcast_to(np.asarray(x, float), (len(pts2), f.arity_state)))
        v2 = wk2 @ vals2
        if np.max(np.abs(v2 - value)) > max(1e-4 * float(np.max(np.abs(v2))), 10 * err + 1e-12):
            raise TruncationUnstable("convolution changes under truncation doubling")
    return ConvolutionValue(np.asarray(value, float), float(err))


@dataclass
class ConvolvedField:
    """Probeable ``t -> (h * f)(t)`` for Bochner tests."""

    h: KernelSpec
    f: FunctionExpr
    q: QuadratureScheme = field(default_factory=QuadratureScheme)

    def __post_init__(self):
        self._pts, self._wk, _ = _whole_space_nodes(self.h, self.q)

    @property
    def arity_time(self):
        return self.f.arity_time

    @property
    def arity_state(self):
        return self.f.arity_state

    @property
    def out_dim(self):
        return self.f.out_dim

    @property
    def name(self):
        return f"{self.h.name}*{self.f.name}"

    @property
    def sup_bound(self):
        if self.f.sup_bound is None:
            return None
        return _sup_mass(self.h, self.q) * self.f.sup_bound

    def sample_points(self, points, states):
        points = np.asarray(points, float).reshape(-1, self.arity_time)
        out = np.empty((len(points), len(states), self.out_dim))
        chunk = max(1, 400000 // max(1, len(self._pts) * len(states)))
        for s in range(0, len(points), chunk):
            p = points[s:s + chunk]
            args = p[:, None, :] - self._pts[None, :, :]
            vals = _expr.sample(self.f, args.reshape(-1, self.arity_time), states)
            vals = vals.reshape(len(p), len(self._pts), len(states), self.out_dim)
            out[s:s + chunk] = np.einsum("q,pqsk->psk", self._wk, vals)
        return out


def _sup_mass(h: KernelSpec, q: QuadratureScheme) -> float:
    pts, wk, _ = _whole_space_nodes(h, q)
    return float(np.sum(np.abs(wk)))


# ---------------------------------------------------------------------------
# causal operator Gamma


@dataclass
class GridValues:
    window: GridWindow
    values: np.ndarray  # (N, q)
    err_bound: np.ndarray  # (N,)
    notes: list = field(default_factory=list)

    def to_csv(self) -> str:
        n = self.window.dim
        header = ",".join([f"t{i + 1}" for i in range(n)] +
                          (["value"] if self.values.shape[1] == 1 else
                           [f"value{j + 1}" for j in range(self.values.shape[1])]) + ["err_bound"])
        lines = [header]
        for p, v, e in zip(self.window.points(), self.values, self.err_bound):
            lines.append(",".join([_fmt(c) for c in p] + [_fmt(c) for c in v] + [_fmt(e)]))
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return repr(float(v))


def _require_E1(k: KernelSpec, q: QuadratureScheme) -> float:
    if k.singular:
        raise SingularKernel("singular kernels are excluded from the causal operator")
    try:
        res = verify_E1(k, q)
    except (TruncationUnstable, NegativeKernel) as exc:
        raise E1Violated(str(exc)) from exc
    if not res.passed:
        raise E1Violated("kernel mass over the causal orthant is not finite")
    return res.sup_estimate


class GammaField:
    """Probeable ``t -> int_{D_t} K(t - eta) f(eta) d eta``."""

    def __init__(self, k: KernelSpec, d: DomainDescriptor, f: FunctionExpr,
                 q: QuadratureScheme | None = None):
        if f.arity_state:
            raise ValueError("Gamma acts on state-free functions; fix the state first")
        if f.arity_time != k.dim or d.dim != k.dim:
            raise ValueError("kernel, domain and function dimensions differ")
        self.k, self.d, self.f = k, d, f
        self.q = q or QuadratureScheme()
        self.mass = _require_E1(k, self.q)
        self.radii = k.truncation(self.q.eps_tail)
        self.arity_time = k.dim
        self.arity_state = 0
        self.out_dim = f.out_dim
        self.name = f"Gamma[{k.name},{d.kind}]({f.name})"
        self.sup_bound = None if f.sup_bound is None else self.mass * f.sup_bound
        self._full = None

    def _nodes_for(self, t):
        if self.d.kind == "hyperplane":
            return np.zeros((0, self.k.dim)), np.zeros(0)
        intervals = self.d.r_intervals(t)
        if intervals is None:
            intervals = [(0.0, math.inf)] * self.k.dim
        if intervals[0] == (0.0, math.inf) and all(iv == (0.0, math.inf) for iv in intervals):
            if self._full is None:
                pts, w = _tensor(_box_nodes(self.q, intervals, self.radii))
                self._full = (pts, w * self.k(pts) if len(w) else w)
            return self._full
        pts, w = _tensor(_box_nodes(self.q, intervals, self.radii))
        return pts, (w * self.k(pts) if len(w) else w)

    def values_at(self, points) -> np.ndarray:
        points = np.asarray(points, float).reshape(-1, self.arity_time)
        out = np.zeros((len(points), self.out_dim))
        for i, t in enumerate(points):
            r, wk = self._nodes_for(t)
            if len(wk) == 0:
                continue
            eta = t - r
            vals = self.f.evaluate(eta)
            if self.d.kind == "custom_indicator":
                vals = vals * self.d.contains(eta)[:, None]
            out[i] = wk @ vals
        return out

    def sample_points(self, points, states):
        return self.values_at(points)[:, None, :]

    def err_bound(self) -> float:
        sup = self.f.sup_bound if self.f.sup_bound is not None else 1.0
        return (self.q.eps_tail + self.k.tail_bound(self.radii)) * sup


def gamma_apply(k: KernelSpec, d: DomainDescriptor, f: FunctionExpr, window: GridWindow,
                q: QuadratureScheme | None = None) -> GridValues:
    """Sample ``Gamma f`` on the window grid with per-point error bounds."""
    field_ = GammaField(k, d, f, q)
    vals = field_.values_at(window.points())
    sup = f.sup_bound
    notes = []
    if sup is None:
        sup = float(np.max(np.abs(f.evaluate(window.points())))) if window.count else 1.0
        notes.append("sup|f| estimated from window samples (no sup_bound declared)")
    err = np.full(window.count, (field_.q.eps_tail + k.tail_bound(field_.radii)) * sup)
    if not d.interior_nonempty:
        notes.append("int(D_t)=∅: the operator vanishes identically")
    return GridValues(window, vals, err, notes)


def gamma_preserves_aa_check(k: KernelSpec, d: DomainDescriptor, f: FunctionExpr, probe,
                             q: QuadratureScheme | None = None, check_input: bool = True,
                             min_translate_norm: float = 50.0, radii=None) -> dict:
    """Almost automorphy (or D-asymptotic almost automorphy) of ``Gamma f``.

    Full-space and causal-cone domains run the Bochner test; other domains
    run the asymptotic decomposition.  The tolerance is inflated to
    ``tol * |K|_1 + 2 eps_tail sup|f|``.
    """
    from .limits import DEFAULT_RADII, asymptotic_decompose, bochner_test

    field_ = GammaField(k, d, f, q)
    sup = f.sup_bound if f.sup_bound is not None else float(
        np.max(np.abs(f.evaluate(probe.window.points()))))
    tol = probe.tol_limit * field_.mass + 2 * field_.q.eps_tail * sup
    report = {"kernel": k.describe(), "domain": d.describe(), "function_id": f.name,
              "kernel_mass": field_.mass, "tolerance": tol}
    if d.kind in ("full_space", "causal_cone"):
        if check_input:
            report["input"] = bochner_test(f, probe, raise_on_no_cluster=False).to_json()
        verdict = bochner_test(field_, probe.with_tolerance(tol), raise_on_no_cluster=False)
        report.update(mode="bochner", passed=bool(verdict.passed), verdict=verdict.to_json())
        return report
    if not d.interior_nonempty:
        raise EmptyInterior("domain has empty interior")
    kw = {} if radii is None else {"radii": radii}
    if check_input:
        try:
            inp = asymptotic_decompose(f, probe.sequence, d, probe.window, min_translate_norm,
                                       probe.depth, probe.tol_limit, seed=probe.seed, **kw)
            report["input"] = inp.to_json()
        except Exception as exc:  # recorded, the check on Gamma f still runs
            report["input"] = {"error": f"{type(exc).__name__}: {exc}"}
    dec = asymptotic_decompose(field_, probe.sequence, d, probe.window, min_translate_norm,
                               probe.depth, tol, seed=probe.seed, **kw)
    report.update(mode="asymptotic", passed=bool(dec.passed), decomposition=dec.to_json(),
                  witness_ray=dec.witness_ray)
    return report
