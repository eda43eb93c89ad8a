"""Built-in functions and kernels used by tests, demos and configs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .constructions import make_green_kernel, make_tensor_product
from .expr import (FunctionExpr, T, X, add, const, cos, exp, fabs, floor, fmax, fmin, ln, mul,
                   scalar, sin, sqrt)

SQRT2 = math.sqrt(2.0)


def _levitan_node(u):
    return sin(1.0 / (2.0 + cos(u) + cos(SQRT2 * u)))


def two_tone() -> FunctionExpr:
    return scalar(sin(T(0)) + sin(SQRT2 * T(0)), name="two_tone", sup_bound=2.0)


def sin_pi() -> FunctionExpr:
    return scalar(sin(T(0)) + sin(math.pi * T(0)), name="sin_pi", sup_bound=2.0)


def levitan() -> FunctionExpr:
    return scalar(_levitan_node(T(0)), name="levitan", sup_bound=1.0)


def constant(c: float = 1.0) -> FunctionExpr:
    return FunctionExpr(1, 0, (const(c),), name="constant", sup_bound=abs(c))


def identity() -> FunctionExpr:
    return scalar(T(0), name="identity")


def t_squared() -> FunctionExpr:
    return scalar(T(0) * T(0), name="t_squared")


def step(slope: float = 4.0) -> FunctionExpr:
    """Continuous sign-like step, -1 on the far left and +1 on the far right."""
    return scalar(fmin(1.0, fmax(-1.0, slope * T(0))), name="step", sup_bound=1.0).with_meta(smooth=False)


def decay() -> FunctionExpr:
    return scalar(exp(-fabs(T(0))), name="decay", sup_bound=1.0)


def decaying_two_tone() -> FunctionExpr:
    return scalar(sin(T(0)) + sin(SQRT2 * T(0)) + exp(-fabs(T(0))), name="decaying_two_tone",
                  sup_bound=3.0)


def green_exp(M: float = 1.0, delta: float = 3.0) -> FunctionExpr:
    phi = scalar(cos(T(0)) + cos(SQRT2 * T(0)), name="phi", sup_bound=2.0)
    g = make_green_kernel(phi, (M, delta))
    return g.with_meta(name="green_exp")


def tensor() -> FunctionExpr:
    fs = [scalar(sin(T(0)), sup_bound=1.0), scalar(cos(T(0)), sup_bound=1.0)]
    gs = [scalar(sin(SQRT2 * T(0)), sup_bound=1.0), scalar(cos(SQRT2 * T(0)), sup_bound=1.0)]
    return make_tensor_product(fs, gs)


def z_piecewise() -> FunctionExpr:
    """Piecewise-continuous map of (t0, t1, t2): jumps at integer t0."""
    node = (T(0) - floor(T(0))) * sin(2.0 * math.pi * T(1) + 0.3) + _levitan_node(T(2))
    return FunctionExpr(3, 0, (node,), name="z_piecewise", sup_bound=2.0, smooth=False)


def vie_forcing() -> FunctionExpr:
    x, y = T(0), T(1)
    node = (sin(x) + sin(math.pi * x)) * (cos(x) + cos(math.pi * x)) + 1.0 / sqrt(1.0 + x * x + y * y)
    return FunctionExpr(2, 0, (node,), name="vie_forcing", sup_bound=5.0)


def vie_forcing_periodic() -> FunctionExpr:
    """The forcing above without its decaying term."""
    x = T(0)
    node = (sin(x) + sin(math.pi * x)) * (cos(x) + cos(math.pi * x))
    return FunctionExpr(2, 0, (node,), name="vie_forcing_periodic", sup_bound=4.0)


def vie_nonlinearity(gamma: float = 0.1) -> FunctionExpr:
    node = mul(gamma, cos(T(0)), sin(T(1)), ln(1.0 + fabs(X(0))))
    return FunctionExpr(2, 1, (node,), name="vie_nonlinearity", lipschitz_in_state=abs(gamma))


def wave_forcing() -> FunctionExpr:
    node = exp(-0.5 * T(0)) - exp(-0.5 * T(1))
    return FunctionExpr(2, 1, (node,), name="wave_forcing", lipschitz_in_state=0.0)


def wave_nonlinearity(delta: float = 0.05) -> FunctionExpr:
    """-delta cos((Y - S)/2) sin(v); the kernel sign is carried here."""
    node = mul(-delta, cos(0.5 * (T(0) - T(1))), sin(X(0)))
    return FunctionExpr(2, 1, (node,), name="wave_nonlinearity", lipschitz_in_state=abs(delta))


def counterexample_forcing(alpha: float = 1.0, beta: float = 1.0) -> FunctionExpr:
    node = 1.0 + exp(-(alpha * T(0) + beta * T(1)))
    return FunctionExpr(2, 0, (node,), name="counterexample_forcing")


def two_axis_tone() -> FunctionExpr:
    node = sin(T(0)) + sin(SQRT2 * T(1))
    return FunctionExpr(2, 0, (node,), name="two_axis_tone", sup_bound=2.0)


def product_sines() -> FunctionExpr:
    return FunctionExpr(2, 0, (sin(T(0)) * sin(T(1)),), name="product_sines", sup_bound=1.0)


def atan_outer() -> FunctionExpr:
    from .expr import atan
    return FunctionExpr(1, 1, (atan(X(0)),), name="atan_outer", lipschitz_in_state=1.0,
                        sup_bound=math.pi / 2)


def tanh_forcing(eps: float = 0.05) -> FunctionExpr:
    """eps * (sin t + sin sqrt2 t) * tanh(x0), scalar state."""
    from .expr import tanh
    node = mul(eps, sin(T(0)) + sin(SQRT2 * T(0)), tanh(X(0)))
    return FunctionExpr(1, 1, (node,), name="tanh_forcing", lipschitz_in_state=2.0 * abs(eps),
                        sup_bound=2.0 * abs(eps))


# ---------------------------------------------------------------------------
# kernels (built lazily to avoid an import cycle with the volterra module)

def _kernel(name):
    def build(**kw):
        from . import volterra
        return getattr(volterra, name)(**kw)
    return build


@dataclass(frozen=True)
class Entry:
    name: str
    kind: str  # "function" or "kernel"
    description: str
    builder: Callable
    example: str = ""  # the worked example this entry reproduces

    @property
    def label(self) -> str:
        return f"{self.name} ({self.example})" if self.example else self.name


ENTRIES = (
    Entry("constant", "function", "constant map, trivially almost automorphic", constant),
    Entry("two_tone", "function", "sin t + sin(sqrt2 t), almost periodic", two_tone),
    Entry("sin_pi", "function", "sin t + sin(pi t), almost periodic", sin_pi),
    Entry("levitan", "function",
          "sin(1/(2 + cos t + cos sqrt2 t)): almost automorphic, not uniformly continuous", levitan, "Levitan example"),
    Entry("green_exp", "function",
          "bi-almost automorphic Green kernel exp(int_s^t phi) M e^{-delta(t-s)} x", green_exp, "Green kernel example"),
    Entry("tensor", "function",
          "tensor product (sin t, cos t) x (sin sqrt2 s, cos sqrt2 s), 2x2 matrix on R^2", tensor, "tensor product example"),
    Entry("z_piecewise", "function",
          "piecewise continuous in t0 (floor), almost automorphic along Z x Z x R", z_piecewise, "integer-translate example"),
    Entry("step", "function", "continuous sign-like step; not almost automorphic", step),
    Entry("identity", "function", "f(t) = t; unbounded, not almost automorphic", identity),
    Entry("t_squared", "function", "f(t) = t^2; locally but not globally uniformly continuous",
          t_squared),
    Entry("decay", "function", "e^{-|t|}; vanishes at infinity", decay),
    Entry("decaying_two_tone", "function", "sin t + sin sqrt2 t + e^{-|t|}; asymptotically AA",
          decaying_two_tone),
    Entry("vie_forcing", "function",
          "[sin x + sin pi x][cos x + cos pi x] + 1/sqrt(1 + x^2 + y^2)", vie_forcing, "infinite-delay Volterra example"),
    Entry("vie_forcing_periodic", "function", "[sin x + sin pi x][cos x + cos pi x]",
          vie_forcing_periodic, "infinite-delay Volterra example"),
    Entry("vie_nonlinearity", "function", "gamma cos(e1) sin(e2) ln(1 + |u|)", vie_nonlinearity, "infinite-delay Volterra example"),
    Entry("wave_forcing", "function", "e^{-y/2} - e^{-s/2} (characteristic-coordinate data)",
          wave_forcing, "wave reduction example"),
    Entry("wave_nonlinearity", "function", "-delta cos((Y - S)/2) sin(v)", wave_nonlinearity, "wave reduction example"),
    Entry("counterexample_forcing", "function", "1 + e^{-(alpha s + beta t)} on the first quadrant",
          counterexample_forcing, "first-quadrant counterexample"),
    Entry("two_axis_tone", "function", "sin t1 + sin(sqrt2 t2) on R^2", two_axis_tone),
    Entry("product_sines", "function", "sin x sin y on R^2", product_sines),
    Entry("atan_outer", "function", "G(t; y) = atan(y), 1-Lipschitz outer map", atan_outer),
    Entry("tanh_forcing", "function", "eps (sin t + sin sqrt2 t) tanh(u)", tanh_forcing),
    Entry("kernel_exp_product", "kernel", "K(r) = exp(-alpha|r1| - beta|r2|)",
          _kernel("exponential_product_kernel"), "exponential product kernel example"),
    Entry("kernel_laplace_2d", "kernel", "K(r) = exp(-|r1| - |r2|)", _kernel("laplace_kernel_2d"), "infinite-delay Volterra example"),
    Entry("kernel_wave", "kernel", "K(r) = exp(-(|r1| + |r2|)/2)", _kernel("wave_kernel"), "wave reduction example"),
    Entry("kernel_laplace_1d", "kernel", "h(s) = e^{-|s|}/2, unit mass", _kernel("laplace_kernel_1d")),
    Entry("kernel_gauss_1d", "kernel", "normalized Gaussian of unit variance",
          _kernel("gaussian_kernel_1d")),
    Entry("kernel_odd_1d", "kernel", "s e^{-|s|}, zero mass", _kernel("odd_kernel_1d")),
    Entry("kernel_zero", "kernel", "identically zero kernel on R^2", _kernel("zero_kernel"), "degenerate domain example"),
)

_BY_NAME = {e.name: e for e in ENTRIES}


def get(name: str, **params):
    try:
        entry = _BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown catalogue entry {name!r}") from None
    return entry.builder(**params)


def entries(filter_text: str = "") -> list[Entry]:
    f = filter_text.strip().lower()
    if not f:
        return list(ENTRIES)
    if f in ("kernel", "kernels"):
        return [e for e in ENTRIES if e.kind == "kernel"]
    if f in ("function", "functions"):
        return [e for e in ENTRIES if e.kind == "function"]
    return [e for e in ENTRIES if f in e.label.lower() or f in e.description.lower()]


def list_catalogue(filter_text: str = "") -> str:
    lines = [f"{e.label:58s} {e.kind:8s} {e.description}" for e in entries(filter_text)]
    return "\n".join(lines)
