"""Generator constructions: Green kernels, tensor products, superposition."""

from __future__ import annotations

import math
from typing import Sequence

from .errors import DimensionMismatch, EmptyList, MissingBound
from .expr import (FunctionExpr, Node, T, V, X, add, exp, fmin, integral, mul, substitute)

# width of the smooth cut applied to the surrogate semigroup for r = t - s < 0
GREEN_CUTOFF_WIDTH = 0.1


def make_green_kernel(phi: FunctionExpr, semigroup_decay: tuple[float, float],
                      arity_state: int = 1) -> FunctionExpr:
    """Two-time kernel ``G(t, s; x) = exp(int_s^t phi) * T(t - s) x``.

    The semigroup is the scalar surrogate ``T(r) = M exp(-delta r)`` for
    ``r >= 0``.  For ``r < 0`` it is multiplied by ``exp(-(r / w)^2)`` with
    ``w = GREEN_CUTOFF_WIDTH``, a C^1 cut that keeps the kernel bounded
    without changing it on ``t >= s``.
    """
    if phi.arity_time != 1 or phi.out_dim != 1 or phi.arity_state != 0:
        raise DimensionMismatch("phi must be a scalar function of one time variable")
    if phi.sup_bound is None:
        raise MissingBound("phi needs a sup_bound to bound the kernel growth")
    M, delta = (float(v) for v in semigroup_decay)
    if M <= 0 or delta <= 0:
        raise ValueError("semigroup constants must be positive")
    r = T(0) - T(1)
    phi_v = substitute(phi.body[0], [V])
    exponent = integral(T(1), T(0), phi_v) - mul(delta, r)
    neg = fmin(r, 0.0)
    cut = exp(-(neg * neg) * (1.0 / GREEN_CUTOFF_WIDTH ** 2))
    scale = mul(M, exp(exponent), cut)
    body = tuple(mul(scale, X(j)) for j in range(arity_state))
    # on t < s: |exp(int) e^{-delta r} cut| <= exp((S + delta)|r| - r^2/w^2)
    S = phi.sup_bound
    growth = math.exp((S + delta) ** 2 * GREEN_CUTOFF_WIDTH ** 2 / 4.0)
    lip = M * max(1.0, growth)
    return FunctionExpr(2, arity_state, body, lipschitz_in_state=lip,
                        name=f"green[{phi.name or 'phi'}]")


def make_tensor_product(fs: Sequence[FunctionExpr], gs: Sequence[FunctionExpr]) -> FunctionExpr:
    """Matrix of products ``f_i(t) g_j(s)`` flattened row-major on R^{n+m}."""
    fs = list(fs)
    gs = list(gs)
    if not fs or not gs:
        raise EmptyList("tensor product needs non-empty lists")
    n = fs[0].arity_time
    m = gs[0].arity_time
    for f in fs:
        if f.arity_time != n or f.out_dim != 1 or f.arity_state:
            raise DimensionMismatch("all fs must be scalar functions of the same arity")
    for g in gs:
        if g.arity_time != m or g.out_dim != 1 or g.arity_state:
            raise DimensionMismatch("all gs must be scalar functions of the same arity")
    g_map = [T(n + k) for k in range(m)]
    g_nodes = [substitute(g.body[0], g_map) for g in gs]
    body = tuple(mul(f.body[0], gn) for f in fs for gn in g_nodes)
    sup = None
    if all(f.sup_bound is not None for f in fs) and all(g.sup_bound is not None for g in gs):
        fnorm = math.sqrt(sum(f.sup_bound ** 2 for f in fs))
        gnorm = math.sqrt(sum(g.sup_bound ** 2 for g in gs))
        sup = fnorm * gnorm
    return FunctionExpr(n + m, 0, body, sup_bound=sup, name="tensor")


def make_nemytskii(g_outer: FunctionExpr, f_inner: FunctionExpr) -> FunctionExpr:
    """Superposition ``W(t; x) = G(t; F(t; x))``."""
    if f_inner.out_dim != g_outer.arity_state:
        raise DimensionMismatch(
            f"inner output dimension {f_inner.out_dim} != outer state dimension {g_outer.arity_state}")
    if f_inner.arity_time != g_outer.arity_time:
        raise DimensionMismatch("inner and outer must share the time dimension")
    body = tuple(substitute(b, None, list(f_inner.body)) for b in g_outer.body)
    lip = None
    if g_outer.lipschitz_in_state is not None and f_inner.lipschitz_in_state is not None:
        lip = g_outer.lipschitz_in_state * f_inner.lipschitz_in_state
    return FunctionExpr(f_inner.arity_time, f_inner.arity_state, body, lipschitz_in_state=lip,
                        sup_bound=g_outer.sup_bound,
                        name=f"{g_outer.name or 'G'}o{f_inner.name or 'F'}")
