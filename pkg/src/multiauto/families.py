"""Sequence families, bounded state sets and probe windows.

All random draws are keyed by ``(seed, stream, index, ...)`` through
``numpy.random.SeedSequence`` spawn keys, so element ``k`` of a sequence does
not depend on how many elements are drawn after it (prefix stability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, FamilyNotUnbounded

DEFAULT_SEED = 1


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a counted sub-stream of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) % (1 << 64), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------------------
# scalar sources

SOURCE_KINDS = ("arithmetic", "geometric", "random_uniform", "random_multiple")


@dataclass(frozen=True)
class ScalarSource:
    """Unbounded scalar sequence generator.

    arithmetic      s_k = start + step * (k + 1)
    geometric       s_k = start * ratio ** k
    random_uniform  s_k ~ U[-T_k, T_k],  T_k = T0 + growth * k
    random_multiple s_k = base * round(U[-T_k, T_k] / base)
    """

    kind: str = "random_multiple"
    start: float = 0.0
    step: float = 1.0
    ratio: float = 2.0
    T0: float = 100.0
    growth: float = 100.0
    base: float = 2.0 * math.pi
    positive: bool = False

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown scalar source {self.kind!r}")
        if self.kind == "random_multiple" and self.base <= 0:
            raise ValueError("random_multiple needs a positive base")

    @property
    def random(self) -> bool:
        return self.kind.startswith("random")

    def is_unbounded(self) -> bool:
        if self.kind == "arithmetic":
            return self.step != 0
        if self.kind == "geometric":
            return self.start != 0 and abs(self.ratio) > 1
        return self.growth > 0

    def value(self, k: int, seed: int, key: tuple) -> float:
        if self.kind == "arithmetic":
            return self.start + self.step * (k + 1)
        if self.kind == "geometric":
            return self.start * self.ratio ** k
        Tk = self.T0 + self.growth * k
        u = rng_for(seed, *key).uniform(-Tk, Tk)
        if self.positive:
            u = abs(u)
        if self.kind == "random_uniform":
            return float(u)
        m = round(u / self.base)
        if m == 0:
            m = 1 if u >= 0 else -1
        return float(self.base * m)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "arithmetic":
            d.update(start=self.start, step=self.step)
        elif self.kind == "geometric":
            d.update(start=self.start, ratio=self.ratio)
        else:
            d.update(T0=self.T0, growth=self.growth, positive=self.positive)
            if self.kind == "random_multiple":
                d.update(base=self.base)
        return d


# ---------------------------------------------------------------------------
# sequence families

FAMILY_KINDS = ("diagonal", "axis", "integer_lattice", "full", "explicit", "product")


@dataclass(frozen=True)
class SequenceFamily:
    ambient_dim: int
    kind: str = "diagonal"
    source: ScalarSource = field(default_factory=ScalarSource)
    axis: int = 0
    vectors: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "explicit":
            vecs = tuple(tuple(float(c) for c in np.atleast_1d(v)) for v in self.vectors)
            if any(len(v) != self.ambient_dim for v in vecs):
                raise DimensionMismatch("explicit vectors must match ambient_dim")
            object.__setattr__(self, "vectors", vecs)
        if self.kind == "axis" and not 0 <= self.axis < self.ambient_dim:
            raise DimensionMismatch("axis index out of range")
        if self.kind == "product":
            if len(self.parts) != 2:
                raise ValueError("product family needs exactly two parts")
            if sum(p.ambient_dim for p in self.parts) != self.ambient_dim:
                raise DimensionMismatch("product parts must add up to ambient_dim")

    # convenience constructors
    @classmethod
    def diagonal(cls, n: int, source: ScalarSource | None = None) -> "SequenceFamily":
        return cls(n, "diagonal", source or ScalarSource())

    @classmethod
    def explicit(cls, vectors) -> "SequenceFamily":
        vecs = [np.atleast_1d(np.asarray(v, dtype=float)) for v in vectors]
        return cls(len(vecs[0]), "explicit", vectors=tuple(tuple(v) for v in vecs))

    @classmethod
    def product(cls, first: "SequenceFamily", second: "SequenceFamily") -> "SequenceFamily":
        return cls(first.ambient_dim + second.ambient_dim, "product", parts=(first, second))

    def is_unbounded(self) -> bool:
        if self.kind == "explicit":
            return False
        if self.kind == "product":
            return any(p.is_unbounded() for p in self.parts)
        return self.source.is_unbounded()

    def require_unbounded(self):
        if not self.is_unbounded():
            raise FamilyNotUnbounded(f"{self.kind} family does not generate unbounded sequences")

    def _components(self) -> int:
        return {"diagonal": 1, "axis": 1}.get(self.kind, self.ambient_dim)

    def _element(self, k: int, seed: int, stream: int, attempt: int) -> np.ndarray:
        comps = [self.source.value(k, seed, (stream, k, c, attempt)) for c in range(self._components())]
        if self.kind == "diagonal":
            return np.full(self.ambient_dim, comps[0])
        if self.kind == "axis":
            out = np.zeros(self.ambient_dim)
            out[self.axis] = comps[0]
            return out
        if self.kind == "integer_lattice":
            return np.round(np.asarray(comps))
        return np.asarray(comps, dtype=float)

    def draw(self, depth: int, seed: int = DEFAULT_SEED, stream: int = 0) -> np.ndarray:
        """First ``depth`` elements, shape ``(depth, ambient_dim)``.

        Random sources never repeat an element (a constant subsequence would
        be bounded), redrawing on collision with an earlier element.
        """
        if self.kind == "explicit":
            if depth > len(self.vectors):
                raise ValueError(f"explicit family has only {len(self.vectors)} elements")
            return np.asarray(self.vectors[:depth], dtype=float).reshape(depth, self.ambient_dim)
        if self.kind == "product":
            a = self.parts[0].draw(depth, seed, 2 * stream + 1)
            b = self.parts[1].draw(depth, seed, 2 * stream + 2)
            return np.concatenate([a, b], axis=1)
        out = np.empty((depth, self.ambient_dim))
        seen = set()
        for k in range(depth):
            attempt = 0
            while True:
                vec = self._element(k, seed, stream, attempt)
                key = tuple(np.round(vec, 9))
                if not self.source.random or key not in seen or attempt > 50:
                    break
                attempt += 1
            seen.add(key)
            out[k] = vec
        return out

    def contains(self, vec, atol: float = 1e-9) -> bool:
        """Whether ``vec`` lies in the pattern set of this family kind."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.ambient_dim,):
            return False
        if self.kind == "diagonal":
            return bool(np.all(np.abs(vec - vec[0]) <= atol))
        if self.kind == "axis":
            mask = np.ones(self.ambient_dim, bool)
            mask[self.axis] = False
            return bool(np.all(np.abs(vec[mask]) <= atol))
        if self.kind == "integer_lattice":
            return bool(np.all(np.abs(vec - np.round(vec)) <= atol))
        if self.kind == "explicit":
            return any(np.allclose(vec, v, atol=atol) for v in self.vectors)
        if self.kind == "product":
            n1 = self.parts[0].ambient_dim
            return self.parts[0].contains(vec[:n1], atol) and self.parts[1].contains(vec[n1:], atol)
        return bool(np.all(np.isfinite(vec)))

    def directions(self) -> np.ndarray:
        """Unit directions spanned by the family pattern (for continuity probes)."""
        n = self.ambient_dim
        if self.kind == "diagonal":
            return np.full((1, n), 1.0 / math.sqrt(n))
        if self.kind == "axis":
            e = np.zeros((1, n))
            e[0, self.axis] = 1.0
            return e
        return np.eye(n)

    def describe(self) -> dict:
        d = {"kind": self.kind, "ambient_dim": self.ambient_dim}
        if self.kind == "explicit":
            d["vectors"] = [list(v) for v in self.vectors]
        elif self.kind == "product":
            d["parts"] = [p.describe() for p in self.parts]
        else:
            d["source"] = self.source.describe()
            if self.kind == "axis":
                d["axis"] = self.axis
        return d


# ---------------------------------------------------------------------------
# bounded state sets

@dataclass(frozen=True)
class BoundedSetSpec:
    ambient_dim: int
    kind: str = "ball"
    center: tuple = ()
    radius: float = 1.0
    lo: tuple = ()
    hi: tuple = ()
    points: tuple = ()
    sample_count: int = 5

    def __post_init__(self):
        if self.kind not in ("ball", "box", "finite"):
            raise ValueError(f"unknown bounded set kind {self.kind!r}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        p = self.ambient_dim
        if self.kind == "ball":
            c = tuple(float(v) for v in self.center) if self.center else (0.0,) * p
            if len(c) != p:
                raise DimensionMismatch("ball center has wrong dimension")
            if self.radius < 0:
                raise ValueError("radius must be nonnegative")
            object.__setattr__(self, "center", c)
        elif self.kind == "box":
            if len(self.lo) != p or len(self.hi) != p:
                raise DimensionMismatch("box bounds have wrong dimension")
            if any(a > b for a, b in zip(self.lo, self.hi)):
                raise ValueError("box needs lo <= hi")
        else:
            pts = tuple(tuple(float(c) for c in np.atleast_1d(q)) for q in self.points)
            if not pts or any(len(q) != p for q in pts):
                raise DimensionMismatch("finite set points have wrong dimension")
            object.__setattr__(self, "points", pts)

    @classmethod
    def empty_state(cls) -> "BoundedSetSpec":
        return cls(0, "finite", points=((),), sample_count=1)

    @classmethod
    def ball(cls, p: int, radius: float = 1.0, sample_count: int = 5, center=None) -> "BoundedSetSpec":
        return cls(p, "ball", center=tuple(center) if center is not None else (), radius=radius,
                   sample_count=sample_count)

    def sample(self, seed: int = DEFAULT_SEED, stream: int = 7) -> np.ndarray:
        p = self.ambient_dim
        if self.kind == "finite":
            pts = np.asarray(self.points, dtype=float).reshape(len(self.points), p)
            return pts[: self.sample_count] if self.sample_count < len(pts) else pts
        rng = rng_for(seed, stream)
        S = self.sample_count
        if self.kind == "box":
            lo = np.asarray(self.lo, float)
            hi = np.asarray(self.hi, float)
            return lo + (hi - lo) * rng.random((S, p))
        c = np.asarray(self.center, float)
        if p == 0:
            return np.zeros((1, 0))
        g = rng.standard_normal((S, p))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(S) ** (1.0 / p)
        out = c + g * r[:, None]
        # the center and a boundary point are always included
        out[0] = c
        if S > 1:
            out[1] = c + self.radius * g[1]
        return out

    def contains(self, pt, atol: float = 1e-12) -> bool:
        pt = np.asarray(pt, float)
        if self.kind == "ball":
            return float(np.linalg.norm(pt - np.asarray(self.center))) <= self.radius + atol
        if self.kind == "box":
            return bool(np.all(pt >= np.asarray(self.lo) - atol) and np.all(pt <= np.asarray(self.hi) + atol))
        return any(np.allclose(pt, q) for q in self.points)

    def bound(self) -> float:
        """Largest norm of a point in the set."""
        if self.kind == "ball":
            return float(np.linalg.norm(self.center)) + self.radius
        if self.kind == "box":
            corners = np.maximum(np.abs(self.lo), np.abs(self.hi))
            return float(np.linalg.norm(corners))
        return max(float(np.linalg.norm(q)) for q in self.points) if self.points else 0.0

    def describe(self) -> dict:
        d = {"kind": self.kind, "ambient_dim": self.ambient_dim, "sample_count": self.sample_count}
        if self.kind == "ball":
            d.update(center=list(self.center), radius=self.radius)
        elif self.kind == "box":
            d.update(lo=list(self.lo), hi=list(self.hi))
        else:
            d.update(points=[list(q) for q in self.points])
        return d


# ---------------------------------------------------------------------------
# probe windows

@dataclass(frozen=True)
class GridWindow:
    dim: int
    lo: tuple
    hi: tuple
    points_per_axis: int = 33

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) == 1 and self.dim > 1:
            lo = lo * self.dim
        if len(hi) == 1 and self.dim > 1:
            hi = hi * self.dim
        if len(lo) != self.dim or len(hi) != self.dim:
            raise DimensionMismatch("window bounds have wrong dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("window needs lo < hi componentwise")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, lo: float = -5.0, hi: float = 5.0, points_per_axis: int = 33):
        return cls(dim, (lo,) * dim, (hi,) * dim, points_per_axis)

    @property
    def count(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / (self.points_per_axis - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, self.points_per_axis) for a, b in zip(self.lo, self.hi)]

    def points(self) -> np.ndarray:
        """Grid points, row-major (last axis fastest), shape ``(count, dim)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def shifted(self, tau) -> "GridWindow":
        tau = np.asarray(tau, float).reshape(self.dim)
        return GridWindow(self.dim, tuple(np.asarray(self.lo) + tau), tuple(np.asarray(self.hi) + tau),
                          self.points_per_axis)

    def refined(self, factor: int) -> "GridWindow":
        return GridWindow(self.dim, self.lo, self.hi, (self.points_per_axis - 1) * factor + 1)

    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def describe(self) -> dict:
        return {"dim": self.dim, "lo": list(self.lo), "hi": list(self.hi),
                "points_per_axis": self.points_per_axis}
