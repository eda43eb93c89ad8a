"""Experiment configuration files.

Grammar (INI style, one ``key = value`` per line, ``;`` or ``#`` comments)::

    [experiment]
    kind = solve_vie            ; one of EXPERIMENTS
    seed = 1                    ; 64-bit integer, drives every random draw
    output_dir = out/vie        ; relative paths resolve against the config file
    expect = pass               ; pass | fail: the verdict that counts as success

    [function.g]                ; function sections: [function] or [function.<role>]
    source = catalogue:vie_forcing
    [function.phi]
    expr = (mul 0.1 (ln (add 1 (abs x0))))
    arity_time = 2
    arity_state = 1
    lipschitz = 0.1

    [kernel]
    source = catalogue:kernel_exp_product(alpha=2, beta=0.5)

Lists are comma separated (``window_lo = -3, -3``).  Matrices are written
row by row with ``;`` between rows (``A = -2, 1; 1, -2``) or with the
shorthand ``laplacian1d(d, h)``.  Unknown sections and keys are errors.
Printing a parsed config gives the canonical text; parsing that text gives
back an equal config.
"""

from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

EXPERIMENTS = ("aa_test", "compactness", "supremum", "decompose", "convolve", "solve_vie",
               "solve_vie_asymptotic", "solve_bikernel", "heat", "poisson", "memory")

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


# value types: each has a parser (text -> value) and a printer (value -> text)

def _p_str(s: str) -> str:
    s = s.strip()
    if not s:
        raise ValueError("empty value")
    return s


def _p_int(s: str) -> int:
    return int(s.strip(), 0)


def _p_float(s: str) -> float:
    v = float(s.strip())
    if not np.isfinite(v):
        raise ValueError("non-finite number")
    return v


def _p_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _p_floats(s: str) -> tuple:
    parts = [p for p in s.split(",")]
    if not parts or any(not p.strip() for p in parts):
        raise ValueError("empty list entry")
    return tuple(_p_float(p) for p in parts)


def _p_ints(s: str) -> tuple:
    return tuple(_p_int(p) for p in s.split(",") if p.strip())


def _p_matrix(s: str):
    text = s.strip()
    m = re.fullmatch(r"laplacian1d\(\s*(\d+)\s*,\s*(" + _NUM + r")\s*\)", text)
    if m:
        return ("laplacian1d", int(m.group(1)), float(m.group(2)))
    rows = tuple(_p_floats(r) for r in text.split(";"))
    if len({len(r) for r in rows}) != 1:
        raise ValueError("matrix rows differ in length")
    return rows


def _f(v: float) -> str:
    return repr(float(v))


def _print(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _f(value)
    if isinstance(value, tuple):
        if value and value[0] == "laplacian1d":
            return f"laplacian1d({value[1]}, {_f(value[2])})"
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(_f(x) for x in row) for row in value)
        return ", ".join(_print(x) for x in value)
    return str(value)


def _enum(*choices):
    def parse(s: str) -> str:
        v = s.strip()
        if v not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}")
        return v
    return parse


_PROBE = {
    "window_lo": _p_floats, "window_hi": _p_floats, "points": _p_int, "depth": _p_int,
    "tol_limit": _p_float, "tol_subseq": _p_float,
    "family": _enum("diagonal", "axis", "integer_lattice", "full"), "axis": _p_int,
    "source": _enum("arithmetic", "geometric", "random_uniform", "random_multiple"),
    "start": _p_float, "step": _p_float, "ratio": _p_float, "T0": _p_float, "growth": _p_float,
    "base": _p_float, "positive": _p_bool,
    "state_kind": _enum("none", "ball", "box"), "state_center": _p_floats, "state_radius": _p_float,
    "state_lo": _p_floats, "state_hi": _p_floats, "state_samples": _p_int,
    "discontinuity_axes": _p_ints,
}

_QUAD = {"rule": _enum("gauss_legendre", "trapezoid"), "order": _p_int,
         "panels_per_unit": _p_int, "eps_tail": _p_float}

SECTIONS = {
    "experiment": {"kind": _enum(*EXPERIMENTS), "seed": _p_int, "output_dir": _p_str,
                   "expect": _enum("pass", "fail"), "description": _p_str},
    "function": {"source": _p_str, "expr": _p_str, "arity_time": _p_int, "arity_state": _p_int,
                 "lipschitz": _p_float, "sup_bound": _p_float, "name": _p_str, "smooth": _p_bool},
    "kernel": {"source": _p_str},
    "domain": {"kind": _enum("full_space", "causal_cone", "orthant"), "dim": _p_int,
               "corner": _p_floats, "signs": _p_ints},
    "probe": _PROBE,
    "quadrature": _QUAD,
    "solver": {"window_lo": _p_floats, "window_hi": _p_floats, "points": _p_int, "refine": _p_int,
               "tol": _p_float, "max_sweeps": _p_int, "residual_tol": _p_float,
               "error_estimate": _p_bool, "decompose": _p_bool, "decompose_window_lo": _p_floats,
               "decompose_window_hi": _p_floats, "decompose_points": _p_int,
               "decompose_refine": _p_int, "decompose_tol": _p_float, "decompose_depth": _p_int,
               "min_translate_norm": _p_float},
    "supremum": {"a": _p_float, "radius": _p_float, "tol": _p_float, "step": _p_float},
    "decompose": {"min_translate_norm": _p_float, "tol": _p_float, "radii": _p_floats},
    "heat": {"dim": _p_int, "time": _p_float, "grid_lo": _p_floats, "grid_hi": _p_floats,
             "grid_points": _p_int, "aa_check": _p_bool},
    "poisson": {"h_fd": _p_float},
    "memory": {"dim": _p_int, "A": _p_matrix, "profile": _p_matrix, "u0": _p_floats,
               "nonlocal": _enum("zero", "mean_clip", "point"), "nonlocal_coef": _p_float,
               "nonlocal_clip": _p_float, "nonlocal_at": _p_float, "t_max": _p_float,
               "dt": _p_float, "horizon": _p_float, "tol": _p_float, "asymptotic": _p_bool,
               "asymptotic_tol": _p_float},
}

# sections each experiment accepts (experiment itself is always required)
ALLOWED = {
    "aa_test": ("function", "probe"),
    "compactness": ("function", "probe"),
    "supremum": ("function", "probe", "supremum"),
    "decompose": ("function", "probe", "domain", "decompose"),
    "convolve": ("function", "kernel", "domain", "probe", "quadrature", "decompose"),
    "solve_vie": ("function", "kernel", "quadrature", "solver"),
    "solve_vie_asymptotic": ("function", "kernel", "domain", "quadrature", "solver", "probe"),
    "solve_bikernel": ("function", "kernel", "quadrature", "solver"),
    "heat": ("function", "heat", "probe", "quadrature"),
    "poisson": ("function", "probe", "poisson"),
    "memory": ("function", "memory"),
}

REQUIRED = {
    "aa_test": ("function",), "compactness": ("function",), "supremum": ("function", "supremum"),
    "decompose": ("function", "domain"), "convolve": ("function", "kernel"),
    "solve_vie": ("function.g", "function.phi", "kernel", "solver"),
    "solve_vie_asymptotic": ("function.g", "function.phi", "kernel", "domain", "solver"),
    "solve_bikernel": ("function.G", "kernel", "solver"),
    "heat": ("function", "heat"), "poisson": ("function",), "memory": ("memory",),
}

_SECTION_ORDER = ("experiment", "function", "kernel", "domain", "probe", "quadrature", "solver",
                  "supremum", "decompose", "heat", "poisson", "memory")


def _base(section: str) -> str:
    return section.split(".", 1)[0]


@dataclass
class ExperimentConfig:
    """Typed, validated configuration: ``sections[name][key] = value``."""

    sections: dict
    source_path: Path | None = field(default=None, compare=False)

    @property
    def kind(self) -> str:
        return self.sections["experiment"]["kind"]

    @property
    def seed(self) -> int:
        return int(self.sections["experiment"].get("seed", 1))

    @property
    def expect(self) -> str:
        return self.sections["experiment"].get("expect", "pass")

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def has(self, name: str) -> bool:
        return name in self.sections

    def output_dir(self) -> Path:
        raw = self.sections["experiment"].get("output_dir")
        if raw is None:
            stem = self.source_path.stem if self.source_path else self.kind
            raw = f"out/{stem}"
        p = Path(raw)
        if not p.is_absolute() and self.source_path is not None:
            p = self.source_path.parent / p
        return Path(os.path.normpath(p))

    def to_text(self) -> str:
        """Canonical text: sections and keys in schema order."""
        names = sorted(self.sections, key=lambda s: (_SECTION_ORDER.index(_base(s)), s))
        chunks = []
        for name in names:
            keys = SECTIONS[_base(name)]
            body = [f"{k} = {_print(self.sections[name][k])}" for k in keys if k in self.sections[name]]
            chunks.append("\n".join([f"[{name}]"] + body))
        return "\n\n".join(chunks) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def parse_config(text: str, source_path: Path | str | None = None) -> ExperimentConfig:
    where = str(source_path) if source_path else "<config>"
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                   comment_prefixes=(";", "#"), strict=True, empty_lines_in_values=False)
    cp.optionxform = str  # keys are case sensitive (T0, A)
    try:
        cp.read_string(text, source=where)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: malformed config: {exc}") from None
    if cp.defaults():
        raise ConfigError(f"{where}: keys outside a section are not allowed")
    sections = {}
    for name in cp.sections():
        base = _base(name)
        if base not in SECTIONS or (base != "function" and name != base):
            raise ConfigError(f"{where}: unknown section [{name}]")
        schema = SECTIONS[base]
        typed = {}
        for key, raw in cp.items(name):
            if key not in schema:
                raise ConfigError(f"{where}: unknown key {key!r} in [{name}]")
            try:
                typed[key] = schema[key](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: bad value for {key!r} in [{name}]: {exc}") from None
        sections[name] = typed
    cfg = ExperimentConfig(sections, Path(source_path) if source_path else None)
    _validate(cfg, where)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    return parse_config(text, path)


def _validate(cfg: ExperimentConfig, where: str) -> None:
    if "experiment" not in cfg.sections or "kind" not in cfg.sections["experiment"]:
        raise ConfigError(f"{where}: [experiment] kind is required")
    kind = cfg.kind
    seed = cfg.seed
    if not 0 <= seed < 2 ** 64:
        raise ConfigError(f"{where}: seed must be a 64-bit unsigned integer")
    allowed = ALLOWED[kind]
    for name in cfg.sections:
        if name != "experiment" and _base(name) not in allowed:
            raise ConfigError(f"{where}: section [{name}] is not used by experiment {kind}")
    for need in REQUIRED[kind]:
        if need not in cfg.sections:
            raise ConfigError(f"{where}: experiment {kind} requires section [{need}]")
    for name, sec in cfg.sections.items():
        if _base(name) == "function":
            if ("source" in sec) == ("expr" in sec):
                raise ConfigError(f"{where}: [{name}] needs exactly one of source / expr")
            if "expr" in sec and "arity_time" not in sec:
                raise ConfigError(f"{where}: [{name}] expr needs arity_time")
        if _base(name) == "kernel" and not sec.get("source", "").startswith("catalogue:"):
            raise ConfigError(f"{where}: [{name}] source must be catalogue:<kernel entry>")
    mem = cfg.section("memory")
    if kind == "memory":
        for key in ("dim", "A", "t_max", "dt"):
            if key not in mem:
                raise ConfigError(f"{where}: [memory] needs {key}")
