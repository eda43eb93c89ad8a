"""Build experiments from a parsed config, run them and collect artifacts.

Every experiment returns an :class:`ExperimentResult`: a pass/fail verdict,
a JSON-ready result dict and a mapping of CSV file names to text.  Nothing
here touches the clock, so identical configs give identical bytes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import catalogue
from .config import ExperimentConfig
from .errors import ConfigError
from .expr import FunctionExpr
from .families import BoundedSetSpec, GridWindow, ScalarSource, SequenceFamily
from .limits import LimitProbe, sample_window


@dataclass
class ExperimentResult:
    passed: bool
    result: dict
    csv: dict = field(default_factory=dict)


_CALL = re.compile(r"catalogue:([A-Za-z_][A-Za-z0-9_]*)(?:\((.*)\))?\s*$")


def _catalogue_ref(text: str):
    m = _CALL.fullmatch(text.strip())
    if not m:
        raise ConfigError(f"bad catalogue reference {text!r} (expected catalogue:name(k=v, ...))")
    name, args = m.group(1), m.group(2)
    params = {}
    if args and args.strip():
        for part in args.split(","):
            if "=" not in part:
                raise ConfigError(f"catalogue parameters must be key=value, got {part!r}")
            k, v = part.split("=", 1)
            try:
                params[k.strip()] = float(v)
            except ValueError:
                raise ConfigError(f"catalogue parameter {k.strip()!r} is not a number") from None
    try:
        return catalogue.get(name, **params)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    except TypeError as exc:
        raise ConfigError(f"catalogue entry {name!r}: {exc}") from None


def build_function(sec: dict) -> FunctionExpr:
    if "source" in sec:
        extra = set(sec) - {"source"}
        if extra:
            raise ConfigError(f"catalogue functions take no metadata keys ({', '.join(sorted(extra))})")
        f = _catalogue_ref(sec["source"])
        if not isinstance(f, FunctionExpr):
            raise ConfigError(f"{sec['source']} is not a function entry")
        return f
    meta = {"lipschitz_in_state": sec.get("lipschitz"), "sup_bound": sec.get("sup_bound"),
            "name": sec.get("name", ""), "smooth": sec.get("smooth", True)}
    try:
        return FunctionExpr.parse(sec["expr"], sec["arity_time"], sec.get("arity_state", 0), **meta)
    except ValueError as exc:
        raise ConfigError(f"bad function expression: {exc}") from None


def build_kernel(sec: dict):
    from .volterra import KernelSpec
    k = _catalogue_ref(sec["source"])
    if not isinstance(k, KernelSpec):
        raise ConfigError(f"{sec['source']} is not a kernel entry")
    return k


def build_quadrature(sec: dict):
    from .volterra import QuadratureScheme
    try:
        return QuadratureScheme(**{k: sec[k] for k in ("rule", "order", "panels_per_unit", "eps_tail") if k in sec})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_domain(sec: dict, dim: int):
    from .volterra import DomainDescriptor
    d = sec.get("dim", dim)
    if d != dim:
        raise ConfigError(f"domain dim {d} does not match the problem dimension {dim}")
    kind = sec.get("kind", "full_space")
    if kind == "orthant":
        return DomainDescriptor.orthant(sec.get("corner", (0.0,) * dim), sec.get("signs"))
    if kind == "causal_cone":
        return DomainDescriptor.causal_cone(dim)
    return DomainDescriptor.full_space(dim)


def _window(lo, hi, points, dim) -> GridWindow:
    lo = tuple(lo) if len(lo) == dim else tuple(lo) * dim if len(lo) == 1 else None
    hi = tuple(hi) if len(hi) == dim else tuple(hi) * dim if len(hi) == 1 else None
    if lo is None or hi is None:
        raise ConfigError(f"window bounds must have 1 or {dim} entries")
    try:
        return GridWindow(dim, lo, hi, points)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_probe(sec: dict, dim: int, state_dim: int, seed: int) -> LimitProbe:
    window = _window(sec.get("window_lo", (-5.0,)), sec.get("window_hi", (5.0,)), sec.get("points", 33), dim)
    src_keys = ("start", "step", "ratio", "T0", "growth", "base", "positive")
    source = ScalarSource(sec.get("source", "random_multiple"), **{k: sec[k] for k in src_keys if k in sec})
    kind = sec.get("family", "diagonal")
    family = SequenceFamily(dim, kind, source, axis=sec.get("axis", 0))
    state = None
    skind = sec.get("state_kind", "none")
    if state_dim and skind == "none":
        skind = "ball"
    if skind != "none":
        if skind == "ball":
            state = BoundedSetSpec(state_dim, "ball", center=sec.get("state_center", (0.0,) * state_dim),
                                   radius=sec.get("state_radius", 1.0), sample_count=sec.get("state_samples", 5))
        else:
            state = BoundedSetSpec(state_dim, "box", lo=sec.get("state_lo", (-1.0,) * state_dim),
                                   hi=sec.get("state_hi", (1.0,) * state_dim),
                                   sample_count=sec.get("state_samples", 5))
    try:
        return LimitProbe(window, family, state, sec.get("depth", 64), sec.get("tol_limit", 1e-2),
                          sec.get("tol_subseq", max(3e-2, sec.get("tol_limit", 1e-2))), seed,
                          tuple(sec.get("discontinuity_axes", ())))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _function_csv(f, probe: LimitProbe) -> str:
    vals = sample_window(f, probe.window, np.zeros((1, f.arity_state)))[:, 0, :]
    from .volterra import GridValues
    return GridValues(probe.window, vals, np.zeros(len(vals))).to_csv()


def _expectation(cfg: ExperimentConfig, verdict: bool) -> bool:
    return verdict if cfg.expect == "pass" else not verdict


# ---------------------------------------------------------------------------
# experiments

def _aa_test(cfg):
    from .limits import bochner_test
    f = build_function(cfg.section("function"))
    probe = build_probe(cfg.section("probe"), f.arity_time, f.arity_state, cfg.seed)
    v = bochner_test(f, probe, raise_on_no_cluster=False)
    return bool(v.passed), {"verdict": v.to_json()}, {"function.csv": _function_csv(f, probe)}


def _compactness(cfg):
    from .limits import compactness_equivalence_check
    f = build_function(cfg.section("function"))
    probe = build_probe(cfg.section("probe"), f.arity_time, f.arity_state, cfg.seed)
    rep = compactness_equivalence_check(f, probe)
    return bool(rep.compact), {"report": rep.to_json()}, {"function.csv": _function_csv(f, probe)}


def _supremum(cfg):
    from .limits import supremum_formula_check
    f = build_function(cfg.section("function"))
    probe = build_probe(cfg.section("probe"), f.arity_time, f.arity_state, cfg.seed)
    sec = cfg.section("supremum")
    if "a" not in sec or "radius" not in sec:
        raise ConfigError("[supremum] needs a and radius")
    res = supremum_formula_check(f, probe.sequence, sec["a"], sec["radius"], probe.state_set,
                                 step=sec.get("step"), seed=cfg.seed)
    tol = sec.get("tol", 1e-2)
    return bool(res.gap <= tol), {"supremum": res.to_json(), "tol": tol}, {}


def _decompose(cfg):
    from .limits import DEFAULT_RADII, asymptotic_decompose
    f = build_function(cfg.section("function"))
    probe = build_probe(cfg.section("probe"), f.arity_time, f.arity_state, cfg.seed)
    d = build_domain(cfg.section("domain"), f.arity_time)
    sec = cfg.section("decompose")
    dec = asymptotic_decompose(f, probe.sequence, d, probe.window, sec.get("min_translate_norm", 50.0),
                               probe.depth, sec.get("tol", probe.tol_limit), seed=cfg.seed,
                               radii=sec.get("radii", DEFAULT_RADII), state_set=probe.state_set)
    csv = _function_csv(f, probe)
    return bool(dec.passed), {"decomposition": dec.to_json()}, {"function.csv": csv}


def _convolve(cfg):
    from .limits import bochner_test
    from .volterra import ConvolvedField, gamma_preserves_aa_check
    f = build_function(cfg.section("function"))
    k = build_kernel(cfg.section("kernel"))
    q = build_quadrature(cfg.section("quadrature"))
    probe = build_probe(cfg.section("probe"), f.arity_time, f.arity_state, cfg.seed)
    if cfg.has("domain"):
        d = build_domain(cfg.section("domain"), f.arity_time)
        sec = cfg.section("decompose")
        rep = gamma_preserves_aa_check(k, d, f, probe, q, min_translate_norm=sec.get("min_translate_norm", 50.0),
                                       radii=sec.get("radii"))
        return bool(rep["passed"]), {"report": rep}, {}
    field_ = ConvolvedField(k, f, q)
    inp = bochner_test(f, probe, raise_on_no_cluster=False)
    mass = float(np.sum(np.abs(field_._wk)))
    tol = probe.tol_limit * mass + 2.0 * q.eps_tail * (f.sup_bound or 1.0)
    out = bochner_test(field_, probe.with_tolerance(tol), raise_on_no_cluster=False)
    return bool(out.passed), {"input": inp.to_json(), "convolution": out.to_json(),
                              "kernel_abs_mass": mass, "tolerance": tol}, {}


def _solver_window(sec: dict, dim: int) -> GridWindow:
    if "window_lo" not in sec or "window_hi" not in sec:
        raise ConfigError("[solver] needs window_lo and window_hi")
    return _window(sec["window_lo"], sec["window_hi"], sec.get("points", 33), dim)


def _trace_result(trace, sec: dict, extra_ok: bool = True):
    tol_res = sec.get("residual_tol", 1e-5)
    passed = bool(trace.converged and trace.residual <= tol_res and extra_ok)
    out = {"trace": trace.to_json(), "residual_tol": tol_res,
           "error_bound": trace.error_bound}
    return passed, out, {"solution.csv": trace.grid_values().to_csv()}


def _solve_vie(cfg):
    from .solvers import solve_vie_infinite_delay
    g = build_function(cfg.section("function.g"))
    phi = build_function(cfg.section("function.phi"))
    k = build_kernel(cfg.section("kernel"))
    sec = cfg.section("solver")
    trace = solve_vie_infinite_delay(g, phi, k, _solver_window(sec, k.dim), build_quadrature(cfg.section("quadrature")),
                                     sec.get("tol", 1e-6), sec.get("refine", 4), sec.get("max_sweeps", 200),
                                     sec.get("error_estimate", True))
    trace.seed = cfg.seed
    return _trace_result(trace, sec)


def _solve_vie_asymptotic(cfg):
    from .solvers import solve_vie_asymptotic
    g = build_function(cfg.section("function.g"))
    phi = build_function(cfg.section("function.phi"))
    k = build_kernel(cfg.section("kernel"))
    d = build_domain(cfg.section("domain"), k.dim)
    sec = cfg.section("solver")
    window = _solver_window(sec, k.dim)
    decompose = sec.get("decompose", True)
    opts = {}
    if decompose:
        psec = cfg.section("probe")
        src_keys = ("T0", "growth", "base")
        source = ScalarSource(psec.get("source", "random_multiple"),
                              positive=psec.get("positive", True), **{k_: psec[k_] for k_ in src_keys if k_ in psec})
        opts["family"] = SequenceFamily.diagonal(k.dim, source)
        if "decompose_window_lo" in sec:
            opts["window"] = _window(sec["decompose_window_lo"], sec.get("decompose_window_hi", sec["window_hi"]),
                                     sec.get("decompose_points", 9), k.dim)
        opts["refine"] = sec.get("decompose_refine", 2)
        opts["tol"] = sec.get("decompose_tol", 1e-2)
        opts["depth"] = sec.get("decompose_depth", 16)
        opts["min_translate_norm"] = sec.get("min_translate_norm", 50.0)
        opts["seed"] = cfg.seed
    trace = solve_vie_asymptotic(g, phi, k, d, window, build_quadrature(cfg.section("quadrature")),
                                 sec.get("tol", 1e-6), sec.get("refine", 4), sec.get("max_sweeps", 200),
                                 decompose, opts, sec.get("error_estimate", True))
    trace.seed = cfg.seed
    return _trace_result(trace, sec, trace.extras.get("asymptotic_passed", True))


def _solve_bikernel(cfg):
    from .solvers import solve_bikernel
    G = build_function(cfg.section("function.G"))
    lam = build_kernel(cfg.section("kernel"))
    sec = cfg.section("solver")
    trace = solve_bikernel(G, lam, _solver_window(sec, 1), build_quadrature(cfg.section("quadrature")),
                           sec.get("tol", 1e-6), sec.get("refine", 4), sec.get("max_sweeps", 200))
    trace.seed = cfg.seed
    return _trace_result(trace, sec)


def _heat(cfg):
    from .pde import HeatConfig, heat_preserves_aa_check, heat_solve
    f = build_function(cfg.section("function"))
    sec = cfg.section("heat")
    dim = sec.get("dim", f.arity_time)
    if "time" not in sec:
        raise ConfigError("[heat] needs time")
    hc = HeatConfig(dim, sec["time"], f, build_quadrature(cfg.section("quadrature")))
    grid = _window(sec.get("grid_lo", (-5.0,)), sec.get("grid_hi", (5.0,)), sec.get("grid_points", 33), dim)
    vals = heat_solve(hc, grid)
    out = {"heat": hc.describe(), "error_bound": hc.error_bound, "notes": vals.notes}
    passed = True
    if sec.get("aa_check", False):
        probe = build_probe(cfg.section("probe"), dim, 0, cfg.seed)
        rep = heat_preserves_aa_check(hc, probe)
        out["aa_check"] = rep.to_json()
        passed = rep.passed
    return bool(passed), out, {"heat.csv": vals.to_csv()}


def _poisson(cfg):
    from .pde import poisson_synthetic_check
    u = build_function(cfg.section("function"))
    probe = build_probe(cfg.section("probe"), u.arity_time, 0, cfg.seed)
    rep = poisson_synthetic_check(u, probe, cfg.section("poisson").get("h_fd", 1e-3))
    return bool(rep.passed), {"report": rep.to_json()}, {"u.csv": _function_csv(u, probe)}


def _matrix(value) -> np.ndarray:
    from .memory import laplacian1d
    if value and value[0] == "laplacian1d":
        return laplacian1d(value[1], value[2])
    return np.array(value, float)


def _memory(cfg):
    from .memory import (DecayProfile, MemorySystem, NonlocalTerm, build_resolvent, solve_mild_nonlocal,
                         trajectory_asymptotic_check, verify_property_R)
    sec = cfg.section("memory")
    dim = sec["dim"]
    A = _matrix(sec["A"])
    profile = ()
    if "profile" in sec:
        prof = sec["profile"]
        if prof[0] == "laplacian1d" or any(len(row) != 2 for row in prof):
            raise ConfigError("profile must list coefficient, rate pairs")
        profile = tuple(tuple(row) for row in prof)
    f = build_function(cfg.section("function.f")) if cfg.has("function.f") else None
    nonlocal_ = NonlocalTerm(sec.get("nonlocal", "zero"), sec.get("nonlocal_coef", 0.0),
                             sec.get("nonlocal_clip", 1.0), sec.get("nonlocal_at", 0.0))
    system = MemorySystem(dim, A, DecayProfile(profile), f, nonlocal_, sec.get("u0"))
    table = build_resolvent(system, sec["t_max"], sec["dt"])
    M, delta, ok = verify_property_R(table)
    out = {"system": system.describe(),
           "resolvent": {"M_est": M, "delta_est": delta, "property_R": ok, "err_est": table.err_est,
                         "step": table.step, "t_max": table.t_max}}
    csv = {"resolvent.csv": table.to_csv()}
    passed = ok
    if "horizon" in sec:
        trace = solve_mild_nonlocal(system, table, sec["horizon"], sec.get("tol", 1e-8))
        trace.seed = cfg.seed
        out["mild"] = trace.to_json()
        lines = ["t," + ",".join(f"u{i + 1}" for i in range(dim))]
        for t, row in zip(trace.fine_axes[0], trace.fine_values):
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
        csv["trajectory.csv"] = "\n".join(lines) + "\n"
        passed = passed and trace.converged
        if sec.get("asymptotic", False):
            dec = trajectory_asymptotic_check(trace, tol=sec.get("asymptotic_tol", 1e-2), seed=cfg.seed)
            out["asymptotic"] = dec.to_json()
            passed = passed and dec.passed
    return bool(passed), out, csv


DISPATCH = {"aa_test": _aa_test, "compactness": _compactness, "supremum": _supremum,
            "decompose": _decompose, "convolve": _convolve, "solve_vie": _solve_vie,
            "solve_vie_asymptotic": _solve_vie_asymptotic, "solve_bikernel": _solve_bikernel,
            "heat": _heat, "poisson": _poisson, "memory": _memory}


def execute(cfg: ExperimentConfig) -> ExperimentResult:
    verdict, result, csv = DISPATCH[cfg.kind](cfg)
    body = {"experiment": cfg.kind, "seed": cfg.seed, "config_sha256": cfg.digest(),
            "expect": cfg.expect, "verdict": bool(verdict),
            "passed": _expectation(cfg, verdict), "result": result}
    return ExperimentResult(_expectation(cfg, verdict), jsonable(body), csv)


def jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)
