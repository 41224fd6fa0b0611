"""Experiment configuration: schema, validation, presets and system construction.

A configuration is a nested mapping (YAML on disk)::

    preset: example1          # optional base, deep-merged with the rest
    system:
      graphon: example1       # built-in id, {id: constant, c: 1.0} or {csv: path}
      inputs:                 # one list of segments per channel
        - [{lo: 0.0, hi: 0.5}]
        - [{lo: 0.5, hi: 0.8, closed: right}]
      x0: {function: zero}    # named function, {csv: path} or a list of n_s values
      xf: {function: parabola}
      T: 10
      lambda: 1.0e6
      lambda_list: [10, 100]  # used by sweep
      n_s: 100
      K: 200
    solver:
      kind: l1                # or nonconvex
      penalty: {id: mcp, a: 0.1}
      method: ipm             # or fista
      rel_tol: 1.0e-9
      max_iter: 20000
    output: {dir: out, prefix: example1}

A segment ``{lo, hi, slope, intercept, closed}`` contributes
``slope * a + intercept`` on the interval between ``lo`` and ``hi``; the
defaults (slope 0, intercept 1, closed "left") give an indicator of
``[lo, hi)``.  ``closed`` is one of left, right, both, none.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .dynamics import DiscretizedSystem
from .errors import HandsOffError
from .graphon import BUILTIN_NAMES, GraphonSpec, builtin_graphon, discretize_operator, load_step_csv, midpoints
from .io import read_csv
from .penalties import BUILTIN_PENALTIES, PenaltySpec, builtin_penalty
from .solvers import SolverOptions


class ConfigError(HandsOffError, ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


# -- named profile functions -----------------------------------------------------

def _fn_zero(a, **_):
    return np.zeros_like(a)


def _fn_constant(a, value=1.0, **_):
    return np.full_like(a, float(value))


def _fn_sin(a, freq=1.0, amplitude=1.0, **_):
    return amplitude * np.sin(2.0 * np.pi * freq * a)


def _fn_parabola(a, **_):
    return -a * (a - 1.0)


def _fn_sqrt_disc(a, **_):
    return np.sqrt(np.clip(1.0 - a * a, 0.0, None))


FUNCTIONS = {"zero": _fn_zero, "constant": _fn_constant, "sin": _fn_sin,
             "parabola": _fn_parabola, "sqrt_disc": _fn_sqrt_disc}


# -- presets ---------------------------------------------------------------

_EX2_INPUTS = [
    [{"lo": 0.0, "hi": 1 / 3, "slope": 3.0, "intercept": 0.0, "closed": "both"},
     {"lo": 2 / 3, "hi": 1.0, "slope": 3.0, "intercept": -3.0, "closed": "both"}],
    [{"lo": 1 / 3, "hi": 2 / 3, "slope": -6.0, "intercept": 3.0, "closed": "none"}],
]


def _example2(kind, penalty, prefix):
    return {
        "system": {"graphon": {"id": "constant", "c": 1.0}, "inputs": _EX2_INPUTS,
                   "x0": {"function": "sin", "freq": 1.0}, "xf": {"function": "zero"},
                   "T": 2.0, "lambda": 1e6, "lambda_list": [1e2, 1e4, 1e6], "n_s": 100, "K": 200},
        "solver": {"kind": kind, "penalty": penalty},
        "output": {"dir": "out", "prefix": prefix},
        "cutnorm": {"parts": 12},
    }


PRESETS = {
    "example1": {
        "system": {"graphon": "example1",
                   "inputs": [[{"lo": 0.0, "hi": 0.5, "closed": "both"}],
                              [{"lo": 0.5, "hi": 0.8, "closed": "right"}]],
                   "x0": {"function": "zero"}, "xf": {"function": "parabola"},
                   "T": 10.0, "lambda": 1e6, "lambda_list": [10.0 ** k for k in range(1, 9)],
                   "n_s": 100, "K": 200},
        "solver": {"kind": "l1"},
        "output": {"dir": "out", "prefix": "example1"},
        "cutnorm": {"parts": 12},
    },
    "example2-l1": _example2("l1", None, "example2-l1"),
    "example2-mcp": _example2("nonconvex", {"id": "mcp", "a": 0.1}, "example2-mcp"),
    "example3": {
        "system": {"graphon": "halfplane",
                   "inputs": [[{"lo": 0.0, "hi": 0.25}], [{"lo": 0.25, "hi": 0.75}],
                              [{"lo": 0.75, "hi": 1.0, "closed": "both"}]],
                   "x0": {"function": "zero"}, "xf": {"function": "sqrt_disc"},
                   "T": 1.0, "lambda": 1e2, "lambda_list": [1.0, 10.0, 100.0, 1000.0],
                   "n_s": 200, "K": 100},
        "solver": {"kind": "l1"},
        "output": {"dir": "out", "prefix": "example3"},
        "cutnorm": {"parts": 12},
        "experiment": {"family": "example3", "n_list": [10, 50, 100, 500],
                       "lambda_list": [1.0, 10.0, 100.0, 1000.0], "T": 1.0, "K": 100, "n_s": 500},
    },
}
PRESETS["example2"] = PRESETS["example2-mcp"]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: Optional[str] = None, preset: Optional[str] = None) -> dict:
    """Raw configuration from a preset name and/or a YAML file (file wins)."""
    raw: dict = {}
    base_dir = Path(".")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError([f"config file {path} does not exist"])
        try:
            raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"config file {path} is not valid YAML: {exc}"]) from None
        if not isinstance(raw, dict):
            raise ConfigError([f"config file {path} must hold a mapping"])
        base_dir = p.parent
    name = preset or raw.pop("preset", None)
    if name is not None:
        if name not in PRESETS:
            raise ConfigError([f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}"])
        raw = _merge(PRESETS[name], raw)
    if not raw:
        raise ConfigError(["give --config PATH or --preset NAME"])
    raw.setdefault("_base_dir", str(base_dir))
    return raw


# -- typed view ------------------------------------------------------------

@dataclass
class ExperimentConfig:
    graphon: GraphonSpec
    inputs: list
    x0: Any
    xf: Any
    T: float
    lam: float
    lambda_list: list
    n_s: int
    K: int
    kind: str = "l1"
    penalty: Optional[PenaltySpec] = None
    options: SolverOptions = field(default_factory=SolverOptions)
    out_dir: str = "out"
    prefix: str = "run"
    raw: dict = field(default_factory=dict)

    def system(self, lam: Optional[float] = None) -> DiscretizedSystem:
        a = midpoints(self.n_s)
        B = np.stack([_sample_segments(ch, a) for ch in self.inputs], axis=1)
        return DiscretizedSystem(discretize_operator(self.graphon, self.n_s), B,
                                 _sample_profile(self.x0, a), _sample_profile(self.xf, a),
                                 self.T, self.lam if lam is None else lam, self.K,
                                 name=self.prefix)


def _sample_segments(segments, a):
    out = np.zeros_like(a)
    for s in segments:
        lo, hi = float(s["lo"]), float(s["hi"])
        closed = s.get("closed", "left")
        left = a >= lo if closed in ("left", "both") else a > lo
        right = a <= hi if closed in ("right", "both") else a < hi
        out += np.where(left & right, float(s.get("slope", 0.0)) * a + float(s.get("intercept", 1.0)), 0.0)
    return out


def _sample_profile(spec, a):
    if isinstance(spec, np.ndarray):
        return spec
    fn = FUNCTIONS[spec["function"]]
    params = {k: v for k, v in spec.items() if k != "function"}
    return fn(a, **params)


def _num(problems, where, value, positive=False, integer=False, allow_zero=True):
    try:
        v = float(value)
    except (TypeError, ValueError):
        problems.append(f"{where}: expected a number, got {value!r}")
        return None
    if not math.isfinite(v):
        problems.append(f"{where}: must be finite")
        return None
    if integer and v != int(v):
        problems.append(f"{where}: must be an integer")
        return None
    if positive and (v < 0 or (v == 0 and not allow_zero)):
        problems.append(f"{where}: must be {'positive' if not allow_zero else 'non-negative'}")
        return None
    return int(v) if integer else v


def _parse_graphon(problems, spec, base_dir):
    try:
        if isinstance(spec, str):
            return builtin_graphon(spec)
        if isinstance(spec, dict) and "csv" in spec:
            path = Path(base_dir) / spec["csv"]
            if not path.is_file():
                problems.append(f"system.graphon: file {path} does not exist")
                return None
            return load_step_csv(path, name=path.stem)
        if isinstance(spec, dict) and "id" in spec:
            params = {k: v for k, v in spec.items() if k != "id"}
            return builtin_graphon(spec["id"], **params)
    except HandsOffError as exc:
        problems.append(f"system.graphon: {exc}")
        return None
    problems.append(f"system.graphon: expected one of {', '.join(BUILTIN_NAMES)}, "
                    "{id: ..., params}, or {csv: path}")
    return None


def _parse_profile(problems, where, spec, n_s, base_dir):
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=float)
        if n_s is not None and arr.shape != (n_s,):
            problems.append(f"{where}: list must have n_s = {n_s} values")
        return arr
    if isinstance(spec, dict) and "csv" in spec:
        path = Path(base_dir) / spec["csv"]
        if not path.is_file():
            problems.append(f"{where}: file {path} does not exist")
            return None
        _, data = read_csv(path)
        arr = data[:, -1]
        if n_s is not None and arr.shape != (n_s,):
            problems.append(f"{where}: {path} must hold n_s = {n_s} rows")
        return arr
    if isinstance(spec, dict) and spec.get("function") in FUNCTIONS:
        return dict(spec)
    problems.append(f"{where}: expected {{function: {'|'.join(FUNCTIONS)}}}, {{csv: path}} or a list")
    return None


def _parse_inputs(problems, spec):
    if not isinstance(spec, list) or not spec:
        problems.append("system.inputs: expected a non-empty list of channels")
        return None
    channels = []
    for j, ch in enumerate(spec):
        segs = ch if isinstance(ch, list) else [ch]
        for s in segs:
            if not isinstance(s, dict) or "lo" not in s or "hi" not in s:
                problems.append(f"system.inputs[{j}]: each segment needs lo and hi")
                return None
            if s.get("closed", "left") not in ("left", "right", "both", "none"):
                problems.append(f"system.inputs[{j}]: closed must be left, right, both or none")
                return None
            extra = set(s) - {"lo", "hi", "slope", "intercept", "closed"}
            if extra:
                problems.append(f"system.inputs[{j}]: unknown segment keys {sorted(extra)}")
                return None
        channels.append(segs)
    return channels


def parse_config(raw: dict, need_lambda_list: bool = False, need_positive_lambda: bool = False) -> ExperimentConfig:
    """Validate a raw mapping; raises ConfigError listing every problem."""
    problems: list = []
    base_dir = raw.get("_base_dir", ".")
    sysd = raw.get("system")
    if not isinstance(sysd, dict):
        raise ConfigError(["missing 'system' block"])
    n_s = _num(problems, "system.n_s", sysd.get("n_s"), positive=True, integer=True, allow_zero=False)
    K = _num(problems, "system.K", sysd.get("K"), positive=True, integer=True, allow_zero=False)
    T = _num(problems, "system.T", sysd.get("T"), positive=True, allow_zero=False)
    lam = _num(problems, "system.lambda", sysd.get("lambda", 1.0), positive=True)
    if need_positive_lambda and lam == 0:
        problems.append("system.lambda: must be positive")
    lam_list = sysd.get("lambda_list", [])
    if not isinstance(lam_list, list):
        problems.append("system.lambda_list: expected a list")
        lam_list = []
    lam_list = [_num(problems, f"system.lambda_list[{i}]", v, positive=True) for i, v in enumerate(lam_list)]
    if need_lambda_list and len(lam_list) < 2:
        problems.append("system.lambda_list: sweep needs at least two values")
    graphon = _parse_graphon(problems, sysd.get("graphon"), base_dir)
    if graphon is not None and graphon.kind == "step" and n_s and n_s % graphon.parts:
        problems.append(f"system.n_s: {n_s} is not a multiple of the graphon's {graphon.parts} parts")
    inputs = _parse_inputs(problems, sysd.get("inputs"))
    x0 = _parse_profile(problems, "system.x0", sysd.get("x0"), n_s, base_dir)
    xf = _parse_profile(problems, "system.xf", sysd.get("xf"), n_s, base_dir)

    solv = raw.get("solver", {}) or {}
    kind = solv.get("kind", "l1")
    if kind not in ("l1", "nonconvex"):
        problems.append("solver.kind: expected l1 or nonconvex")
    penalty = None
    if kind == "nonconvex":
        pen = solv.get("penalty") or {}
        pid = pen.get("id") if isinstance(pen, dict) else None
        if pid not in BUILTIN_PENALTIES:
            problems.append(f"solver.penalty.id: expected one of {', '.join(BUILTIN_PENALTIES)}")
        else:
            try:
                penalty = builtin_penalty(pid, **{k: v for k, v in pen.items() if k != "id"})
            except HandsOffError as exc:
                problems.append(f"solver.penalty: {exc}")
    opts = None
    try:
        opts = SolverOptions(method=solv.get("method", "ipm"),
                             rel_tol=float(solv.get("rel_tol", 1e-9)),
                             max_iter=int(solv.get("max_iter", 20000)))
    except (HandsOffError, TypeError, ValueError) as exc:
        problems.append(f"solver: {exc}")
    outd = raw.get("output", {}) or {}
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(graphon, inputs, x0, xf, T, lam, lam_list, n_s, K, kind, penalty, opts,
                            str(outd.get("dir", "out")), str(outd.get("prefix", "run")), raw)
