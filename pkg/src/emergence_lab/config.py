"""Experiment configuration: JSON schema validation with full violation lists.

Validation is hand-rolled so every problem in a config is reported at once,
each with a JSON-pointer location, instead of failing at the first issue.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .sofic import ShiftSpace

EXPERIMENTS = ("entropy", "pressure", "bowen", "outer-sweep", "emergence",
               "construct", "saturate", "conditions", "restricted-probe")

STRUCTURE_KINDS = ("entropy", "hausdorff", "pressure", "appendix")


@dataclass(frozen=True)
class ExperimentConfig:
    space: ShiftSpace
    experiment: str
    parameters: dict
    seed: int
    output_dir: Path
    raw: dict

    def sha256(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class _Collector:
    def __init__(self):
        self.violations = []

    def add(self, pointer, message):
        self.violations.append((pointer, message))

    def require(self, obj, key, typ, pointer, type_name=None):
        """Fetch obj[key], recording a violation if missing or mistyped."""
        if not isinstance(obj, dict) or key not in obj:
            self.add(f"{pointer}/{key}", "required field is missing")
            return None
        val = obj[key]
        if typ is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                self.add(f"{pointer}/{key}",
                         f"expected number, got {type(val).__name__}")
                return None
            return float(val)
        if typ is int and isinstance(val, bool):
            self.add(f"{pointer}/{key}", "expected integer, got bool")
            return None
        if not isinstance(val, typ):
            name = type_name or getattr(typ, "__name__", str(typ))
            self.add(f"{pointer}/{key}",
                     f"expected {name}, got {type(val).__name__}")
            return None
        return val

    def optional(self, obj, key, typ, pointer, default=None):
        if not isinstance(obj, dict) or key not in obj or obj[key] is None:
            return default
        return self.require(obj, key, typ, pointer)


def _validate_space(obj, col):
    m = col.require(obj, "m", int, "/space")
    beta = col.require(obj, "beta", float, "/space")
    trans = col.require(obj, "transition", list, "/space")
    if m is not None and m < 2:
        col.add("/space/m", f"alphabet size must be >= 2, got {m}")
    if beta is not None and beta <= 1.0:
        col.add("/space/beta", f"beta must be > 1, got {beta}")
    if None in (m, beta, trans) or m < 2 or beta <= 1.0:
        return None
    t = np.asarray(trans)
    if t.ndim != 2 or t.shape != (m, m):
        col.add("/space/transition", f"must be an {m}x{m} 0/1 matrix")
        return None
    if not np.isin(t, (0, 1)).all():
        col.add("/space/transition", "entries must be 0 or 1")
        return None
    for i in range(m):
        if not t[i].any():
            col.add(f"/space/transition/{i}", f"row {i + 1} is all zero")
            return None
        if not t[:, i].any():
            col.add(f"/space/transition/{i}", f"column {i + 1} is all zero")
            return None
    try:
        return ShiftSpace(alphabet_size=m, transition=t.astype(np.int8),
                          beta=beta)
    except Exception as exc:  # primitivity etc.
        col.add("/space", str(exc))
        return None


def _validate_table(params, col, pointer, required=True):
    tab = (col.require(params, "table", dict, pointer) if required
           else col.optional(params, "table", dict, pointer))
    if tab is None:
        return None
    out = {}
    for k, v in tab.items():
        try:
            word = tuple(int(s) for s in k.split(","))
        except ValueError:
            col.add(f"{pointer}/table/{k}", "key must be comma-separated symbols")
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            col.add(f"{pointer}/table/{k}", "value must be a number")
            continue
        out[word] = float(v)
    return out


def _number_list(params, col, key, pointer, required=True, positive=False):
    lst = (col.require(params, key, list, pointer) if required
           else col.optional(params, key, list, pointer))
    if lst is None:
        return None
    out = []
    for i, v in enumerate(lst):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            col.add(f"{pointer}/{key}/{i}", "must be a number")
            return None
        if positive and v <= 0:
            col.add(f"{pointer}/{key}/{i}", f"must be > 0, got {v}")
            return None
        out.append(float(v))
    return out


def _validate_matrix_list(params, col, key, pointer, m):
    fams = col.require(params, key, list, pointer)
    if fams is None:
        return None
    out = []
    for i, mat in enumerate(fams):
        arr = np.asarray(mat, dtype=object)
        try:
            arr = arr.astype(np.float64)
        except (TypeError, ValueError):
            col.add(f"{pointer}/{key}/{i}", "must be a numeric matrix")
            return None
        if m is not None and arr.shape != (m, m):
            col.add(f"{pointer}/{key}/{i}", f"must be {m}x{m}")
            return None
        out.append(arr)
    return out


_WINDOW_KEYS = {"window": 1}


def _validate_parameters(experiment, params, space, col):
    p = "/parameters"
    m = space.m if space is not None else None
    if experiment == "entropy":
        return
    if experiment == "pressure":
        _validate_table(params, col, p)
        win = col.optional(params, "window", int, p, default=1)
        if win is not None and not 1 <= win <= 8:
            col.add(f"{p}/window", f"window must be in 1..8, got {win}")
        lengths = col.optional(params, "lengths", list, p, default=[8, 16, 24])
        if lengths is not None:
            for i, n in enumerate(lengths):
                if isinstance(n, bool) or not isinstance(n, int) or n < 1:
                    col.add(f"{p}/lengths/{i}", "must be a positive integer")
        return
    if experiment == "bowen":
        tab = _validate_table(params, col, p)
        if tab is not None and any(v <= 0 for v in tab.values()):
            col.add(f"{p}/table", "all values must be positive for a root search")
        win = col.optional(params, "window", int, p, default=1)
        if win is not None and not 1 <= win <= 8:
            col.add(f"{p}/window", f"window must be in 1..8, got {win}")
        return
    if experiment == "outer-sweep":
        kind = col.require(params, "kind", str, p)
        if kind is not None and kind not in STRUCTURE_KINDS:
            col.add(f"{p}/kind", f"must be one of {STRUCTURE_KINDS}")
        if kind in ("pressure", "appendix"):
            _validate_table(params, col, p)
        _number_list(params, col, "t_grid", p)
        caps = col.require(params, "depth_caps", list, p)
        if caps is not None:
            for i, d in enumerate(caps):
                if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                    col.add(f"{p}/depth_caps/{i}", "must be a positive integer")
        blk = col.optional(params, "m_blk", int, p, default=1)
        if blk is not None and blk < 1:
            col.add(f"{p}/m_blk", f"must be >= 1, got {blk}")
        return
    if experiment == "emergence":
        src = col.require(params, "source", dict, p)
        if src is not None:
            kind = col.require(src, "kind", str, f"{p}/source")
            if kind == "bernoulli":
                probs = _number_list(src, col, "probs", f"{p}/source")
                if probs is not None and m is not None and len(probs) != m:
                    col.add(f"{p}/source/probs", f"need {m} probabilities")
            elif kind == "markov":
                _validate_matrix_list(src, col, "stochastic_list",
                                      f"{p}/source", m)
            elif kind == "oscillating":
                for key in ("probs_a", "probs_b"):
                    probs = _number_list(src, col, key, f"{p}/source")
                    if probs is not None and m is not None and len(probs) != m:
                        col.add(f"{p}/source/{key}", f"need {m} probabilities")
            elif kind is not None:
                col.add(f"{p}/source/kind",
                        "must be one of ('bernoulli', 'markov', 'oscillating')")
        eps = _number_list(params, col, "epsilons", p, positive=True)
        if eps is not None and (len(eps) < 3
                                or any(b >= a for a, b in zip(eps, eps[1:]))):
            col.add(f"{p}/epsilons", ">= 3 strictly decreasing scales required")
        for key in ("n_min", "n_max", "count", "depth"):
            val = col.require(params, key, int, p)
            if val is not None and val < 1:
                col.add(f"{p}/{key}", f"must be >= 1, got {val}")
        tf = col.optional(params, "tail_fraction", float, p, default=0.5)
        if tf is not None and not 0.0 < tf <= 1.0:
            col.add(f"{p}/tail_fraction", f"must be in (0, 1], got {tf}")
        return
    if experiment in ("construct", "saturate"):
        _validate_matrix_list(params, col, "family", p, m)
        l_max = col.require(params, "l_max", int, p)
        if l_max is not None and l_max < 0:
            col.add(f"{p}/l_max", f"must be >= 0, got {l_max}")
        for key in ("eps_tilde", "eps_hat"):
            vals = _number_list(params, col, key, p, required=False,
                                positive=True)
            if (vals is not None and l_max is not None
                    and len(vals) < l_max + 2):
                col.add(f"{p}/{key}", f"need at least {l_max + 2} entries")
        caps = col.optional(params, "length_cap", int, p, default=2 ** 27)
        if caps is not None and caps < 1:
            col.add(f"{p}/length_cap", "must be >= 1")
        col.optional(params, "metric_depth", int, p, default=6)
        if experiment == "saturate":
            slack = col.require(params, "slack", float, p)
            if slack is not None and slack < 0:
                col.add(f"{p}/slack", f"must be >= 0, got {slack}")
        return
    if experiment == "conditions":
        kind = col.require(params, "kind", str, p)
        if kind is not None and kind not in STRUCTURE_KINDS:
            col.add(f"{p}/kind", f"must be one of {STRUCTURE_KINDS}")
        if kind in ("pressure", "appendix"):
            _validate_table(params, col, p)
        depth = col.require(params, "depth", int, p)
        if depth is not None and depth < 2:
            col.add(f"{p}/depth", f"must be >= 2, got {depth}")
        _number_list(params, col, "t_grid", p)
        return
    if experiment == "restricted-probe":
        word = col.require(params, "word", list, p)
        if word is not None and (not word or not all(
                isinstance(s, int) and not isinstance(s, bool) for s in word)):
            col.add(f"{p}/word", "must be a nonempty list of symbols")
        _validate_matrix_list(params, col, "stochastic_list", p, m)
        for key, lo in (("n", 1), ("m_blk", 1), ("depth_cap", 1)):
            val = col.require(params, key, int, p)
            if val is not None and val < lo:
                col.add(f"{p}/{key}", f"must be >= {lo}, got {val}")
        for key in ("eps", "t"):
            val = col.require(params, key, float, p)
            if val is not None and val < 0:
                col.add(f"{p}/{key}", f"must be >= 0, got {val}")
        return
    raise AssertionError(f"unhandled experiment {experiment}")


def validate_config(obj):
    """Validate a parsed JSON config; collect every violation before failing."""
    col = _Collector()
    if not isinstance(obj, dict):
        raise ConfigError([("/", "config root must be a JSON object")],
                          module="config", operation="validate_config")
    space_obj = col.require(obj, "space", dict, "")
    space = _validate_space(space_obj, col) if space_obj is not None else None
    experiment = col.require(obj, "experiment", str, "")
    if experiment is not None and experiment not in EXPERIMENTS:
        col.add("/experiment", f"must be one of {EXPERIMENTS}")
        experiment = None
    params = col.require(obj, "parameters", dict, "")
    seed = col.require(obj, "seed", int, "")
    if seed is not None and not 0 <= seed < 2 ** 64:
        col.add("/seed", "must be a 64-bit unsigned integer")
    out_dir = col.require(obj, "output_dir", str, "")
    if experiment is not None and params is not None:
        _validate_parameters(experiment, params, space, col)
    if col.violations:
        raise ConfigError(col.violations,
                          module="config", operation="validate_config")
    return ExperimentConfig(space=space, experiment=experiment,
                            parameters=params, seed=seed,
                            output_dir=Path(out_dir), raw=obj)


def load_config(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError([("/", f"config file not found: {p}")],
                          module="config", operation="load_config")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([("/", f"JSON parse error: {exc}")],
                          module="config", operation="load_config") from exc
    return validate_config(obj)
