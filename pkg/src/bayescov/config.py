"""JSON experiment configs: parsing, validation and expansion into scenarios.

A config looks like::

    {
      "format_version": 1,
      "output_path": "results.csv",
      "threads": "auto",
      "base_seed": 7,
      "scenarios": [
        {
          "id": "fig1",
          "p": [25, 50],
          "n": ["p^2", "ceil(p^1.5)"],
          "truth": "diagonal",
          "replicates": 100,
          "estimators": [
            {"kind": "posterior_mean", "prior": {"nu": "sqrt(n/p)"}},
            "sample_cov",
            "tapering"
          ],
          "losses": [{"family": "spectral", "power": 1}, {"family": "frobenius", "scale": "1/p"}]
        }
      ]
    }

Every combination of ``p``, ``n``, estimator and loss becomes one
:class:`~bayescov.risk.Scenario`.
"""

import ast
import json
import math
import operator
import os
import re
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import ConfigError
from .losses import LossSpec, PhiSpec
from .randmat import DiagonalTruth, FixedTruth, FullTruth
from .risk import ESTIMATORS, PriorSpec, Scenario

FORMAT_VERSION = 1

TOP_KEYS = {"format_version", "output_path", "threads", "base_seed", "scenarios"}
SCENARIO_KEYS = {
    "id", "p", "n", "truth", "estimators", "losses", "replicates",
    "posterior_draws", "per_replicate_truth", "tag",
}
ESTIMATOR_KEYS = {"kind", "prior", "taper_k"}
PRIOR_KEYS = {"kind", "nu", "scale", "gamma", "k1", "k2", "max_attempts"}
LOSS_KEYS = {"family", "power", "scale", "phi"}
TRUTH_KEYS = {"kind", "low", "high", "scale", "matrix"}


# Symbolic expressions -----------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.FloorDiv: operator.floordiv,
}
_FUNCS = {
    "ceil": math.ceil,
    "floor": math.floor,
    "round": round,
    "sqrt": math.sqrt,
    "log": math.log,
    "exp": math.exp,
    "min": min,
    "max": max,
}


def eval_expr(text: str, **names) -> float:
    """Evaluate an arithmetic expression such as ``"ceil(p^1.5)"``; ``^`` means power."""
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError:
        raise ValueError(f"cannot parse expression {text!r}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.Name) and node.id in names:
            return names[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*(ev(a) for a in node.args))
        raise ValueError(f"unsupported element in expression {text!r}")

    return ev(tree)


def resolve_n(spec, p: int) -> int:
    """Sample size from an int or an expression in ``p``; must be a positive integer."""
    value = spec if isinstance(spec, (int, float)) and not isinstance(spec, bool) else eval_expr(spec, p=p)
    if float(value) != int(value) or int(value) < 1:
        raise ValueError(f"n = {spec!r} gives {value!r} at p={p}; wrap it in ceil() or floor()")
    return int(value)


# Parsing ------------------------------------------------------------------


class _Ctx:
    """Raw text kept around to report line numbers for schema errors."""

    def __init__(self, path: str, text: str):
        self.path = path
        self.text = text

    def fail(self, where: str, message: str, key: Optional[str] = None):
        line = self._line_of(key) if key is not None else None
        loc = f"{self.path}:{line}" if line else self.path
        raise ConfigError(f"{loc}: {where}: {message}")

    def _line_of(self, key: str) -> Optional[int]:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        if not m:
            return None
        return self.text.count("\n", 0, m.start()) + 1


def _check_keys(ctx: _Ctx, obj, allowed, where):
    if not isinstance(obj, dict):
        ctx.fail(where, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            ctx.fail(where, f"unknown key {key!r} (allowed: {', '.join(sorted(allowed))})", key)


def _as_list(value):
    return value if isinstance(value, list) else [value]


def _truth(ctx, spec, where, p=None):
    if isinstance(spec, str):
        spec = {"kind": spec}
    _check_keys(ctx, spec, TRUTH_KEYS, where)
    kind = spec.get("kind")
    try:
        if kind == "diagonal":
            return DiagonalTruth(float(spec.get("low", 0.0)), float(spec.get("high", 5.0)))
        if kind == "full":
            return FullTruth(float(spec.get("scale", 5.0)))
        if kind == "identity":
            if p is None:
                return ("identity", float(spec.get("scale", 1.0)))
            return FixedTruth(float(spec.get("scale", 1.0)) * np.eye(p))
        if kind == "fixed":
            if "matrix" not in spec:
                ctx.fail(where, "fixed truth needs a 'matrix'", "kind")
            return FixedTruth(np.asarray(spec["matrix"], dtype=float))
    except ConfigError:
        raise
    except Exception as exc:
        ctx.fail(where, str(exc), "truth")
    ctx.fail(where, f"unknown truth kind {kind!r} (diagonal, full, identity, fixed)", "truth")


def _prior(ctx, spec, where) -> PriorSpec:
    spec = spec or {}
    _check_keys(ctx, spec, PRIOR_KEYS, where)
    try:
        return PriorSpec(**spec)
    except Exception as exc:
        ctx.fail(where, str(exc), "prior")


def _loss(ctx, spec, where, p: int) -> LossSpec:
    if isinstance(spec, str):
        spec = {"family": spec}
    _check_keys(ctx, spec, LOSS_KEYS, where)
    kw = dict(spec)
    try:
        if isinstance(kw.get("scale"), str):
            kw["scale"] = float(eval_expr(kw["scale"], p=p))
        if "phi" in kw:
            kw["phi"] = PhiSpec(kw["phi"])
        return LossSpec(**kw)
    except Exception as exc:
        ctx.fail(where, str(exc), "family")


def _estimator(ctx, spec, where):
    if isinstance(spec, str):
        spec = {"kind": spec}
    _check_keys(ctx, spec, ESTIMATOR_KEYS, where)
    kind = spec.get("kind")
    if kind not in ESTIMATORS:
        ctx.fail(where, f"unknown estimator {kind!r}; choose from {', '.join(ESTIMATORS)}", "kind")
    prior = _prior(ctx, spec.get("prior"), where + ".prior") if "prior" in spec else None
    return kind, prior, spec.get("taper_k")


@dataclass(frozen=True)
class Cell:
    """One expanded row: the scenario plus the labels written to the CSV."""

    scenario_id: str
    scenario: Scenario
    truth_kind: str


@dataclass(frozen=True)
class Config:
    output_path: Optional[str]
    threads: int
    base_seed: int
    cells: List[Cell]


def load_config(path: str, seed_override: Optional[int] = None) -> Config:
    """Read, validate and expand a config file.

    Raises
    ------
    ConfigError
        With the file path and, when it can be located, the line number.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config(raw, path, text, seed_override)


def parse_config(raw, path: str = "<config>", text: str = "", seed_override: Optional[int] = None) -> Config:
    ctx = _Ctx(path, text)
    _check_keys(ctx, raw, TOP_KEYS, "top level")
    if raw.get("format_version") != FORMAT_VERSION:
        ctx.fail("format_version", f"must be {FORMAT_VERSION}, got {raw.get('format_version')!r}", "format_version")
    threads = raw.get("threads", 1)
    if threads == "auto":
        threads = os.cpu_count() or 1
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        ctx.fail("threads", f"must be a positive integer or 'auto', got {threads!r}", "threads")
    base_seed = raw.get("base_seed", 0)
    if not isinstance(base_seed, int) or isinstance(base_seed, bool) or base_seed < 0:
        ctx.fail("base_seed", "must be a non-negative integer", "base_seed")
    if seed_override is not None:
        base_seed = int(seed_override)
    scenarios = raw.get("scenarios")
    if not isinstance(scenarios, list) or not scenarios:
        ctx.fail("scenarios", "must be a non-empty list", "scenarios")
    output = raw.get("output_path")
    if output is not None and not isinstance(output, str):
        ctx.fail("output_path", "must be a string", "output_path")

    cells = []
    for i, sc in enumerate(scenarios):
        cells.extend(_expand(ctx, sc, f"scenarios[{i}]", i, base_seed))
    return Config(output, threads, base_seed, cells)


def _int_field(ctx, sc, key, default, where, minimum):
    value = sc.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        ctx.fail(where + "." + key, f"must be an integer >= {minimum}, got {value!r}", key)
    return value


def _expand(ctx, sc, where, index, base_seed) -> List[Cell]:
    _check_keys(ctx, sc, SCENARIO_KEYS, where)
    for key in ("p", "n", "truth", "estimators", "losses"):
        if key not in sc:
            ctx.fail(where, f"missing required key {key!r}")
    sid = str(sc.get("id", f"s{index}"))
    replicates = _int_field(ctx, sc, "replicates", 100, where, 2)
    draws = _int_field(ctx, sc, "posterior_draws", 200, where, 1)
    per_rep = sc.get("per_replicate_truth", False)
    if not isinstance(per_rep, bool):
        ctx.fail(where + ".per_replicate_truth", "must be true or false", "per_replicate_truth")
    tag = sc.get("tag")
    if tag is not None and (not isinstance(tag, int) or isinstance(tag, bool) or tag < 0):
        ctx.fail(where + ".tag", "must be a non-negative integer", "tag")
    ps = _as_list(sc["p"])
    for p in ps:
        if not isinstance(p, int) or isinstance(p, bool) or p < 1:
            ctx.fail(where + ".p", f"dimensions must be positive integers, got {p!r}", "p")
    ests = [_estimator(ctx, e, f"{where}.estimators[{j}]") for j, e in enumerate(_as_list(sc["estimators"]))]
    truth_raw = sc["truth"]
    _truth(ctx, truth_raw, where + ".truth")  # validate once before expansion
    cells = []
    for p in ps:
        truth = _truth(ctx, truth_raw, where + ".truth", p)
        truth_kind = truth_raw if isinstance(truth_raw, str) else truth_raw.get("kind")
        losses = [_loss(ctx, l, f"{where}.losses[{j}]", p) for j, l in enumerate(_as_list(sc["losses"]))]
        for n_spec in _as_list(sc["n"]):
            try:
                n = resolve_n(n_spec, p)
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                ctx.fail(where + ".n", str(exc), "n")
            for kind, prior, taper_k in ests:
                for loss in losses:
                    scenario = Scenario(
                        p=p,
                        n=n,
                        truth=truth,
                        prior=prior if prior is not None else PriorSpec(),
                        estimator=kind,
                        loss=loss,
                        replicates=replicates,
                        posterior_draws=draws,
                        base_seed=base_seed,
                        tag=tag,
                        per_replicate_truth=per_rep,
                        taper_k=taper_k,
                    )
                    cells.append(Cell(sid, scenario, truth_kind))
    return cells
