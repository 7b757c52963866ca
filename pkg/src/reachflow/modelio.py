"""JSON model and result files.

Model documents (format tag ``flowpipe-model/1``) describe one system --
linear-discrete, linear-continuous, hybrid, or nonlinear -- plus an
optional analysis config.  Result documents (``flowpipe-result/1``)
record a computed flowpipe together with the SHA-256 of the canonical
model serialization, so a result can always be traced to the exact model
it came from.

Serialization is canonical: sorted keys, fixed separators, two-space
indent, floats in shortest round-trip form.  Loading a result file and
saving it again reproduces the bytes exactly.

Validation errors carry the dotted path of the offending entry
(``modes[1].a: must be a matrix``) rather than a bare message.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exprs import ExprError, parse_field
from .hybridize import NonlinearSystem
from .hybridreach import HybridAutomaton, HybridFlowpipe, Mode, Transition
from .linreach import CONTINUOUS, DISCRETE, LinearSystem, ReachConfig
from .setgeom import Box, Empty, HPolytope, SetRep, VPolytope, Zonotope

MODEL_FORMAT = "flowpipe-model/1"
RESULT_FORMAT = "flowpipe-result/1"

KIND_LINEAR_DISCRETE = "linear-discrete"
KIND_LINEAR_CONTINUOUS = "linear-continuous"
KIND_HYBRID = "hybrid"
KIND_NONLINEAR = "nonlinear"
KINDS = (KIND_LINEAR_DISCRETE, KIND_LINEAR_CONTINUOUS, KIND_HYBRID, KIND_NONLINEAR)


class ModelError(ValueError):
    """Malformed model or result document."""


# ---------------------------------------------------------------------------
# canonical JSON


def canonical_dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def model_sha256(doc: dict) -> str:
    """Hash of the canonical serialization, not of any particular file."""
    return hashlib.sha256(canonical_dumps(doc).encode()).hexdigest()


# ---------------------------------------------------------------------------
# document helpers


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise ModelError(f"{path or 'document'}: must be an object")
    if key not in obj:
        raise ModelError(f"{_join(path, key)}: missing")
    return obj[key]


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"{path}: must be a number")
    return float(value)


def _vector(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ModelError(f"{path}: must be a non-empty array of numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ModelError(f"{path}: must be a non-empty array of rows")
    rows = [_vector(row, f"{path}[{i}]") for i, row in enumerate(value)]
    if len({r.shape[0] for r in rows}) != 1:
        raise ModelError(f"{path}: rows must have equal length")
    return np.vstack(rows)


def decode_set(obj, path: str = "set") -> SetRep:
    kind = _require(obj, "type", path)
    try:
        if kind == "box":
            return Box(
                _vector(_require(obj, "lower", path), _join(path, "lower")),
                _vector(_require(obj, "upper", path), _join(path, "upper")),
            )
        if kind == "hpolytope":
            return HPolytope(
                _matrix(_require(obj, "normals", path), _join(path, "normals")),
                _vector(_require(obj, "offsets", path), _join(path, "offsets")),
            )
        if kind == "vpolytope":
            return VPolytope(
                _matrix(_require(obj, "vertices", path), _join(path, "vertices"))
            )
        if kind == "zonotope":
            gens = _matrix(
                _require(obj, "generators", path), _join(path, "generators")
            )
            center = _vector(_require(obj, "center", path), _join(path, "center"))
            # stored one generator per row; the constructor takes columns
            if gens.shape[1] != center.shape[0]:
                raise ModelError(
                    f"{_join(path, 'generators')}: generator length does not "
                    "match the center"
                )
            return Zonotope(center, gens.T)
    except ModelError:
        raise
    except ValueError as e:
        raise ModelError(f"{path}: {e}") from None
    raise ModelError(f"{_join(path, 'type')}: unknown set type {kind!r}")


def encode_set(s: SetRep) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, HPolytope):
        return {
            "type": "hpolytope",
            "normals": s.normals.tolist(),
            "offsets": s.offsets.tolist(),
        }
    if isinstance(s, VPolytope):
        return {"type": "vpolytope", "vertices": s.vertices.tolist()}
    if isinstance(s, Zonotope):
        return {
            "type": "zonotope",
            "center": s.center.tolist(),
            "generators": s.generators.T.tolist(),
        }
    if isinstance(s, Empty):
        raise ModelError("an empty set cannot be stored in a document")
    raise ModelError(f"cannot encode set type {type(s).__name__}")


def _decode_config(obj, path: str) -> ReachConfig:
    if not isinstance(obj, dict):
        raise ModelError(f"{path}: must be an object")
    known = {
        "horizon", "step", "mode", "bad_set", "strategy",
        "template", "bloat_policy", "max_steps", "state_bound",
    }
    for key in obj:
        if key not in known:
            raise ModelError(f"{_join(path, key)}: unknown config entry")
    kw = {"horizon": _number(_require(obj, "horizon", path), _join(path, "horizon"))}
    if "step" in obj:
        kw["step"] = _number(obj["step"], _join(path, "step"))
    for key in ("mode", "strategy", "bloat_policy"):
        if key in obj:
            if not isinstance(obj[key], str):
                raise ModelError(f"{_join(path, key)}: must be a string")
            kw[key] = obj[key]
    if "bad_set" in obj:
        kw["bad_set"] = decode_set(obj["bad_set"], _join(path, "bad_set"))
    if "template" in obj:
        kw["template"] = _matrix(obj["template"], _join(path, "template"))
    if "max_steps" in obj:
        kw["max_steps"] = int(_number(obj["max_steps"], _join(path, "max_steps")))
    if "state_bound" in obj:
        kw["state_bound"] = _number(obj["state_bound"], _join(path, "state_bound"))
    try:
        return ReachConfig(**kw)
    except ValueError as e:
        raise ModelError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# model documents


@dataclass(frozen=True, eq=False)
class ParsedModel:
    """A validated model document with its built system objects.

    Exactly one of ``system`` (linear kinds), ``automaton`` (hybrid) or
    ``nonlinear`` is set; hybrid and nonlinear models carry their initial
    set separately.
    """

    kind: str
    doc: dict
    sha256: str
    name: Optional[str] = None
    config: Optional[ReachConfig] = None
    system: Optional[LinearSystem] = None
    automaton: Optional[HybridAutomaton] = None
    init_mode: Optional[str] = None
    x0: Optional[SetRep] = None
    nonlinear: Optional[NonlinearSystem] = None
    hessian_bound: Optional[np.ndarray] = None


def _decode_linear(doc: dict, kind: str) -> LinearSystem:
    a = _matrix(_require(doc, "a", ""), "a")
    x0 = decode_set(_require(doc, "x0", ""), "x0")
    b = _matrix(doc["b"], "b") if "b" in doc else None
    input_set = decode_set(doc["input"], "input") if "input" in doc else None
    time_kind = DISCRETE if kind == KIND_LINEAR_DISCRETE else CONTINUOUS
    try:
        return LinearSystem(a, x0, b=b, input_set=input_set, time_kind=time_kind)
    except ValueError as e:
        raise ModelError(str(e)) from None


def _decode_mode(obj, path: str) -> Mode:
    name = _require(obj, "name", path)
    if not isinstance(name, str) or not name:
        raise ModelError(f"{_join(path, 'name')}: must be a non-empty string")
    a = _matrix(_require(obj, "a", path), _join(path, "a"))
    b = _matrix(obj["b"], _join(path, "b")) if "b" in obj else None
    input_set = (
        decode_set(obj["input"], _join(path, "input")) if "input" in obj else None
    )
    invariant = (
        decode_set(obj["invariant"], _join(path, "invariant"))
        if "invariant" in obj
        else None
    )
    try:
        return Mode(name, a, b=b, input_set=input_set, invariant=invariant)
    except ValueError as e:
        raise ModelError(f"{path}: {e}") from None


def _decode_transition(obj, path: str) -> Transition:
    source = _require(obj, "source", path)
    target = _require(obj, "target", path)
    for key, val in (("source", source), ("target", target)):
        if not isinstance(val, str):
            raise ModelError(f"{_join(path, key)}: must be a string")
    guard = decode_set(_require(obj, "guard", path), _join(path, "guard"))
    reset_matrix = (
        _matrix(obj["reset_matrix"], _join(path, "reset_matrix"))
        if "reset_matrix" in obj
        else None
    )
    reset_offset = (
        _vector(obj["reset_offset"], _join(path, "reset_offset"))
        if "reset_offset" in obj
        else None
    )
    try:
        return Transition(
            source, target, guard,
            reset_matrix=reset_matrix, reset_offset=reset_offset,
        )
    except ValueError as e:
        raise ModelError(f"{path}: {e}") from None


def _decode_hybrid(doc: dict):
    modes_doc = _require(doc, "modes", "")
    if not isinstance(modes_doc, list) or not modes_doc:
        raise ModelError("modes: must be a non-empty array")
    modes = tuple(
        _decode_mode(m, f"modes[{i}]") for i, m in enumerate(modes_doc)
    )
    trans_doc = doc.get("transitions", [])
    if not isinstance(trans_doc, list):
        raise ModelError("transitions: must be an array")
    transitions = tuple(
        _decode_transition(t, f"transitions[{i}]") for i, t in enumerate(trans_doc)
    )
    time = doc.get("time", "continuous")
    if time not in ("continuous", "discrete"):
        raise ModelError("time: must be 'continuous' or 'discrete'")
    init_mode = _require(doc, "init_mode", "")
    if not isinstance(init_mode, str):
        raise ModelError("init_mode: must be a string")
    x0 = decode_set(_require(doc, "x0", ""), "x0")
    try:
        auto = HybridAutomaton(modes, transitions, time_kind=time)
        auto.mode(init_mode)
    except (ValueError, KeyError) as e:
        raise ModelError(str(e)) from None
    return auto, init_mode, x0


def _decode_nonlinear(doc: dict):
    variables = _require(doc, "variables", "")
    rhs = _require(doc, "rhs", "")
    if not isinstance(variables, list) or not all(
        isinstance(v, str) for v in variables
    ):
        raise ModelError("variables: must be an array of strings")
    if not isinstance(rhs, list) or not all(isinstance(s, str) for s in rhs):
        raise ModelError("rhs: must be an array of expression strings")
    try:
        f = parse_field(rhs, variables)
    except ExprError as e:
        raise ModelError(f"rhs: {e}") from None
    x0 = decode_set(_require(doc, "x0", ""), "x0")
    hb = None
    if "hessian_bound" in doc:
        raw = doc["hessian_bound"]
        if isinstance(raw, list):
            hb = _vector(raw, "hessian_bound")
            if hb.shape[0] != len(variables):
                raise ModelError("hessian_bound: one entry per variable")
        else:
            hb = np.full(len(variables), _number(raw, "hessian_bound"))
        if np.any(hb < 0):
            raise ModelError("hessian_bound: must be nonnegative")
    system = NonlinearSystem(
        f=f, dim=len(variables),
        hessian_bound=None if hb is None else hb,
    )
    return system, x0, hb


def parse_model(doc: dict) -> ParsedModel:
    if not isinstance(doc, dict):
        raise ModelError("document: must be a JSON object")
    fmt = _require(doc, "format", "")
    if fmt != MODEL_FORMAT:
        raise ModelError(f"format: expected {MODEL_FORMAT!r}, got {fmt!r}")
    kind = _require(doc, "kind", "")
    if kind not in KINDS:
        raise ModelError(f"kind: unknown kind {kind!r}")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise ModelError("name: must be a string")
    config = _decode_config(doc["config"], "config") if "config" in doc else None
    sha = model_sha256(doc)

    if kind in (KIND_LINEAR_DISCRETE, KIND_LINEAR_CONTINUOUS):
        system = _decode_linear(doc, kind)
        return ParsedModel(kind, doc, sha, name=name, config=config, system=system)
    if kind == KIND_HYBRID:
        auto, init_mode, x0 = _decode_hybrid(doc)
        if x0.dim != auto.dim:
            raise ModelError("x0: dimension does not match the automaton")
        return ParsedModel(
            kind, doc, sha, name=name, config=config,
            automaton=auto, init_mode=init_mode, x0=x0,
        )
    system, x0, hb = _decode_nonlinear(doc)
    if x0.dim != system.dim:
        raise ModelError("x0: dimension does not match the variables")
    return ParsedModel(
        kind, doc, sha, name=name, config=config,
        nonlinear=system, x0=x0, hessian_bound=hb,
    )


def load_model(path) -> ParsedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}: not valid JSON ({e})") from None
    return parse_model(doc)


def save_model(doc: dict, path) -> None:
    parse_model(doc)  # refuse to write a document that cannot be read back
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(doc))


# ---------------------------------------------------------------------------
# result documents


def _encode_segment(seg) -> dict:
    return {
        "k": int(seg.k),
        "t0": float(seg.t0),
        "t1": float(seg.t1),
        "set": encode_set(seg.set_rep),
        "exact": bool(seg.set_rep.exact),
    }


def _config_echo(doc: dict):
    return doc.get("config")


def result_doc(model: ParsedModel, pipe) -> dict:
    """Result document for a flowpipe computed from ``model``."""
    out = {
        "format": RESULT_FORMAT,
        "kind": model.kind,
        "model_sha256": model.sha256,
        "status": pipe.status,
        "time_step": None if pipe.time_step is None else float(pipe.time_step),
    }
    if model.name is not None:
        out["name"] = model.name
    echo = _config_echo(model.doc)
    if echo is not None:
        out["config"] = echo
    if isinstance(pipe, HybridFlowpipe):
        out["flows"] = [
            {
                "mode": f.mode,
                "entry_step": int(f.entry_step),
                "entry_spread": int(f.entry_spread),
                "depth": int(f.depth),
                "status": f.status,
                "status_step": None if f.status_step is None else int(f.status_step),
                "segments": [_encode_segment(s) for s in f.segments],
            }
            for f in pipe.flows
        ]
        out["jumps"] = [
            {
                "source": j.transition.source,
                "target": j.transition.target,
                "from_flow": int(j.from_flow),
                "to_flow": None if j.to_flow is None else int(j.to_flow),
                "step_lo": int(j.step_lo),
                "step_hi": int(j.step_hi),
                "pruned": bool(j.pruned),
            }
            for j in pipe.jumps
        ]
        out["bad_flow"] = None if pipe.bad_flow is None else int(pipe.bad_flow)
    else:
        out["status_step"] = (
            None if pipe.status_step is None else int(pipe.status_step)
        )
        out["segments"] = [_encode_segment(s) for s in pipe.segments]
        rigorous = getattr(pipe, "rigorous", None)
        if rigorous is not None:
            out["rigorous"] = bool(rigorous)
    return out


def save_result(doc: dict, path) -> None:
    if doc.get("format") != RESULT_FORMAT:
        raise ModelError(f"format: expected {RESULT_FORMAT!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(doc))


def load_result(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != RESULT_FORMAT:
        raise ModelError(f"{path}: not a {RESULT_FORMAT} document")
    return doc


def result_segments(doc: dict):
    """All segments of a result document as ``(group, Segment-like dicts)``.

    Linear and nonlinear results yield one anonymous group; hybrid results
    one group per flow, labelled by mode name.
    """
    if "segments" in doc:
        yield None, doc["segments"]
        return
    for flow in doc.get("flows", []):
        yield flow["mode"], flow["segments"]
