"""Network config files.

JSON documents with the fixed schema:

    {
      "subsystems": [
        {"kind": "srna-feedback",
         "params": {"alpha": 100, "lambda": 1, "beta": 1, "kappa": 1, "delta": 1},
         "epsilon": 0.01, "nu": 1.0}
      ],
      "edges": [
        {"to": 1, "type": "constant", "r_star": 10},
        {"from": 1, "to": 2, "type": "hill", "B": 10, "k": 6, "n": 4}
      ],
      "unintended": "resource-competition",
      "nu": 1.0,
      "simulation": {"t_final": 40, "rel_tol": 1e-8, "abs_tol": 1e-10}
    }

Subsystem indices are positional (1-based).  ``unintended`` is a tag or
{"type": "custom", "matrix": [[...]]}.  A top-level ``nu`` supplies the shared
timescale parameter; a per-subsystem ``nu`` overrides it.  Generic-ode
subsystems additionally carry a ``tag`` naming a registered implementation.
Round-tripping a parsed network through dump_config/parse_config is identity
on all fields.
"""

from __future__ import annotations

import json
from typing import Optional, Tuple

from .core import (
    Edge,
    NetworkDescriptor,
    SimulationConfig,
    SubsystemDescriptor,
    ValidationIssue,
    network_violations,
)
from .families import get_family

__all__ = ["ConfigError", "parse_config", "load_config", "dump_config", "save_config"]

_EDGE_PARAM_KEYS = {
    "hill": ("B", "k", "n"),
    "constant": ("r_star",),
    "affine": ("a", "b"),
}

_SIM_KEYS = (
    "t_final",
    "initial_state",
    "solver",
    "rel_tol",
    "abs_tol",
    "steady_state_window",
    "steady_state_threshold",
    "dt",
    "store_points",
)


class ConfigError(ValueError):
    """Schema violations with field locations; collects every issue found."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


def _parse_subsystem(entry, pos, shared_nu, issues):
    loc = f"subsystems[{pos - 1}]"
    if not isinstance(entry, dict):
        issues.append(ValidationIssue("BadEntry", "subsystem entry must be an object", loc))
        return None
    kind = entry.get("kind")
    if kind not in ("generic-ode", "srna-feedback", "linear-feedback-example"):
        issues.append(ValidationIssue("UnknownFamily", f"unknown kind {kind!r}", loc))
        return None
    params = entry.get("params", {})
    if not isinstance(params, dict):
        issues.append(ValidationIssue("BadParams", "params must be a mapping", loc))
        return None
    try:
        sub = SubsystemDescriptor(
            index=pos,
            kind=kind,
            params=params,
            epsilon=float(entry.get("epsilon", 0.01)),
            nu=float(entry.get("nu", shared_nu)),
            tag=entry.get("tag"),
        )
        fam = get_family(kind)
        sub = _with_dims(sub, fam)
        # force a params sanity check for the built-in families
        if kind == "srna-feedback":
            from .genecircuit import SrnaParams

            SrnaParams.from_descriptor(sub)
        return sub
    except (KeyError, ValueError) as exc:
        issues.append(ValidationIssue("BadSubsystem", str(exc), loc))
        return None


def _with_dims(sub, fam):
    import dataclasses

    slow = fam.reduced_dim(sub)
    total = fam.full_dim(sub)
    return dataclasses.replace(sub, state_dim=slow, fast_dim=total - slow)


def _parse_edge(entry, k, issues):
    loc = f"edges[{k}]"
    if not isinstance(entry, dict):
        issues.append(ValidationIssue("BadEntry", "edge entry must be an object", loc))
        return None
    kind = entry.get("type")
    if kind not in _EDGE_PARAM_KEYS:
        issues.append(ValidationIssue("UnknownEdgeType", f"unknown type {kind!r}", loc))
        return None
    missing = [key for key in _EDGE_PARAM_KEYS[kind] if key not in entry]
    if "to" not in entry:
        missing.append("to")
    if missing:
        issues.append(
            ValidationIssue("MissingField", f"missing fields {missing} for {kind} edge", loc)
        )
        return None
    try:
        return Edge(
            dst=int(entry["to"]),
            src=None if entry.get("from") is None else int(entry["from"]),
            kind=kind,
            params={key: float(entry[key]) for key in _EDGE_PARAM_KEYS[kind]},
        )
    except (TypeError, ValueError) as exc:
        issues.append(ValidationIssue("BadEdge", str(exc), loc))
        return None


def _parse_unintended(value, issues):
    if isinstance(value, str):
        if value not in ("none", "resource-competition"):
            issues.append(
                ValidationIssue("UnknownDelta", f"unknown tag {value!r}", "unintended")
            )
            return "none"
        return value
    if isinstance(value, dict) and value.get("type") == "custom":
        try:
            return tuple(tuple(float(v) for v in row) for row in value["matrix"])
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(ValidationIssue("BadDelta", str(exc), "unintended"))
            return "none"
    issues.append(
        ValidationIssue(
            "BadDelta", "unintended must be a tag or {'type': 'custom', 'matrix': ...}",
            "unintended",
        )
    )
    return "none"


def parse_config(doc, source: str = "<config>") -> Tuple[NetworkDescriptor, SimulationConfig]:
    """Parse a config dict (or JSON text) into validated descriptors."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError([ValidationIssue("BadJson", str(exc), source)]) from exc
    issues: list = []
    if not isinstance(doc, dict):
        raise ConfigError([ValidationIssue("BadDocument", "top level must be an object", source)])
    unknown = set(doc) - {"subsystems", "edges", "unintended", "simulation", "nu"}
    if unknown:
        issues.append(
            ValidationIssue("UnknownKey", f"unknown top-level keys {sorted(unknown)}", source)
        )
    shared_nu = float(doc.get("nu", 1.0))
    subs = []
    for pos, entry in enumerate(doc.get("subsystems", []), start=1):
        sub = _parse_subsystem(entry, pos, shared_nu, issues)
        if sub is not None:
            subs.append(sub)
    edges = []
    for k, entry in enumerate(doc.get("edges", [])):
        e = _parse_edge(entry, k, issues)
        if e is not None:
            edges.append(e)
    unintended = _parse_unintended(doc.get("unintended", "none"), issues)

    sim_doc = doc.get("simulation", {})
    sim_unknown = set(sim_doc) - set(_SIM_KEYS)
    if sim_unknown:
        issues.append(
            ValidationIssue(
                "UnknownKey", f"unknown simulation keys {sorted(sim_unknown)}", "simulation"
            )
        )
    try:
        cfg = SimulationConfig(**{k: v for k, v in sim_doc.items() if k in _SIM_KEYS})
    except (TypeError, ValueError) as exc:
        issues.append(ValidationIssue("BadSimulation", str(exc), "simulation"))
        cfg = SimulationConfig()

    net = NetworkDescriptor(subsystems=tuple(subs), edges=tuple(edges), unintended=unintended)
    issues.extend(network_violations(net))
    if issues:
        raise ConfigError(issues)
    return net, cfg


def load_config(path) -> Tuple[NetworkDescriptor, SimulationConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, source=str(path))


def dump_config(net: NetworkDescriptor, cfg: Optional[SimulationConfig] = None) -> dict:
    """Plain-dict form of a network (and optional simulation settings)."""
    doc: dict = {"subsystems": [], "edges": []}
    for sub in net.subsystems:
        entry = {
            "kind": sub.kind,
            "params": dict(sub.params),
            "epsilon": sub.epsilon,
            "nu": sub.nu,
        }
        if sub.tag is not None:
            entry["tag"] = sub.tag
        doc["subsystems"].append(entry)
    for e in net.edges:
        entry = {"to": e.dst, "type": e.kind}
        if e.src is not None:
            entry["from"] = e.src
        entry.update(dict(e.params))
        doc["edges"].append(entry)
    if isinstance(net.unintended, str):
        doc["unintended"] = net.unintended
    else:
        doc["unintended"] = {"type": "custom", "matrix": [list(r) for r in net.unintended]}
    if cfg is not None:
        sim = {
            "t_final": cfg.t_final,
            "initial_state": "default"
            if isinstance(cfg.initial_state, str)
            else list(cfg.initial_state),
            "solver": cfg.solver,
            "rel_tol": cfg.rel_tol,
            "abs_tol": cfg.abs_tol,
            "steady_state_window": cfg.steady_state_window,
            "steady_state_threshold": cfg.steady_state_threshold,
            "store_points": cfg.store_points,
        }
        if cfg.dt is not None:
            sim["dt"] = cfg.dt
        doc["simulation"] = sim
    return doc


def save_config(path, net: NetworkDescriptor, cfg: Optional[SimulationConfig] = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_config(net, cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
