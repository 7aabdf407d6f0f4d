"""JSON file format for models, PDMs, evidence and experiment configs.

Top-level sections, in canonical order::

    logvars      {name: [constants...]}                      (sorted by name)
    parfactors   [parfactor...]   static model or initial slice G0
    transition   [parfactor...]   optional two-slice model, slices "t-1" / "t"
    evidence     {"<step>": {"<atom>": value}}               optional
    experiment   {...}                                       optional, see bench

A parfactor is ``{"name", "arguments", "potentials", "constraint"}`` where
each argument is ``{"name", "logvars", "range", "slice"?}``, potentials are
listed in mixed-radix order of the arguments as written (first argument
most significant), and the constraint is ``"top"`` or
``{"logvars": [...], "tuples": [[...], ...]}``.  Ground atoms are written
``Name(c1,c2)``.  Serialisation always emits arguments in canonical order
and sorted tuples, so dump -> load -> dump is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from tame_ldjt.pmodel import (
    BOOL_RANGE,
    CURR,
    PDM,
    PREV,
    PRV,
    Constraint,
    Evidence,
    GroundAtom,
    LogVarDecl,
    Model,
    ModelError,
    Parfactor,
)

_SLICE_IN = {"t-1": PREV, "t": CURR}
_SLICE_OUT = {PREV: "t-1", CURR: "t"}


@dataclass
class Document:
    model: Model
    transition: Model | None = None
    evidence: Evidence = field(default_factory=Evidence)
    experiment: dict | None = None

    @property
    def pdm(self) -> PDM:
        if self.transition is None:
            raise ModelError("document has no transition section")
        return PDM(self.model, self.transition)


def _parse_prv(obj: dict, temporal: bool) -> PRV:
    try:
        name = obj["name"]
    except (KeyError, TypeError):
        raise ModelError(f"argument without name: {obj!r}") from None
    rng = tuple(obj.get("range", BOOL_RANGE))
    t = obj.get("slice")
    if temporal:
        if t not in _SLICE_IN:
            raise ModelError(f"transition argument {name} needs slice 't-1' or 't'")
        t = _SLICE_IN[t]
    elif t is not None and not isinstance(t, int):
        raise ModelError(f"argument {name}: slice must be an integer outside the transition section")
    return PRV(name, tuple(obj.get("logvars", ())), rng, t)


def _parse_parfactor(obj: dict, domains: dict, temporal: bool, k: int) -> Parfactor:
    name = obj.get("name", f"g{k}")
    args = [_parse_prv(a, temporal) for a in obj.get("arguments", ())]
    lvs: list[str] = []
    for a in args:
        for lv in a.logvars:
            if lv not in lvs:
                lvs.append(lv)
    # undeclared logvars get an empty domain so validate() reports them
    cobj = obj.get("constraint", "top")
    if cobj == "top":
        c = Constraint.top(lvs, [domains.get(lv, ()) for lv in lvs])
    else:
        clvs = list(cobj.get("logvars", lvs))
        c = Constraint(clvs, [domains.get(lv, ()) for lv in clvs],
                       [tuple(t) for t in cobj.get("tuples", [])])
    if "potentials" not in obj:
        raise ModelError(f"parfactor {name}: missing potentials")
    return Parfactor.create(args, obj["potentials"], c, name)


def parse(doc: dict) -> Document:
    if not isinstance(doc, dict) or "logvars" not in doc:
        raise ModelError("document needs a 'logvars' section")
    decls = tuple(LogVarDecl(n, tuple(d)) for n, d in sorted(doc["logvars"].items()))
    domains = {d.name: d.domain for d in decls}
    pfs = tuple(_parse_parfactor(p, domains, False, k) for k, p in enumerate(doc.get("parfactors", [])))
    trans = None
    if doc.get("transition") is not None:
        trans = Model(decls, tuple(_parse_parfactor(p, domains, True, k)
                                   for k, p in enumerate(doc["transition"])))
    evidence = parse_evidence(doc.get("evidence", {}))
    return Document(Model(decls, pfs), trans, evidence, doc.get("experiment"))


def parse_evidence(obj: dict) -> Evidence:
    steps: dict = {}
    for step, events in obj.items():
        try:
            s = int(step)
        except ValueError:
            raise ModelError(f"evidence step {step!r} is not an integer") from None
        if s < 0:
            raise ModelError("evidence steps must be non-negative")
        steps[s] = {GroundAtom.parse(a): v for a, v in events.items()}
    return Evidence(steps)


def loads(text: str) -> Document:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"invalid JSON: {e}") from None
    return parse(obj)


def load(path: str | Path) -> Document:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}") from None
    return loads(text)


def _prv_obj(a: PRV, temporal: bool) -> dict:
    out: dict[str, Any] = {"name": a.name, "logvars": list(a.logvars), "range": list(a.range)}
    if a.time is not None:
        out["slice"] = _SLICE_OUT[a.time] if temporal else a.time
    return out


def _parfactor_obj(p: Parfactor, temporal: bool) -> dict:
    c = p.constraint
    cobj: Any = "top" if c.is_top else {
        "logvars": list(c.logvars),
        "tuples": [list(t) for t in sorted(c.tuples)],
    }
    return {
        "name": p.name,
        "arguments": [_prv_obj(a, temporal) for a in p.args],
        "potentials": [float(x) for x in p.potentials],
        "constraint": cobj,
    }


def evidence_obj(ev: Evidence) -> dict:
    return {str(s): {str(a): v for a, v in sorted(ev.steps[s].items(), key=lambda kv: str(kv[0]))}
            for s in sorted(ev.steps)}


def to_obj(model: Model, transition: Model | None = None, evidence: Evidence | None = None,
           experiment: dict | None = None) -> dict:
    out: dict[str, Any] = {
        "logvars": {d.name: list(d.domain) for d in sorted(model.logvars, key=lambda d: d.name)},
        "parfactors": [_parfactor_obj(p, False) for p in model.parfactors],
    }
    if transition is not None:
        out["transition"] = [_parfactor_obj(p, True) for p in transition.parfactors]
    if evidence is not None and evidence.steps:
        out["evidence"] = evidence_obj(evidence)
    if experiment is not None:
        out["experiment"] = experiment
    return out


def dumps(model: Model, transition: Model | None = None, evidence: Evidence | None = None,
          experiment: dict | None = None) -> str:
    return json.dumps(to_obj(model, transition, evidence, experiment), indent=2) + "\n"


def dumps_document(doc: Document) -> str:
    return dumps(doc.model, doc.transition, doc.evidence, doc.experiment)
