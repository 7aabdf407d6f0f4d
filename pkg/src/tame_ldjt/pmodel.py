"""Parameterised probabilistic models and their two-slice temporal extension.

A :class:`Parfactor` stands for one ground factor per tuple of its
:class:`Constraint`.  Potentials live in a flat float64 array indexed by the
mixed-radix encoding of the argument ranges (first argument most
significant, range values in declared order).  Arguments are kept in
canonical order, see :func:`prv_key`, so two tables over the same arguments
are comparable entry by entry.

Time handling: PRVs of a static model carry ``time=None``.  In a transition
model ``time=-1`` tags the previous slice and ``time=0`` the current one.
Models produced by :func:`unroll` (and the per-step models of the
inference engine) carry absolute slice numbers.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import product as cartesian
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

BOOL_RANGE = (True, False)
PREV, CURR = -1, 0


class ModelError(ValueError):
    """Raised for malformed models, evidence or queries."""


class SmoothingUnsupported(ModelError):
    def __init__(self, pi: int, t: int):
        super().__init__(f"smoothing unsupported (query time {pi} < evidence horizon {t})")


@dataclass(frozen=True)
class LogVarDecl:
    name: str
    domain: tuple[str, ...]


@dataclass(frozen=True)
class PRV:
    """Parameterised randvar ``name(logvars...)`` with an optional slice tag."""

    name: str
    logvars: tuple[str, ...] = ()
    range: tuple = BOOL_RANGE
    time: int | None = None

    def at(self, t: int | None) -> PRV:
        return replace(self, time=t)

    def shift(self, k: int) -> PRV:
        return replace(self, time=self.time + k)

    def atom(self, constants: Sequence[str]) -> GroundAtom:
        return GroundAtom(self.name, tuple(constants), self.time)

    def __str__(self) -> str:
        t = "" if self.time is None else f"_{self.time}"
        return f"{self.name}{t}({','.join(self.logvars)})"


def prv_key(p: PRV) -> tuple:
    return (p.name, p.logvars, (0,) if p.time is None else (1, p.time))


_ATOM_RE = re.compile(r"^\s*([A-Za-z][\w]*?)(?:_(-?\d+))?\s*(?:\(([^)]*)\))?\s*$")


@dataclass(frozen=True)
class GroundAtom:
    """A ground PRV instance, e.g. ``D_3(x1)``."""

    name: str
    args: tuple[str, ...] = ()
    time: int | None = None

    def at(self, t: int | None) -> GroundAtom:
        return replace(self, time=t)

    def __str__(self) -> str:
        t = "" if self.time is None else f"_{self.time}"
        return f"{self.name}{t}({','.join(self.args)})"

    @classmethod
    def parse(cls, text: str) -> GroundAtom:
        m = _ATOM_RE.match(text)
        if not m:
            raise ModelError(f"cannot parse ground atom {text!r}")
        name, t, args = m.groups()
        consts = tuple(a.strip() for a in args.split(",")) if args and args.strip() else ()
        return cls(name, consts, None if t is None else int(t))


class Constraint:
    """Logvar sequence plus a tuple set; ``tuples=None`` means top.

    The logvar sequence is kept sorted.  Top stays symbolic until some
    operation needs the explicit set, and any explicit set that covers the
    whole cross product collapses back to top.
    """

    __slots__ = ("logvars", "domains", "_tuples", "_cache")

    def __init__(self, logvars: Sequence[str], domains: Sequence[Sequence[str]],
                 tuples: Iterable[tuple] | None = None):
        order = sorted(range(len(logvars)), key=lambda i: logvars[i])
        self.logvars = tuple(logvars[i] for i in order)
        self.domains = tuple(tuple(domains[i]) for i in order)
        self._cache: dict = {}
        if tuples is None:
            self._tuples = None
        else:
            ts = frozenset(tuple(t[i] for i in order) for t in tuples) if order != sorted(order) \
                else frozenset(map(tuple, tuples))
            full = math.prod(len(d) for d in self.domains)
            self._tuples = None if len(ts) == full and ts <= self._full() else ts

    @classmethod
    def top(cls, logvars: Sequence[str], domains: Sequence[Sequence[str]]) -> Constraint:
        return cls(logvars, domains, None)

    def _full(self) -> frozenset:
        return frozenset(cartesian(*self.domains))

    @property
    def is_top(self) -> bool:
        return self._tuples is None

    @property
    def tuples(self) -> frozenset:
        if self._tuples is not None:
            return self._tuples
        t = self._cache.get("full")
        if t is None:
            t = self._cache["full"] = self._full()
        return t

    @property
    def size(self) -> int:
        if self._tuples is None:
            return math.prod(len(d) for d in self.domains)
        return len(self._tuples)

    def domain_of(self, lv: str) -> tuple[str, ...]:
        return self.domains[self.logvars.index(lv)]

    def _key(self):
        k = self._cache.get("key")
        if k is None:
            k = self._cache["key"] = (self.logvars, self.domains, self._tuples)
        return k

    def __eq__(self, other):
        if not isinstance(other, Constraint):
            return NotImplemented
        return self is other or self._key() == other._key()

    def __hash__(self):
        h = self._cache.get("hash")
        if h is None:
            h = self._cache["hash"] = hash(self._key())
        return h

    def __repr__(self):
        body = "top" if self.is_top else sorted(self._tuples)
        return f"Constraint({self.logvars}, {body})"

    def with_tuples(self, tuples: Iterable[tuple]) -> Constraint:
        c = Constraint.__new__(Constraint)
        c.logvars, c.domains, c._cache = self.logvars, self.domains, {}
        ts = frozenset(tuples)
        c._tuples = None if len(ts) == math.prod(len(d) for d in self.domains) else ts
        return c

    def positions(self, lvs: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.logvars.index(lv) for lv in lvs)

    def project(self, lvs: Sequence[str]) -> frozenset:
        """Set of sub-tuples over ``lvs`` (in the given order)."""
        lvs = tuple(lvs)
        key = ("proj", lvs)
        r = self._cache.get(key)
        if r is None:
            if self._tuples is None:
                r = frozenset(cartesian(*(self.domain_of(lv) for lv in lvs)))
            else:
                pos = self.positions(lvs)
                r = frozenset(tuple(t[i] for i in pos) for t in self._tuples)
            self._cache[key] = r
        return r

    def projected(self, lvs: Sequence[str]) -> Constraint:
        lvs = sorted(lvs)
        doms = [self.domain_of(lv) for lv in lvs]
        if self._tuples is None:
            return Constraint(lvs, doms, None)
        return Constraint(lvs, doms).with_tuples(self.project(lvs))

    def uniform_count(self, lvs: Sequence[str]) -> int | None:
        """Extensions per sub-tuple over ``lvs`` if uniform, else None."""
        if self._tuples is None:
            return math.prod(len(d) for lv, d in zip(self.logvars, self.domains) if lv not in lvs)
        pos = self.positions(lvs)
        counts: dict = defaultdict(int)
        for t in self._tuples:
            counts[tuple(t[i] for i in pos)] += 1
        vals = set(counts.values())
        return vals.pop() if len(vals) == 1 else None

    def join(self, other: Constraint) -> Constraint:
        if self.logvars == other.logvars:
            if self._tuples is None:
                return other
            if other._tuples is None:
                return self
            return self.with_tuples(self._tuples & other._tuples)
        lvs = sorted(set(self.logvars) | set(other.logvars))
        doms = [self.domain_of(lv) if lv in self.logvars else other.domain_of(lv) for lv in lvs]
        if self._tuples is None and other._tuples is None:
            return Constraint(lvs, doms, None)
        shared = [lv for lv in self.logvars if lv in other.logvars]
        index: dict = defaultdict(list)
        opos = other.positions(shared)
        for t in other.tuples:
            index[tuple(t[i] for i in opos)].append(t)
        spos = self.positions(shared)
        out = []
        for t in self.tuples:
            for u in index.get(tuple(t[i] for i in spos), ()):
                row = dict(zip(self.logvars, t))
                row.update(zip(other.logvars, u))
                out.append(tuple(row[lv] for lv in lvs))
        return Constraint(lvs, doms).with_tuples(out)


def _as_flat(potentials) -> np.ndarray:
    a = np.array(potentials, dtype=np.float64).ravel()
    a.setflags(write=False)
    return a


class Parfactor:
    """Potential table over canonically ordered PRVs under a constraint."""

    __slots__ = ("args", "potentials", "constraint", "name", "_inst")

    def __init__(self, args: Sequence[PRV], potentials, constraint: Constraint, name: str = ""):
        self.args = tuple(args)
        self.potentials = potentials if isinstance(potentials, np.ndarray) and \
            potentials.dtype == np.float64 and potentials.ndim == 1 and \
            not potentials.flags.writeable else _as_flat(potentials)
        self.constraint = constraint
        self.name = name
        self._inst: dict = {}
        n = math.prod(len(a.range) for a in self.args)
        if self.potentials.size != n:
            raise ModelError(
                f"parfactor {name or '?'}: {self.potentials.size} potentials for {n} joint assignments")

    @classmethod
    def create(cls, args: Sequence[PRV], potentials, constraint: Constraint,
               name: str = "") -> Parfactor:
        """Build from arguments in any order; reorders the table canonically."""
        args = tuple(args)
        order = sorted(range(len(args)), key=lambda i: prv_key(args[i]))
        flat = np.asarray(potentials, dtype=np.float64).ravel()
        if order != list(range(len(args))):
            shape = tuple(len(a.range) for a in args)
            if flat.size != math.prod(shape):
                raise ModelError(
                    f"parfactor {name or '?'}: {flat.size} potentials for {math.prod(shape)} joint assignments")
            flat = flat.reshape(shape).transpose(order).ravel()
        return cls([args[i] for i in order], flat, constraint, name)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a.range) for a in self.args)

    @property
    def table(self) -> np.ndarray:
        return self.potentials.reshape(self.shape)

    @property
    def logvars(self) -> tuple[str, ...]:
        return self.constraint.logvars

    @property
    def gr(self) -> int:
        return self.constraint.size

    def instances(self, prv: PRV) -> frozenset:
        """Constant tuples of ``prv``'s ground instances covered here."""
        return self.constraint.project(prv.logvars)

    def replace(self, **kw) -> Parfactor:
        return Parfactor(kw.get("args", self.args), kw.get("potentials", self.potentials),
                         kw.get("constraint", self.constraint), kw.get("name", self.name))

    def shift(self, k: int) -> Parfactor:
        return Parfactor([a.shift(k) for a in self.args], self.potentials, self.constraint, self.name)

    def at(self, t: int | None) -> Parfactor:
        return Parfactor([a.at(t) for a in self.args], self.potentials, self.constraint, self.name)

    def __repr__(self):
        args = ", ".join(map(str, self.args))
        c = "top" if self.constraint.is_top else f"{self.gr} tuples"
        return f"Parfactor({self.name or 'phi'}({args}) | {c})"


def gr(p: Parfactor) -> int:
    """Number of ground factors ``p`` stands for."""
    return p.constraint.size


@dataclass(frozen=True)
class Model:
    logvars: tuple[LogVarDecl, ...]
    parfactors: tuple[Parfactor, ...] = ()

    @cached_property
    def domains(self) -> dict[str, tuple[str, ...]]:
        return {d.name: d.domain for d in self.logvars}

    def prvs(self) -> list[PRV]:
        seen: dict = {}
        for p in self.parfactors:
            for a in p.args:
                seen.setdefault(a, None)
        return sorted(seen, key=prv_key)

    def top_constraint(self, logvars: Iterable[str]) -> Constraint:
        lvs = sorted(set(logvars))
        return Constraint.top(lvs, [self.domains[lv] for lv in lvs])

    def with_parfactors(self, parfactors: Iterable[Parfactor]) -> Model:
        return Model(self.logvars, tuple(parfactors))

    def with_domain(self, logvar: str, domain: Sequence[str]) -> Model:
        """Same model with ``logvar`` re-declared; top constraints follow."""
        decls = tuple(LogVarDecl(d.name, tuple(domain)) if d.name == logvar else d
                      for d in self.logvars)
        out = []
        for p in self.parfactors:
            if logvar in p.logvars:
                if not p.constraint.is_top:
                    raise ModelError(f"cannot resize {logvar}: {p!r} has an explicit constraint")
                c = Constraint.top(p.logvars, [dict((x.name, x.domain) for x in decls)[lv]
                                                for lv in p.logvars])
                p = p.replace(constraint=c)
            out.append(p)
        return Model(decls, tuple(out))


def make_parfactor(model_logvars: Mapping[str, Sequence[str]], args: Sequence[PRV], potentials,
                   tuples: Iterable[tuple] | None = None, name: str = "") -> Parfactor:
    """Convenience constructor: constraint over the arguments' logvars."""
    lvs: list[str] = []
    for a in args:
        for lv in a.logvars:
            if lv not in lvs:
                lvs.append(lv)
    c = Constraint(lvs, [model_logvars[lv] for lv in lvs], None if tuples is None else list(tuples))
    return Parfactor.create(args, potentials, c, name)


@dataclass(frozen=True)
class PDM:
    """Initial model plus two-slice transition model (slice tags -1 and 0)."""

    initial: Model
    transition: Model

    @property
    def logvars(self) -> tuple[LogVarDecl, ...]:
        return self.transition.logvars

    def _slices(self, p: Parfactor) -> set:
        return {a.time for a in p.args}

    def inter_slice(self) -> list[Parfactor]:
        return [p for p in self.transition.parfactors if self._slices(p) == {PREV, CURR}]

    def intra_current(self) -> list[Parfactor]:
        return [p for p in self.transition.parfactors if self._slices(p) == {CURR}]

    def intra_previous(self) -> list[Parfactor]:
        return [p for p in self.transition.parfactors if self._slices(p) == {PREV}]

    def step_parfactors(self) -> list[Parfactor]:
        """Parfactors instantiated at every step t >= 1 (relative tags)."""
        return [p for p in self.transition.parfactors if CURR in self._slices(p)]

    def with_domain(self, logvar: str, domain: Sequence[str]) -> PDM:
        return PDM(self.initial.with_domain(logvar, domain),
                   self.transition.with_domain(logvar, domain))


def _structure(prvs: Iterable[PRV]) -> set:
    return {(a.name, a.logvars, a.range) for a in prvs}


def check_pdm(pdm: PDM) -> list[str]:
    problems = []
    for p in pdm.transition.parfactors:
        ts = {a.time for a in p.args}
        if not ts <= {PREV, CURR}:
            problems.append(f"{p.name or p!r}: transition slice tags must be t-1 or t, got {sorted(map(str, ts))}")
    if not pdm.inter_slice():
        problems.append("transition model has no inter-slice parfactor")
    init = _structure(a for p in pdm.initial.parfactors for a in p.args)
    curr = _structure(a for p in pdm.intra_current() for a in p.args)
    if init != curr:
        problems.append("structural mismatch between initial model and slice-t part of the transition")
    return problems


def unroll(pdm: PDM, T: int) -> Model:
    """Instantiate the PDM for slices ``0..T-1`` as one static model."""
    if T < 1:
        raise ModelError("unroll needs T >= 1")
    problems = check_pdm(pdm)
    if problems:
        raise ModelError("; ".join(problems))
    out = [p.at(0) for p in pdm.initial.parfactors]
    step = pdm.step_parfactors()
    for s in range(1, T):
        out.extend(p.shift(s) for p in step)
    return Model(pdm.transition.logvars, tuple(out))


@dataclass(frozen=True)
class Evidence:
    """Observed events per time step; atoms are stored without slice tags."""

    steps: Mapping[int, Mapping[GroundAtom, Any]] = field(default_factory=dict)

    def at(self, t: int) -> dict[GroundAtom, Any]:
        return {a.at(t): v for a, v in self.steps.get(t, {}).items()}

    def upto(self, t: int) -> dict[GroundAtom, Any]:
        out: dict = {}
        for s in sorted(self.steps):
            if s <= t:
                out.update(self.at(s))
        return out

    @property
    def horizon(self) -> int:
        """Last step carrying at least one event (-1 when empty)."""
        return max((s for s, ev in self.steps.items() if ev), default=-1)

    def truncated(self, last: int) -> Evidence:
        return Evidence({s: ev for s, ev in self.steps.items() if s <= last})


@dataclass(frozen=True)
class Query:
    target: GroundAtom
    pi: int
    t: int

    def __post_init__(self):
        if self.pi < self.t:
            raise SmoothingUnsupported(self.pi, self.t)
        if self.t < 0:
            raise ModelError("evidence horizon must be non-negative")

    @property
    def kind(self) -> str:
        return "filtering" if self.pi == self.t else "prediction"


def validate(m: Model) -> list[str]:
    """All invariant violations of ``m`` (empty list means well-formed)."""
    out: list[str] = []
    doms = {}
    for d in m.logvars:
        if not d.domain:
            out.append(f"logvar {d.name}: empty domain")
        if len(set(d.domain)) != len(d.domain):
            out.append(f"logvar {d.name}: duplicate constants")
        if d.name in doms:
            out.append(f"logvar {d.name}: declared twice")
        doms[d.name] = set(d.domain)
    signatures: dict = {}
    for k, p in enumerate(m.parfactors):
        tag = p.name or f"parfactor #{k}"
        arg_lvs: set = set()
        for a in p.args:
            if len(a.range) < 2:
                out.append(f"{tag}: PRV {a} has range size < 2")
            if len(set(a.range)) != len(a.range):
                out.append(f"{tag}: PRV {a} has duplicate range values")
            for lv in a.logvars:
                if lv not in doms:
                    out.append(f"{tag}: undeclared logvar {lv} in {a}")
            arg_lvs.update(a.logvars)
            sig = (a.logvars, a.range)
            prev = signatures.setdefault((a.name, a.time), sig)
            if prev != sig:
                out.append(f"{tag}: PRV {a.name} used with inconsistent logvars or range")
        if len({(a.name, a.time) for a in p.args}) != len(p.args):
            out.append(f"{tag}: repeated argument")
        pot = p.potentials
        if not np.all(np.isfinite(pot)):
            out.append(f"{tag}: non-finite potential")
        if np.any(pot < 0):
            out.append(f"{tag}: negative potential")
        if not np.any(pot > 0):
            out.append(f"{tag}: all potentials zero")
        c = p.constraint
        if set(c.logvars) != arg_lvs:
            out.append(f"{tag}: constraint logvars {list(c.logvars)} differ from argument logvars {sorted(arg_lvs)}")
        for lv, dom in zip(c.logvars, c.domains):
            if lv in doms and set(dom) != doms[lv]:
                out.append(f"{tag}: constraint domain of {lv} differs from declaration")
        if not c.is_top:
            if not c.tuples:
                out.append(f"{tag}: empty constraint")
            for t in c.tuples:
                if len(t) != len(c.logvars):
                    out.append(f"{tag}: constraint tuple {t} has wrong arity")
                    break
                bad = [x for lv, x in zip(c.logvars, t) if lv in doms and x not in doms[lv]]
                if bad:
                    out.append(f"{tag}: constraint constant {bad[0]} not in domain")
                    break
    return out
