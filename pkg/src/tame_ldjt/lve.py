"""Lifted operators: shattering, evidence absorption, multiplication, sum-out.

The supported model class has no counting randvars.  Operations that would
need counting conversion raise :class:`UnsupportedModel` instead of
silently computing something else.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from tame_ldjt import kernels
from tame_ldjt.pmodel import PRV, GroundAtom, Model, ModelError, Parfactor, prv_key


class UnsupportedModel(ModelError):
    pass


class MisalignedConstraints(ModelError):
    pass


def _strides(shape: Sequence[int]) -> list[int]:
    out = [1] * len(shape)
    for i in range(len(shape) - 2, -1, -1):
        out[i] = out[i + 1] * shape[i + 1]
    return out


def _placed(args, out_args) -> list[int]:
    own = dict(zip(args, _strides([len(a.range) for a in args])))
    return [own.get(a, 0) for a in out_args]


def _check_args(p1: Parfactor, p2: Parfactor) -> None:
    by_id = {(a.name, a.time): a for a in p1.args}
    for b in p2.args:
        a = by_id.get((b.name, b.time))
        if a is not None and a != b:
            raise ModelError(f"incompatible ranges or logvars for shared PRV {b}")


def multiply(p1: Parfactor, p2: Parfactor) -> Parfactor:
    """Lifted product; constraints must agree on the shared logvars."""
    _check_args(p1, p2)
    c1, c2 = p1.constraint, p2.constraint
    shared = tuple(lv for lv in c1.logvars if lv in c2.logvars)
    if c1 is not c2 and c1.project(shared) != c2.project(shared):
        raise MisalignedConstraints(f"{p1!r} and {p2!r} disagree on {list(shared)}; shatter first")
    joined = c1.join(c2)
    a1, a2 = p1.potentials, p2.potentials
    if joined.logvars != c1.logvars:
        k1 = joined.uniform_count(c1.logvars)
        if k1 is None:
            raise UnsupportedModel("requires counting conversion, unsupported")
        if k1 != 1:
            a1 = np.power(a1, 1.0 / k1)
    if joined.logvars != c2.logvars:
        k2 = joined.uniform_count(c2.logvars)
        if k2 is None:
            raise UnsupportedModel("requires counting conversion, unsupported")
        if k2 != 1:
            a2 = np.power(a2, 1.0 / k2)
    out_args = sorted(set(p1.args) | set(p2.args), key=prv_key)
    shape = [len(a.range) for a in out_args]
    pot = kernels.product(a1, a2, shape, _placed(p1.args, out_args), _placed(p2.args, out_args))
    return Parfactor(out_args, pot, joined, p1.name if p1.name == p2.name else "")


def multiply_all(pfs: Sequence[Parfactor]) -> Parfactor:
    it = iter(pfs)
    acc = next(it)
    for p in it:
        acc = multiply(acc, p)
    return acc


def sum_out(p: Parfactor, target: PRV) -> Parfactor:
    """Eliminate every ground instance of ``target`` from ``p``.

    ``target`` must carry all logvars of ``p`` so that each of its ground
    instances sits in exactly one ground factor.  Logvars that occur only
    in ``target`` vanish; the summed table is raised to the number of their
    bindings per remaining binding.
    """
    try:
        axis = p.args.index(target)
    except ValueError:
        raise ModelError(f"{target} is not an argument of {p!r}") from None
    if not set(target.logvars) >= set(p.logvars):
        raise UnsupportedModel("requires counting conversion, unsupported")
    rest = p.args[:axis] + p.args[axis + 1:]
    pot = kernels.sum_out(p.potentials, p.shape, axis)
    c = p.constraint
    keep = sorted({lv for a in rest for lv in a.logvars})
    if len(keep) != len(c.logvars):
        k = c.uniform_count(keep)
        if k is None:
            raise UnsupportedModel("requires counting conversion, unsupported")
        if k != 1:
            pot = np.power(pot, k)
        c = c.projected(keep)
    return Parfactor(rest, pot, c, p.name)


def absorb(p: Parfactor, target: PRV, evidence: Mapping[GroundAtom, Any]) -> Parfactor:
    """Fix ``target`` to its observed value; all covered instances must agree."""
    try:
        axis = p.args.index(target)
    except ValueError:
        raise ModelError(f"{target} is not an argument of {p!r}") from None
    seen = {evidence.get(target.atom(inst), _MISSING) for inst in p.instances(target)}
    if len(seen) != 1 or _MISSING in seen:
        raise ModelError(f"event not uniform over the tuples of {p!r} (shatter first)")
    value = seen.pop()
    try:
        index = target.range.index(value)
    except ValueError:
        raise ModelError(f"value {value!r} not in range of {target}") from None
    pot = kernels.take(p.potentials, p.shape, axis, index)
    rest = p.args[:axis] + p.args[axis + 1:]
    c = p.constraint
    keep = sorted({lv for a in rest for lv in a.logvars})
    if len(keep) != len(c.logvars):
        k = c.uniform_count(keep)
        if k is None:
            raise UnsupportedModel("requires counting conversion, unsupported")
        if k != 1:
            pot = np.power(pot, k)
        c = c.projected(keep)
    return Parfactor(rest, pot, c, p.name)


_MISSING = object()


def absorb_all(p: Parfactor, evidence: Mapping[GroundAtom, Any]) -> Parfactor:
    """Absorb every fully observed argument of a shattered parfactor."""
    if not evidence:
        return p
    for a in list(p.args):
        atoms = [a.atom(inst) for inst in p.instances(a)]
        hits = sum(1 for x in atoms if x in evidence)
        if hits == len(atoms):
            p = absorb(p, a, evidence)
        elif hits:
            raise ModelError(f"event not uniform over the tuples of {p!r} (shatter first)")
    return p


def shatter_parfactors(pfs: Sequence[Parfactor],
                       evidence: Mapping[GroundAtom, Any] | None = None) -> list[list[Parfactor]]:
    """Split parfactors until evidence and shared PRVs cover them uniformly.

    Returns the pieces of each input parfactor.  Afterwards any two pieces
    sharing a PRV cover identical or disjoint sets of its ground instances,
    and every piece sees one evidence value (or none) per argument.
    """
    observed = {(a.name, a.time, tuple(a.args)): v for a, v in (evidence or {}).items()}
    pieces = [(o, p) for o, p in enumerate(pfs)]
    while True:
        members: dict = defaultdict(list)
        layout = []
        for pid, (_, p) in enumerate(pieces):
            per = []
            for a in p.args:
                insts = p.instances(a)
                per.append((a.name, a.time, insts))
                for inst in insts:
                    members[(a.name, a.time, inst)].append(pid)
            layout.append(per)
        intern: dict = {}
        lab = {k: intern.setdefault((tuple(v), observed.get(k, _MISSING)), len(intern))
               for k, v in members.items()}
        out = []
        changed = False
        for (o, p), per in zip(pieces, layout):
            if all(len({lab[(n, t, i)] for i in insts}) == 1 for n, t, insts in per):
                out.append((o, p))
                continue
            c = p.constraint
            pos = [(a.name, a.time, c.positions(a.logvars)) for a in p.args]
            groups: dict = defaultdict(list)
            for tup in c.tuples:
                key = tuple(lab[(n, t, tuple(tup[i] for i in ps))] for n, t, ps in pos)
                groups[key].append(tup)
            parts = sorted(groups.values(), key=min)
            out.extend((o, p.replace(constraint=c.with_tuples(ts))) for ts in parts)
            changed = True
        pieces = out
        if not changed:
            break
    result: list[list[Parfactor]] = [[] for _ in pfs]
    for o, p in pieces:
        result[o].append(p)
    return result


def shatter(m: Model, evidence: Mapping[GroundAtom, Any] | None = None) -> Model:
    return m.with_parfactors(p for ps in shatter_parfactors(m.parfactors, evidence) for p in ps)


def normalize_max(p: Parfactor) -> Parfactor:
    mx = float(p.potentials.max()) if p.potentials.size else 0.0
    if mx <= 0.0 or mx == 1.0:
        return p
    return p.replace(potentials=p.potentials / mx)


def _eliminable(factors: Sequence[Parfactor], v: PRV):
    scope: set = set()
    lvs: set = set()
    for f in factors:
        if v in f.args:
            scope.update(f.args)
            lvs.update(f.logvars)
    return (len(scope), prv_key(v)) if set(v.logvars) >= lvs else None


def eliminate_one(factors: Sequence[Parfactor], v: PRV) -> list[Parfactor]:
    """Lifted elimination of ``v``: multiply per instance group, then sum out."""
    rest = [f for f in factors if v not in f.args]
    groups: dict = defaultdict(list)
    for f in factors:
        if v in f.args:
            groups[f.instances(v)].append(f)
    for inst in sorted(groups, key=min):
        r = normalize_max(sum_out(multiply_all(groups[inst]), v))
        rest.append(r)
    return rest


def eliminate(factors: Iterable[Parfactor], keep: Iterable[PRV]) -> list[Parfactor]:
    """Sum out every PRV not in ``keep``; scalar leftovers are dropped."""
    keep = set(keep)
    work = list(factors)
    while True:
        cands = {a for f in work for a in f.args if a not in keep}
        if not cands:
            break
        best = None
        for v in cands:
            cost = _eliminable(work, v)
            if cost is not None and (best is None or cost < best[0]):
                best = (cost, v)
        if best is None:
            raise UnsupportedModel(
                f"no lifted elimination order for {sorted(map(str, cands))}: "
                "requires counting conversion, unsupported")
        work = eliminate_one(work, best[1])
    return [f for f in work if f.args]


def group_count(pfs: Iterable[Parfactor], logvar: str) -> int:
    """Number of distinct constant sets ``logvar`` takes across parfactors."""
    seen = set()
    for p in pfs:
        if logvar in p.logvars:
            seen.add(p.constraint.project((logvar,)))
    return len(seen)
