"""Brute-force exact inference on fully grounded models.

This is the reference every lifted computation is checked against, so it
deliberately shares no code with the lifted operators: it works on plain
numpy arrays with ``einsum`` and never touches the flat-table kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from tame_ldjt.pmodel import PDM, GroundAtom, Model, ModelError, Query, unroll

DEFAULT_BUDGET = 24
ENUMERATION_LIMIT = 20


class OracleBudgetExceeded(ModelError):
    pass


@dataclass(frozen=True)
class GroundFactor:
    args: tuple[GroundAtom, ...]
    ranges: tuple[tuple, ...]
    table: np.ndarray  # shape = range sizes of args


def ground(m: Model) -> list[GroundFactor]:
    out = []
    for p in m.parfactors:
        table = p.table
        ranges = tuple(a.range for a in p.args)
        pos = [p.constraint.positions(a.logvars) for a in p.args]
        for t in sorted(p.constraint.tuples):
            atoms = tuple(a.atom(tuple(t[i] for i in ps)) for a, ps in zip(p.args, pos))
            out.append(GroundFactor(atoms, ranges, table))
    return out


def randvars(factors: Iterable[GroundFactor]) -> dict[GroundAtom, tuple]:
    rv: dict[GroundAtom, tuple] = {}
    for f in factors:
        for a, r in zip(f.args, f.ranges):
            if rv.setdefault(a, r) != r:
                raise ModelError(f"{a} appears with two different ranges")
    return rv


def _reduce(factors, evidence, rv):
    """Condition on evidence by slicing; returns [(atoms, table)]."""
    idx = {}
    for a, v in evidence.items():
        if a not in rv:
            continue
        try:
            idx[a] = rv[a].index(v)
        except ValueError:
            raise ModelError(f"value {v!r} not in range of {a}") from None
    out = []
    for f in factors:
        t = np.asarray(f.table, dtype=np.float64)
        keep = []
        sl: list[Any] = []
        for a in f.args:
            if a in idx:
                sl.append(idx[a])
            else:
                sl.append(slice(None))
                keep.append(a)
        out.append((tuple(keep), t[tuple(sl)]))
    return out


def _min_degree_order(work, target):
    nbrs: dict = {}
    for atoms, _ in work:
        for a in atoms:
            nbrs.setdefault(a, set()).update(atoms)
    for a in nbrs:
        nbrs[a].discard(a)
    order = []
    remaining = set(nbrs) - {target}
    while remaining:
        v = min(remaining, key=lambda a: (len(nbrs[a]), str(a)))
        for u in nbrs[v]:
            nbrs[u] |= nbrs[v] - {u}
            nbrs[u].discard(v)
        remaining.discard(v)
        order.append(v)
    return order


def _eliminate(work, order):
    log_scale = 0.0
    for v in order:
        bucket = [f for f in work if v in f[0]]
        if not bucket:
            continue
        rest = [f for f in work if v not in f[0]]
        labels: dict = {}
        operands: list = []
        for atoms, t in bucket:
            operands += [t, [labels.setdefault(a, len(labels)) for a in atoms]]
        out_atoms = tuple(a for a in labels if a != v)
        t = np.einsum(*operands, [labels[a] for a in out_atoms])
        mx = t.max() if t.size else 0.0
        if mx > 0:
            t = t / mx
            log_scale += math.log(mx)
        rest.append((out_atoms, t))
        work = rest
    return work, log_scale


def exact_marginal(factors: Sequence[GroundFactor], target: GroundAtom,
                   evidence: Mapping[GroundAtom, Any] | None = None, *,
                   method: str = "auto", order: Sequence[GroundAtom] | None = None,
                   max_randvars: int = DEFAULT_BUDGET) -> np.ndarray:
    """Normalised marginal of ``target`` (in range order) given ``evidence``."""
    rv = randvars(factors)
    if target not in rv:
        raise ModelError(f"query term {target} not in model")
    if len(rv) > max_randvars:
        raise OracleBudgetExceeded(f"{len(rv)} ground randvars exceed the oracle budget {max_randvars}")
    evidence = dict(evidence or {})
    work = _reduce(factors, evidence, rv)
    if target in evidence:
        rest, _ = _eliminate(work, _min_degree_order(work, None))
        if any(not atoms and t == 0 for atoms, t in rest):
            raise ModelError("evidence is contradictory (zero total mass)")
        dist = np.zeros(len(rv[target]))
        dist[rv[target].index(evidence[target])] = 1.0
        return dist
    free = [a for a in rv if a not in evidence]
    if method == "auto":
        method = "enumerate" if len(free) <= ENUMERATION_LIMIT and order is None else "ve"
    if method == "enumerate":
        if len(free) > ENUMERATION_LIMIT:
            raise OracleBudgetExceeded(
                f"enumeration limited to {ENUMERATION_LIMIT} free randvars, got {len(free)}")
        dist = _enumerate(work, free, rv, target)
    elif method == "ve":
        if order is None:
            order = _min_degree_order(work, target)
        else:
            order = [a for a in order if a != target and a not in evidence]
            missing = set(free) - set(order) - {target}
            if missing:
                raise ModelError(f"elimination order misses {sorted(map(str, missing))[:3]}")
        work, _ = _eliminate(work, order)
        dist = np.ones(len(rv[target]))
        for atoms, t in work:
            if atoms == (target,):
                dist = dist * t
            elif atoms:
                raise AssertionError("elimination left a non-target factor")
            elif t == 0:
                dist = dist * 0.0
    else:
        raise ValueError(f"unknown method {method!r}")
    z = dist.sum()
    if not z > 0:
        raise ModelError("evidence is contradictory (zero total mass)")
    return dist / z


def _enumerate(work, free, rv, target):
    axis = {a: k for k, a in enumerate(free)}
    shape = [len(rv[a]) for a in free]
    with np.errstate(divide="ignore"):
        logj = np.zeros(shape)
        for atoms, t in work:
            if not atoms:
                logj = logj + (np.log(t) if t > 0 else -np.inf)
                continue
            perm = sorted(range(len(atoms)), key=lambda i: axis[atoms[i]])
            tt = np.log(np.transpose(t, perm))
            view = [1] * len(free)
            for i in perm:
                view[axis[atoms[i]]] = t.shape[i]
            logj = logj + tt.reshape(view)
    mx = logj.max()
    if not np.isfinite(mx):
        return np.zeros(len(rv[target]))
    joint = np.exp(logj - mx)
    k = axis[target]
    return joint.sum(axis=tuple(i for i in range(len(free)) if i != k))


def compare_marginals(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ModelError("marginals over different ranges")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def query_pdm(pdm: PDM, evidence, q: Query, *, max_randvars: int = DEFAULT_BUDGET,
              method: str = "auto") -> np.ndarray:
    """Ground-truth filtering/prediction answer on the unrolled model."""
    model = unroll(pdm, q.pi + 1)
    factors = ground(model)
    return exact_marginal(factors, q.target.at(q.pi), evidence.upto(q.t),
                          max_randvars=max_randvars, method=method)
