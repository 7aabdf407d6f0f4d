"""First-order junction trees per time step, forward messages, queries.

Tree structures are compiled once from the initial model and from the
transition model (:class:`StepTemplate`) and re-instantiated at every step;
only the local models change.  A forward message is kept as a set of
parfactors over the interface PRVs, not multiplied into one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np

from tame_ldjt import lve
from tame_ldjt import tame as tame_mod
from tame_ldjt.pmodel import (
    CURR,
    PDM,
    PREV,
    PRV,
    Evidence,
    GroundAtom,
    Model,
    ModelError,
    Parfactor,
    Query,
    SmoothingUnsupported,
    check_pdm,
    prv_key,
    validate,
)

log = logging.getLogger(__name__)


def forward_interface(gtrans: Model) -> set[PRV]:
    """Slice t-1 PRVs that share a parfactor with some slice t PRV."""
    out = set()
    for p in gtrans.parfactors:
        if any(a.time == CURR for a in p.args):
            out.update(a for a in p.args if a.time == PREV)
    return out


@dataclass(frozen=True)
class TreeStructure:
    clusters: tuple[frozenset, ...]
    edges: tuple[tuple[int, int], ...]
    in_cluster: int | None
    out_cluster: int | None
    interface_in: frozenset
    interface_out: frozenset

    def shifted(self, k: int) -> TreeStructure:
        if k == 0:
            return self

        def sh(s):
            return frozenset(a.shift(k) for a in s)

        return replace(self, clusters=tuple(sh(c) for c in self.clusters),
                       interface_in=sh(self.interface_in), interface_out=sh(self.interface_out))

    def covering(self, prvs: Iterable[PRV]) -> int:
        need = set(prvs)
        for i, c in enumerate(self.clusters):
            if need <= c:
                return i
        raise ModelError(f"no parcluster covers {sorted(map(str, need))}")


def _fill(adj, v) -> int:
    nb = list(adj[v])
    return sum(1 for i in range(len(nb)) for j in range(i + 1, len(nb)) if nb[j] not in adj[nb[i]])


def build_structure(scopes: Iterable[Iterable[PRV]], interface_in: Iterable[PRV] = (),
                    interface_out: Iterable[PRV] = ()) -> TreeStructure:
    """Min-fill triangulation of the lifted moral graph, then a max-weight junction tree.

    Both interfaces are added as cliques so each lands inside one parcluster.
    Ties are broken by canonical PRV order.
    """
    interface_in, interface_out = frozenset(interface_in), frozenset(interface_out)
    adj: dict = {}
    for scope in list(scopes) + [interface_in, interface_out]:
        scope = list(scope)
        for a in scope:
            adj.setdefault(a, set()).update(b for b in scope if b != a)
    cliques: list[frozenset] = []
    while adj:
        v = min(adj, key=lambda a: (_fill(adj, a), prv_key(a)))
        nb = adj.pop(v)
        cliques.append(frozenset(nb | {v}))
        for a in nb:
            adj[a].discard(v)
            adj[a].update(b for b in nb if b != a)
    clusters: list[frozenset] = []
    for i, c in enumerate(cliques):
        if any(c <= d for j, d in enumerate(cliques) if j != i and (c != d or j < i)):
            continue
        clusters.append(c)
    # Kruskal on separator size
    pairs = sorted(((len(clusters[i] & clusters[j]), i, j)
                    for i in range(len(clusters)) for j in range(i + 1, len(clusters))),
                   key=lambda x: (-x[0], x[1], x[2]))
    parent = list(range(len(clusters)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for _, i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
    in_c = None
    if interface_in:
        in_c = next(i for i, c in enumerate(clusters) if interface_in <= c)
    out_c = None
    if interface_out:
        cands = [i for i, c in enumerate(clusters) if interface_out <= c]
        if in_c is not None:
            dist = _distances(len(clusters), edges, in_c)
            out_c = min(cands, key=lambda i: (dist[i], i))
        else:
            out_c = cands[0]
    return TreeStructure(tuple(clusters), tuple(edges), in_c, out_c, interface_in, interface_out)


def _distances(n, edges, src):
    nbrs: dict = {i: [] for i in range(n)}
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    dist = {src: 0}
    todo = [src]
    while todo:
        x = todo.pop(0)
        for y in nbrs[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                todo.append(y)
    return dist


def _check_supported(st: TreeStructure, scopes_by_cluster: Mapping[int, list]) -> None:
    """Dry run of calibration on PRV scopes; raises if some message is not liftable."""
    nbrs = _neighbours(st)
    memo: dict = {}

    def msg(i, j):
        if (i, j) not in memo:
            memo[(i, j)] = []  # placeholder breaks cycles (none in a tree)
            scopes = [set(s) for s in scopes_by_cluster.get(i, [])]
            for k in nbrs[i]:
                if k != j:
                    scopes += msg(k, i)
            memo[(i, j)] = _eliminate_scopes(scopes, st.clusters[i] & st.clusters[j])
        return memo[(i, j)]

    for i, j in st.edges:
        msg(i, j)
        msg(j, i)


def _eliminate_scopes(scopes: list[set], keep) -> list[set]:
    while True:
        cands = {a for s in scopes for a in s if a not in keep}
        if not cands:
            return [s for s in scopes if s]
        best = None
        for v in cands:
            merged = set().union(*(s for s in scopes if v in s))
            lvs = {lv for a in merged for lv in a.logvars}
            if set(v.logvars) >= lvs:
                cost = (len(merged), prv_key(v))
                if best is None or cost < best[0]:
                    best = (cost, v, merged)
        if best is None:
            raise lve.UnsupportedModel(
                f"no lifted elimination order for {sorted(map(str, cands))}: "
                "requires counting conversion, unsupported")
        _, v, merged = best
        scopes = [s for s in scopes if v not in s] + [merged - {v}]


def _neighbours(st) -> dict[int, list[int]]:
    nbrs: dict = {i: [] for i in range(len(st.clusters))}
    for i, j in st.edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    return nbrs


@dataclass(frozen=True)
class Parcluster:
    id: int
    prvs: frozenset
    local: tuple[Parfactor, ...]


@dataclass(frozen=True)
class FOJTree:
    clusters: tuple[Parcluster, ...]
    edges: tuple[tuple[int, int], ...]
    in_cluster: int | None
    out_cluster: int | None
    interface_in: frozenset
    interface_out: frozenset
    time: int = 0
    evidence: Mapping[GroundAtom, Any] = field(default_factory=dict)
    messages: Mapping[tuple[int, int], tuple[Parfactor, ...]] = field(default_factory=dict)
    calibrated: bool = False
    template: StepTemplate | None = None
    tame_reports: tuple = ()

    def neighbours(self, i: int) -> list[int]:
        return [j for a, b in self.edges for j in ((b,) if a == i else (a,) if b == i else ())]

    def separator(self, i: int, j: int) -> frozenset:
        return self.clusters[i].prvs & self.clusters[j].prvs

    def received(self, i: int) -> list[Parfactor]:
        return [p for k in self.neighbours(i) for p in self.messages.get((k, i), ())]

    def factors(self, i: int) -> list[Parfactor]:
        """Local model plus all received messages of parcluster ``i``."""
        return list(self.clusters[i].local) + self.received(i)

    def local_parfactors(self) -> list[Parfactor]:
        return [p for c in self.clusters for p in c.local]

    def group_counts(self) -> dict[str, int]:
        lvs = sorted({lv for p in self.local_parfactors() for lv in p.logvars})
        pfs = self.local_parfactors()
        return {lv: lve.group_count(pfs, lv) for lv in lvs}

    def check(self) -> list[str]:
        """Junction-tree property violations (empty when valid)."""
        out = []
        n = len(self.clusters)
        if len(self.edges) != max(n - 1, 0) or (n and len(_distances(n, self.edges, 0)) != n):
            out.append("not a tree")
        for c in self.clusters:
            for p in c.local:
                if not set(p.args) <= c.prvs:
                    out.append(f"parcluster {c.id}: {p!r} not covered")
        prvs = {a for c in self.clusters for a in c.prvs}
        for a in prvs:
            holders = [c.id for c in self.clusters if a in c.prvs]
            sub = [(i, j) for i, j in self.edges if i in holders and j in holders]
            if len(_distances_sub(holders, sub)) != len(holders):
                out.append(f"running intersection violated for {a}")
        if self.in_cluster is not None and not self.interface_in <= self.clusters[self.in_cluster].prvs:
            out.append("in-cluster misses the incoming interface")
        if self.out_cluster is not None and not self.interface_out <= self.clusters[self.out_cluster].prvs:
            out.append("out-cluster misses the outgoing interface")
        return out


def _distances_sub(nodes, edges):
    if not nodes:
        return {}
    nbrs: dict = {i: [] for i in nodes}
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = {nodes[0]}
    todo = [nodes[0]]
    while todo:
        x = todo.pop()
        for y in nbrs[x]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return seen


@dataclass(frozen=True)
class ForwardMessage:
    time: int
    parfactors: tuple[Parfactor, ...]


def _tree_from(st: TreeStructure, local: Mapping[int, list], time: int, **kw) -> FOJTree:
    clusters = tuple(Parcluster(i, c, tuple(local.get(i, ()))) for i, c in enumerate(st.clusters))
    return FOJTree(clusters, st.edges, st.in_cluster, st.out_cluster,
                   st.interface_in, st.interface_out, time, **kw)


def build_fojt(m: Model, interface_in: Iterable[PRV] = (), interface_out: Iterable[PRV] = (),
               time: int = 0) -> FOJTree:
    """FO jtree over ``m`` with designated in- and out-clusters (uncalibrated)."""
    st = build_structure([p.args for p in m.parfactors], interface_in, interface_out)
    local: dict = {}
    for p in m.parfactors:
        local.setdefault(st.covering(p.args), []).append(p)
    _check_supported(st, {i: [set(p.args) for p in ps] for i, ps in local.items()})
    return _tree_from(st, local, time)


def _message(tree: FOJTree, msgs: dict, i: int, j: int) -> tuple[Parfactor, ...]:
    factors = list(tree.clusters[i].local)
    for k in tree.neighbours(i):
        if k != j:
            factors.extend(msgs[(k, i)])
    return tuple(lve.eliminate(factors, tree.separator(i, j)))


def calibrate(tree: FOJTree) -> FOJTree:
    """Collect towards the in-cluster, then distribute back out."""
    n = len(tree.clusters)
    if n <= 1:
        return replace(tree, messages={}, calibrated=True)
    root = tree.in_cluster if tree.in_cluster is not None else 0
    parent = {root: None}
    order = [root]
    for x in order:
        for y in tree.neighbours(x):
            if y not in parent:
                parent[y] = x
                order.append(y)
    msgs: dict = {}
    for x in reversed(order[1:]):
        msgs[(x, parent[x])] = _message(tree, msgs, x, parent[x])
    for x in order:
        for y in tree.neighbours(x):
            if parent.get(y) == x:
                msgs[(x, y)] = _message(tree, msgs, x, y)
    return replace(tree, messages=msgs, calibrated=True)


def forward_message(tree: FOJTree) -> ForwardMessage:
    if not tree.calibrated:
        raise ModelError("forward message needs a calibrated tree")
    if tree.out_cluster is None:
        raise ModelError("tree has no out-cluster")
    pfs = lve.eliminate(tree.factors(tree.out_cluster), tree.interface_out)
    return ForwardMessage(tree.time, tuple(lve.normalize_max(p) for p in pfs))


@dataclass(frozen=True)
class TameConfig:
    """When and how to merge forward messages.

    TAMe runs on ``m_t`` when ``(t + 1) % interval == 0``, and at every step
    once ``t >= every_step_from`` (if set).
    """

    epsilon: float
    alpha: float = 0.005
    interval: int = 1
    significance: bool = True
    every_step_from: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.interval < 1:
            raise ValueError("interval must be >= 1")

    def active(self, t: int) -> bool:
        if self.every_step_from is not None and t >= self.every_step_from:
            return True
        return (t + 1) % self.interval == 0


@dataclass(frozen=True)
class StepTemplate:
    pdm: PDM
    initial: TreeStructure
    step: TreeStructure
    initial_home: tuple[int, ...]
    step_home: tuple[int, ...]
    step_parfactors: tuple[Parfactor, ...]


def compile_pdm(pdm: PDM) -> StepTemplate:
    """Build the initial and per-step tree structures once."""
    problems = validate(pdm.initial) + validate(pdm.transition) + check_pdm(pdm)
    if problems:
        raise ModelError("; ".join(problems))
    iface_prev = forward_interface(pdm.transition)
    iface_curr = frozenset(a.shift(1) for a in iface_prev)
    g0 = [p.at(0) for p in pdm.initial.parfactors]
    st0 = build_structure([p.args for p in g0], (), iface_curr)
    home0 = tuple(st0.covering(p.args) for p in g0)
    step = pdm.step_parfactors()
    st = build_structure([p.args for p in step], iface_prev, iface_curr)
    home = tuple(st.covering(p.args) for p in step)
    scopes0: dict = {}
    for p, h in zip(g0, home0):
        scopes0.setdefault(h, []).append(set(p.args))
    _check_supported(st0, scopes0)
    scopes: dict = {st.in_cluster: [set(iface_prev)]} if st.in_cluster is not None else {}
    for p, h in zip(step, home):
        scopes.setdefault(h, []).append(set(p.args))
    _check_supported(st, scopes)
    return StepTemplate(pdm, st0, st, home0, home, tuple(step))


def instantiate(tpl: StepTemplate, t: int, message: ForwardMessage | None,
                evidence: Mapping[GroundAtom, Any]) -> FOJTree:
    """Uncalibrated tree for step ``t``: template parfactors, message, evidence."""
    if t == 0:
        st = tpl.initial
        pfs = [p.at(0) for p in tpl.pdm.initial.parfactors]
        homes = list(tpl.initial_home)
    else:
        if message is None or message.time != t - 1:
            raise ModelError(f"step {t} needs the forward message of step {t - 1}")
        st = tpl.step.shifted(t)
        pfs = [p.shift(t) for p in tpl.step_parfactors]
        homes = list(tpl.step_home)
        pfs += list(message.parfactors)
        homes += [st.in_cluster] * len(message.parfactors)
    _check_evidence(st, evidence, t)
    pieces = lve.shatter_parfactors(pfs, evidence)
    local: dict = {}
    for h, ps in zip(homes, pieces):
        for p in ps:
            local.setdefault(h, []).append(lve.absorb_all(p, evidence))
    return _tree_from(st, local, t, evidence=dict(evidence), template=tpl)


def _check_evidence(st: TreeStructure, evidence, t) -> None:
    names = {(a.name, a.time): a for c in st.clusters for a in c}
    for atom, v in evidence.items():
        a = names.get((atom.name, atom.time))
        if a is None:
            raise ModelError(f"evidence on unknown randvar {atom} at step {t}")
        if len(atom.args) != len(a.logvars):
            raise ModelError(f"evidence {atom} has wrong arity")
        if v not in a.range:
            raise ModelError(f"value {v!r} not in range of {atom}")


def start(tpl: StepTemplate | PDM, evidence: Mapping[GroundAtom, Any] | None = None) -> FOJTree:
    if isinstance(tpl, PDM):
        tpl = compile_pdm(tpl)
    return calibrate(instantiate(tpl, 0, None, evidence or {}))


def advance(state: FOJTree, evidence: Mapping[GroundAtom, Any] | None = None,
            tame_cfg: TameConfig | None = None) -> FOJTree:
    """Move from step t to t+1, optionally merging the forward message."""
    if state.template is None:
        raise ModelError("state was not produced from a PDM template")
    if not state.calibrated:
        raise ModelError("advance needs a calibrated tree")
    msg = forward_message(state)
    reports: tuple = ()
    if tame_cfg is not None and tame_cfg.active(state.time):
        records: list = []
        merged = tame_mod.tame(list(msg.parfactors), tame_cfg.epsilon, tame_cfg.alpha,
                               significance=tame_cfg.significance, log=records)
        log.debug("step %d: message %d -> %d parfactors", state.time, len(msg.parfactors), len(merged))
        msg = ForwardMessage(msg.time, tuple(merged))
        reports = tuple(records)
    nxt = instantiate(state.template, state.time + 1, msg, evidence or {})
    return replace(calibrate(nxt), tame_reports=reports)


def run(pdm: PDM | StepTemplate, evidence: Evidence, T: int,
        tame_cfg: TameConfig | None = None) -> list[FOJTree]:
    """Filtering states for steps 0..T-1."""
    tpl = compile_pdm(pdm) if isinstance(pdm, PDM) else pdm
    states = [start(tpl, evidence.at(0))]
    for t in range(1, T):
        states.append(advance(states[-1], evidence.at(t), tame_cfg))
    return states


def _prv_at(tree: FOJTree, name: str, time: int):
    for c in tree.clusters:
        for a in c.prvs:
            if a.name == name and a.time == time:
                return c.id, a
    return None, None


def prv_marginals(tree: FOJTree, name: str, cluster: int | None = None) -> dict[tuple, np.ndarray]:
    """Normalised marginal for every ground instance of ``name`` at the tree's step.

    ``cluster`` picks the parcluster to answer from (default: the first one
    holding the PRV).
    """
    cid, prv = _prv_at(tree, name, tree.time)
    if prv is None:
        raise ModelError(f"query term {name} not in model at step {tree.time}")
    if cluster is not None:
        if prv not in tree.clusters[cluster].prvs:
            raise ModelError(f"parcluster {cluster} does not hold {prv}")
        cid = cluster
    if not tree.calibrated:
        raise ModelError("queries need a calibrated tree")
    factors = tree.factors(cid)
    acc: dict = {}
    try:
        res = lve.eliminate(factors, {prv})
    except lve.UnsupportedModel:
        # the PRV has fewer logvars than its neighbours: pin one instance per group
        for group in _instance_groups(factors, prv):
            d = _pinned_marginal(factors, prv, group[0])
            for inst in group:
                acc[inst] = d
    else:
        for f in res:
            for inst in f.instances(prv):
                acc[inst] = acc[inst] * f.potentials if inst in acc else f.potentials.copy()
    for atom, v in tree.evidence.items():
        if atom.name == name and atom.time == tree.time:
            d = np.zeros(len(prv.range))
            d[prv.range.index(v)] = 1.0
            acc[atom.args] = d
    out = {}
    for inst, d in acc.items():
        z = d.sum()
        if not z > 0:
            raise ModelError("evidence is contradictory (zero total mass)")
        out[inst] = d / z
    return out


_PINNED = object()


def _instance_groups(factors, prv) -> list[list[tuple]]:
    """Instances of ``prv`` that the shattered factors cannot tell apart."""
    pieces = [p for ps in lve.shatter_parfactors(factors) for p in ps]
    groups: dict = {}
    for k, p in enumerate(pieces):
        if prv in p.args:
            groups.setdefault(p.instances(prv), []).append(k)
    return [sorted(inst) for inst in sorted(groups, key=min)]


def _pin(p: Parfactor) -> Parfactor:
    c = p.constraint
    fixed = {}
    for lv in c.logvars:
        vals = c.project((lv,))
        if len(vals) == 1:
            fixed[lv] = next(iter(vals))[0]
    if not fixed:
        return p
    args = []
    for a in p.args:
        hit = [lv for lv in a.logvars if lv in fixed]
        if hit:
            tag = ",".join(f"{lv}={fixed[lv]}" for lv in hit)
            a = PRV(f"{a.name}[{tag}]", tuple(lv for lv in a.logvars if lv not in fixed), a.range, a.time)
        args.append(a)
    keep = sorted(lv for lv in c.logvars if lv not in fixed)
    return Parfactor(args, p.potentials, c.projected(keep), p.name)


def _pinned_marginal(factors, prv, inst) -> np.ndarray:
    pieces = [p for ps in lve.shatter_parfactors(factors, {prv.atom(inst): _PINNED}) for p in ps]
    pinned = [_pin(p) for p in pieces]
    target = next(a for p, q in zip(pieces, pinned) if prv in p.args and p.instances(prv) == {inst}
                  for a in q.args if a.name.startswith(prv.name + "[") and not a.logvars)
    d = np.ones(len(prv.range))
    for f in lve.eliminate(pinned, {target}):
        d = d * f.potentials
    return d


def filter_marginal(tree: FOJTree, atom: GroundAtom) -> np.ndarray:
    ms = prv_marginals(tree, atom.name)
    try:
        return ms[tuple(atom.args)]
    except KeyError:
        raise ModelError(f"query term {atom} not in model") from None


def answer(state: FOJTree, q: Query) -> np.ndarray:
    """Filtering (pi == t) or prediction (pi > t) answer for ``q``."""
    if q.t != state.time:
        raise ModelError(f"query horizon {q.t} differs from the state's step {state.time}")
    if q.pi < state.time:
        raise SmoothingUnsupported(q.pi, state.time)
    s = state
    while s.time < q.pi:
        s = advance(s, {})
    return filter_marginal(s, q.target.at(q.pi))
