"""Temporal approximate merging of parfactors.

A partition collects the parfactors with one logvar signature.  Within a
partition, parfactors on the same constraint are multiplied, the products
are clustered by the angle between their potential vectors, and the
clustering is kept only if an F-test on grounding-weighted squared
distances says the clusters really differ.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import betainc

from tame_ldjt import kernels, lve
from tame_ldjt.pmodel import Parfactor

logger = logging.getLogger(__name__)

REJECT = "reject-H0"
ACCEPT = "accept-H0"
DIRECT = "merge-single-cluster"


@dataclass(frozen=True)
class Partition:
    signature: tuple[str, ...]
    parfactors: tuple[Parfactor, ...]


@dataclass
class ClusterReport:
    clusters: list[list[Parfactor]]
    noise: list[Parfactor]
    means: list[Parfactor]
    overall: Parfactor | None
    msg: float
    mse: float
    f: float
    f_crit: float
    decision: str


@dataclass
class TameRecord:
    """One ANOVA decision; a row of ``tame_log.csv``."""

    signature: str
    arguments: str
    n: int
    m: int
    l: int
    noise: int
    msg: float
    mse: float
    f: float
    f_crit: float
    decision: str
    groups_before: int
    groups_after: int
    extra: dict = field(default_factory=dict)


def partition_by_logvars(g: Sequence[Parfactor]) -> list[Partition]:
    parts: dict = {}
    for p in g:
        parts.setdefault(tuple(sorted(p.logvars)), []).append(p)
    return [Partition(sig, tuple(ps)) for sig, ps in sorted(parts.items())]


def combine_overlapping(p: Partition) -> list[Parfactor]:
    """Multiply the parfactors of each constraint class of ``p``."""
    classes: dict = {}
    for pf in p.parfactors:
        classes.setdefault(pf.constraint, []).append(pf)
    keys = list(classes)
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            if keys[i].tuples & keys[j].tuples:
                raise lve.MisalignedConstraints(
                    f"overlapping constraints in partition {list(p.signature)}; shatter first")
    return [lve.multiply_all(classes[k]) for k in keys]


def rsim(phi1, phi2) -> float:
    """One minus the cosine of the angle between two potential vectors."""
    a = np.ascontiguousarray(phi1, dtype=np.float64).ravel()
    b = np.ascontiguousarray(phi2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("rsim needs tables over the same assignment space")
    try:
        return kernels.rsim(_unit_max(a), _unit_max(b))
    except ZeroDivisionError:
        raise ValueError("rsim undefined for a zero vector") from None


def _unit_max(v: np.ndarray) -> np.ndarray:
    # rsim is scale-invariant; rescaling keeps tiny tables from underflowing
    mx = np.abs(v).max(axis=-1, keepdims=True)
    if np.any(mx == 0):
        raise ZeroDivisionError("zero vector")
    return np.ascontiguousarray(v / mx)


def dbscan(p: Sequence[Parfactor], eps: float, min_pts: int = 2) -> tuple[list[list[int]], list[int]]:
    """Density-based clustering under rsim; returns (clusters, noise) as index lists.

    A point is core when at least ``min_pts`` points, itself included, lie
    within ``eps``.
    """
    if not 0 < eps <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    n = len(p)
    if n == 0:
        return [], []
    if len({pf.shape for pf in p}) != 1:
        raise ValueError("dbscan needs parfactors over one assignment space")
    try:
        dist = kernels.rsim_matrix(_unit_max(np.stack([pf.potentials for pf in p])))
    except ZeroDivisionError:
        raise ValueError("rsim undefined for a zero vector") from None
    nbrs = [np.flatnonzero(dist[i] <= eps).tolist() for i in range(n)]
    core = [len(nb) >= min_pts for nb in nbrs]
    label = [-1] * n
    clusters: list[list[int]] = []
    for i in range(n):
        if label[i] != -1 or not core[i]:
            continue
        cid = len(clusters)
        members = []
        label[i] = cid
        todo = [i]
        while todo:
            x = todo.pop()
            members.append(x)
            if not core[x]:
                continue
            for y in nbrs[x]:
                if label[y] == -1:
                    label[y] = cid
                    todo.append(y)
        clusters.append(sorted(members))
    noise = [i for i in range(n) if label[i] == -1]
    return clusters, noise


def mean_parfactor(cluster: Sequence[Parfactor]) -> Parfactor:
    """Grounding-weighted average of the members; constraint is their union."""
    if not cluster:
        raise ValueError("empty cluster")
    first = cluster[0]
    for q in cluster[1:]:
        if q.args != first.args:
            raise ValueError("mean parfactor needs identical arguments")
        if q.constraint.logvars != first.constraint.logvars:
            raise ValueError("mean parfactor needs constraints over the same logvars")
    if len(cluster) == 1:
        return first
    tuples: set = set()
    total = 0
    for q in cluster:
        ts = q.constraint.tuples
        if tuples & ts:
            raise ValueError("mean parfactor needs pairwise disjoint constraints")
        tuples |= ts
        total += len(ts)
    w = np.array([q.gr for q in cluster], dtype=np.float64)
    v = np.ascontiguousarray(np.stack([q.potentials for q in cluster]))
    pot = kernels.weighted_mean(v, w)
    c = first.constraint.with_tuples(tuples)
    return Parfactor(first.args, pot, c, first.name)


def f_critical(alpha: float, d1: int, d2: int, tol: float = 1e-10) -> float:
    """(1 - alpha)-quantile of the F(d1, d2) distribution."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if int(d1) != d1 or int(d2) != d2 or d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be positive integers")
    target = 1.0 - alpha

    def cdf(x):
        return betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))

    lo, hi = 0.0, 1.0
    while cdf(hi) < target:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise ValueError("quantile out of floating range")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def anova(clusters: Sequence[Sequence[Parfactor]], alpha: float) -> ClusterReport:
    """F-test of between-cluster against within-cluster rsim variance."""
    l = len(clusters)
    if l < 2:
        raise ValueError("anova needs at least two clusters")
    means = [mean_parfactor(k) for k in clusters]
    overall = mean_parfactor([g for k in clusters for g in k])
    m = sum(g.gr for k in clusters for g in k)
    if m <= l:
        raise ValueError(f"degenerate degrees of freedom (m={m}, l={l})")
    msg = sum(mk.gr * rsim(mk.potentials, overall.potentials) ** 2 for mk in means) / (l - 1)
    mse = sum(g.gr * rsim(g.potentials, mk.potentials) ** 2
              for k, mk in zip(clusters, means) for g in k) / (m - l)
    if mse > 0:
        f = msg / mse
    else:
        f = math.inf if msg > 0 else 0.0
    fc = f_critical(alpha, l - 1, m - l)
    return ClusterReport([list(k) for k in clusters], [], means, overall, msg, mse, f, fc,
                         REJECT if f > fc else ACCEPT)


def _groups(pfs, sig) -> int:
    return max((lve.group_count(pfs, lv) for lv in sig), default=len(pfs))


def tame(g: Sequence[Parfactor], eps: float, alpha: float, *, significance: bool = True,
         log: list | None = None) -> list[Parfactor]:
    """Merge similar parfactors of ``g``; ``significance=False`` skips the F-test."""
    if not 0 < eps <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    out: list[Parfactor] = []
    for part in partition_by_logvars(g):
        combined = combine_overlapping(part)
        by_args: dict = {}
        for p in combined:
            by_args.setdefault(p.args, []).append(p)
        result: list[Parfactor] = []
        merged_any = False
        for args, pfs in by_args.items():
            clusters, noise = dbscan(pfs, eps)
            if not clusters:
                result.extend(pfs)
                continue
            members = [[pfs[i] for i in k] for k in clusters]
            rest = [pfs[i] for i in noise]
            m = sum(q.gr for k in members for q in k)
            if len(members) == 1:
                rep = ClusterReport(members, rest, [mean_parfactor(members[0])], None,
                                    0.0, 0.0, 0.0, 0.0, DIRECT)
            elif not significance:
                rep = ClusterReport(members, rest, [mean_parfactor(k) for k in members], None,
                                    math.nan, math.nan, math.nan, math.nan, "no-test")
            else:
                rep = anova(members, alpha)
                rep.noise = rest
            keep = rep.decision != ACCEPT
            new = rep.means + rest if keep else pfs
            merged_any |= keep
            result.extend(new)
            if log is not None:
                log.append(TameRecord(
                    ",".join(part.signature), " ".join(map(str, args)), len(pfs), m,
                    len(members), len(rest), rep.msg, rep.mse, rep.f, rep.f_crit, rep.decision,
                    _groups(pfs, part.signature), _groups(new, part.signature)))
            _log_decision(part.signature, args, rep, len(pfs), m)
        out.extend(result if merged_any else part.parfactors)
    return out


def _log_decision(sig, args, rep, n, m):
    logger.debug("tame %s %s: n=%d m=%d l=%d F=%.4g Fcrit=%.4g %s", list(sig),
              [str(a) for a in args], n, m, len(rep.clusters), rep.f, rep.f_crit, rep.decision)
