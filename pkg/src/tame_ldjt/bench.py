"""Desk-scale experiments: symmetric evidence, runs with and without merging.

Errors of a merging run are measured against the exact run on the same
evidence.  Wall times are kept out of the CSVs so that repeated runs with
the same seed write identical files; they go to ``timing.json``.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from tame_ldjt import fixtures, ldjt
from tame_ldjt.pmodel import PDM, Evidence, GroundAtom, ModelError

log = logging.getLogger(__name__)

EVIDENCE_PRV = "D"
QUERY_PRV = "A"


@dataclass(frozen=True)
class ExperimentConfig:
    domain_size: int = 40
    groups: int = 10
    dropout: float = 0.1
    steps: int = 20
    interval: int = 2
    epsilon: float = 5e-2
    alpha: float = 0.005
    offsets: tuple[int, ...] = (0, 2, 4)
    seed: int = 0
    significance: bool = True
    evidence_cutoff: int | None = None
    repeats: int = 1

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        if self.domain_size < 1:
            raise ValueError("domain_size must be >= 1")
        if not 1 <= self.groups <= self.domain_size:
            raise ValueError("groups must lie in 1..domain_size")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.interval < 1:
            raise ValueError("interval must be >= 1")
        if any(o < 0 for o in self.offsets) or not self.offsets:
            raise ValueError("offsets must be non-negative and non-empty")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        ldjt.TameConfig(self.epsilon, self.alpha, self.interval)

    def tame_config(self) -> ldjt.TameConfig:
        return ldjt.TameConfig(self.epsilon, self.alpha, self.interval, self.significance,
                               self.evidence_cutoff)

    @classmethod
    def from_obj(cls, obj: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ModelError(f"unknown experiment fields {sorted(extra)}")
        return cls(**obj)


OPTIONS = {
    "option1": dict(interval=5, epsilon=5e-14),
    "option2": dict(interval=5, epsilon=5e-2),
    "option3": dict(interval=2, epsilon=5e-2),
}


def group_members(cfg: ExperimentConfig) -> list[list[str]]:
    persons = fixtures.person_names(cfg.domain_size)
    return [list(g) for g in np.array_split(np.array(persons, dtype=object), cfg.groups)]


def gen_evidence(cfg: ExperimentConfig) -> Evidence:
    """One value per group and step, each person dropped with ``cfg.dropout``."""
    rng = np.random.default_rng(cfg.seed)
    groups = group_members(cfg)
    steps: dict = {}
    last = cfg.steps if cfg.evidence_cutoff is None else min(cfg.steps, cfg.evidence_cutoff)
    for t in range(cfg.steps):
        values = rng.random(len(groups)) < 0.5
        keep = rng.random(cfg.domain_size) >= cfg.dropout
        if t >= last:
            continue
        ev = {}
        k = 0
        for g, v in zip(groups, values):
            for x in g:
                if keep[k]:
                    ev[GroundAtom(EVIDENCE_PRV, (x,))] = bool(v)
                k += 1
        steps[t] = ev
    return Evidence(steps)


@dataclass
class MetricsRow:
    t: int
    pi: int
    query: str
    exact: float
    approx: float
    abs_error: float
    seconds: float
    groups: int
    groups_exact: int


@dataclass
class Trajectory:
    answers: dict
    seconds: list[float]
    groups: list[int]
    records: list = field(default_factory=list)


def _trajectory(tpl: ldjt.StepTemplate, ev: Evidence, cfg: ExperimentConfig,
                tame_cfg: ldjt.TameConfig | None, reps: Sequence[str]) -> Trajectory:
    horizon = max(cfg.offsets)
    answers: dict = {}
    seconds: list[float] = []
    groups: list[int] = []
    records: list = []
    state = None
    for t in range(cfg.steps):
        t0 = time.perf_counter()
        if state is None:
            state = ldjt.start(tpl, ev.at(0))
        else:
            state = ldjt.advance(state, ev.at(t), tame_cfg)
            for r in state.tame_reports:
                records.append((t - 1, r))
        s = state
        for k in range(horizon + 1):
            if k:
                s = ldjt.advance(s, {})
            if k in cfg.offsets:
                ms = ldjt.prv_marginals(s, QUERY_PRV)
                for x in reps:
                    answers[(t, k, x)] = float(ms[(x,)][0])
        seconds.append(time.perf_counter() - t0)
        groups.append(state.group_counts().get("X", 1))
        log.debug("t=%d groups=%d %.4fs", t, groups[-1], seconds[-1])
    return Trajectory(answers, seconds, groups, records)


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    mode: str
    rows: list[MetricsRow]
    records: list
    seconds: list[float]
    reference_seconds: list[float]


def _median_seconds(runs: list[list[float]]) -> list[float]:
    return [statistics.median(xs) for xs in zip(*runs)]


def run_experiment(cfg: ExperimentConfig, mode: str = "tame", *, pdm: PDM | None = None,
                   reference: Trajectory | None = None) -> ExperimentResult:
    """Run LDJT over ``cfg.steps`` steps; ``mode`` is ``"none"`` or ``"tame"``."""
    if mode not in ("none", "tame"):
        raise ValueError(f"unknown mode {mode!r}")
    pdm = pdm or fixtures.gex_pdm(persons=cfg.domain_size)
    tpl = ldjt.compile_pdm(pdm)
    ev = gen_evidence(cfg)
    reps = [g[0] for g in group_members(cfg)]
    ref_runs = []
    if reference is None:
        reference = _trajectory(tpl, ev, cfg, None, reps)
        ref_runs.append(reference.seconds)
    if mode == "none":
        run = reference
        runs = [run.seconds]
        for _ in range(cfg.repeats - 1):
            runs.append(_trajectory(tpl, ev, cfg, None, reps).seconds)
        ref_runs = runs
    else:
        tame_cfg = cfg.tame_config()
        run = _trajectory(tpl, ev, cfg, tame_cfg, reps)
        runs = [run.seconds]
        for _ in range(cfg.repeats - 1):
            runs.append(_trajectory(tpl, ev, cfg, tame_cfg, reps).seconds)
            ref_runs.append(_trajectory(tpl, ev, cfg, None, reps).seconds)
    secs = _median_seconds(runs)
    ref_secs = _median_seconds(ref_runs) if ref_runs else []
    rows = []
    for (t, k, x), exact in sorted(reference.answers.items()):
        approx = run.answers[(t, k, x)]
        rows.append(MetricsRow(t, k, f"{QUERY_PRV}_{t + k}({x})", exact, approx,
                               abs(approx - exact), secs[t], run.groups[t], reference.groups[t]))
    return ExperimentResult(cfg, mode, rows, run.records, secs, ref_secs)


def summarize(rows: Sequence[MetricsRow]) -> list[dict]:
    """Max, min and average absolute error per prediction offset."""
    if not rows:
        raise ValueError("no rows to summarize")
    by_pi: dict = {}
    for r in rows:
        by_pi.setdefault(r.pi, []).append(r.abs_error)
    return [{"pi": pi, "max": max(e), "min": min(e), "avg": sum(e) / len(e)}
            for pi, e in sorted(by_pi.items())]


METRICS_HEADER = ["t", "pi", "query", "exact", "approx", "abs_error", "groups", "groups_exact"]
SUMMARY_HEADER = ["pi", "max", "min", "avg"]
TAME_HEADER = ["t", "signature", "arguments", "n", "m", "l", "noise", "msg", "mse", "f",
               "f_crit", "decision", "groups_before", "groups_after"]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csvs(res: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in res.rows:
            w.writerow([_fmt(getattr(r, h)) for h in METRICS_HEADER])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in summarize(res.rows):
            w.writerow([_fmt(s[h]) for h in SUMMARY_HEADER])
    with open(out / "tame_log.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TAME_HEADER)
        for t, r in res.records:
            d = asdict(r)
            w.writerow([t] + [_fmt(d[h]) for h in TAME_HEADER[1:]])
    timing = {
        "mode": res.mode,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(res.cfg).items()},
        "seconds_per_step": res.seconds,
        "total_seconds": sum(res.seconds),
        "reference_total_seconds": sum(res.reference_seconds) if res.reference_seconds else None,
    }
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")


def replicate(out: Path, base: ExperimentConfig | None = None) -> dict[str, ExperimentResult]:
    """The three merging options plus the exact run, each into its own directory."""
    base = base or ExperimentConfig()
    pdm = fixtures.gex_pdm(persons=base.domain_size)
    reps = [g[0] for g in group_members(base)]
    reference = _trajectory(ldjt.compile_pdm(pdm), gen_evidence(base), base, None, reps)
    results = {"none": run_experiment(base, "none", pdm=pdm, reference=reference)}
    for name, opts in OPTIONS.items():
        cfg = replace(base, **opts)
        results[name] = run_experiment(cfg, "tame", pdm=pdm, reference=reference)
    for name, res in results.items():
        write_csvs(res, out / name)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["option", "interval", "epsilon"] + SUMMARY_HEADER)
        for name, res in results.items():
            for s in summarize(res.rows):
                w.writerow([name, res.cfg.interval if name != "none" else "",
                            _fmt(res.cfg.epsilon) if name != "none" else ""]
                           + [_fmt(s[h]) for h in SUMMARY_HEADER])
    return results
