"""Command-line front end.

Exit status 0 on success, 1 on domain errors (bad models, unsupported
queries, unreadable files), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from tame_ldjt import bench, fixtures, ldjt, modelfile
from tame_ldjt.pmodel import GroundAtom, ModelError, Query, check_pdm, validate


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tame-ldjt", description="Lifted temporal inference with approximate merging.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model or PDM file")
    p.add_argument("model")

    p = sub.add_parser("query", help="filtering or prediction query on a PDM")
    p.add_argument("pdm")
    p.add_argument("evidence")
    p.add_argument("--target", required=True, help="ground atom without time, e.g. A(x1)")
    p.add_argument("--pi", type=int, required=True, help="query time step")
    p.add_argument("--t", type=int, default=None, help="evidence horizon (default: last observed step)")

    def knobs(p):
        p.add_argument("--epsilon", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--interval", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--groups", type=int)
        p.add_argument("--domain-size", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--offsets", type=str, help="comma-separated, e.g. 0,2,4")
        p.add_argument("--repeats", type=int)
        p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("experiment", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--mode", choices=("none", "tame"), default="tame")
    knobs(p)

    p = sub.add_parser("replicate-paper", help="exact run plus the three merging options")
    knobs(p)
    return ap


def _overrides(args) -> dict:
    out = {}
    for key in ("epsilon", "alpha", "interval", "steps", "groups", "dropout", "seed", "repeats"):
        v = getattr(args, key)
        if v is not None:
            out[key] = v
    if args.domain_size is not None:
        out["domain_size"] = args.domain_size
    if args.offsets is not None:
        try:
            out["offsets"] = tuple(int(x) for x in args.offsets.split(",") if x.strip())
        except ValueError:
            raise ModelError(f"bad --offsets {args.offsets!r}") from None
    return out


def _cmd_validate(args) -> int:
    doc = modelfile.load(args.model)
    problems = validate(doc.model)
    if doc.transition is not None:
        problems += validate(doc.transition) + check_pdm(doc.pdm)
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return 1
    n = len(doc.model.parfactors) + (len(doc.transition.parfactors) if doc.transition else 0)
    print(f"ok: {n} parfactors")
    return 0


def _load_evidence(path):
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ModelError(f"invalid JSON in {path}: {e}") from None
    if not isinstance(obj, dict):
        raise ModelError("evidence file must hold a JSON object")
    return modelfile.parse_evidence(obj.get("evidence", obj) if "logvars" in obj or "evidence" in obj else obj)


def _cmd_query(args) -> int:
    pdm = modelfile.load(args.pdm).pdm
    ev = _load_evidence(args.evidence)
    t = args.t if args.t is not None else max(ev.horizon, 0)
    target = GroundAtom.parse(args.target)
    q = Query(target, args.pi, t)
    tpl = ldjt.compile_pdm(pdm)
    state = ldjt.run(tpl, ev.truncated(t), t + 1)[-1]
    dist = ldjt.answer(state, q)
    prv = next(a for a in pdm.transition.prvs() if a.name == target.name)
    print(json.dumps({"query": str(target.at(q.pi)), "kind": q.kind, "t": t, "pi": q.pi,
                      "marginal": {json.dumps(v): float(p) for v, p in zip(prv.range, dist)}}))
    return 0


def _cmd_experiment(args) -> int:
    doc = modelfile.load(args.config)
    fields = dict(doc.experiment or {})
    fields.update(_overrides(args))
    cfg = bench.ExperimentConfig.from_obj(fields)
    pdm = doc.pdm.with_domain("X", fixtures.person_names(cfg.domain_size))
    res = bench.run_experiment(cfg, args.mode, pdm=pdm)
    bench.write_csvs(res, args.out)
    for s in bench.summarize(res.rows):
        print(f"pi={s['pi']} max={s['max']:.3e} min={s['min']:.3e} avg={s['avg']:.3e}")
    return 0


def _cmd_replicate(args) -> int:
    cfg = bench.ExperimentConfig.from_obj(_overrides(args))
    results = bench.replicate(args.out, cfg)
    for name, res in results.items():
        avg = ", ".join(f"pi={s['pi']}: {s['avg']:.3e}" for s in bench.summarize(res.rows))
        print(f"{name}: {avg}; {sum(res.seconds):.2f}s")
    return 0


COMMANDS = {"validate": _cmd_validate, "query": _cmd_query, "experiment": _cmd_experiment,
            "replicate-paper": _cmd_replicate}


def run(argv: list[str] | None = None) -> int:
    level = os.environ.get("TAME_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except (ModelError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
