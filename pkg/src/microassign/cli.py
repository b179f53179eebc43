"""Command-line entry point: ``microassign <subcommand> ...``.

Every subcommand writes its artifacts under ``--out`` and stamps them with
the config hash and seed.  Failures print one JSON object to stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import files, pipeline
from .config import ConfigError, RunConfig, config_from_dict, load_config, schema
from .core import PrereqGraph
from .files import DataError
from .oracle import OracleLimits, PoolTooLarge
from .synth import gen_content_pool

log = logging.getLogger("microassign")


def _config(args) -> RunConfig:
    if args.seed is None:
        return load_config(args.config)
    raw = load_config(args.config).to_dict() if args.config else {}
    return config_from_dict({**raw, "seed": args.seed})


def _path(args, cfg: RunConfig, name: str) -> str:
    """CLI flag first, then the config's ``paths`` section."""
    value = getattr(args, name, None) or getattr(cfg.paths, name, None)
    if not value:
        raise ConfigError(f"missing input: pass --{name.replace('_', '-')} or set paths.{name}")
    return value


def _out(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prereqs(path) -> PrereqGraph | None:
    return files.load_prereqs_csv(path) if path else None


def _learners(args, cfg: RunConfig, n_content: int):
    lrs = files.load_learners_csv(_path(args, cfg, 'learners'), cfg.window, cfg.budgets.time_budget_minutes)
    return pipeline.resolve_caps(lrs, cfg, n_content)


def cmd_synth_cohort(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    prov = cfg.provenance()
    c = pipeline.synth_cohort(cfg)
    n, k = c.mastery.shape
    ids = [f"s{i + 1}" for i in range(n)]
    items = [f"item{j + 1}" for j in range(c.qmatrix.n_items)]
    skills = [f"skill_{s + 1}" for s in range(k)]
    files.write_matrix_csv(out / "qmatrix.csv", c.qmatrix.entries, items, skills, "item_id", prov)
    files.write_responses_csv(out / "responses.csv", c.responses, ids, items, prov)
    learners = pipeline.make_learners(c.mastery, c.theta, ids, cfg, 1)
    files.write_learners_csv(out / "learners.csv", learners, prov)
    files.write_table_csv(out / "dina_params.csv",
                          [{"item_id": i, "guess": p.guess, "slip": p.slip} for i, p in zip(items, c.dina_params)],
                          ("item_id", "guess", "slip"), prov)


def cmd_synth_content(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    spec = cfg.content if args.n_content is None else replace(cfg.content, n_content=args.n_content)
    files.write_content_csv(out / "content.csv", gen_content_pool(spec), cfg.provenance())


def cmd_diagnose(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    Y, ids, item_ids = files.load_responses_csv(_path(args, cfg, 'responses'))
    q, q_items = files.load_qmatrix_csv(_path(args, cfg, 'qmatrix'))
    if q_items != item_ids:
        raise DataError(args.qmatrix, None, "Q-matrix item ids do not match the response columns")
    irt = files.load_item_params_csv(_path(args, cfg, 'item_params'))[0] if (args.item_params or cfg.paths.item_params) else None
    fit, theta, se = pipeline.diagnose(Y, q, irt, cfg.cat)
    mastery = fit.map_profiles
    th = theta if theta is not None else np.zeros(len(ids))
    learners = pipeline.make_learners(mastery, th, ids, cfg, 1)
    prov = cfg.provenance()
    files.write_learners_csv(out / "learners.csv", learners, prov)
    files.dump_json(out / "diagnosis.json", {
        **prov,
        "iterations": fit.iterations, "converged": fit.converged,
        "loglik": [round(v, 8) for v in fit.loglik],
        "items": [{"item_id": i, "slip": round(float(s), 10), "guess": round(float(g), 10)}
                  for i, s, g in zip(item_ids, fit.slip, fit.guess)],
        "flagged_items": [item_ids[j] for j in fit.flagged_items],
        "theta_se": None if se is None else [round(float(v), 10) for v in se],
    })


def cmd_cat_sim(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    bank, truth, transcripts = pipeline.cat_sim(args.n_learners, args.n_items, cfg)
    files.write_item_params_csv(out / "item_bank.csv", bank, provenance=cfg.provenance())
    files.dump_json(out / "cat_transcripts.json", {
        **cfg.provenance(),
        "transcripts": [{"learner_id": f"s{i + 1}", "theta_true": round(float(t), 12), **tr.to_dict()}
                        for i, (t, tr) in enumerate(zip(truth, transcripts))],
    })


def cmd_assign(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    content = files.load_content_csv(_path(args, cfg, 'content'))
    learners = _learners(args, cfg, len(content))
    solver = args.solver or cfg.solver
    res = pipeline.assign(learners, content, _prereqs(args.prereqs or cfg.paths.prereqs), cfg, solver, record_gd=bool(args.gd_trace))
    pipeline.write_slates(out / "slates.json", res.slates, cfg, solver)
    files.dump_json(out / "slack_report.json",
                    {**cfg.provenance(), **pipeline.slack_report(res.slates, learners, res.pools, content)})
    if args.gd_trace and res.gd_trace is not None:
        files.write_table_csv(args.gd_trace, res.gd_trace, ("learner_id", "iter", "loss", "grad_norm"),
                              cfg.provenance())


def cmd_evaluate(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    content = files.load_content_csv(_path(args, cfg, 'content'))
    learners = _learners(args, cfg, len(content))
    slates = pipeline.read_slates(_path(args, cfg, 'slates'))
    solver = files.load_json(_path(args, cfg, 'slates')).get("solver", "")
    rep = pipeline.metrics.evaluate(slates, learners, content, pipeline.SOLVER_NAMES.get(solver, solver),
                                    args.scenario, cfg.evaluation.w1, cfg.evaluation.w2)
    files.dump_json(out / "report.json", {**cfg.provenance(), **rep.to_dict()})
    files.write_table_csv(out / "report.csv", [rep.csv_row()], rep.CSV_COLUMNS, cfg.provenance())


def cmd_compare(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    reports = pipeline.compare(cfg)
    cols = pipeline.COMPARE_COLUMNS
    files.write_table_csv(out / "compare.csv", [r.csv_row() for r in reports], cols, cfg.provenance())
    files.dump_json(out / "compare.json", {**cfg.provenance(), "config": cfg.to_dict(),
                                           "reports": [r.to_dict() for r in reports]})


def cmd_oracle(args, cfg: RunConfig) -> None:
    out = _out(args, cfg)
    content = files.load_content_csv(_path(args, cfg, 'content'))
    learners = _learners(args, cfg, len(content))
    results = pipeline.run_oracle(learners, content, _prereqs(args.prereqs or cfg.paths.prereqs), cfg,
                                  OracleLimits(max_content=args.max_content))
    files.dump_json(out / "oracle.json", {
        **cfg.provenance(),
        "results": [{**s.to_dict(), "objective": round(z, 12)} for s, z in results],
    })


def cmd_schema(args, cfg: RunConfig) -> None:
    print(json.dumps(schema(), indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="microassign", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int, help="overrides the config seed (default from MICROASSIGN_SEED)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    def add(name, fn, help, out=True):
        sp = sub.add_parser(name, help=help)
        if out:
            sp.add_argument("--out", help="output directory (default: paths.output_dir)")
        sp.set_defaults(fn=fn)
        return sp

    add("synth-cohort", cmd_synth_cohort, "simulate Q-matrix, mastery, DINA parameters and responses")
    sp = add("synth-content", cmd_synth_content, "simulate a content repository")
    sp.add_argument("--n-content", type=int)
    sp = add("diagnose", cmd_diagnose, "DINA EM mastery and EAP ability from responses")
    sp.add_argument("--responses")
    sp.add_argument("--qmatrix")
    sp.add_argument("--item-params")
    sp = add("cat-sim", cmd_cat_sim, "simulate adaptive tests over a 3PL bank")
    sp.add_argument("--n-learners", type=int, default=200)
    sp.add_argument("--n-items", type=int, default=60)
    for name, fn, help in (("assign", cmd_assign, "build slates"),
                           ("oracle", cmd_oracle, "exact slates for small repositories")):
        sp = add(name, fn, help)
        sp.add_argument("--content")
        sp.add_argument("--learners")
        sp.add_argument("--prereqs")
        if name == "assign":
            sp.add_argument("--solver", choices=("greedy", "gd", "hybrid", "auto"))
            sp.add_argument("--gd-trace", help="CSV path for the per-iteration loss and gradient norm")
        else:
            sp.add_argument("--max-content", type=int, default=20)
    sp = add("evaluate", cmd_evaluate, "metrics for a slates file")
    sp.add_argument("--slates")
    sp.add_argument("--content")
    sp.add_argument("--learners")
    sp.add_argument("--scenario", default="")
    add("compare", cmd_compare, "both solvers over repository sizes (evaluation.pools)")
    add("schema", cmd_schema, "print the configuration schema", out=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        args.fn(args, cfg)
    except (ConfigError, DataError, PoolTooLarge, ValueError, OSError) as e:
        err = {"error": type(e).__name__, "message": str(e)}
        if isinstance(e, DataError):
            err.update(path=e.path, line=e.line)
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
