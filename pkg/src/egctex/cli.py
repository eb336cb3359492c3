"""Command-line entry point: extract, run, import-proba, fuse, stats.

Exit codes: 0 success, 1 computation failure, 2 input or configuration error.
All commands read and write under the ``--out`` workspace directory::

    <out>/features.csv, manifest.json        extract
    <out>/runs/<id>/...                       run
    <out>/fold_plan.csv                       shared fold plan (first run writes it)
    <out>/registry/<id>.csv, index.json       members available to fuse
    <out>/fusion/sweep.csv                    fuse
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .data import ProbaImportError, read_proba_csv, write_proba_csv
from .dataset import PUBLISHED_COUNTS, DatasetError, class_manifest, discover, extract_features, write_features_csv
from .descriptors import params_from_dict
from .evaluation import ConfigError, ExperimentConfig, FoldPlan, fingerprint_of, run_experiment
from .fusion import AlignmentError, Member, Rule, format_sweep, sweep, write_sweep_csv
from .imaging import ImageDecodeError
from .stats import ScoreTable, format_ranks, friedman_avg_ranks, wilcoxon_signed_rank

log = logging.getLogger("egctex")

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise InputError("--config is required")
    return ExperimentConfig.from_json(args.config, seed=args.seed)


def _stamp(fp: str, seed: int) -> str:
    return f"fingerprint={fp} seed={seed}"


# --------------------------------------------------------------------------
# extract


def cmd_extract(args) -> int:
    config = _load_config(args)
    raw = config.raw
    if "dataset" not in raw:
        raise InputError("extract needs a 'dataset' config, not a feature file")
    name = raw["dataset"]["name"]
    samples = discover(Path(raw["dataset"]["root"]) / name)
    counts = class_manifest(samples)
    log.info("event=discovered dataset=%s C=%d S=%d", name, counts["C"], counts["S"])
    desc = raw["descriptor"]
    data = extract_features(samples, raw["preprocessing"], desc["name"],
                            params_from_dict(desc["name"], desc["params"]), args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_features_csv(data, out / "features.csv", _stamp(config.fingerprint, config.seed))
    manifest = {
        "config_fingerprint": config.fingerprint,
        "dataset": name,
        "counts": counts,
        "published_counts": PUBLISHED_COUNTS.get(name),
        "n_features": data.feature_dim,
        "n_samples": len(data),
    }
    _dump_json(manifest, out / "manifest.json")
    log.info("event=extracted dataset=%s samples=%d features=%d", name, len(data), data.feature_dim)
    return EXIT_OK


# --------------------------------------------------------------------------
# run


def _registry(out: Path) -> tuple[Path, dict]:
    reg = out / "registry"
    index_path = reg / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    return reg, index


def _register(out: Path, member_id: str, matrices, kind: str, source: str, fingerprint: str | None):
    reg, index = _registry(out)
    reg.mkdir(parents=True, exist_ok=True)
    stamp = f"member={member_id} kind={kind}" + (f" fingerprint={fingerprint}" if fingerprint else "")
    write_proba_csv(matrices, reg / f"{member_id}.csv", stamp)
    index[member_id] = {"kind": kind, "source": source, "config_fingerprint": fingerprint}
    _dump_json(index, reg / "index.json")


def _check_or_write_plan(out: Path, plan: FoldPlan, stamp: str):
    path = out / "fold_plan.csv"
    if path.exists():
        existing = FoldPlan.from_csv(path)
        if existing.sample_ids != plan.sample_ids or not np.array_equal(existing.assignments, plan.assignments):
            raise InputError(f"fold plan differs from the workspace plan in {path}; use a separate --out")
        return
    plan.to_csv(path, stamp)


def cmd_run(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    run_id = args.id or config.name
    result = run_experiment(config, threads=args.threads, classifier_id=run_id)
    run_dir = out / "runs" / run_id
    (run_dir / "models").mkdir(parents=True, exist_ok=True)
    stamp = _stamp(config.fingerprint, config.seed)
    _dump_json(config.to_dict(), run_dir / "config.json")
    _dump_json({"config_fingerprint": config.fingerprint, "id": run_id, "metrics": result.metrics.to_dict(),
                "chosen_params": result.chosen_params}, run_dir / "metrics.json")
    write_proba_csv(result.probability_matrices, run_dir / "probabilities.csv", stamp)
    result.fold_plan.to_csv(run_dir / "fold_plan.csv", stamp)
    for fold, model_json in enumerate(result.models):
        (run_dir / "models" / f"fold_{fold:02d}.json").write_text(
            json.dumps({"config_fingerprint": config.fingerprint, "model": json.loads(model_json)},
                       sort_keys=True, separators=(",", ":")) + "\n")
    _check_or_write_plan(out, result.fold_plan, stamp)
    _register(out, run_id, result.probability_matrices, args.kind, f"runs/{run_id}", config.fingerprint)
    m = result.metrics
    print(f"{run_id}: F-measure {m.f_measure:.4f} (precision {m.precision:.4f}, recall {m.recall:.4f}, "
          f"accuracy {m.accuracy:.4f}, macro-F {m.macro_f_measure:.4f})")
    return EXIT_OK


def verify_run(run_dir: Path):
    """Recompute a run's fingerprint and compare it with every stamped file."""
    cfg = json.loads((run_dir / "config.json").read_text())
    declared = cfg.get("fingerprint")
    actual = fingerprint_of(cfg)
    if declared != actual:
        raise InputError(f"{run_dir}: config fingerprint {declared} != recomputed {actual}")
    if json.loads((run_dir / "metrics.json").read_text()).get("config_fingerprint") != actual:
        raise InputError(f"{run_dir}/metrics.json: fingerprint mismatch")
    for name in ("probabilities.csv", "fold_plan.csv"):
        with (run_dir / name).open() as fh:
            first = fh.readline()
        if f"fingerprint={actual}" not in first:
            raise InputError(f"{run_dir}/{name}: fingerprint mismatch")
    for model in sorted((run_dir / "models").glob("*.json")):
        if json.loads(model.read_text()).get("config_fingerprint") != actual:
            raise InputError(f"{model}: fingerprint mismatch")
    return actual


# --------------------------------------------------------------------------
# import-proba


def validate_against_plan(matrices, plan: FoldPlan, member_id: str):
    known = set(plan.sample_ids)
    for m in matrices:
        unknown = [s for s in m.sample_ids if s not in known]
        if unknown:
            raise InputError(f"{member_id}: unknown sample_id {unknown[0]!r} (+{len(unknown) - 1} more)")
    by_fold = {m.fold_id: m for m in matrices}
    for fold in range(plan.k):
        if fold not in by_fold:
            raise InputError(f"{member_id}: fold {fold} missing from import")
        expected = set(plan.test_ids(fold))
        got = by_fold[fold].sample_ids
        if len(got) != len(set(got)):
            raise InputError(f"{member_id}: duplicate sample ids in fold {fold}")
        if set(got) != expected:
            missing = sorted(expected - set(got))
            extra = sorted(set(got) - expected)
            raise InputError(f"{member_id}: fold {fold} coverage gap (missing {missing[:3]}, unexpected {extra[:3]})")
    extra_folds = sorted(set(by_fold) - set(range(plan.k)))
    if extra_folds:
        raise InputError(f"{member_id}: fold {extra_folds[0]} not in the fold plan")


def cmd_import_proba(args) -> int:
    out = Path(args.out)
    plan_path = out / "fold_plan.csv"
    if not plan_path.exists():
        raise InputError(f"no fold plan at {plan_path}; run an experiment into this workspace first")
    plan = FoldPlan.from_csv(plan_path)
    try:
        matrices, n_warned = read_proba_csv(args.csv, args.id)
    except (OSError, ProbaImportError) as exc:
        raise InputError(str(exc)) from exc
    validate_against_plan(matrices, plan, args.id)
    _register(out, args.id, matrices, args.kind, str(args.csv), None)
    log.info("event=imported member=%s folds=%d rows=%d renormalized=%d", args.id, len(matrices),
             sum(len(m) for m in matrices), n_warned)
    print(f"registered {args.id} ({args.kind}) with {len(matrices)} folds")
    return EXIT_OK


# --------------------------------------------------------------------------
# fuse


def load_members(out: Path, ids=None) -> list[Member]:
    reg, index = _registry(out)
    ids = list(ids) if ids else sorted(index)
    members = []
    for mid in ids:
        if mid not in index:
            raise InputError(f"member {mid!r} is not registered in {reg}")
        entry = index[mid]
        if entry.get("config_fingerprint"):
            run_fp = verify_run(out / entry["source"])
            if run_fp != entry["config_fingerprint"]:
                raise InputError(f"member {mid!r}: registry fingerprint does not match its run")
        matrices, _ = read_proba_csv(reg / f"{mid}.csv", mid)
        members.append(Member.from_matrices(mid, matrices, entry["kind"]))
    return members


def cmd_fuse(args) -> int:
    out = Path(args.out)
    ids = [s for s in (args.members or "").split(",") if s]
    members = load_members(out, ids or None)
    if len(members) < 2:
        raise InputError("fusion needs at least 2 members")
    rules = [Rule(r.strip().lower()) for r in args.rules.split(",")]
    truth = FoldPlan.from_csv(out / "fold_plan.csv").label_map()
    executor = ThreadPoolExecutor(args.threads) if args.threads > 1 else None
    try:
        rows = sweep(members, truth, rules, executor)
    finally:
        if executor:
            executor.shutdown()
    (out / "fusion").mkdir(parents=True, exist_ok=True)
    _, index = _registry(out)
    stamp = ",".join(f"{m.member_id}:{m.kind}:{index[m.member_id].get('config_fingerprint') or 'imported'}"
                     for m in members)
    write_sweep_csv(rows, out / "fusion" / "sweep.csv", "members=" + stamp)
    log.info("event=fusion_sweep members=%d evaluations=%d best=%.4f", len(members), len(rows), rows[0].f_measure)
    print(format_sweep(rows, args.top))
    return EXIT_OK


# --------------------------------------------------------------------------
# stats


def cmd_stats(args) -> int:
    report = {}
    if args.table:
        try:
            table = ScoreTable.from_csv(args.table)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        ranks = friedman_avg_ranks(table)
        for row, r in zip(table.rows, ranks.row_ranks):
            print(f"{row}: " + ", ".join(f"{m}={v:g}" for m, v in zip(table.columns, r)))
        print(format_ranks(ranks))
        report["ranks"] = {
            "rows": {row: dict(zip(table.columns, r.tolist())) for row, r in zip(table.rows, ranks.row_ranks)},
            "group_average": ranks.group_average,
            "overall": ranks.overall,
        }
        if args.wilcoxon:
            a_col, b_col = args.wilcoxon.split(",")
            try:
                ia, ib = table.columns.index(a_col), table.columns.index(b_col)
            except ValueError as exc:
                raise InputError(f"unknown column in --wilcoxon: {exc}") from exc
            res = wilcoxon_signed_rank(table.values[:, ia], table.values[:, ib], args.alternative,
                                       args.method, not args.no_continuity)
            print(f"Wilcoxon {a_col} vs {b_col} ({args.alternative}): statistic={res.statistic:g} "
                  f"p={res.p_value:.6g} n={res.n_effective} method={res.method.value}"
                  + (" degenerate" if res.degenerate else ""))
            report["wilcoxon"] = {"a": a_col, "b": b_col, "statistic": res.statistic, "p_value": res.p_value,
                                  "n_effective": res.n_effective, "method": res.method.value,
                                  "alternative": res.alternative, "degenerate": res.degenerate, "z": res.z}
    else:
        raise InputError("stats needs --table")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(report, out / "stats.json")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config; default 42)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default="egc_out", help="workspace directory")

    p = argparse.ArgumentParser(prog="egctex", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("extract", parents=[common], help="extract a feature CSV from an image dataset")

    run = sub.add_parser("run", parents=[common], help="cross-validate one configured pipeline")
    run.add_argument("--id", help="member id for the registry (default: derived from the config)")
    run.add_argument("--kind", choices=("H", "N"), default="H")

    imp = sub.add_parser("import-proba", parents=[common], help="register external probability outputs")
    imp.add_argument("--csv", required=True)
    imp.add_argument("--id", required=True)
    imp.add_argument("--kind", choices=("H", "N"), default="N")

    fuse = sub.add_parser("fuse", parents=[common], help="sweep all member subsets under the fusion rules")
    fuse.add_argument("--members", help="comma-separated member ids (default: all registered)")
    fuse.add_argument("--rules", default="sum,max,product")
    fuse.add_argument("--top", type=int, default=None)

    st = sub.add_parser("stats", parents=[common], help="average rankings and Wilcoxon tests")
    st.add_argument("--table", help="score table CSV (label column, optional 'group' column, methods)")
    st.add_argument("--wilcoxon", help="two method columns 'A,B' to compare")
    st.add_argument("--alternative", default="a_greater", choices=("a_greater", "a_less", "two_sided"))
    st.add_argument("--method", default="auto", choices=("auto", "exact", "normal"))
    st.add_argument("--no-continuity", action="store_true", help="drop the continuity correction (normal method)")
    return p


COMMANDS = {
    "extract": cmd_extract,
    "run": cmd_run,
    "import-proba": cmd_import_proba,
    "fuse": cmd_fuse,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="level=%(levelname)s logger=%(name)s %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ConfigError, DatasetError, ImageDecodeError, AlignmentError, ProbaImportError) as exc:
        log.error("event=input_error message=%r", str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.error("event=computation_failure type=%s message=%r", type(exc).__name__, str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
