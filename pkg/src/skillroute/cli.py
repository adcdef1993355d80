"""Command-line interface driving the full pipeline.

Subcommands: generate, boundary, audit (sample/apply), split, stats, train,
tune-thresholds, eval, baseline, compare, latency, fleet (add/list/rm), route,
serve. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from skillroute import baseline as baseline_mod
from skillroute import datagen, evaluation
from skillroute.config import load_service_config
from skillroute.core import (
    DOMAINS,
    SKILLS,
    SkillrouteError,
    SkillVector,
    dataset_stats,
    read_dataset,
    stratified_split,
    write_dataset,
)
from skillroute.fleet import DEFAULT_REVIEW_THRESHOLD, FleetState, RobotSpec, route_task
from skillroute.providers import CannedChatClient, HttpChatClient, ProviderProfile


def _write_json(path: str | Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _profile_from_args(args) -> ProviderProfile:
    return ProviderProfile(
        name=args.provider_name,
        model=args.model,
        temperature=args.temperature,
        max_output_tokens=args.max_output_tokens,
        max_attempts=args.max_attempts,
        base_backoff_s=args.backoff,
        timeout_s=args.timeout,
        endpoint=args.endpoint,
    )


def _client_from_args(args):
    if args.canned_file:
        responses = json.loads(Path(args.canned_file).read_text(encoding="utf-8"))
        if not isinstance(responses, list):
            raise SkillrouteError("canned file must hold a JSON array of response strings")
        return CannedChatClient([str(r) for r in responses])
    return HttpChatClient()


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("provider")
    group.add_argument("--provider-name", default="provider", help="provider label; becomes record source")
    group.add_argument("--model", default="", help="provider-side model identifier")
    group.add_argument("--temperature", type=float, default=0.7, help="decode temperature")
    group.add_argument("--max-output-tokens", type=int, default=2048, help="response length cap")
    group.add_argument("--max-attempts", type=int, default=3, help="attempts before giving up")
    group.add_argument("--backoff", type=float, default=1.0, help="base backoff seconds")
    group.add_argument("--timeout", type=float, default=60.0, help="per-call timeout seconds")
    group.add_argument("--endpoint", default=None, help="override SKILLROUTE_LLM_API_BASE")
    group.add_argument(
        "--canned-file",
        default=None,
        help="JSON array of scripted responses; replaces the HTTP client (offline runs)",
    )


def _load_existing(path: Path, append: bool):
    if append and path.exists():
        return read_dataset(path)
    return []


def _extend_run_report(report_path: Path, batch: dict, dedupe_counts: dict) -> None:
    if report_path.exists():
        payload = json.loads(report_path.read_text(encoding="utf-8"))
    else:
        payload = {"batches": []}
    payload["batches"].append(batch)
    payload["dedupe"] = dedupe_counts
    _write_json(report_path, payload)


# -- data commands ------------------------------------------------------


def cmd_generate(args) -> int:
    out = Path(args.out)
    existing = _load_existing(out, args.append)
    context = list(existing)
    if args.context:
        context = read_dataset(args.context)
    profile = _profile_from_args(args)
    spec = datagen.GenerationBatchSpec(
        provider=profile,
        count=args.count,
        domains=tuple(args.domains.split(",")) if args.domains else DOMAINS,
        context=tuple(context),
        seed=args.seed,
        id_start=len(existing),
    )
    outcome = datagen.generate_tasks(spec, _client_from_args(args))
    combined = list(existing) + list(outcome.records)
    if args.dedupe_threshold > 0:
        kept, dropped = datagen.dedupe(combined, threshold=args.dedupe_threshold)
    else:
        kept, dropped = combined, []
    write_dataset(kept, out)
    _extend_run_report(
        Path(args.run_report or f"{out}.run.json"),
        outcome.to_dict(),
        {"kept": len(kept), "dropped": len(dropped)},
    )
    print(
        f"generated {outcome.parsed} records ({outcome.dropped} dropped lines); "
        f"dataset now {len(kept)} records at {out}"
    )
    return 0


def cmd_boundary(args) -> int:
    skill_a, skill_b = (part.strip() for part in args.pair.split(",", 1))
    out = Path(args.out)
    existing = _load_existing(out, args.append)
    spec = datagen.BoundarySpec(
        skill_a=skill_a,
        skill_b=skill_b,
        a_only=args.a_only,
        b_only=args.b_only,
        both=args.both,
        cue_a=args.cue_a,
        cue_b=args.cue_b,
        cue_both=args.cue_both,
        seed=args.seed,
        id_start=len(existing),
    )
    outcome = datagen.generate_boundary_tasks(spec, _profile_from_args(args), _client_from_args(args))
    combined = list(existing) + list(outcome.records)
    if args.dedupe_threshold > 0:
        kept, dropped = datagen.dedupe(combined, threshold=args.dedupe_threshold)
    else:
        kept, dropped = combined, []
    write_dataset(kept, out)
    _extend_run_report(
        Path(args.run_report or f"{out}.run.json"),
        outcome.to_dict(),
        {"kept": len(kept), "dropped": len(dropped)},
    )
    print(
        f"boundary batch for ({spec.skill_a}, {spec.skill_b}): {outcome.parsed} records; "
        f"dataset now {len(kept)} records at {out}"
    )
    return 0


def cmd_audit_sample(args) -> int:
    records = read_dataset(args.dataset)
    sample = datagen.sample_for_audit(records, args.n, args.seed)
    datagen.write_audit_worksheet(sample, args.worksheet)
    print(f"wrote {len(sample)} tasks to {args.worksheet}; edit verdicts, then run audit apply")
    return 0


def cmd_audit_apply(args) -> int:
    records = read_dataset(args.dataset)
    decisions = datagen.read_audit_worksheet(args.worksheet)
    kept, summary = datagen.apply_audit(records, decisions)
    write_dataset(kept, args.out)
    print(
        f"audit applied: {summary.accepted} accepted, {summary.rejected} rejected, "
        f"{summary.relabeled} relabeled, {summary.unreviewed} unreviewed; "
        f"{len(kept)} records at {args.out}"
    )
    return 0


def cmd_split(args) -> int:
    records = read_dataset(args.dataset)
    train, test = stratified_split(records, args.test_count, args.seed)
    by_id = {r.id: r for r in train + test}
    write_dataset([by_id[r.id] for r in records], args.out)
    print(f"split {len(records)} records into {len(train)} train / {len(test)} test at {args.out}")
    return 0


def cmd_stats(args) -> int:
    records = read_dataset(args.dataset)
    stats = dataset_stats(records)
    print(f"records: {stats.total}")
    print("per-skill positives:")
    for name in SKILLS:
        print(f"  {name:<14} {stats.skill_positive[name]:>6}  (negatives {stats.skill_negative[name]})")
    print(f"skill combinations: {stats.combination_count} distinct")
    for combo, count in sorted(stats.combination_histogram.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"  {combo:<40} {count:>6}")
    print("domains:")
    for domain, count in sorted(stats.domain_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"  {domain:<30} {count:>6}")
    sp = stats.split_counts
    print(f"splits: train {sp['train']} / test {sp['test']} / unassigned {sp['unassigned']}")
    if args.json:
        _write_json(args.json, stats.to_dict())
    if args.figures:
        from skillroute.figures import render_dataset_figures

        paths = render_dataset_figures(stats, args.figures)
        print("figures: " + ", ".join(str(p) for p in paths))
    return 0


# -- model commands ---------------------------------------------------------


def _build_backend_from_args(args):
    from skillroute.model import HashingBackend, TransformerBackend

    if args.backend == "hashing":
        return HashingBackend(dim=args.hash_dim, max_tokens=args.max_tokens)
    if args.backend == "transformer":
        if not args.model_name:
            raise SkillrouteError("--model-name is required for the transformer backend")
        return TransformerBackend(args.model_name, max_tokens=args.max_tokens)
    raise SkillrouteError(f"unknown backend {args.backend!r}")


def _train_records(records):
    tagged = [r for r in records if r.split == "train"]
    return tagged if tagged else list(records)


def cmd_train(args) -> int:
    from skillroute.model import save_bundle
    from skillroute.training import TrainConfig, train_member, tune_thresholds

    records = _train_records(read_dataset(args.dataset))
    config = TrainConfig(
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch_size,
        head_lr=args.head_lr,
        encoder_lr=args.encoder_lr,
        unfrozen_blocks=args.unfrozen_blocks,
        dropout=args.dropout,
        inner_val_fraction=args.inner_val_fraction,
        patience=args.patience,
        weight_decay=args.weight_decay,
        tune_thresholds=args.tune_thresholds,
        threshold_grid_step=args.threshold_grid_step,
        pos_weight_min=args.pos_weight_min,
        pos_weight_max=args.pos_weight_max,
    )
    backend = _build_backend_from_args(args)
    model, report = train_member(config, records, backend)
    if config.tune_thresholds:
        inner_count = max(1, round(config.inner_val_fraction * len(records)))
        _, inner_records = stratified_split(records, inner_count, seed=config.seed)
        tuned = tune_thresholds(model, inner_records, step=config.threshold_grid_step)
        model.thresholds = tuned.thresholds
        print(f"tuned thresholds: {[round(t, 3) for t in tuned.thresholds]}")
    save_bundle(model, args.bundle_out)
    _write_json(Path(args.bundle_out) / "train_report.json", report.to_dict())
    print(
        f"trained on {len(records)} records: best inner EM {report.best_inner_em:.3f} "
        f"at epoch {report.best_epoch}/{report.epochs_run} "
        f"({report.wall_time_s:.1f}s); bundle at {args.bundle_out}"
    )
    for warning in report.pos_weight_warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.figures:
        from skillroute.figures import render_training_figures

        paths = render_training_figures(report, args.figures)
        print("figures: " + ", ".join(str(p) for p in paths))
    return 0


def cmd_tune_thresholds(args) -> int:
    from skillroute.model import load_bundle, save_bundle
    from skillroute.training import threshold_comparison, tune_thresholds

    model = load_bundle(args.bundle)
    records = read_dataset(args.dataset)
    tuned = tune_thresholds(model, records, step=args.step)
    print(json.dumps(tuned.to_dict(), indent=2))
    if args.out:
        model.thresholds = tuned.thresholds
        save_bundle(model, args.out)
        print(f"bundle with tuned thresholds at {args.out}")
    if args.heldout:
        comparison = threshold_comparison(model, read_dataset(args.heldout), tuned.thresholds)
        print(
            f"held-out exact match: fixed-0.5 {comparison['exact_match_fixed_0.5']:.3f} "
            f"vs tuned {comparison['exact_match_tuned']:.3f} (n={comparison['n']})"
        )
    return 0


def _predict_rows(model, records):
    rows = []
    for record in records:
        result = model.predict(record.text)
        rows.append(
            evaluation.PredictionRow(
                record=record, predicted=result.skills, probabilities=result.probabilities
            )
        )
    return rows


def cmd_eval(args) -> int:
    if args.predictions:
        rows = evaluation.read_predictions(args.predictions)
        name = args.name or Path(args.predictions).stem
    else:
        if not (args.bundle and args.dataset):
            raise SkillrouteError("eval needs either --predictions or both --bundle and --dataset")
        from skillroute.model import load_bundle

        model = load_bundle(args.bundle)
        records = read_dataset(args.dataset)
        rows = _predict_rows(model, records)
        name = args.name or model.name
    truths = [row.record.skills for row in rows]
    preds = [row.predicted for row in rows]
    report = evaluation.metrics_report(truths, preds)
    boundary = evaluation.mine_boundary_errors(truths, preds)
    print(evaluation.compare_models({name: report}))
    weakest = datagen.select_weakest_boundary(boundary)
    if weakest:
        pair_count = boundary.pair_counts[weakest]
        print(
            f"weakest boundary: {weakest[0]} vs {weakest[1]} "
            f"({pair_count} of {boundary.total_errors} errored tasks)"
        )
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        evaluation.write_predictions(rows, out / "predictions.jsonl")
        _write_json(out / "metrics.json", report.to_dict())
        _write_json(out / "boundary.json", boundary.to_dict())
        (out / "metrics.txt").write_text(
            evaluation.compare_models({name: report}) + "\n", encoding="utf-8"
        )
        print(f"reports written to {out}")
    return 0


def cmd_baseline(args) -> int:
    records = read_dataset(args.dataset)
    config = baseline_mod.BaselineConfig(
        provider=_profile_from_args(args), max_parallel=args.max_parallel
    )
    run = baseline_mod.run_baseline(config, records, _client_from_args(args))
    name = args.name or f"{config.provider.name} (zero-shot)"
    print(evaluation.compare_models({name: run.report}))
    print(
        f"parse errors: {run.parse_errors} / {len(records)}; "
        f"transport failures: {run.transport_failures}; template {baseline_mod.template_hash()}"
    )
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        baseline_mod.write_exchange_log(run.exchanges, out / "exchanges.jsonl")
        rows = [
            evaluation.PredictionRow(record=r, predicted=p, probabilities=tuple(float(b) for b in p.bits))
            for r, p in zip(records, run.predictions)
        ]
        evaluation.write_predictions(rows, out / "predictions.jsonl")
        _write_json(out / "metrics.json", run.report.to_dict())
        print(f"baseline artifacts written to {out}")
    return 0


def cmd_compare(args) -> int:
    reports = {}
    for item in args.report:
        name, _, path = item.partition("=")
        if not path:
            raise SkillrouteError(f'--report expects NAME=PATH, got "{item}"')
        reports[name] = evaluation.MetricsReport.from_dict(
            json.loads(Path(path).read_text(encoding="utf-8"))
        )
    table = evaluation.compare_models(reports)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    return 0


def cmd_latency(args) -> int:
    from skillroute.model import load_bundle

    model = load_bundle(args.bundle)
    records = read_dataset(args.dataset)
    texts = [r.text for r in records[: args.limit]] if args.limit else [r.text for r in records]
    report = evaluation.measure_latency(lambda t: model.predict(t), texts, warmup=args.warmup)
    print(
        f"latency over {report.count} samples (sequential, no batching): "
        f"median {report.median_ms:.2f} ms, p95 {report.p95_ms:.2f} ms, "
        f"mean {report.mean_ms:.2f} ms; failures {report.failures}"
    )
    if args.json:
        _write_json(args.json, report.to_dict())
    return 0


# -- fleet and routing ----------------------------------------------------


def _load_fleet(path: str, journal: str | None = None) -> FleetState:
    fleet_path = Path(path)
    if not fleet_path.exists():
        return FleetState(journal_path=journal)
    return FleetState.load(fleet_path, journal)


def cmd_fleet_add(args) -> int:
    fleet = _load_fleet(args.fleet)
    names = [s for s in args.skills.split(",") if s.strip()] if args.skills else []
    robot = RobotSpec(
        id=args.id,
        type=args.type,
        skills=SkillVector.from_names(names),
        available=not args.unavailable,
    )
    fleet.add_robot(robot)
    fleet.save_registry(args.fleet)
    print(f"added robot {robot.id} ({robot.type or 'untyped'}) with skills {list(robot.skills.to_names())}")
    return 0


def cmd_fleet_list(args) -> int:
    fleet = _load_fleet(args.fleet, args.journal)
    robots = fleet.robots()
    if not robots:
        print("fleet is empty")
        return 0
    for robot in robots:
        state = "available" if robot.available else "busy"
        skills = "+".join(robot.skills.to_names()) or "(none)"
        print(f"{robot.id:<12} {robot.type:<14} {skills:<40} {state}")
    return 0


def cmd_fleet_rm(args) -> int:
    fleet = _load_fleet(args.fleet)
    fleet.remove_robot(args.id)
    fleet.save_registry(args.fleet)
    print(f"removed robot {args.id}")
    return 0


def cmd_route(args) -> int:
    from skillroute.service import load_models

    model = load_models(args.bundle)
    fleet = _load_fleet(args.fleet, args.journal)
    decision = route_task(args.text, model, fleet, review_threshold=args.review_threshold)
    print(json.dumps(decision.to_dict(), indent=2, ensure_ascii=False))
    return 0


def cmd_serve(args) -> int:
    from skillroute.service import serve

    config = load_service_config(
        args.config,
        host=args.host,
        port=args.port,
        bundles=tuple(args.bundle) if args.bundle else None,
        fleet_path=args.fleet,
        journal_path=args.journal,
        review_threshold=args.review_threshold,
        log_level=args.log_level,
    )
    serve(config)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillroute",
        description="Task-to-skill prediction and robot fleet routing toolkit.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        p.set_defaults(fn=fn)
        return p

    p = add("generate", cmd_generate, "generate one synthetic task batch")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--count", type=int, default=100, help="tasks to request")
    p.add_argument("--domains", default="", help="comma-separated domain subset (default: all)")
    p.add_argument("--seed", type=int, default=0, help="context sampling seed")
    p.add_argument("--context", default=None, help="dataset file used as prompt context")
    p.add_argument("--append", action="store_true", help="append to --out; existing records become context")
    p.add_argument("--dedupe-threshold", type=float, default=0.9, help="token-set Jaccard cutoff; 0 disables")
    p.add_argument("--run-report", default=None, help="run report path (default <out>.run.json)")
    _add_provider_flags(p)

    p = add("boundary", cmd_boundary, "generate a boundary disambiguation batch")
    p.add_argument("--pair", required=True, help='skill pair, e.g. "legs,wheels"')
    p.add_argument("--a-only", type=int, default=0, help="tasks needing only the first skill")
    p.add_argument("--b-only", type=int, default=0, help="tasks needing only the second skill")
    p.add_argument("--both", type=int, default=0, help="tasks needing both skills")
    p.add_argument("--cue-a", default="", help="wording guidance for the a-only arm")
    p.add_argument("--cue-b", default="", help="wording guidance for the b-only arm")
    p.add_argument("--cue-both", default="", help="wording guidance for the both arm")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--seed", type=int, default=0, help="context sampling seed")
    p.add_argument("--append", action="store_true", help="append to --out")
    p.add_argument("--dedupe-threshold", type=float, default=0.9, help="token-set Jaccard cutoff; 0 disables")
    p.add_argument("--run-report", default=None, help="run report path (default <out>.run.json)")
    _add_provider_flags(p)

    audit = sub.add_parser("audit", help="sample an audit worksheet / apply its verdicts")
    audit_sub = audit.add_subparsers(dest="audit_command", required=True)
    p = audit_sub.add_parser("sample", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.set_defaults(fn=cmd_audit_sample)
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", type=int, default=100, help="tasks to sample for review")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--worksheet", required=True, help="worksheet file to write")
    p = audit_sub.add_parser("apply", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.set_defaults(fn=cmd_audit_apply)
    p.add_argument("--dataset", required=True)
    p.add_argument("--worksheet", required=True)
    p.add_argument("--out", required=True, help="dataset file to write after applying verdicts")

    p = add("split", cmd_split, "assign stratified train/test split tags")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-count", type=int, default=200, help="records in the test split")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--out", required=True)

    p = add("stats", cmd_stats, "dataset statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--json", default=None, help="also write stats as JSON")
    p.add_argument("--figures", default=None, help="directory for stats figures (PNG)")

    p = add("train", cmd_train, "train one member model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bundle-out", required=True, help="bundle directory to write")
    p.add_argument("--backend", choices=("hashing", "transformer"), default="hashing")
    p.add_argument("--model-name", default=None, help="checkpoint name for the transformer backend")
    p.add_argument("--hash-dim", type=int, default=256, help="hashing backend dimension")
    p.add_argument("--max-tokens", type=int, default=256, help="backend truncation length")
    p.add_argument("--seed", type=int, default=0, help="run seed (init, split, batches, dropout)")
    p.add_argument("--epochs", type=int, default=200, help="maximum epochs")
    p.add_argument("--batch-size", type=int, default=32, help="records per batch")
    p.add_argument("--head-lr", type=float, default=1e-3, help="classifier head learning rate")
    p.add_argument("--encoder-lr", type=float, default=2e-5, help="unfrozen-block learning rate")
    p.add_argument("--unfrozen-blocks", type=int, default=2, help="top transformer blocks to unfreeze")
    p.add_argument("--dropout", type=float, default=0.3, help="head dropout rate")
    p.add_argument("--inner-val-fraction", type=float, default=0.15, help="inner validation share")
    p.add_argument("--patience", type=int, default=20, help="epochs without inner-EM gain before stopping")
    p.add_argument("--weight-decay", type=float, default=0.01, help="decoupled weight decay")
    p.add_argument("--pos-weight-min", type=float, default=0.1, help="class weight clamp floor")
    p.add_argument("--pos-weight-max", type=float, default=100.0, help="class weight clamp ceiling")
    p.add_argument("--tune-thresholds", action="store_true", help="tune per-skill thresholds on the inner split")
    p.add_argument("--threshold-grid-step", type=float, default=0.05, help="tuning grid step")
    p.add_argument("--figures", default=None, help="directory for training curve figures (PNG)")

    p = add("tune-thresholds", cmd_tune_thresholds, "grid-tune per-skill thresholds for a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--dataset", required=True, help="tuning split (e.g. inner validation records)")
    p.add_argument("--step", type=float, default=0.05, help="threshold grid step")
    p.add_argument("--out", default=None, help="write a bundle copy carrying the tuned thresholds")
    p.add_argument("--heldout", default=None, help="dataset for a fixed-0.5 vs tuned comparison")

    p = add("eval", cmd_eval, "score a bundle or a predictions file")
    p.add_argument("--bundle", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--predictions", default=None, help="re-score an existing predictions file")
    p.add_argument("--name", default=None, help="row label in the report")
    p.add_argument("--out-dir", default=None, help="write predictions + reports here")

    p = add("baseline", cmd_baseline, "run the zero-shot LLM baseline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--name", default=None, help="row label in the report")
    p.add_argument("--max-parallel", type=int, default=2, help="concurrent provider calls")
    p.add_argument("--out-dir", default=None, help="write exchange log + predictions + metrics here")
    _add_provider_flags(p)

    p = add("compare", cmd_compare, "render a comparison table from metrics files")
    p.add_argument("--report", action="append", required=True, metavar="NAME=PATH",
                   help="metrics.json with a display name; repeatable")
    p.add_argument("--out", default=None, help="also write the table to a file")

    p = add("latency", cmd_latency, "time single-sample predictions")
    p.add_argument("--bundle", required=True)
    p.add_argument("--dataset", required=True, help="texts come from this dataset")
    p.add_argument("--limit", type=int, default=50, help="max texts to time; 0 = all")
    p.add_argument("--warmup", type=int, default=3, help="untimed warmup calls")
    p.add_argument("--json", default=None, help="also write the latency report as JSON")

    fleet = sub.add_parser("fleet", help="manage the robot registry")
    fleet_sub = fleet.add_subparsers(dest="fleet_command", required=True)
    p = fleet_sub.add_parser("add", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.set_defaults(fn=cmd_fleet_add)
    p.add_argument("--fleet", required=True, help="fleet registry file")
    p.add_argument("--id", required=True)
    p.add_argument("--type", default="", help="free-text robot type")
    p.add_argument("--skills", default="", help="comma-separated skill names")
    p.add_argument("--unavailable", action="store_true", help="register as busy")
    p = fleet_sub.add_parser("list", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.set_defaults(fn=cmd_fleet_list)
    p.add_argument("--fleet", required=True)
    p.add_argument("--journal", default=None, help="replay this assignment journal")
    p = fleet_sub.add_parser("rm", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.set_defaults(fn=cmd_fleet_rm)
    p.add_argument("--fleet", required=True)
    p.add_argument("--id", required=True)

    p = add("route", cmd_route, "route one task text against a fleet")
    p.add_argument("--bundle", action="append", required=True, help="model bundle; repeat to ensemble")
    p.add_argument("--fleet", required=True)
    p.add_argument("--journal", default=None, help="append assignment transitions here")
    p.add_argument("--text", required=True)
    p.add_argument("--review-threshold", type=float, default=DEFAULT_REVIEW_THRESHOLD)

    p = add("serve", cmd_serve, "run the HTTP service")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--bundle", action="append", default=None, help="model bundle; repeat to ensemble")
    p.add_argument("--fleet", default=None)
    p.add_argument("--journal", default=None)
    p.add_argument("--review-threshold", type=float, default=None)
    p.add_argument("--log-level", default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SkillrouteError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
