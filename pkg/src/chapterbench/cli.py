"""Command-line entry point: reproducible runs over a shared run directory.

Exit codes: 0 success, 1 validation error (bad config, missing upstream
artifact), 2 runtime failure.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

import click

from . import analysis as an
from . import runio
from .config import ConfigError, RunConfig
from .contamination import run_ts_guessing
from .corpus import CorpusError, load_manifest, load_taxonomy, validate_corpus
from .dedup import DedupConfig, dedup_key, greedy_filter
from .evalharness import EvalRecord, aggregate, evaluate_model, taxonomy_violations
from .gateway import GatewayError
from .pipeline import (
    ChapterUnstructurable,
    PipelineEngine,
    RunLedger,
    candidate_to_task,
)
from .runio import RunLockError, RunPaths, run_lock
from .schema import SchemaError, read_tasks_jsonl, write_tasks_jsonl

VALIDATION_EXIT = 1
RUNTIME_EXIT = 2


def _fail_validation(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(VALIDATION_EXIT)


def _fail_runtime(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(RUNTIME_EXIT)


def _load_config(ctx: click.Context, extra_overrides: dict[str, Any] | None = None) -> RunConfig:
    params = ctx.obj
    overrides: dict[str, Any] = {}
    if params.get("run_id"):
        overrides["run_id"] = params["run_id"]
    if params.get("seed") is not None:
        overrides["seed"] = params["seed"]
    if extra_overrides:
        for key, value in extra_overrides.items():
            node = overrides
            *parents, leaf = key.split(".")
            for part in parents:
                node = node.setdefault(part, {})
            node[leaf] = value
    try:
        return RunConfig.load(params["config_path"], overrides)
    except ConfigError as exc:
        _fail_validation(str(exc))
        raise AssertionError  # unreachable


def _paths(config: RunConfig) -> RunPaths:
    return RunPaths(config.run_dir())


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        _fail_validation(f"missing upstream artifact {path} ({hint})")
    return path


def _load_corpus(config: RunConfig):
    try:
        taxonomy = load_taxonomy(config.taxonomy_path)
        chapters = load_manifest(config.manifest_path, taxonomy)
    except CorpusError as exc:
        _fail_validation(str(exc))
        raise AssertionError
    return taxonomy, chapters


def _snapshot_config(config: RunConfig, paths: RunPaths) -> None:
    runio.write_json(paths.config_snapshot, config.doc)


def _merge_cost(paths: RunPaths, current: dict[str, Any]) -> dict[str, Any]:
    """Accumulate provider usage across resumed invocations of a command."""
    merged = {model: dict(row) for model, row in current.get("per_model", {}).items()}
    if paths.ledger.exists():
        previous = json.loads(paths.ledger.read_text(encoding="utf-8")).get("cost", {})
        for model, row in previous.get("per_model", {}).items():
            target = merged.setdefault(model, {"input_tokens": 0, "output_tokens": 0, "usd": 0.0})
            for key in ("input_tokens", "output_tokens", "usd"):
                target[key] += row.get(key, 0)
    totals = {
        "input_tokens": sum(r["input_tokens"] for r in merged.values()),
        "output_tokens": sum(r["output_tokens"] for r in merged.values()),
        "usd": sum(r["usd"] for r in merged.values()),
    }
    return {"per_model": merged, "totals": totals}


@click.group()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run configuration JSON.")
@click.option("--run-id", default=None, help="Override the config-derived run id.")
@click.option("--seed", type=int, default=None, help="Override the run RNG seed.")
@click.pass_context
def main(ctx: click.Context, config_path: str, run_id: str | None, seed: int | None) -> None:
    """Chapter-grounded benchmark generation, evaluation, and analysis."""
    ctx.obj = {"config_path": config_path, "run_id": run_id, "seed": seed}


# ---------------------------------------------------------------------------


@main.command("structure")
@click.pass_context
def cmd_structure(ctx: click.Context) -> None:
    """Build and persist structured knowledge summaries for every chapter."""
    config = _load_config(ctx)
    paths = _paths(config)
    taxonomy, chapters = _load_corpus(config)
    try:
        with run_lock(paths):
            _snapshot_config(config, paths)
            report = validate_corpus(taxonomy, chapters)
            runio.write_json(paths.corpus_report, report.to_dict())
            for warning in report.warnings:
                click.echo(f"warning: {warning}")
            gateway, _ = config.build_gateway(embed_cache_path=paths.embed_cache)
            engine = PipelineEngine(
                gateway,
                "designer",
                "verifier",
                max_repairs=config.max_repairs,
                run_seed=config.seed,
                knowledge_dir=paths.knowledge_dir,
            )
            for chapter in chapters:
                try:
                    _, warnings = engine.structure_knowledge(chapter)
                except ChapterUnstructurable as exc:
                    click.echo(f"warning: {exc}")
                    continue
                for warning in warnings:
                    click.echo(f"warning: {chapter.key}: {warning}")
                click.echo(f"structured {chapter.key}")
    except RunLockError as exc:
        _fail_runtime(str(exc))
    except GatewayError as exc:
        _fail_runtime(str(exc))


@main.command("generate")
@click.option("--quota", type=int, default=None, help="Seeds per chapter-category.")
@click.option("--categories", default=None, help="Comma-separated bloom levels.")
@click.option("--max-repairs", type=int, default=None, help="Repair budget per candidate.")
@click.option("--mock-script", type=click.Path(), default=None, help="Mock provider script for designer+verifier.")
@click.option("--concurrency", type=int, default=None, help="Concurrent chapters.")
@click.pass_context
def cmd_generate(
    ctx: click.Context,
    quota: int | None,
    categories: str | None,
    max_repairs: int | None,
    mock_script: str | None,
    concurrency: int | None,
) -> None:
    """Run the full generate-then-verify pipeline over the corpus."""
    overrides: dict[str, Any] = {}
    if quota is not None:
        overrides["generation.quota"] = quota
    if categories is not None:
        overrides["generation.categories"] = [c.strip() for c in categories.split(",") if c.strip()]
    if max_repairs is not None:
        overrides["generation.max_repairs"] = max_repairs
    if concurrency is not None:
        overrides["generation.concurrency"] = concurrency
    if mock_script is not None:
        script = str(Path(mock_script).resolve())
        overrides["providers.designer"] = {"kind": "mock", "model_id": "mock-designer", "mock_script": script}
        overrides["providers.verifier"] = {"kind": "mock", "model_id": "mock-verifier", "mock_script": script}
    config = _load_config(ctx, overrides)
    paths = _paths(config)
    taxonomy, chapters = _load_corpus(config)
    try:
        with run_lock(paths):
            _snapshot_config(config, paths)
            gateway, _ = config.build_gateway(embed_cache_path=paths.embed_cache)
            engine = PipelineEngine(
                gateway,
                "designer",
                "verifier",
                max_repairs=config.max_repairs,
                run_seed=config.seed,
                exemplars=config.exemplars(),
                knowledge_dir=paths.knowledge_dir,
                audit_dir=paths.candidates_dir,
            )

            def run_one(chapter) -> None:
                if runio.load_chapter_result(paths, chapter.key) is not None:
                    click.echo(f"resume: chapter {chapter.key} already complete")
                    return
                try:
                    result = engine.run_chapter(chapter, config.quota, config.categories)
                except ChapterUnstructurable as exc:
                    click.echo(f"warning: skipping chapter: {exc}")
                    return
                runio.save_chapter_result(paths, result)
                click.echo(
                    f"chapter {chapter.key}: {len(result.accepted)} accepted, "
                    f"{len(result.discards)} discarded"
                )

            if config.concurrency > 1:
                with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
                    list(pool.map(run_one, chapters))
            else:
                for chapter in chapters:
                    run_one(chapter)

            # Assemble outputs in manifest order so runs are reproducible.
            total = RunLedger()
            tasks = []
            discard_rows = []
            counter = 1
            for chapter in chapters:
                state = runio.load_chapter_result(paths, chapter.key)
                if state is None:
                    continue
                for candidate in runio.loaded_candidates(state):
                    tasks.append(candidate_to_task(candidate, taxonomy, counter))
                    counter += 1
                total.merge(runio.loaded_ledger(state))
                for discard in runio.loaded_discards(state):
                    discard_rows.append(
                        {
                            "candidate_id": discard.candidate_id,
                            "bloom": discard.bloom.name,
                            "reason": discard.discard_reason,
                            "repairs": discard.repairs,
                            "diagnostic": discard.diagnostic,
                        }
                    )
            write_tasks_jsonl(tasks, paths.accepted)
            with paths.discards.open("w", encoding="utf-8") as handle:
                for row in discard_rows:
                    handle.write(json.dumps(row, ensure_ascii=False) + "\n")
            violations = total.violations()
            runio.write_json(
                paths.ledger,
                {
                    "counts": total.to_dict(),
                    "cost": _merge_cost(paths, gateway.ledger.to_dict()),
                    "violations": violations,
                },
            )
            if violations:
                _fail_runtime("ledger accounting identities violated: " + "; ".join(violations))
            click.echo(
                f"generated {total.seed_count} seeds -> {total.pass_first} pass@1, "
                f"{total.repaired} repaired, {total.discarded_retry} discarded (retry), "
                f"{total.discarded_transport} discarded (transport)"
            )
    except RunLockError as exc:
        _fail_runtime(str(exc))


@main.command("dedup")
@click.pass_context
def cmd_dedup(ctx: click.Context) -> None:
    """Remove near-duplicate accepted tasks within each chapter."""
    config = _load_config(ctx)
    paths = _paths(config)
    _require(paths.accepted, "run `generate` first")
    try:
        tasks = read_tasks_jsonl(paths.accepted)
    except SchemaError as exc:
        _fail_validation(str(exc))
    try:
        with run_lock(paths):
            gateway, _ = config.build_gateway(embed_cache_path=paths.embed_cache)
            embedder = gateway.provider("embedder")
            dedup_config = DedupConfig(threshold=config.dedup_threshold)
            retained_all = []
            removed_rows = []
            by_chapter: dict[tuple[str, str], list] = {}
            for task in tasks:
                by_chapter.setdefault((task.book_name, task.chapter_id), []).append(task)
            for group in by_chapter.values():
                keys = [dedup_key(task.as_candidate()) for task in group]
                embeddings = gateway.embed("embedder", keys)
                retained, removals = greedy_filter(group, embeddings, dedup_config)
                retained_all.extend(retained)
                for removal in removals:
                    removed_rows.append(
                        {
                            "task_id": group[removal.index].task_id,
                            "matched_task_id": group[removal.matched_index].task_id,
                            "similarity": round(removal.similarity, 6),
                        }
                    )
            order = {task.task_id: i for i, task in enumerate(tasks)}
            retained_all.sort(key=lambda task: order[task.task_id])
            write_tasks_jsonl(retained_all, paths.final)
            runio.write_json(
                paths.dedup_report,
                {
                    "threshold": config.dedup_threshold,
                    "embedder": embedder.model_id,
                    "input_count": len(tasks),
                    "retained_count": len(retained_all),
                    "removed_count": len(removed_rows),
                    "removed": removed_rows,
                },
            )
            if paths.ledger.exists():
                ledger_doc = json.loads(paths.ledger.read_text(encoding="utf-8"))
                counts = RunLedger.from_dict(ledger_doc.get("counts", {}))
                counts.dedup_removed = len(removed_rows)
                counts.recompute_final()
                ledger_doc["counts"] = counts.to_dict()
                ledger_doc["violations"] = counts.violations()
                runio.write_json(paths.ledger, ledger_doc)
            click.echo(f"dedup: retained {len(retained_all)}, removed {len(removed_rows)}")
    except (RunLockError, GatewayError) as exc:
        _fail_runtime(str(exc))


@main.command("evaluate")
@click.option("--model", "models", multiple=True, help="Subject provider name(s); default all configured.")
@click.pass_context
def cmd_evaluate(ctx: click.Context, models: tuple[str, ...]) -> None:
    """Query subject models on the deduplicated benchmark."""
    config = _load_config(ctx)
    paths = _paths(config)
    _require(paths.final, "run `dedup` first")
    tasks = read_tasks_jsonl(paths.final)
    try:
        with run_lock(paths):
            gateway, subjects = config.build_gateway(embed_cache_path=paths.embed_cache)
            chosen = list(models) if models else subjects
            if not chosen:
                _fail_validation("no subject models configured (providers.subjects)")
            template = config.eval_template()
            for name in chosen:
                model_id = gateway.provider(name).model_id
                records = evaluate_model(
                    gateway,
                    name,
                    tasks,
                    temperature=config.eval_temperature,
                    template=template,
                    records_path=paths.eval_records(model_id),
                )
                correct = sum(r.is_correct for r in records)
                click.echo(f"{model_id}: {correct}/{len(records)} correct ({correct / len(records):.3f})")
    except (RunLockError, GatewayError) as exc:
        _fail_runtime(str(exc))


@main.command("classify")
@click.option("--input", "input_path", required=True, type=click.Path(), help="External problems JSONL.")
@click.option("--benchmark-id", required=True, help="Name for this external benchmark.")
@click.pass_context
def cmd_classify(ctx: click.Context, input_path: str, benchmark_id: str) -> None:
    """Map external benchmark problems onto the taxonomy (two-stage)."""
    config = _load_config(ctx)
    paths = _paths(config)
    taxonomy, _ = _load_corpus(config)
    source = Path(input_path)
    if not source.exists():
        _fail_validation(f"input file does not exist: {source}")
    try:
        with run_lock(paths):
            gateway, _ = config.build_gateway(embed_cache_path=paths.embed_cache)
            cache_path = paths.classify_dir / f"cache_{runio.safe_filename(benchmark_id)}.json"
            cache: dict[str, list[str]] = {}
            if cache_path.exists():
                cache = json.loads(cache_path.read_text(encoding="utf-8"))
            out_path = paths.classify_dir / f"{runio.safe_filename(benchmark_id)}.jsonl"
            rows = []
            with source.open("r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    doc = json.loads(line)
                    text = str(doc.get("task_statement") or doc.get("text") or "")
                    if not text:
                        _fail_validation("classify input rows need 'task_statement' or 'text'")
                    problem_id = str(doc.get("task_id") or doc.get("id") or an.problem_hash(text))
                    key = an.problem_hash(text)
                    if key not in cache:
                        area_id, competency_id = an.classify_external_problem(text, taxonomy, gateway, "classifier")
                        cache[key] = [area_id, competency_id]
                        runio.write_json(cache_path, cache)
                    rows.append(
                        {
                            "id": problem_id,
                            "problem_hash": key,
                            "area_id": cache[key][0],
                            "competency_id": cache[key][1],
                        }
                    )
            out_path.parent.mkdir(parents=True, exist_ok=True)
            with out_path.open("w", encoding="utf-8") as handle:
                for row in rows:
                    handle.write(json.dumps(row, ensure_ascii=False) + "\n")
            click.echo(f"classified {len(rows)} problems -> {out_path}")
    except (RunLockError, GatewayError, an.ClassificationError) as exc:
        _fail_runtime(str(exc))


@main.command("analyze")
@click.option("--fraction", type=float, default=None, help="Uniform review-sample fraction.")
@click.pass_context
def cmd_analyze(ctx: click.Context, fraction: float | None) -> None:
    """Compute coverage, difficulty, separability, and profiling tables."""
    config = _load_config(ctx)
    paths = _paths(config)
    taxonomy, _ = _load_corpus(config)
    _require(paths.final, "run `dedup` first")
    tasks = read_tasks_jsonl(paths.final)
    if not paths.eval_dir.exists() or not any(paths.eval_dir.glob("*.jsonl")):
        _fail_validation(f"no evaluation records under {paths.eval_dir} (run `evaluate` first)")
    try:
        with run_lock(paths):
            for task in tasks:
                for warning in taxonomy_violations(task, taxonomy):
                    click.echo(f"warning: {warning}")
            records: list[EvalRecord] = []
            for record_file in sorted(paths.eval_dir.glob("*.jsonl")):
                with record_file.open("r", encoding="utf-8") as handle:
                    for line in handle:
                        line = line.strip()
                        if line:
                            records.append(EvalRecord.from_dict(json.loads(line)))
            table = aggregate(records, tasks, taxonomy)
            runio.write_csv(paths.analysis_dir / "slices.csv", table.to_csv_rows())
            runio.write_json(paths.analysis_dir / "accuracy.json", table.to_dict())

            overall = table.model_vector("overall")
            spearman_rows: list[list[Any]] = [["competency", "spearman"]]
            if len(overall) >= 2:
                per_competency = {}
                for slice_name in table.slices():
                    if slice_name.startswith("competency:"):
                        vector = table.model_vector(slice_name)
                        if set(vector) == set(overall):
                            per_competency[slice_name.split(":", 1)[1]] = vector
                profile = an.correlation_profile(overall, per_competency)
                for competency in sorted(profile):
                    value = profile[competency]
                    spearman_rows.append([competency, "" if value is None else f"{value:.6f}"])
            else:
                click.echo("note: fewer than 2 subject models; spearman profile is undefined")
            runio.write_csv(paths.analysis_dir / "spearman.csv", spearman_rows)

            entropy_rows: list[list[Any]] = [
                ["benchmark", "normalized_entropy", "difficulty", "separability", "size"]
            ]
            ours = an.distribution_from_labels([t.competency for t in tasks], taxonomy)
            entropy_rows.append(
                [
                    "ours",
                    f"{an.normalized_entropy(ours):.6f}",
                    f"{an.difficulty(overall):.6f}" if overall else "",
                    f"{an.separability(overall):.6f}" if overall else "",
                    len(tasks),
                ]
            )
            if paths.classify_dir.exists():
                for classified in sorted(paths.classify_dir.glob("*.jsonl")):
                    labels = [
                        str(json.loads(line)["competency_id"])
                        for line in classified.read_text(encoding="utf-8").splitlines()
                        if line.strip()
                    ]
                    if not labels:
                        continue
                    distribution = an.distribution_from_labels(labels, taxonomy)
                    entropy_rows.append(
                        [classified.stem, f"{an.normalized_entropy(distribution):.6f}", "", "", len(labels)]
                    )
            runio.write_csv(paths.analysis_dir / "entropy.csv", entropy_rows)

            incorrect_by_task: dict[str, set[str]] = {}
            for record in records:
                if not record.is_correct:
                    incorrect_by_task.setdefault(record.task_id, set()).add(record.model_id)
            frontier = set(config.frontier_models) or set(overall)
            samples = an.select_review_samples(
                [t.task_id for t in tasks],
                incorrect_by_task,
                frontier_models=frontier,
                fraction=fraction if fraction is not None else config.review_fraction,
                rng_seed=config.seed,
            )
            runio.write_json(paths.analysis_dir / "samples.json", samples)
            click.echo(f"analysis written under {paths.analysis_dir}")
    except (RunLockError, an.MetricError) as exc:
        _fail_runtime(str(exc))


@main.command("tsguess")
@click.option("--model", "models", multiple=True, help="Subject provider name(s); default all configured.")
@click.pass_context
def cmd_tsguess(ctx: click.Context, models: tuple[str, ...]) -> None:
    """Run the masked-option contamination probe."""
    config = _load_config(ctx)
    paths = _paths(config)
    _require(paths.final, "run `dedup` first")
    tasks = read_tasks_jsonl(paths.final)
    try:
        with run_lock(paths):
            gateway, subjects = config.build_gateway(embed_cache_path=paths.embed_cache)
            chosen = list(models) if models else subjects
            if not chosen:
                _fail_validation("no subject models configured (providers.subjects)")
            for name in chosen:
                result = run_ts_guessing(
                    gateway, name, tasks, rng_seed=config.seed, out_dir=paths.tsguess_dir
                )
                click.echo(
                    f"{result.model_id}: rate {result.rate:.4f} "
                    f"({result.matched_count}/{result.eligible_count} eligible)"
                )
    except (RunLockError, GatewayError) as exc:
        _fail_runtime(str(exc))


@main.command("ledger")
@click.pass_context
def cmd_ledger(ctx: click.Context) -> None:
    """Print the run's seed accounting and provider cost tables."""
    config = _load_config(ctx)
    paths = _paths(config)
    _require(paths.ledger, "run `generate` first")
    doc = json.loads(paths.ledger.read_text(encoding="utf-8"))
    counts = RunLedger.from_dict(doc.get("counts", {}))
    click.echo("seed accounting:")
    for key, value in counts.to_dict().items():
        click.echo(f"  {key}: {value}")
    violations = counts.violations()
    if violations:
        _fail_runtime("ledger identities violated: " + "; ".join(violations))
    cost = doc.get("cost", {})
    click.echo("cost:")
    for model, row in sorted(cost.get("per_model", {}).items()):
        click.echo(
            f"  {model}: in={int(row['input_tokens']):,} out={int(row['output_tokens']):,} usd={row['usd']:.2f}"
        )
    totals = cost.get("totals", {})
    if totals:
        click.echo(
            f"  TOTAL: in={int(totals['input_tokens']):,} out={int(totals['output_tokens']):,} "
            f"usd={totals['usd']:.2f}"
        )
    click.echo("ok: accounting identities hold")


if __name__ == "__main__":
    main()
