"""Command-line interface: run simulations, serve sessions, analyze logs.

Every command exits 0 on success and nonzero with one machine-readable
JSON error line on stderr on failure. All randomness is governed by the
config file or --seed.
"""
from __future__ import annotations

import json
import sys
import threading
import time
from pathlib import Path

import click

from .errors import ReplayIntegrityError, StorynetError
from .eventlog import read_log, validate_log
from .metrics.embedding import (
    EmbeddingEndpointConfig,
    fetch_embeddings,
    load_embeddings,
    pca_project,
    save_embeddings,
    write_coordinates_csv,
)
from .metrics.ratings import ingest_ratings, rating_summary, write_summary_csv
from .metrics.timeline import (
    diversity_timeline,
    term_dynamics,
    write_gains_csv,
    write_per_network_csv,
    write_term_chains_csv,
    write_timeline_csv,
)
from .metrics.vectorize import TFIDF_FORMULA
from .mock_llm import MockLLMServer
from .orchestrator import ExperimentRunner, RunConfig
from .service import RatingCorpus, RatingStore, SessionService, create_app


def _fail(error: Exception, kind: str | None = None) -> None:
    payload = {"error": kind or type(error).__name__, "message": str(error)}
    if isinstance(error, ReplayIntegrityError):
        payload["index"] = error.index
    click.echo(json.dumps(payload), err=True)
    sys.exit(1)


def _emit(payload: dict) -> None:
    click.echo(json.dumps(payload))


@click.group()
def main() -> None:
    """Iterated creative transmission in grid social networks."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "log_path", default="run.jsonl", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the config rng_seed.")
def run(config_path: str, log_path: str, seed: int | None) -> None:
    """Execute an experiment from a TOML config and write the event log."""
    try:
        config = RunConfig.from_toml(config_path)
        if seed is not None:
            config = config.with_seed(seed)
        runner = ExperimentRunner(config, log_path)
        runner.run()
        summary = validate_log(log_path)
        _emit({"run_id": summary["run_id"], "log": log_path, "records": summary["records"]})
    except StorynetError as exc:
        _fail(exc)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--log", "log_path", required=True)
@click.option("--seed", type=int, default=None)
def resume(config_path: str, log_path: str, seed: int | None) -> None:
    """Continue an interrupted run from its event log."""
    try:
        config = RunConfig.from_toml(config_path)
        if seed is not None:
            config = config.with_seed(seed)
        ExperimentRunner(config, log_path).resume()
        summary = validate_log(log_path)
        _emit({"run_id": summary["run_id"], "log": log_path, "records": summary["records"]})
    except StorynetError as exc:
        _fail(exc)


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=False))
def validate(log_path: str) -> None:
    """Replay-integrity check; prints the offending line index on failure."""
    try:
        _emit(validate_log(log_path))
    except StorynetError as exc:
        _fail(exc)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Run config for a live experiment (enables task claiming).")
@click.option("--log", "log_path", default="run.jsonl", show_default=True)
@click.option("--rate-logs", "rate_logs", multiple=True, type=click.Path(exists=True),
              help="Completed logs forming the rating corpus.")
@click.option("--ratings-out", default="ratings.csv", show_default=True)
@click.option("--manifest-out", default=None, help="Write the story provenance manifest CSV.")
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Static directory with the participant UI bundle.")
@click.option("--host", envvar="STORYNET_HOST", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="STORYNET_PORT", default=8080, show_default=True, type=int)
@click.option("--admin-key", envvar="STORYNET_ADMIN_KEY", default=None)
def serve(config_path, log_path, rate_logs, ratings_out, manifest_out, ui_dir, host, port, admin_key):
    """Serve the participant session API (and optionally the UI bundle)."""
    try:
        import uvicorn

        from .agents import HumanTaskPool

        pool = None
        runner = None
        runner_thread = None
        run_errors: list[str] = []
        if config_path:
            config = RunConfig.from_toml(config_path)
            pool = HumanTaskPool(claim_ttl=config.claim_ttl)
            runner = ExperimentRunner(config, log_path, pool=pool)

            def drive() -> None:
                try:
                    runner.resume()
                except StorynetError as exc:
                    run_errors.append(str(exc))

            runner_thread = threading.Thread(target=drive, daemon=True)

        corpus = RatingCorpus.from_logs(rate_logs) if rate_logs else None
        store = RatingStore(ratings_out) if corpus else None
        if corpus and manifest_out:
            corpus.write_manifest(manifest_out)

        def run_info(run_id: str) -> dict:
            info: dict = {}
            if runner is not None and runner.state is not None:
                info["current_iteration"] = runner.state.current_iteration
                info["total_iterations"] = runner.config.iterations
            if run_errors:
                info["run_error"] = run_errors[0]
            return info

        service = SessionService(pool=pool, corpus=corpus, store=store, run_info=run_info)
        app = create_app(service, admin_key=admin_key, static_dir=ui_dir)
        if runner_thread is not None:
            runner_thread.start()
        click.echo(f"serving on http://{host}:{port}", err=True)
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except StorynetError as exc:
        _fail(exc)


@main.group()
def metrics() -> None:
    """Analysis pipeline: logs and rating tables in, CSV out."""


@metrics.command()
@click.option("--log", "log_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--group-size", default=5, show_default=True, type=int)
@click.option("--out", default="diversity_timeline.csv", show_default=True)
@click.option("--gains-out", default=None)
@click.option("--per-network-out", default=None)
@click.option("--drop-stopwords", is_flag=True, default=False)
def diversity(log_paths, group_size, out, gains_out, per_network_out, drop_stopwords):
    """Grouped diversity timeline per condition."""
    try:
        click.echo(TFIDF_FORMULA, err=True)
        timeline = diversity_timeline(log_paths, group_size=group_size, drop_stopwords=drop_stopwords)
        write_timeline_csv(timeline, out)
        written = {"timeline": out}
        if gains_out:
            write_gains_csv(timeline, gains_out)
            written["gains"] = gains_out
        if per_network_out:
            write_per_network_csv(timeline, per_network_out)
            written["per_network"] = per_network_out
        _emit(written)
    except StorynetError as exc:
        _fail(exc)


@metrics.command()
@click.option("--log", "log_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--top-k", default=25, show_default=True, type=int)
@click.option("--out", default="term_chains.csv", show_default=True)
def terms(log_paths, top_k, out):
    """Top-term usage chains per condition and iteration."""
    try:
        click.echo(TFIDF_FORMULA, err=True)
        write_term_chains_csv(term_dynamics(log_paths, top_k), out)
        _emit({"terms": out})
    except StorynetError as exc:
        _fail(exc)


@metrics.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="Provenance manifest for grouping (story_id -> condition/iteration).")
@click.option("--by", "group_by", type=click.Choice(["overall", "condition", "iteration_group", "condition_group"]),
              default="overall", show_default=True)
@click.option("--group-size", default=5, show_default=True, type=int)
@click.option("--out", default="rating_summary.csv", show_default=True)
def ratings(csv_path, manifest_path, group_by, group_size, out):
    """Descriptive rating summaries (M, SD, CI95) per grouping cell."""
    try:
        rating_set = ingest_ratings(csv_path)
        group_of = None
        if group_by != "overall":
            if manifest_path is None:
                raise StorynetError(f"--by {group_by} requires --manifest")
            manifest = _load_manifest(manifest_path)

            def group_of(rec):
                info = manifest.get(rec.story_id)
                if info is None:
                    return "unknown"
                condition, iteration = info
                group = (max(iteration, 1) - 1) // group_size + 1
                if group_by == "condition":
                    return condition
                if group_by == "iteration_group":
                    return f"g{group}"
                return f"{condition}:g{group}"

        write_summary_csv(rating_summary(rating_set, group_of), out)
        _emit({"summary": out, "records": len(rating_set)})
    except StorynetError as exc:
        _fail(exc)


def _load_manifest(path: str) -> dict[str, tuple[str, int]]:
    import csv as _csv

    manifest: dict[str, tuple[str, int]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            manifest[row["story_id"]] = (row["condition"], int(row["iteration"]))
    return manifest


@metrics.command()
@click.option("--log", "log_paths", multiple=True, type=click.Path(exists=True))
@click.option("--endpoint", default=None, help="Text-embedding endpoint URL.")
@click.option("--model", default="all-minilm-l6-v2", show_default=True)
@click.option("--embeddings-in", "embeddings_in", type=click.Path(exists=True), default=None,
              help="Precomputed embeddings TSV (skips the endpoint).")
@click.option("--embeddings-out", default="embeddings.tsv", show_default=True)
@click.option("--coords-out", default="coordinates.csv", show_default=True)
def embed(log_paths, endpoint, model, embeddings_in, embeddings_out, coords_out):
    """Fetch (or load) story embeddings and export a 2-D PCA projection."""
    try:
        if embeddings_in:
            ids, matrix = load_embeddings(embeddings_in)
        else:
            if not endpoint:
                raise StorynetError("either --endpoint or --embeddings-in is required")
            if not log_paths:
                raise StorynetError("--log is required when fetching embeddings")
            ids, texts = [], []
            for path in log_paths:
                for rec in read_log(path).records:
                    ids.append(f"{rec.run_id}:{rec.node}:{rec.iteration}")
                    texts.append(rec.text)
            matrix = fetch_embeddings(texts, EmbeddingEndpointConfig(endpoint=endpoint, model=model))
            save_embeddings(embeddings_out, ids, matrix)
        coords, _ = pca_project(matrix, n_components=2)
        write_coordinates_csv(coords_out, ids, coords)
        out = {"coordinates": coords_out, "stories": len(ids)}
        if not embeddings_in:
            out["embeddings"] = embeddings_out
        _emit(out)
    except StorynetError as exc:
        _fail(exc)


@main.command()
@click.option("--log", "log_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--ratings-csv", type=click.Path(exists=True), default=None)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None)
@click.option("--group-size", default=5, show_default=True, type=int)
@click.option("--top-k", default=25, show_default=True, type=int)
@click.option("--out-dir", default="analysis", show_default=True)
def export(log_paths, ratings_csv, manifest_path, group_size, top_k, out_dir):
    """Bundle the full analysis output set for a collection of runs."""
    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        timeline = diversity_timeline(log_paths, group_size=group_size)
        write_timeline_csv(timeline, out / "diversity_timeline.csv")
        write_per_network_csv(timeline, out / "diversity_per_network.csv")
        write_gains_csv(timeline, out / "diversity_gains.csv")
        write_term_chains_csv(term_dynamics(log_paths, top_k), out / "term_chains.csv")
        written = [
            "diversity_timeline.csv",
            "diversity_per_network.csv",
            "diversity_gains.csv",
            "term_chains.csv",
        ]
        if ratings_csv:
            rating_set = ingest_ratings(ratings_csv)
            group_of = None
            if manifest_path:
                manifest = _load_manifest(manifest_path)
                group_of = lambda rec: manifest.get(rec.story_id, ("unknown", 0))[0]  # noqa: E731
            write_summary_csv(rating_summary(rating_set, group_of), out / "rating_summary.csv")
            written.append("rating_summary.csv")
        (out / "export_summary.json").write_text(
            json.dumps({"logs": list(log_paths), "files": written, "formula": TFIDF_FORMULA}, indent=2)
        )
        _emit({"out_dir": str(out), "files": written})
    except StorynetError as exc:
        _fail(exc)


@main.command("mock-llm")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8099, show_default=True, type=int)
@click.option("--script", "script_path", type=click.Path(exists=True), default=None,
              help="JSON list of canned responses, consumed in order.")
def mock_llm(host, port, script_path):
    """Run the bundled mock chat-completions/embeddings server."""
    script = None
    if script_path:
        script = json.loads(Path(script_path).read_text(encoding="utf-8"))
    server = MockLLMServer(host=host, port=port, script=script)
    server.start()
    click.echo(f"mock LLM serving on {server.base_url}", err=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
