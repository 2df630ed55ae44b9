"""Acceptance suite: one test per criterion, at the stated tolerance.

Criteria rest on property suites, oracles, and qualitative mechanism
reproduction at desk scale; the conftest hook prints one PASS/FAIL line
per test in this module.
"""
from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest
from click.testing import CliRunner

from storynet.agents import HumanTaskPool, LLMConfig, Task
from storynet.cli import main as cli_main
from storynet.errors import RatingValidationError, ReplayIntegrityError
from storynet.eventlog import read_log, validate_log
from storynet.metrics.ratings import ingest_ratings, rating_summary
from storynet.metrics.text import TokenizedDoc, tokenize
from storynet.metrics.timeline import diversity_timeline
from storynet.metrics.vectorize import cosine, diversity, tfidf
from storynet.mock_llm import MockLLMServer
from storynet.network import AgentKind, StoryRecord
from storynet.orchestrator import RunConfig, ScriptedParams, run_experiment

from oracles import oracle_ci95, oracle_cosine, oracle_diversity, oracle_mean, oracle_sample_sd, oracle_tfidf

SEED_TEXT = (
    "As John reached for his front door, he realized his key was missing. "
    "Panic set in as he searched his pockets, but the key was nowhere to be "
    "found. Feeling defeated, he slumped against the door, only to hear a "
    "jingle from inside - his cat had been playing with the key all along."
)

SEED_TERMS = ("john", "cat", "key")

CONFIG_5X5_TOML = f"""
[run]
run_id = "acceptance-5x5"
iterations = 25
rng_seed = 424242
seed_story = "{SEED_TEXT}"
condition = "hybrid"
human_fraction = 0.5

[topology]
rows = 5
cols = 5

[agents]
human = "scripted-conservative"
ai = "scripted-divergent"

[agents.scripted]
replace_fraction = 0.8
"""


def scripted_config(condition: str, seed: int, rows=3, cols=3, iterations=10, **overrides) -> RunConfig:
    base = dict(
        rows=rows, cols=cols, iterations=iterations, seed_story=SEED_TEXT,
        condition=condition, human_fraction=0.5, rng_seed=seed,
        run_id=f"acc-{condition}-{seed}",
        human_agent="scripted-conservative", ai_agent="scripted-divergent",
        scripted=ScriptedParams(replace_fraction=0.8),
    )
    base.update(overrides)
    return RunConfig(**base)


def stripped_lines(path: Path) -> list[dict]:
    out = []
    for line in path.read_text().splitlines():
        obj = json.loads(line)
        obj.pop("created_at", None)
        obj.pop("finished_at", None)
        out.append(obj)
    return out


def test_determinism_scripted_5x5x25(tmp_path):
    """Two `run` executions agree modulo timestamps; validate passes; < 10 s."""
    config_path = tmp_path / "acceptance.toml"
    config_path.write_text(CONFIG_5X5_TOML)
    runner = CliRunner()
    start = time.monotonic()
    log_a, log_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for log in (log_a, log_b):
        result = runner.invoke(cli_main, ["run", "--config", str(config_path), "--out", str(log)])
        assert result.exit_code == 0, result.output
    elapsed = time.monotonic() - start
    assert stripped_lines(log_a) == stripped_lines(log_b)
    for log in (log_a, log_b):
        result = runner.invoke(cli_main, ["validate", "--log", str(log)])
        assert result.exit_code == 0
        assert json.loads(result.output)["records"] == 650
    assert elapsed < 10.0, f"two 5x5x25 runs took {elapsed:.1f}s"


def test_metric_oracle_equivalence_200_corpora():
    """tfidf/cosine/diversity match the brute-force oracle to 1e-9."""
    rng = random.Random(20250810)
    vocab = ["aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh", "john", "cat", "key", "door"]
    for _ in range(200):
        n_docs = rng.randint(1, 5)
        token_lists = [
            [rng.choice(vocab) for _ in range(rng.randint(0, 20))] for _ in range(n_docs)
        ]
        docs = [TokenizedDoc(str(i), list(ts)) for i, ts in enumerate(token_lists)]
        matrix = tfidf(docs)
        o_vocab, o_rows = oracle_tfidf(token_lists)
        assert matrix.vocabulary == o_vocab
        for i, row in enumerate(o_rows):
            for j, term in enumerate(o_vocab):
                assert abs(matrix.rows[i, j] - row[term]) < 1e-9
        for i in range(n_docs):
            for j in range(i + 1, n_docs):
                ours = cosine(matrix.rows[i], matrix.rows[j])
                assert abs(ours - oracle_cosine(o_rows[i], o_rows[j])) < 1e-9
        if n_docs >= 2 and all(token_lists):
            texts = [" ".join(ts) for ts in token_lists]
            assert abs(diversity(texts) - oracle_diversity(texts)) < 1e-9


def test_diversity_bounds_and_degenerate_cases():
    """Identical -> 0; disjoint -> 1; all in [0,1]; duplicate-insertion
    monotonicity on randomized story-like groups."""
    assert diversity([SEED_TEXT] * 3 ) == pytest.approx(0.0, abs=1e-12)
    disjoint = ["cat dog bird", "nebula comet quasar", "violin cello harp"]
    assert diversity(disjoint) == pytest.approx(1.0, abs=1e-12)

    rng = random.Random(0)
    vocab = [f"w{chr(97 + i)}{chr(97 + j)}" for i in range(7) for j in range(8)][:50]
    for _ in range(300):
        group = [
            " ".join(rng.choice(vocab) for _ in range(rng.randint(5, 20)))
            for _ in range(rng.randint(3, 8))
        ]
        value = diversity(group)
        assert -1e-9 <= value <= 1.0 + 1e-9
        duplicated = group + [group[rng.randrange(len(group))]]
        assert diversity(duplicated) <= value + 1e-9, "duplicate insertion raised diversity"


def _final_iteration_retention(log_path: Path) -> float:
    parsed = read_log(log_path)
    t_max = max(r.iteration for r in parsed.records)
    final = [set(tokenize(r.text).tokens) for r in parsed.records if r.iteration == t_max]
    keeping = sum(1 for tokens in final if any(term in tokens for term in SEED_TERMS))
    return keeping / len(final)


@pytest.fixture(scope="module")
def mechanism_runs(tmp_path_factory):
    """Fifteen 3x3x10 scripted runs: three conditions at five seeds each."""
    tmp = tmp_path_factory.mktemp("mechanism")
    runs = {}
    start = time.monotonic()
    for seed in (11, 22, 33, 44, 55):
        for condition in ("human_only", "ai_only", "hybrid"):
            path = tmp / f"{condition}-{seed}.jsonl"
            run_experiment(scripted_config(condition, seed), path)
            runs[(condition, seed)] = path
    runs["elapsed"] = time.monotonic() - start
    return runs


def test_mechanism_reproduction_seed_term_retention(mechanism_runs):
    """Conservative >= 90% retention, divergent <= 10%, mix strictly between.

    A final-iteration story 'retains' the seed terms when it still contains
    at least one of john/cat/key.
    """
    for seed in (11, 22, 33, 44, 55):
        conservative = _final_iteration_retention(mechanism_runs[("human_only", seed)])
        divergent = _final_iteration_retention(mechanism_runs[("ai_only", seed)])
        mixed = _final_iteration_retention(mechanism_runs[("hybrid", seed)])
        assert conservative >= 0.9, f"seed {seed}: conservative retention {conservative}"
        assert divergent <= 0.1, f"seed {seed}: divergent retention {divergent}"
        assert divergent < mixed < conservative, (
            f"seed {seed}: mix {mixed} not strictly between {divergent} and {conservative}"
        )
    assert mechanism_runs["elapsed"] < 10.0


def test_diversity_ordering_across_conditions(mechanism_runs):
    """Final-group diversity: divergent > conservative; mixed above conservative,
    strict at every one of the five seeds."""
    for seed in (11, 22, 33, 44, 55):
        timeline = diversity_timeline(
            [mechanism_runs[(c, seed)] for c in ("human_only", "ai_only", "hybrid")],
            group_size=5,
        )
        conservative = timeline.series("human_only")[-1]
        divergent = timeline.series("ai_only")[-1]
        mixed = timeline.series("hybrid")[-1]
        assert divergent > conservative, f"seed {seed}: {divergent} <= {conservative}"
        assert mixed > conservative, f"seed {seed}: {mixed} <= {conservative}"


def test_end_to_end_mock_llm_run(tmp_path):
    """AIOnly 5x5x25 against the bundled mock: 650 records, 5 timeline groups, < 60 s."""
    start = time.monotonic()
    with MockLLMServer() as server:
        config = RunConfig(
            rows=5, cols=5, iterations=25, seed_story=SEED_TEXT,
            condition="ai_only", rng_seed=7, run_id="acc-mock-llm",
            ai_agent="llm",
            llm=LLMConfig(endpoint=server.chat_url, max_retries=2, backoff_base=0.05,
                          request_timeout=10.0),
        )
        log = tmp_path / "mock_run.jsonl"
        run_experiment(config, log)
    summary = validate_log(log)
    assert summary["records"] == 650
    parsed = read_log(log)
    llm_kinds = {r.agent_kind.family for r in parsed.records if r.iteration > 0}
    assert llm_kinds == {"llm"}
    timeline = diversity_timeline([log], group_size=5)
    assert len(timeline.cells) == 5
    assert all(0.0 <= c.diversity <= 1.0 for c in timeline.cells)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"mock run took {elapsed:.1f}s"


def test_rating_pipeline_at_scale(tmp_path):
    """100 raters x 20 ratings ingest to 2000; M/SD/CI match the oracle to 1e-9;
    out-of-range rows are rejected with their row number."""
    rng = random.Random(99)
    lines = ["story_id,rater_id,rating"]
    values: list[float] = []
    for rater in range(100):
        stories = rng.sample(range(400), 20)
        for story in stories:
            rating = rng.randint(1, 5)
            values.append(float(rating))
            lines.append(f"s{story},r{rater},{rating}")
    csv_path = tmp_path / "ratings.csv"
    csv_path.write_text("\n".join(lines) + "\n")

    rating_set = ingest_ratings(csv_path)
    assert len(rating_set) == 2000
    summary = rating_summary(rating_set)["all"]
    assert summary.mean == pytest.approx(oracle_mean(values), abs=1e-9)
    assert summary.sd == pytest.approx(oracle_sample_sd(values), abs=1e-9)
    low, high = oracle_ci95(values)
    assert summary.ci_low == pytest.approx(low, abs=1e-9)
    assert summary.ci_high == pytest.approx(high, abs=1e-9)

    bad = tmp_path / "bad.csv"
    bad.write_text("story_id,rater_id,rating\ns1,r1,3\ns2,r1,6\n")
    with pytest.raises(RatingValidationError) as err:
        ingest_ratings(bad)
    assert err.value.row == 3


def test_replay_integrity_under_any_line_mutation(tmp_path):
    """Truncating, duplicating, or reordering any line fails validate with an index."""
    log = tmp_path / "small.jsonl"
    run_experiment(scripted_config("ai_only", 5, rows=1, cols=2, iterations=1,
                                   run_id="acc-replay"), log)
    original = log.read_text().splitlines()
    assert len(original) == 6  # header + 2 seeds + 2 stories + status

    def expect_failure(lines: list[str], what: str) -> None:
        log.write_text("\n".join(lines) + "\n")
        with pytest.raises(ReplayIntegrityError) as err:
            validate_log(log)
        assert isinstance(err.value.index, int), what

    for pos in range(len(original)):
        expect_failure(original[:pos] + original[pos + 1:], f"truncate line {pos}")
        mutated = list(original)
        mutated.insert(pos, original[pos])
        expect_failure(mutated, f"duplicate line {pos}")
    for pos in range(len(original) - 1):
        mutated = list(original)
        mutated[pos], mutated[pos + 1] = mutated[pos + 1], mutated[pos]
        expect_failure(mutated, f"swap lines {pos},{pos + 1}")

    # spot checks on a full-size deterministic log
    big = tmp_path / "big.jsonl"
    run_experiment(scripted_config("ai_only", 6, rows=5, cols=5, iterations=25,
                                   run_id="acc-replay-big"), big)
    big_lines = big.read_text().splitlines()
    for pos in (1, 26, 300, 650):
        expect_failure_on(big, big_lines[:pos] + big_lines[pos + 1:])


def expect_failure_on(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ReplayIntegrityError):
        validate_log(path)


def test_claim_atomicity_100_trials():
    """50 concurrent claimers on 10 open slots: exactly 10 distinct winners."""
    def seed_record(node: int) -> StoryRecord:
        return StoryRecord(run_id="acc", node=node, iteration=0, text=SEED_TEXT,
                           agent_kind=AgentKind("seed"))

    for trial in range(100):
        pool = HumanTaskPool()
        for node in range(10):
            pool.post(Task(run_id="acc", node=node, iteration=1,
                           candidates=[seed_record(node + 50)]))
        with ThreadPoolExecutor(max_workers=50) as executor:
            futures = [
                executor.submit(pool.claim, "acc", f"t{trial}-p{i}") for i in range(50)
            ]
            claims = [f.result() for f in futures]
        winners = [c for c in claims if c is not None]
        assert len(winners) == 10, f"trial {trial}: {len(winners)} claims granted"
        assert len({c.task.node for c in winners}) == 10, f"trial {trial}: double assignment"
        assert len({c.token for c in winners}) == 10
