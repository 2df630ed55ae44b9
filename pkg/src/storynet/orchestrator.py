"""Experiment orchestration: agent assignment, synchronized waves, resume.

A run is a sequence of waves. Wave t builds one task per node from the
iteration t-1 board, dispatches all tasks (concurrently), blocks at a
barrier until every node has a submission, then applies submissions in
node-id order and appends them to the event log. With scripted agents the
whole pipeline is a pure function of the config, so reruns produce logs
identical up to timestamps.
"""
from __future__ import annotations

import hashlib
import json
import os
import random
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents import (
    ConservativeAgent,
    DivergentAgent,
    HumanTaskPool,
    LLMAgent,
    LLMConfig,
    SessionAgent,
    Submission,
    Task,
    validate_submission,
)
from .errors import (
    AgentFailureError,
    ConfigMismatchError,
    InvalidConfigError,
    RunAbortedError,
    StorynetError,
)
from .eventlog import EventLogWriter, read_log, replay_records
from .network import AgentKind, NetworkTopology, RunState, StoryRecord, build_grid, init_run, now_rfc3339

CONDITIONS = ("human_only", "ai_only", "hybrid")
FAILURE_POLICIES = ("abort", "retry", "pass_through_copy")
AGENT_BACKENDS = ("scripted-conservative", "scripted-divergent", "llm", "session")


@dataclass
class ScriptedParams:
    replace_fraction: float = 0.8
    continuations: list[str] | None = None
    drift_vocabulary: list[str] | None = None


@dataclass
class RunConfig:
    rows: int = 5
    cols: int = 5
    neighborhood: str = "von_neumann"
    wrap: bool = False
    iterations: int = 25
    seed_story: str = ""
    condition: str = "ai_only"
    human_fraction: float = 0.5
    rng_seed: int = 0
    run_id: str | None = None
    human_agent: str = "scripted-conservative"
    ai_agent: str = "scripted-divergent"
    llm: LLMConfig = field(default_factory=LLMConfig)
    scripted: ScriptedParams = field(default_factory=ScriptedParams)
    failure_policy: str = "abort"
    failure_retries: int = 2
    include_self: bool = False
    group_size: int = 5
    fixed_node_roles: bool = False
    claim_ttl: float = 600.0
    prompt_template: str | None = None

    def validate(self) -> None:
        build_grid(self.rows, self.cols, self.neighborhood, self.wrap)
        if self.iterations < 1:
            raise InvalidConfigError("iterations must be >= 1")
        if not self.seed_story:
            raise InvalidConfigError("seed_story must be nonempty")
        if self.condition not in CONDITIONS:
            raise InvalidConfigError(f"condition must be one of {CONDITIONS}")
        if not 0.0 <= self.human_fraction <= 1.0:
            raise InvalidConfigError("human_fraction outside [0, 1]")
        if self.failure_policy not in FAILURE_POLICIES:
            raise InvalidConfigError(f"failure_policy must be one of {FAILURE_POLICIES}")
        if self.failure_retries < 0:
            raise InvalidConfigError("failure_retries must be >= 0")
        if self.group_size < 1:
            raise InvalidConfigError("group_size must be >= 1")
        if self.human_agent not in AGENT_BACKENDS or self.ai_agent not in AGENT_BACKENDS:
            raise InvalidConfigError(f"agent backends must be one of {AGENT_BACKENDS}")
        if not 0.0 <= self.scripted.replace_fraction <= 1.0:
            raise InvalidConfigError("scripted.replace_fraction outside [0, 1]")

    def topology(self) -> NetworkTopology:
        return build_grid(self.rows, self.cols, self.neighborhood, self.wrap)

    def canonical(self) -> dict:
        """Semantic config content, the input to the config hash."""
        return {
            "topology": {
                "rows": self.rows,
                "cols": self.cols,
                "neighborhood": self.neighborhood,
                "wrap": self.wrap,
            },
            "iterations": self.iterations,
            "seed_story": self.seed_story,
            "condition": self.condition,
            "human_fraction": self.human_fraction,
            "rng_seed": self.rng_seed,
            "human_agent": self.human_agent,
            "ai_agent": self.ai_agent,
            "llm": {
                "endpoint": self.llm.endpoint,
                "model": self.llm.model,
                "temperature": self.llm.temperature,
                "max_output_tokens": self.llm.max_output_tokens,
            },
            "scripted": {
                "replace_fraction": self.scripted.replace_fraction,
                "continuations": self.scripted.continuations,
                "drift_vocabulary": self.scripted.drift_vocabulary,
            },
            "failure_policy": self.failure_policy,
            "failure_retries": self.failure_retries,
            "include_self": self.include_self,
            "group_size": self.group_size,
            "fixed_node_roles": self.fixed_node_roles,
            "prompt_template": self.prompt_template,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolved_run_id(self) -> str:
        return self.run_id or f"run-{self.config_hash()[:10]}"

    def header_config(self) -> dict:
        config = self.canonical()
        config["run_id"] = self.resolved_run_id()
        return config

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        run = data.get("run", {})
        topo = data.get("topology", {})
        agents = data.get("agents", {})
        scripted = agents.get("scripted", {})
        llm = agents.get("llm", {})
        config = cls(
            rows=int(topo.get("rows", 5)),
            cols=int(topo.get("cols", 5)),
            neighborhood=str(topo.get("neighborhood", "von_neumann")),
            wrap=bool(topo.get("wrap", False)),
            iterations=int(run.get("iterations", 25)),
            seed_story=str(run.get("seed_story", "")),
            condition=str(run.get("condition", "ai_only")),
            human_fraction=float(run.get("human_fraction", 0.5)),
            rng_seed=int(run.get("rng_seed", 0)),
            run_id=run.get("run_id"),
            human_agent=str(agents.get("human", "scripted-conservative")),
            ai_agent=str(agents.get("ai", "scripted-divergent")),
            llm=LLMConfig(
                endpoint=str(llm.get("endpoint", LLMConfig.endpoint)),
                model=str(llm.get("model", LLMConfig.model)),
                temperature=float(llm.get("temperature", 1.0)),
                max_output_tokens=int(llm.get("max_output_tokens", 512)),
                request_timeout=float(llm.get("request_timeout", 30.0)),
                max_retries=int(llm.get("max_retries", 3)),
                backoff_base=float(llm.get("backoff_base", 0.5)),
                max_concurrency=int(llm.get("max_concurrency", 8)),
            ),
            scripted=ScriptedParams(
                replace_fraction=float(scripted.get("replace_fraction", 0.8)),
                continuations=scripted.get("continuations"),
                drift_vocabulary=scripted.get("drift_vocabulary"),
            ),
            failure_policy=str(run.get("failure_policy", "abort")),
            failure_retries=int(run.get("failure_retries", 2)),
            include_self=bool(run.get("include_self", False)),
            group_size=int(run.get("group_size", 5)),
            fixed_node_roles=bool(run.get("fixed_node_roles", False)),
            claim_ttl=float(run.get("claim_ttl", 600.0)),
            prompt_template=run.get("prompt_template"),
        )
        config.validate()
        return config

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        with Path(path).open("rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def with_seed(self, rng_seed: int) -> "RunConfig":
        return replace(self, rng_seed=rng_seed)


def assign_agents(config: RunConfig) -> dict[tuple[int, int], str]:
    """Map every (node, iteration) slot to 'human' or 'ai', deterministically.

    Hybrid placement samples round(fraction * slots) human slots uniformly
    without replacement from the seeded RNG; with fixed_node_roles the
    sample is over nodes instead and roles persist across iterations.
    """
    n = config.rows * config.cols
    slots = [(node, t) for t in range(1, config.iterations + 1) for node in range(n)]
    if config.condition == "human_only":
        return {slot: "human" for slot in slots}
    if config.condition == "ai_only":
        return {slot: "ai" for slot in slots}
    rng = random.Random(f"assign:{config.rng_seed}")
    if config.fixed_node_roles:
        human_nodes = set(rng.sample(range(n), round(config.human_fraction * n)))
        return {slot: ("human" if slot[0] in human_nodes else "ai") for slot in slots}
    human_slots = set(rng.sample(range(len(slots)), round(config.human_fraction * len(slots))))
    return {slot: ("human" if i in human_slots else "ai") for i, slot in enumerate(slots)}


def build_registry(config: RunConfig, pool: HumanTaskPool | None = None) -> dict[str, object]:
    """Instantiate one agent per backend named in the config."""
    def make(backend: str):
        if backend == "scripted-conservative":
            return ConservativeAgent(config.seed_story, config.rng_seed, config.scripted.continuations)
        if backend == "scripted-divergent":
            return DivergentAgent(
                config.scripted.replace_fraction, config.rng_seed, config.scripted.drift_vocabulary
            )
        if backend == "llm":
            return LLMAgent(config.llm, config.prompt_template)
        if backend == "session":
            if pool is None:
                raise InvalidConfigError("session backend requires a human task pool")
            return SessionAgent(pool)
        raise InvalidConfigError(f"unknown agent backend {backend!r}")

    registry: dict[str, object] = {}
    needed = set()
    if config.condition in ("human_only", "hybrid"):
        needed.add(("human", config.human_agent))
    if config.condition in ("ai_only", "hybrid"):
        needed.add(("ai", config.ai_agent))
    for role, backend in needed:
        registry[role] = make(backend)
    return registry


def journal_path(log_path: str | Path) -> Path:
    return Path(str(log_path) + ".wave")


class ExperimentRunner:
    """Owns the event log and run state; the single writer for a run."""

    def __init__(
        self,
        config: RunConfig,
        log_path: str | Path,
        pool: HumanTaskPool | None = None,
        registry: dict[str, object] | None = None,
        wave_timeout: float | None = None,
        on_wave: Callable[[int], None] | None = None,
    ):
        config.validate()
        self.config = config
        self.log_path = Path(log_path)
        self.pool = pool
        self.registry = registry or build_registry(config, pool)
        self.wave_timeout = wave_timeout
        self.on_wave = on_wave
        self.assignment = assign_agents(config)
        self.topology = config.topology()
        self.run_id = config.resolved_run_id()
        self.state: RunState | None = None
        self._journal_lock = threading.Lock()
        self._journal_fh = None

    # -- public entry points -------------------------------------------------

    def run(self) -> Path:
        """Execute a fresh run end to end; writes header, seeds, waves, status."""
        self.state = init_run(self.topology, self.run_id, self.config.seed_story, self.config.include_self)
        writer = EventLogWriter(self.log_path)
        writer.write_header(self.config.header_config(), self.config.config_hash())
        for rec in self.state.records_at(0):
            writer.append_record(rec)
        try:
            self._run_waves(writer, first_wave=1)
        finally:
            writer.close()
            self._close_journal()
        return self.log_path

    def resume(self) -> Path:
        """Continue a run from its log; a fresh/missing log starts from scratch.

        Refuses to touch a log whose config hash (or run id) differs from
        this runner's config. A trailing partial wave and any non-completed
        status line are discarded; journalled human submissions for the
        next wave are preloaded into the pool.
        """
        if not self.log_path.exists():
            return self.run()
        parsed = read_log(self.log_path)
        if parsed.config_hash != self.config.config_hash():
            raise ConfigMismatchError(
                f"log config hash {parsed.config_hash[:12]} != config {self.config.config_hash()[:12]}"
            )
        if str(parsed.config.get("run_id")) != self.run_id:
            raise ConfigMismatchError("log run_id does not match config")
        if parsed.status is not None and parsed.status.get("status") == "completed":
            return self.log_path
        state = replay_records(
            parsed.records, self.topology, self.run_id,
            include_self=self.config.include_self, allow_partial_tail=True,
        )
        self.state = state
        kept_records = self.topology.node_count * (state.current_iteration + 1)
        self._truncate_log(kept_records)
        if self.pool is not None:
            human_records = [r for r in parsed.records[:kept_records] if r.agent_kind.family == "human"]
            self.pool.mark_contributed([r.agent_kind.detail or "" for r in human_records])
        writer = EventLogWriter(self.log_path, append=True)
        try:
            self._run_waves(writer, first_wave=state.current_iteration + 1)
        finally:
            writer.close()
            self._close_journal()
        return self.log_path

    # -- wave machinery --------------------------------------------------------

    def _run_waves(self, writer: EventLogWriter, first_wave: int) -> None:
        assert self.state is not None
        n = self.topology.node_count
        recovered = self._load_journal(first_wave)
        for t in range(first_wave, self.config.iterations + 1):
            try:
                self._run_wave(writer, t, recovered if t == first_wave else {})
            except AgentFailureError as exc:
                writer.write_status("aborted", t - 1, n * t)
                raise RunAbortedError(
                    f"wave {t} aborted: {exc}", completed_iteration=t - 1
                ) from exc
            if self.on_wave is not None:
                self.on_wave(t)
        writer.write_status("completed", self.config.iterations, n * (self.config.iterations + 1))
        journal = journal_path(self.log_path)
        if journal.exists():
            journal.unlink()

    def _run_wave(self, writer: EventLogWriter, t: int, recovered: dict) -> None:
        assert self.state is not None
        state = self.state
        nodes = list(self.topology.nodes())
        tasks = {
            node: Task(
                run_id=self.run_id,
                node=node,
                iteration=t,
                candidates=state.candidate_set(node, t),
                prompt_template=self.config.prompt_template,
                deadline=self.wave_timeout,
            )
            for node in nodes
        }
        session_nodes = {
            node for node in nodes
            if isinstance(self.registry.get(self.assignment[(node, t)]), SessionAgent)
        }
        if self.pool is not None and session_nodes:
            self._ensure_journal()

        results: dict[int, tuple[Submission, AgentKind]] = {}
        for node, (submission, participant) in recovered.items():
            validate_submission(submission, len(tasks[node].candidates))
            results[node] = (submission, AgentKind("human", participant))
            if self.pool is not None and node in session_nodes:
                self.pool.post(tasks[node])
                self.pool.preload(node, t, submission, participant)

        outstanding = [node for node in nodes if node not in results]
        with ThreadPoolExecutor(max_workers=max(1, len(outstanding) or 1)) as executor:
            futures = {
                node: executor.submit(self._invoke_agent, tasks[node], self.assignment[(node, t)])
                for node in outstanding
            }
            try:
                for node in outstanding:
                    results[node] = futures[node].result()
            except AgentFailureError:
                # release any session threads still blocked on this wave so
                # the executor can drain instead of deadlocking
                if self.pool is not None:
                    self.pool.cancel_wave(t)
                raise

        for node in nodes:  # barrier passed: apply in node-id order
            submission, kind = results[node]
            validate_submission(submission, len(tasks[node].candidates))
            parent_node = state.candidate_nodes(node)[submission.selected_index]
            record = StoryRecord(
                run_id=self.run_id,
                node=node,
                iteration=t,
                text=submission.text,
                agent_kind=kind,
                parent=(parent_node, t - 1),
                created_at=now_rfc3339(),
                meta=submission.meta,
            )
            state.apply_submission(record)
            writer.append_record(record)
        if self.pool is not None:
            self.pool.clear_wave(t)
        self._reset_journal()

    def _invoke_agent(self, task: Task, role: str) -> tuple[Submission, AgentKind]:
        agent = self.registry[role]
        attempts = 1
        if self.config.failure_policy == "retry":
            attempts += self.config.failure_retries
        last_exc: Exception | None = None
        for _ in range(attempts):
            try:
                return agent.submit_task(task)  # type: ignore[attr-defined]
            except StorynetError as exc:
                last_exc = exc
        if self.config.failure_policy == "pass_through_copy":
            submission = Submission(0, task.candidates[0].text, meta={"copied": True})
            return submission, agent.nominal_kind  # type: ignore[attr-defined]
        raise AgentFailureError(f"agent for node {task.node} failed: {last_exc}")

    # -- journal (durability for accepted human submissions) -------------------

    def _ensure_journal(self) -> None:
        if self.pool is None or self.pool.journal is not None:
            return
        path = journal_path(self.log_path)
        fh = path.open("a", encoding="utf-8")

        def journal(node: int, iteration: int, submission: Submission, participant_id: str) -> None:
            entry = {
                "node": node,
                "iteration": iteration,
                "selected_index": submission.selected_index,
                "text": submission.text,
                "participant_id": participant_id,
                "created_at": now_rfc3339(),
            }
            with self._journal_lock:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

        self._journal_fh = fh
        self.pool.journal = journal

    def _load_journal(self, wave: int) -> dict[int, tuple[Submission, str]]:
        path = journal_path(self.log_path)
        if not path.exists():
            return {}
        recovered: dict[int, tuple[Submission, str]] = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if int(entry["iteration"]) != wave:
                continue
            recovered[int(entry["node"])] = (
                Submission(int(entry["selected_index"]), str(entry["text"])),
                str(entry["participant_id"]),
            )
        return recovered

    def _reset_journal(self) -> None:
        path = journal_path(self.log_path)
        if self._journal_fh is not None:
            with self._journal_lock:
                self._journal_fh.truncate(0)
                self._journal_fh.seek(0)
        elif path.exists():
            path.unlink()

    def _close_journal(self) -> None:
        if self._journal_fh is not None:
            self._journal_fh.close()
            self._journal_fh = None
            if self.pool is not None:
                self.pool.journal = None

    def _truncate_log(self, kept_records: int) -> None:
        lines = self.log_path.read_text(encoding="utf-8").splitlines()
        kept = lines[: 1 + kept_records]  # header + complete waves
        self.log_path.write_text("\n".join(kept) + "\n", encoding="utf-8")


def run_experiment(config: RunConfig, log_path: str | Path, **kwargs) -> Path:
    """Convenience wrapper: configure a runner and execute the full run."""
    return ExperimentRunner(config, log_path, **kwargs).run()


def resume_experiment(config: RunConfig, log_path: str | Path, **kwargs) -> Path:
    return ExperimentRunner(config, log_path, **kwargs).resume()
