"""Append-only JSONL event log: the single source of truth for a run.

Layout:
  line 0        header  {"type": "header", "schema_version", "config_hash",
                         "created_at", "config": {...}}
  lines 1..     one story record per line, fields exactly: run_id, node,
                iteration, text, agent_kind, parent_node, parent_iteration,
                created_at (RFC 3339); absent parent encoded as nulls. An
                optional "meta" object may trail (e.g. copied=true).
  last line     status  {"type": "status", "status": "completed"|"aborted",
                         "completed_iteration", "records", "finished_at"}
                present only once the run has ended.

Story lines appear in canonical order: iteration-major, node-ascending.
Replay enforces that order, which is what makes any truncation, duplication,
or reordering of lines detectable at a specific index.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

from .errors import ReplayIntegrityError, StorynetError
from .network import AgentKind, NetworkTopology, RunState, StoryRecord, build_grid, now_rfc3339

SCHEMA_VERSION = 1

RECORD_FIELDS = (
    "run_id",
    "node",
    "iteration",
    "text",
    "agent_kind",
    "parent_node",
    "parent_iteration",
    "created_at",
)


def record_to_json(rec: StoryRecord) -> dict:
    obj = {
        "run_id": rec.run_id,
        "node": rec.node,
        "iteration": rec.iteration,
        "text": rec.text,
        "agent_kind": rec.agent_kind.encode(),
        "parent_node": rec.parent[0] if rec.parent else None,
        "parent_iteration": rec.parent[1] if rec.parent else None,
        "created_at": rec.created_at,
    }
    if rec.meta:
        obj["meta"] = rec.meta
    return obj


def record_from_json(obj: dict) -> StoryRecord:
    missing = [f for f in RECORD_FIELDS if f not in obj]
    if missing:
        raise StorynetError(f"story record missing fields: {', '.join(missing)}")
    parent = None
    if obj["parent_node"] is not None or obj["parent_iteration"] is not None:
        if obj["parent_node"] is None or obj["parent_iteration"] is None:
            raise StorynetError("parent_node and parent_iteration must be both set or both null")
        parent = (int(obj["parent_node"]), int(obj["parent_iteration"]))
    return StoryRecord(
        run_id=str(obj["run_id"]),
        node=int(obj["node"]),
        iteration=int(obj["iteration"]),
        text=str(obj["text"]),
        agent_kind=AgentKind.decode(str(obj["agent_kind"])),
        parent=parent,
        created_at=str(obj["created_at"]),
        meta=obj.get("meta") or None,
    )


class EventLogWriter:
    """Serialized single-writer append interface; one flush per line."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh: IO[str] = self.path.open("a" if append else "w", encoding="utf-8")

    def write_header(self, config: dict, config_hash: str) -> None:
        self._write_line(
            {
                "type": "header",
                "schema_version": SCHEMA_VERSION,
                "config_hash": config_hash,
                "created_at": now_rfc3339(),
                "config": config,
            }
        )

    def append_record(self, rec: StoryRecord) -> None:
        self._write_line(record_to_json(rec))

    def write_status(self, status: str, completed_iteration: int, records: int) -> None:
        self._write_line(
            {
                "type": "status",
                "status": status,
                "completed_iteration": completed_iteration,
                "records": records,
                "finished_at": now_rfc3339(),
            }
        )
        os.fsync(self._fh.fileno())

    def sync(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def _write_line(self, obj: dict) -> None:
        self._fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
        self._fh.flush()

    def __enter__(self) -> "EventLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class ParsedLog:
    """A structurally parsed log, before replay-level validation."""

    path: Path | None
    header: dict
    records: list[StoryRecord]
    status: dict | None
    line_count: int

    @property
    def config(self) -> dict:
        return self.header.get("config", {})

    @property
    def config_hash(self) -> str:
        return self.header.get("config_hash", "")

    def topology(self) -> NetworkTopology:
        topo = self.config.get("topology", {})
        return build_grid(
            int(topo.get("rows", 0)),
            int(topo.get("cols", 0)),
            topo.get("neighborhood", "von_neumann"),
            bool(topo.get("wrap", False)),
        )


def read_log(path: str | Path) -> ParsedLog:
    """Parse a log file structurally; raises ReplayIntegrityError on malformed lines."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ReplayIntegrityError(f"log file {path} does not exist", 0) from None
    if not lines:
        raise ReplayIntegrityError("empty log: no header or seed records", 0)

    header = _parse_json_line(lines[0], 0)
    if header.get("type") != "header":
        raise ReplayIntegrityError("first line is not a header record", 0)
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ReplayIntegrityError(
            f"unsupported schema version {header.get('schema_version')!r}", 0
        )
    if not isinstance(header.get("config"), dict) or not header.get("config_hash"):
        raise ReplayIntegrityError("header lacks config or config_hash", 0)

    records: list[StoryRecord] = []
    status: dict | None = None
    for index, line in enumerate(lines[1:], start=1):
        obj = _parse_json_line(line, index)
        if obj.get("type") == "status":
            if status is not None:
                raise ReplayIntegrityError("duplicate status record", index)
            status = obj
            status["_line"] = index
            continue
        if obj.get("type") == "header":
            raise ReplayIntegrityError("unexpected second header record", index)
        if status is not None:
            raise ReplayIntegrityError("story record after the status record", index)
        try:
            records.append(record_from_json(obj))
        except StorynetError as exc:
            raise ReplayIntegrityError(f"bad story record: {exc}", index) from None
    if status is not None and status["_line"] != len(lines) - 1:
        raise ReplayIntegrityError("status record is not the last line", status["_line"])
    return ParsedLog(path=path, header=header, records=records, status=status, line_count=len(lines))


def _parse_json_line(line: str, index: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise ReplayIntegrityError("line is not valid JSON", index) from None
    if not isinstance(obj, dict):
        raise ReplayIntegrityError("line is not a JSON object", index)
    return obj


def replay_records(
    records: Iterable[StoryRecord],
    topology: NetworkTopology,
    run_id: str,
    include_self: bool = False,
    first_line: int = 1,
    allow_partial_tail: bool = False,
) -> RunState:
    """Rebuild a RunState from story records in append order.

    Records must follow the canonical sequence (iteration-major,
    node-ascending); any gap, duplicate, reorder, or protocol breach raises
    ReplayIntegrityError carrying the absolute line index (``first_line`` is
    the index of the first record). With ``allow_partial_tail`` a trailing
    incomplete wave is discarded instead of rejected.
    """
    state = RunState(topology, run_id, include_self=include_self)
    n = topology.node_count
    records = list(records)
    if not records:
        raise ReplayIntegrityError("no seed records", first_line)

    seed_text: str | None = None
    pending: list[StoryRecord] = []
    for offset, rec in enumerate(records):
        index = first_line + offset
        expected_iteration = state.current_iteration + 1
        expected_node = len(pending)
        if rec.run_id != run_id:
            raise ReplayIntegrityError(
                f"record run_id {rec.run_id!r} does not match header run_id {run_id!r}", index
            )
        if rec.iteration != expected_iteration or rec.node != expected_node:
            raise ReplayIntegrityError(
                f"expected record for node {expected_node} t={expected_iteration}, "
                f"got node {rec.node} t={rec.iteration}",
                index,
            )
        if rec.iteration == 0:
            if seed_text is None:
                seed_text = rec.text
            elif rec.text != seed_text:
                raise ReplayIntegrityError("seed records are not identical", index)
        pending.append(rec)
        if len(pending) == n:
            wave_start = index - n + 1
            if pending[0].iteration == 0:
                assert seed_text is not None
                state.seed(seed_text, created_at=pending[0].created_at)
                for seed_rec in pending:
                    state.board[(seed_rec.node, 0)] = seed_rec
            else:
                for i, wave_rec in enumerate(pending):
                    try:
                        state.apply_submission(wave_rec)
                    except StorynetError as exc:
                        raise ReplayIntegrityError(str(exc), wave_start + i) from None
            pending = []
    if pending and not allow_partial_tail:
        raise ReplayIntegrityError(
            f"incomplete final wave: {len(pending)} of {n} records", first_line + len(records)
        )
    return state


def replay_log(path: str | Path, allow_partial_tail: bool = False) -> tuple[ParsedLog, RunState]:
    """Parse and replay a log file using the topology stored in its header."""
    parsed = read_log(path)
    cfg = parsed.config
    try:
        topology = parsed.topology()
    except StorynetError as exc:
        raise ReplayIntegrityError(f"header config does not define a valid topology: {exc}", 0) from None
    state = replay_records(
        parsed.records,
        topology,
        run_id=str(cfg.get("run_id", "")),
        include_self=bool(cfg.get("include_self", False)),
        allow_partial_tail=allow_partial_tail,
    )
    return parsed, state


def validate_log(path: str | Path) -> dict:
    """Strict integrity check of a finished (or cleanly aborted) log.

    Returns a summary dict on success; raises ReplayIntegrityError otherwise.
    """
    parsed, state = replay_log(path, allow_partial_tail=False)
    n = state.topology.node_count
    iterations = int(parsed.config.get("iterations", 0))
    if parsed.status is None:
        raise ReplayIntegrityError("missing terminal status record", parsed.line_count)
    completed = int(parsed.status.get("completed_iteration", -1))
    if completed != state.current_iteration:
        raise ReplayIntegrityError(
            f"status says {completed} completed iterations, log replays to {state.current_iteration}",
            parsed.status["_line"],
        )
    if int(parsed.status.get("records", -1)) != len(parsed.records):
        raise ReplayIntegrityError(
            f"status record count {parsed.status.get('records')} != {len(parsed.records)} story lines",
            parsed.status["_line"],
        )
    status = parsed.status.get("status")
    if status == "completed" and completed != iterations:
        raise ReplayIntegrityError(
            f"completed status but {completed} != configured {iterations} iterations",
            parsed.status["_line"],
        )
    if status not in ("completed", "aborted"):
        raise ReplayIntegrityError(f"unknown status {status!r}", parsed.status["_line"])
    return {
        "run_id": state.run_id,
        "status": status,
        "nodes": n,
        "completed_iteration": state.current_iteration,
        "records": len(parsed.records),
        "config_hash": parsed.config_hash,
    }
