"""HTTP session service: the operator surface for live human participation.

Bridges participants into a running experiment (task claiming and story
submission through the human task pool) and runs the creativity-rating
study (seeded per-rater batches, append-only CSV store). Rating payloads
never carry agent provenance; raters and participants see only story text.
"""
from __future__ import annotations

import csv
import hashlib
import os
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .agents import DEFAULT_INSTRUCTION, HumanTaskPool
from .errors import (
    ClaimRejectedError,
    RatingValidationError,
    StorynetError,
    SubmissionRejectedError,
)
from .eventlog import ParsedLog, read_log

SCALE = {
    "min": 1,
    "max": 5,
    "min_label": "not creative at all",
    "max_label": "extremely creative",
}

DEFAULT_BATCH_SIZE = 20


def story_public_id(run_id: str, node: int, iteration: int) -> str:
    """Opaque story id: stable, but reveals nothing about its origin."""
    digest = hashlib.sha1(f"{run_id}:{node}:{iteration}".encode()).hexdigest()
    return f"s{digest[:12]}"


@dataclass
class CorpusStory:
    story_id: str
    text: str
    # server-side provenance, never serialized into participant payloads
    run_id: str
    condition: str
    iteration: int
    node: int
    agent_kind: str


class RatingCorpus:
    """Stories eligible for rating, drawn from completed event logs."""

    def __init__(self, stories: list[CorpusStory]):
        self.stories = stories
        self.by_id = {s.story_id: s for s in stories}
        joined = "|".join(sorted(self.by_id))
        self.corpus_hash = hashlib.sha1(joined.encode()).hexdigest()[:12]

    @classmethod
    def from_logs(cls, logs: Iterable[ParsedLog | str | Path], include_seeds: bool = False) -> "RatingCorpus":
        stories: list[CorpusStory] = []
        for log in logs:
            parsed = log if isinstance(log, ParsedLog) else read_log(log)
            condition = str(parsed.config.get("condition", "unknown"))
            for rec in parsed.records:
                if rec.iteration == 0 and not include_seeds:
                    continue
                stories.append(
                    CorpusStory(
                        story_id=story_public_id(rec.run_id, rec.node, rec.iteration),
                        text=rec.text,
                        run_id=rec.run_id,
                        condition=condition,
                        iteration=rec.iteration,
                        node=rec.node,
                        agent_kind=rec.agent_kind.encode(),
                    )
                )
        return cls(stories)

    def batch_for(self, rater_id: str, size: int = DEFAULT_BATCH_SIZE) -> list[CorpusStory]:
        """Seeded per-rater sample: stable until the corpus changes."""
        size = min(size, len(self.stories))
        rng = random.Random(f"ratings:{rater_id}:{self.corpus_hash}")
        ordered = sorted(self.stories, key=lambda s: s.story_id)
        return rng.sample(ordered, size)

    def write_manifest(self, path: str | Path) -> None:
        """Server-side join table (story_id -> provenance) for later analysis."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["story_id", "run_id", "condition", "iteration", "node", "agent_kind"])
            for s in sorted(self.stories, key=lambda s: s.story_id):
                writer.writerow([s.story_id, s.run_id, s.condition, s.iteration, s.node, s.agent_kind])


class RatingStore:
    """Append-only CSV of (story_id, rater_id, rating); durable before ack."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seen: set[tuple[str, str]] = set()
        if self.path.exists():
            for row in csv.DictReader(self.path.read_text(encoding="utf-8").splitlines()):
                self._seen.add((row["story_id"], row["rater_id"]))
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("story_id,rater_id,rating\n", encoding="utf-8")

    def rated_by(self, rater_id: str) -> set[str]:
        with self._lock:
            return {story for story, rater in self._seen if rater == rater_id}

    def append(self, items: list[tuple[str, str, int]]) -> int:
        """Validate-then-append atomically; fsync before returning."""
        with self._lock:
            for story_id, rater_id, _ in items:
                if (story_id, rater_id) in self._seen:
                    raise RatingValidationError(f"{rater_id} already rated {story_id}")
            with self.path.open("a", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                for story_id, rater_id, rating in items:
                    writer.writerow([story_id, rater_id, rating])
                fh.flush()
                os.fsync(fh.fileno())
            self._seen.update((s, r) for s, r, _ in items)
            return len(items)


class SessionService:
    """Application-level operations behind the HTTP endpoints."""

    def __init__(
        self,
        pool: HumanTaskPool | None = None,
        corpus: RatingCorpus | None = None,
        store: RatingStore | None = None,
        instruction: str | None = None,
        batch_size: int = DEFAULT_BATCH_SIZE,
        run_info: Callable[[str], dict] | None = None,
    ):
        self.pool = pool
        self.corpus = corpus
        self.store = store
        self.batch_size = batch_size
        self.run_info = run_info
        self.instruction = instruction or DEFAULT_INSTRUCTION

    # -- live task endpoints ---------------------------------------------------

    def claim(self, run_id: str, participant_id: str) -> dict:
        if self.pool is None:
            raise ClaimRejectedError("no_active_run")
        claimed = self.pool.claim(run_id, participant_id)
        if claimed is None:
            return {"status": "no_task"}
        return {
            "status": "claimed",
            "token": claimed.token,
            "expires_at": datetime.fromtimestamp(claimed.claim_expiry, timezone.utc).isoformat(),
            "task": {
                "run_id": claimed.task.run_id,
                "node": claimed.task.node,
                "iteration": claimed.task.iteration,
                "instruction": self.instruction,
                "candidates": [
                    {"number": i + 1, "text": c.text}
                    for i, c in enumerate(claimed.task.candidates)
                ],
            },
        }

    def submit(self, token: str, selected_index: int, text: str) -> dict:
        if self.pool is None:
            raise SubmissionRejectedError("no_active_run")
        node, iteration = self.pool.submit(token, selected_index, text)
        return {"status": "accepted", "node": node, "iteration": iteration}

    def status(self, run_id: str) -> dict:
        info = {"run_id": run_id}
        if self.run_info is not None:
            info.update(self.run_info(run_id))
        if self.pool is not None:
            info["wave"] = self.pool.wave_status(run_id)
        return info

    # -- rating endpoints --------------------------------------------------------

    def next_rating_batch(self, rater_id: str) -> dict:
        if self.corpus is None or self.store is None:
            raise RatingValidationError("rating study not configured")
        if not rater_id:
            raise RatingValidationError("missing rater id")
        batch = self.corpus.batch_for(rater_id, self.batch_size)
        rated = self.store.rated_by(rater_id)
        return {
            "rater_id": rater_id,
            "scale": dict(SCALE),
            "stories": [{"story_id": s.story_id, "text": s.text} for s in batch],
            "already_rated": sorted(rated & {s.story_id for s in batch}),
        }

    def submit_ratings(self, rater_id: str, ratings: list[dict]) -> dict:
        if self.corpus is None or self.store is None:
            raise RatingValidationError("rating study not configured")
        if not ratings:
            raise RatingValidationError("empty ratings submission")
        batch_ids = {s.story_id for s in self.corpus.batch_for(rater_id, self.batch_size)}
        items: list[tuple[str, str, int]] = []
        seen: set[str] = set()
        for entry in ratings:
            story_id = str(entry.get("story_id", ""))
            rating = entry.get("rating")
            if story_id not in batch_ids:
                raise RatingValidationError(f"story {story_id!r} is not in this rater's batch")
            if not isinstance(rating, int) or isinstance(rating, bool) or not 1 <= rating <= 5:
                raise RatingValidationError(f"rating {rating!r} outside 1..5")
            if story_id in seen:
                raise RatingValidationError(f"story {story_id} rated twice in one submission")
            seen.add(story_id)
            items.append((story_id, rater_id, rating))
        stored = self.store.append(items)
        return {"status": "accepted", "stored": stored}


# -- HTTP layer -----------------------------------------------------------------


class ClaimBody(BaseModel):
    participant_id: str


class SubmitBody(BaseModel):
    selected_index: int
    text: str


class RatingItem(BaseModel):
    story_id: str
    rating: int


class RatingsBody(BaseModel):
    rater_id: str
    ratings: list[RatingItem]


_SUBMIT_STATUS = {
    "unknown_token": 404,
    "expired_token": 410,
    "already_submitted": 409,
    "empty_story": 422,
    "index_out_of_range": 422,
    "no_active_run": 409,
}


def create_app(
    service: SessionService,
    admin_key: str | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="storynet session service")

    @app.exception_handler(StorynetError)
    async def storynet_error(request, exc: StorynetError):
        return JSONResponse(status_code=400, content={"status": "rejected", "reason": str(exc)})

    @app.post("/api/v1/runs/{run_id}/claim")
    def claim(run_id: str, body: ClaimBody):
        try:
            return service.claim(run_id, body.participant_id)
        except ClaimRejectedError as exc:
            return JSONResponse(status_code=409, content={"status": "rejected", "reason": exc.reason})

    @app.post("/api/v1/tasks/{token}/submit")
    def submit(token: str, body: SubmitBody):
        try:
            return service.submit(token, body.selected_index, body.text)
        except SubmissionRejectedError as exc:
            return JSONResponse(
                status_code=_SUBMIT_STATUS.get(exc.reason, 400),
                content={"status": "rejected", "reason": exc.reason},
            )

    @app.get("/api/v1/ratings/next")
    def ratings_next(rater: str):
        try:
            return service.next_rating_batch(rater)
        except RatingValidationError as exc:
            return JSONResponse(status_code=400, content={"status": "rejected", "reason": str(exc)})

    @app.post("/api/v1/ratings")
    def ratings_submit(body: RatingsBody):
        try:
            return service.submit_ratings(body.rater_id, [r.model_dump() for r in body.ratings])
        except RatingValidationError as exc:
            return JSONResponse(status_code=400, content={"status": "rejected", "reason": str(exc)})

    @app.get("/api/v1/runs/{run_id}/status")
    def run_status(run_id: str, x_api_key: str | None = Header(default=None)):
        if admin_key and x_api_key != admin_key:
            raise HTTPException(status_code=401, detail="admin key required")
        return service.status(run_id)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
