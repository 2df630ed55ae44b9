"""The three agent families that fill node slots.

Scripted agents are pure functions of (task, rng_seed, params) and model the
two behavioral poles seen in transmission chains: a conservative agent that
stays close to the original storyline, and a divergent agent that drifts
toward a fixed theme vocabulary. The LLM agent speaks the OpenAI-style
chat-completions wire protocol. The human-agent bridge is a claimable task
pool the session service exposes over HTTP.
"""
from __future__ import annotations

import hashlib
import math
import os
import random
import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import requests

from .errors import (
    AgentFailureError,
    ClaimRejectedError,
    InvalidConfigError,
    ParseError,
    ProtocolViolationError,
    SubmissionRejectedError,
    TemplateError,
)
from .metrics.text import content_tokens, tokenize
from .network import AgentKind, StoryRecord
from .stopwords import ENGLISH_STOPWORDS

# -- task and submission ----------------------------------------------------


@dataclass
class Task:
    run_id: str
    node: int
    iteration: int
    candidates: list[StoryRecord]
    prompt_template: str | None = None
    deadline: float | None = None  # seconds the slot may stay unclaimed/unfilled

    def __post_init__(self) -> None:
        if not self.candidates:
            raise InvalidConfigError(f"task for node {self.node} has no candidates")
        if any(c.iteration != self.iteration - 1 for c in self.candidates):
            raise InvalidConfigError("all candidates must come from the previous iteration")


@dataclass
class Submission:
    selected_index: int
    text: str
    meta: dict | None = None


def validate_submission(submission: Submission, candidate_count: int) -> None:
    if not submission.text or not submission.text.strip():
        raise ProtocolViolationError("submission text is empty")
    if not 0 <= submission.selected_index < candidate_count:
        raise ProtocolViolationError(
            f"selected_index {submission.selected_index} outside 0..{candidate_count - 1}"
        )


def slot_seed(run_seed: int, node: int, iteration: int) -> int:
    """Stable per-slot RNG seed derived from the run seed."""
    digest = hashlib.sha256(f"{run_seed}:{node}:{iteration}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# -- scripted agents ---------------------------------------------------------

CONTINUATIONS = (
    "The next morning brought an unexpected visitor to the door.",
    "He decided then and there that nothing like this would happen again.",
    "A neighbour waved from across the street, oblivious to the commotion.",
    "Somewhere upstairs, a clock struck the hour with unusual force.",
    "It took a long cup of tea before anyone could laugh about it.",
    "The smell of rain drifted in as the evening settled down.",
    "Not everything was back in its place, but it was close enough.",
    "Later, retelling the story, he could not help exaggerating a little.",
    "The cat, naturally, acted as if nothing at all had occurred.",
    "A small note was pinned to the door the following week.",
    "For days afterwards, every jingle of metal made him flinch.",
    "In the end, a spare was cut and hidden under the third flowerpot.",
)

DRIFT_VOCABULARY = (
    "galaxy", "nebula", "starlight", "cosmic", "comet", "asteroid", "orbit",
    "supernova", "quasar", "eclipse", "meteor", "constellation", "aurora",
    "gravity", "stardust", "celestial", "lunar", "solar", "void", "horizon",
    "satellite", "telescope", "infinity", "dimension", "wormhole", "photon",
    "pulsar", "zenith", "twilight", "umbra", "parallax", "singularity",
    "cosmos", "andromeda", "spiral", "radiant", "drift", "vacuum", "plasma",
    "crater", "rover", "module", "beacon", "signal", "relay", "observatory",
    "expanse", "corona", "halo", "flare", "dust", "ion", "ring", "moonlight",
    "skyline", "meridian", "equinox", "solstice", "tide", "current", "ember",
    "prism", "spectrum", "resonance",
)


def scripted_conservative(
    task: Task,
    rng_seed: int,
    seed_story: str,
    continuations: Sequence[str] = CONTINUATIONS,
) -> Submission:
    """Select the candidate closest to the original storyline and extend it.

    Closeness is lexical overlap (shared distinct tokens) with the run's
    seed story; ties break to the lowest index. The output preserves every
    token of the selected candidate and appends one continuation sentence
    chosen by the seeded RNG.
    """
    seed_tokens = set(tokenize(seed_story).tokens)
    overlaps = [len(seed_tokens & set(tokenize(c.text).tokens)) for c in task.candidates]
    selected = max(range(len(overlaps)), key=lambda i: (overlaps[i], -i))
    rng = random.Random(rng_seed)
    sentence = rng.choice(list(continuations))
    return Submission(selected, task.candidates[selected].text.rstrip() + " " + sentence)


def scripted_divergent(
    task: Task,
    rng_seed: int,
    replace_fraction: float,
    vocabulary: Sequence[str] = DRIFT_VOCABULARY,
) -> Submission:
    """Select a random candidate and replace a fraction of its content words.

    ceil(replace_fraction * content-word-count) content-word positions are
    replaced with drift-vocabulary words; surrounding punctuation survives.
    Replacement words are drawn from the vocabulary minus the candidate's
    own content tokens, so at replace_fraction=1 no content word of the
    candidate survives.
    """
    if not 0.0 <= replace_fraction <= 1.0:
        raise InvalidConfigError(f"replace_fraction {replace_fraction} outside [0, 1]")
    rng = random.Random(rng_seed)
    selected = rng.randrange(len(task.candidates))
    text = task.candidates[selected].text
    if replace_fraction == 0.0:
        return Submission(selected, text)

    words = text.split()
    pieces = [_split_word(w) for w in words]
    positions = [i for i, (_, core, _) in enumerate(pieces) if _is_content_core(core)]
    if not positions:
        return Submission(selected, text)
    count = min(len(positions), math.ceil(replace_fraction * len(positions)))
    chosen = sorted(rng.sample(positions, count))

    forbidden = content_tokens(text)
    choices = [w for w in vocabulary if w not in forbidden]
    if not choices:  # pathological: candidate already contains the whole vocabulary
        coined = "driftword"
        while coined in forbidden:
            coined += "x"
        choices = [coined]
    for i in chosen:
        prefix, _, suffix = pieces[i]
        words[i] = prefix + rng.choice(choices) + suffix
    return Submission(selected, " ".join(words))


def _split_word(word: str) -> tuple[str, str, str]:
    """(leading punctuation, core, trailing punctuation) of a whitespace word."""
    start, end = 0, len(word)
    while start < end and not (word[start].isalpha() or word[start] == "'"):
        start += 1
    while end > start and not (word[end - 1].isalpha() or word[end - 1] == "'"):
        end -= 1
    return word[:start], word[start:end], word[end:]


def _is_content_core(core: str) -> bool:
    lowered = core.lower()
    return (
        len(lowered) > 1
        and any(c.isalpha() for c in lowered)
        and lowered not in ENGLISH_STOPWORDS
    )


# -- prompt assembly and response parsing ------------------------------------

DEFAULT_INSTRUCTION = "Please creatively elaborate on the story, adding your own details and ideas."

RESPONSE_FORMAT_DIRECTIVE = (
    "Reply with exactly two fields, nothing else:\n"
    "CHOICE: <the number of the story you elaborate on>\n"
    "STORY: <your new story>"
)

DEFAULT_TEMPLATE = (
    "{instruction}\n"
    "\n"
    "These are the stories written by your neighbours:\n"
    "\n"
    "{candidates}\n"
    "\n" + RESPONSE_FORMAT_DIRECTIVE
)


def assemble_prompt(task: Task, template: str | None = None, instruction: str = DEFAULT_INSTRUCTION) -> str:
    """Render the instruction plus the numbered candidate list, deterministically."""
    template = template or task.prompt_template or DEFAULT_TEMPLATE
    for placeholder in ("{instruction}", "{candidates}"):
        if placeholder not in template:
            raise TemplateError(f"template is missing the {placeholder} placeholder")
    numbered = "\n\n".join(f"{i + 1}. {c.text}" for i, c in enumerate(task.candidates))
    return template.replace("{instruction}", instruction).replace("{candidates}", numbered)


_CHOICE_RE = re.compile(r"CHOICE\s*:\s*(-?\d+)")


def parse_llm_response(raw: str, candidate_count: int) -> Submission:
    """Extract the 1-based choice and story text; raises ParseError otherwise.

    The selection marker may be omitted only when there is exactly one
    candidate. Story text is everything after the first STORY: marker,
    surrounding whitespace stripped.
    """
    if candidate_count < 1:
        raise InvalidConfigError("candidate_count must be >= 1")
    head, marker, tail = raw.partition("STORY:")
    if not marker:
        raise ParseError("response has no STORY: field")
    text = tail.strip()
    if not text:
        raise ParseError("response has an empty story")
    match = _CHOICE_RE.search(head)
    if match is None:
        if candidate_count == 1:
            return Submission(0, text)
        raise ParseError("response has no CHOICE: field")
    wire_index = int(match.group(1))
    if not 1 <= wire_index <= candidate_count:
        raise ParseError(f"CHOICE {wire_index} outside 1..{candidate_count}")
    return Submission(wire_index - 1, text)


def render_response(submission: Submission) -> str:
    """The inverse of parse_llm_response, used by mocks and tests."""
    return f"CHOICE: {submission.selected_index + 1}\nSTORY: {submission.text}"


# -- LLM endpoint agent -------------------------------------------------------

RETRYABLE_STATUS = frozenset({429}) | frozenset(range(500, 600))


@dataclass
class LLMConfig:
    endpoint: str = "http://127.0.0.1:8099/v1/chat/completions"
    model: str = "gpt-4o-2024-09-03"
    temperature: float = 1.0
    max_output_tokens: int = 512
    request_timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_concurrency: int = 8
    api_key_env: str = "STORYNET_LLM_API_KEY"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise InvalidConfigError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise InvalidConfigError("max_output_tokens must be positive")
        if self.max_retries < 0 or not math.isfinite(self.request_timeout):
            raise InvalidConfigError("retries and timeouts must be finite")


def llm_generate(
    task: Task,
    config: LLMConfig,
    template: str | None = None,
    semaphore: threading.Semaphore | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Submission:
    """One chat-completion round-trip with retry on transient failures.

    Timeouts, connection errors, HTTP 429/5xx, and unparsable responses are
    retried with exponential backoff up to max_retries; other 4xx statuses
    fail immediately. Token usage, latency, and attempt count land in the
    submission's metadata and never affect simulation semantics.
    """
    prompt = assemble_prompt(task, template)
    headers = {}
    api_key = os.environ.get(config.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }

    attempts = config.max_retries + 1
    last_error = "unknown"
    for attempt in range(attempts):
        start = time.monotonic()
        try:
            if semaphore is not None:
                with semaphore:
                    response = requests.post(
                        config.endpoint, json=payload, headers=headers, timeout=config.request_timeout
                    )
            else:
                response = requests.post(
                    config.endpoint, json=payload, headers=headers, timeout=config.request_timeout
                )
        except requests.RequestException as exc:
            last_error = f"transport: {exc}"
            if attempt + 1 < attempts:
                sleep(config.backoff_base * (2**attempt))
            continue
        latency = time.monotonic() - start

        if response.status_code in RETRYABLE_STATUS:
            last_error = f"status {response.status_code}"
            if attempt + 1 < attempts:
                sleep(config.backoff_base * (2**attempt))
            continue
        if response.status_code != 200:
            raise AgentFailureError(
                f"endpoint returned non-retryable status {response.status_code}: {response.text[:200]}"
            )
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
            submission = parse_llm_response(content, len(task.candidates))
        except (KeyError, IndexError, TypeError, ValueError, ParseError) as exc:
            last_error = f"parse: {exc}"
            if attempt + 1 < attempts:
                sleep(config.backoff_base * (2**attempt))
            continue
        usage = body.get("usage") or {}
        submission.meta = {
            "latency_s": round(latency, 6),
            "attempts": attempt + 1,
            "prompt_tokens": usage.get("prompt_tokens"),
            "completion_tokens": usage.get("completion_tokens"),
        }
        return submission
    raise AgentFailureError(f"retries exhausted after {attempts} attempts; last error: {last_error}")


# -- agent classes used by the orchestrator ----------------------------------


class ConservativeAgent:
    """Human-modeling scripted agent: stays close to the seed story."""

    name = "conservative"

    def __init__(self, seed_story: str, run_seed: int, continuations: Sequence[str] | None = None):
        self.seed_story = seed_story
        self.run_seed = run_seed
        self.continuations = tuple(continuations) if continuations else CONTINUATIONS
        self.nominal_kind = AgentKind("scripted", self.name)

    def submit_task(self, task: Task) -> tuple[Submission, AgentKind]:
        sub = scripted_conservative(
            task, slot_seed(self.run_seed, task.node, task.iteration), self.seed_story, self.continuations
        )
        return sub, self.nominal_kind


class DivergentAgent:
    """AI-modeling scripted agent: drifts toward a fixed theme vocabulary."""

    name = "divergent"

    def __init__(self, replace_fraction: float, run_seed: int, vocabulary: Sequence[str] | None = None):
        if not 0.0 <= replace_fraction <= 1.0:
            raise InvalidConfigError(f"replace_fraction {replace_fraction} outside [0, 1]")
        self.replace_fraction = replace_fraction
        self.run_seed = run_seed
        self.vocabulary = tuple(vocabulary) if vocabulary else DRIFT_VOCABULARY
        self.nominal_kind = AgentKind("scripted", self.name)

    def submit_task(self, task: Task) -> tuple[Submission, AgentKind]:
        sub = scripted_divergent(
            task, slot_seed(self.run_seed, task.node, task.iteration), self.replace_fraction, self.vocabulary
        )
        return sub, self.nominal_kind


class LLMAgent:
    """Chat-completions endpoint agent with a shared concurrent-request cap."""

    def __init__(self, config: LLMConfig, template: str | None = None):
        self.config = config
        self.template = template
        self.nominal_kind = AgentKind("llm", config.model)
        self._semaphore = threading.BoundedSemaphore(config.max_concurrency)

    def submit_task(self, task: Task) -> tuple[Submission, AgentKind]:
        sub = llm_generate(task, self.config, self.template, semaphore=self._semaphore)
        return sub, self.nominal_kind


class SessionAgent:
    """Bridges a node slot to a live human participant via the task pool."""

    def __init__(self, pool: "HumanTaskPool"):
        self.pool = pool
        self.nominal_kind = AgentKind("human", "unassigned")

    def submit_task(self, task: Task) -> tuple[Submission, AgentKind]:
        self.pool.post(task)
        submission, participant_id = self.pool.wait_slot(task.node, task.iteration, timeout=task.deadline)
        return submission, AgentKind("human", participant_id)


# -- the human-agent bridge ---------------------------------------------------


@dataclass
class ClaimedTask:
    token: str
    task: Task
    participant_id: str
    claim_expiry: float  # epoch seconds


@dataclass
class _Slot:
    task: Task
    claim: Optional[ClaimedTask] = None
    submission: Optional[Submission] = None
    participant_id: Optional[str] = None


class HumanTaskPool:
    """Claimable pool of open human slots for the wave in progress.

    The pool lock is the single linearization point for claims: a slot is
    never handed to two participants, claims are idempotent per participant
    until they expire, and each participant may contribute once per run.
    """

    def __init__(
        self,
        claim_ttl: float = 600.0,
        journal: Callable[[int, int, Submission, str], None] | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.claim_ttl = claim_ttl
        self.journal = journal
        self.clock = clock
        self._lock = threading.Lock()
        self._filled = threading.Condition(self._lock)
        self._slots: dict[tuple[int, int], _Slot] = {}
        self._by_token: dict[str, tuple[int, int]] = {}
        self._claim_by_participant: dict[str, str] = {}
        self._contributed: set[str] = set()
        self._expired_tokens: set[str] = set()
        self._consumed_tokens: set[str] = set()
        self._cancelled_waves: set[int] = set()

    # orchestrator side ------------------------------------------------------

    def post(self, task: Task) -> None:
        """Open a slot for claiming; re-posting the same slot is a no-op."""
        with self._lock:
            key = (task.node, task.iteration)
            if key not in self._slots:
                self._slots[key] = _Slot(task=task)
            self._cancelled_waves.discard(task.iteration)
            self._filled.notify_all()

    def preload(self, node: int, iteration: int, submission: Submission, participant_id: str) -> None:
        """Recover a journalled submission after a restart; marks the slot filled."""
        with self._lock:
            slot = self._slots.get((node, iteration))
            if slot is None:
                raise InvalidConfigError(f"no posted slot ({node}, {iteration}) to preload")
            slot.submission = submission
            slot.participant_id = participant_id
            self._contributed.add(participant_id)
            self._filled.notify_all()

    def mark_contributed(self, participant_ids: Sequence[str]) -> None:
        with self._lock:
            self._contributed.update(participant_ids)

    def wait_slot(self, node: int, iteration: int, timeout: float | None = None) -> tuple[Submission, str]:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._filled:
            while True:
                slot = self._slots.get((node, iteration))
                if slot is not None and slot.submission is not None:
                    assert slot.participant_id is not None
                    return slot.submission, slot.participant_id
                if iteration in self._cancelled_waves:
                    raise AgentFailureError(f"wave {iteration} cancelled while slot ({node}) was open")
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise AgentFailureError(f"no human submission for slot ({node}, {iteration}) in time")
                self._filled.wait(timeout=remaining)

    def cancel_wave(self, iteration: int) -> None:
        """Release every thread waiting on this wave's unfilled slots."""
        with self._lock:
            self._cancelled_waves.add(iteration)
            self._filled.notify_all()

    def clear_wave(self, iteration: int) -> None:
        """Drop all slots of a finished wave."""
        with self._lock:
            for key in [k for k in self._slots if k[1] == iteration]:
                slot = self._slots.pop(key)
                if slot.claim is not None:
                    self._by_token.pop(slot.claim.token, None)
                    self._claim_by_participant.pop(slot.claim.participant_id, None)

    # service side -------------------------------------------------------------

    def claim(self, run_id: str, participant_id: str) -> ClaimedTask | None:
        """Atomically assign an open slot; None when no slot is available."""
        if not participant_id:
            raise ClaimRejectedError("missing_participant_id")
        with self._lock:
            self._reap_expired()
            if participant_id in self._contributed:
                raise ClaimRejectedError("already_contributed")
            existing = self._claim_by_participant.get(participant_id)
            if existing is not None:
                return self._slots[self._by_token[existing]].claim
            for key in sorted(self._slots):
                slot = self._slots[key]
                if slot.task.run_id != run_id:
                    continue
                if slot.claim is None and slot.submission is None:
                    token = secrets.token_urlsafe(16)
                    claimed = ClaimedTask(
                        token=token,
                        task=slot.task,
                        participant_id=participant_id,
                        claim_expiry=self.clock() + self.claim_ttl,
                    )
                    slot.claim = claimed
                    self._by_token[token] = key
                    self._claim_by_participant[participant_id] = token
                    return claimed
            return None

    def submit(self, token: str, selected_index: int, text: str) -> tuple[int, int]:
        """Validate and accept a participant submission; consumes the token."""
        with self._lock:
            self._reap_expired()
            if token in self._consumed_tokens:
                raise SubmissionRejectedError("already_submitted")
            if token in self._expired_tokens:
                raise SubmissionRejectedError("expired_token")
            key = self._by_token.get(token)
            if key is None:
                raise SubmissionRejectedError("unknown_token")
            slot = self._slots[key]
            assert slot.claim is not None
            if not text or not text.strip():
                raise SubmissionRejectedError("empty_story")
            if not 0 <= selected_index < len(slot.task.candidates):
                raise SubmissionRejectedError("index_out_of_range")
            submission = Submission(selected_index, text)
            participant_id = slot.claim.participant_id
            if self.journal is not None:  # durable before acknowledgment
                self.journal(key[0], key[1], submission, participant_id)
            slot.submission = submission
            slot.participant_id = participant_id
            self._contributed.add(participant_id)
            self._consumed_tokens.add(token)
            self._by_token.pop(token, None)
            self._claim_by_participant.pop(participant_id, None)
            slot.claim = None
            self._filled.notify_all()
            return key

    def wave_status(self, run_id: str) -> dict:
        with self._lock:
            self._reap_expired()
            slots = [s for s in self._slots.values() if s.task.run_id == run_id]
            return {
                "open": sum(1 for s in slots if s.claim is None and s.submission is None),
                "claimed": sum(1 for s in slots if s.claim is not None),
                "submitted": sum(1 for s in slots if s.submission is not None),
                "total": len(slots),
            }

    def _reap_expired(self) -> None:
        now = self.clock()
        for slot in self._slots.values():
            claim = slot.claim
            if claim is not None and claim.claim_expiry <= now:
                self._expired_tokens.add(claim.token)
                self._by_token.pop(claim.token, None)
                self._claim_by_participant.pop(claim.participant_id, None)
                slot.claim = None
