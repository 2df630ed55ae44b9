"""Diversity timelines over iteration groups, gains, and term dynamics.

Iterations 1..T are grouped into consecutive blocks of ``group_size``
(seed iteration 0 is excluded from grouping; its diversity is degenerately
zero). Stories are pooled per condition across replicate networks; the SD
column is computed across per-network diversity values when a condition
has more than one network.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import InsufficientDataError, InvalidConfigError
from ..eventlog import ParsedLog, read_log
from .text import tokenize
from .vectorize import TFIDF_FORMULA, mean_pairwise_similarity, tfidf


@dataclass
class TimelineCell:
    condition: str
    group_index: int  # 1-based
    iter_start: int
    iter_end: int
    mean_similarity: float
    diversity: float
    n_stories: int
    sd: float | None  # across per-network values; None for a single network
    partial: bool = False
    per_network: dict[str, float] = field(default_factory=dict)


@dataclass
class DiversityTimeline:
    group_size: int
    cells: list[TimelineCell]

    def conditions(self) -> list[str]:
        seen: list[str] = []
        for cell in self.cells:
            if cell.condition not in seen:
                seen.append(cell.condition)
        return seen

    def series(self, condition: str) -> list[float]:
        return [c.diversity for c in self.cells if c.condition == condition]


@dataclass
class TermChain:
    term: str
    condition: str
    counts: dict[int, int]  # iteration -> number of stories using the term
    score: float  # summed TF-IDF weight over the pooled corpus

    def segments(self) -> list[tuple[int, int]]:
        """Consecutive-iteration spans where the term stayed in use."""
        used = sorted(t for t, c in self.counts.items() if c > 0)
        spans: list[tuple[int, int]] = []
        for t in used:
            if spans and t == spans[-1][1] + 1:
                spans[-1] = (spans[-1][0], t)
            else:
                spans.append((t, t))
        return spans


def _as_parsed(logs: Iterable[ParsedLog | str | Path]) -> list[ParsedLog]:
    out = []
    for log in logs:
        out.append(log if isinstance(log, ParsedLog) else read_log(log))
    return out


def _condition_of(parsed: ParsedLog) -> str:
    return str(parsed.config.get("condition", "unknown"))


def _stories_by_iteration(parsed: ParsedLog) -> dict[int, list[str]]:
    by_iter: dict[int, list[str]] = {}
    for rec in parsed.records:
        by_iter.setdefault(rec.iteration, []).append(rec.text)
    return by_iter


def diversity_timeline(
    logs: Iterable[ParsedLog | str | Path],
    group_size: int = 5,
    drop_stopwords: bool = False,
) -> DiversityTimeline:
    """Grouped diversity per condition, pooled across that condition's networks."""
    if group_size < 1:
        raise InvalidConfigError("group_size must be >= 1")
    parsed = _as_parsed(logs)
    if not parsed:
        raise InsufficientDataError("no logs given")

    by_condition: dict[str, list[ParsedLog]] = {}
    for p in parsed:
        by_condition.setdefault(_condition_of(p), []).append(p)

    cells: list[TimelineCell] = []
    for condition in sorted(by_condition):
        networks = by_condition[condition]
        per_network_stories = [_stories_by_iteration(p) for p in networks]
        run_ids = [str(p.config.get("run_id", f"log{i}")) for i, p in enumerate(networks)]
        t_max = min(max(stories) for stories in per_network_stories)
        group_index = 0
        for start in range(1, t_max + 1, group_size):
            end = min(start + group_size - 1, t_max)
            group_index += 1
            pooled: list[str] = []
            per_network: dict[str, float] = {}
            for run_id, stories in zip(run_ids, per_network_stories):
                network_texts = [s for t in range(start, end + 1) for s in stories.get(t, [])]
                pooled.extend(network_texts)
                if len(network_texts) >= 2:
                    per_network[run_id] = _group_diversity(network_texts, drop_stopwords)
            if len(pooled) < 2:
                raise InsufficientDataError(
                    f"group {group_index} of condition {condition} has {len(pooled)} stories"
                )
            mean_sim = mean_pairwise_similarity(
                tfidf([tokenize(s, doc_id=str(i), drop_stopwords=drop_stopwords) for i, s in enumerate(pooled)])
            )
            sd = None
            if len(per_network) >= 2:
                values = list(per_network.values())
                mean_v = sum(values) / len(values)
                sd = math.sqrt(sum((v - mean_v) ** 2 for v in values) / (len(values) - 1))
            cells.append(
                TimelineCell(
                    condition=condition,
                    group_index=group_index,
                    iter_start=start,
                    iter_end=end,
                    mean_similarity=mean_sim,
                    diversity=1.0 - mean_sim,
                    n_stories=len(pooled),
                    sd=sd,
                    partial=(end - start + 1) < group_size,
                    per_network=per_network,
                )
            )
    return DiversityTimeline(group_size=group_size, cells=cells)


def _group_diversity(texts: list[str], drop_stopwords: bool) -> float:
    docs = [tokenize(s, doc_id=str(i), drop_stopwords=drop_stopwords) for i, s in enumerate(texts)]
    return 1.0 - mean_pairwise_similarity(tfidf(docs))


def gain(series: Sequence[float]) -> float:
    """Last value minus first value of a per-group (or per-iteration) series."""
    if len(series) < 2:
        raise InsufficientDataError("gain needs at least two points")
    return float(series[-1]) - float(series[0])


def timeline_gains(timeline: DiversityTimeline) -> dict[str, float]:
    return {cond: gain(timeline.series(cond)) for cond in timeline.conditions()}


def term_dynamics(
    logs: Iterable[ParsedLog | str | Path],
    top_k: int,
) -> list[TermChain]:
    """Per-iteration usage chains for the top_k terms by summed TF-IDF weight.

    Ranking pools every story across all conditions and iterations. A
    chain's count at iteration t is the number of iteration-t stories (in
    that chain's condition) containing the term at least once.
    """
    if top_k <= 0:
        raise InvalidConfigError("top_k must be positive")
    parsed = _as_parsed(logs)
    if not parsed:
        raise InsufficientDataError("no logs given")

    all_docs = []
    for p in parsed:
        for rec in p.records:
            all_docs.append(tokenize(rec.text, doc_id=f"{rec.run_id}:{rec.node}:{rec.iteration}"))
    matrix = tfidf(all_docs)
    scores = matrix.rows.sum(axis=0)
    ranked = sorted(zip(matrix.vocabulary, scores), key=lambda kv: (-kv[1], kv[0]))
    top_terms = [(term, float(score)) for term, score in ranked[:top_k]]

    by_condition: dict[str, list[ParsedLog]] = {}
    for p in parsed:
        by_condition.setdefault(_condition_of(p), []).append(p)

    chains: list[TermChain] = []
    for condition in sorted(by_condition):
        token_sets: dict[int, list[set[str]]] = {}
        for p in by_condition[condition]:
            for rec in p.records:
                token_sets.setdefault(rec.iteration, []).append(set(tokenize(rec.text).tokens))
        for term, score in top_terms:
            counts = {
                t: sum(1 for tokens in docs if term in tokens)
                for t, docs in sorted(token_sets.items())
            }
            chains.append(TermChain(term=term, condition=condition, counts=counts, score=score))
    return chains


# -- CSV emission ---------------------------------------------------------


def write_timeline_csv(timeline: DiversityTimeline, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {TFIDF_FORMULA}\n")
        writer = csv.writer(fh)
        writer.writerow(["condition", "group_index", "mean_similarity", "diversity", "sd", "n"])
        for cell in timeline.cells:
            writer.writerow(
                [
                    cell.condition,
                    cell.group_index,
                    f"{cell.mean_similarity:.12g}",
                    f"{cell.diversity:.12g}",
                    "" if cell.sd is None else f"{cell.sd:.12g}",
                    cell.n_stories,
                ]
            )


def write_per_network_csv(timeline: DiversityTimeline, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {TFIDF_FORMULA}\n")
        writer = csv.writer(fh)
        writer.writerow(["condition", "group_index", "run_id", "diversity"])
        for cell in timeline.cells:
            for run_id, value in sorted(cell.per_network.items()):
                writer.writerow([cell.condition, cell.group_index, run_id, f"{value:.12g}"])


def write_gains_csv(timeline: DiversityTimeline, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "first_group", "last_group", "gain"])
        for cond in timeline.conditions():
            series = timeline.series(cond)
            writer.writerow(
                [cond, f"{series[0]:.12g}", f"{series[-1]:.12g}", f"{gain(series):.12g}"]
            )


def write_term_chains_csv(chains: list[TermChain], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "term", "iteration", "count"])
        for chain in chains:
            for iteration, count in sorted(chain.counts.items()):
                writer.writerow([chain.condition, chain.term, iteration, count])
