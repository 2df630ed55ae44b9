"""Creativity-rating ingestion and descriptive summaries.

Ratings arrive as CSV with header ``story_id,rater_id,rating`` (ratings
integral 1..5, one row per story/rater pair). Summaries report M, sample
SD (n-1 denominator), and a Student-t 95% confidence interval per group.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from scipy import stats

from ..errors import InsufficientDataError, RatingValidationError

EXPECTED_HEADER = ["story_id", "rater_id", "rating"]


@dataclass(frozen=True)
class RatingRecord:
    story_id: str
    rater_id: str
    rating: int


@dataclass
class RatingSet:
    records: list[RatingRecord]

    def __len__(self) -> int:
        return len(self.records)

    def raters(self) -> set[str]:
        return {r.rater_id for r in self.records}

    def stories(self) -> set[str]:
        return {r.story_id for r in self.records}


@dataclass
class RatingSummary:
    n: int
    mean: float | None
    sd: float | None
    ci_low: float | None
    ci_high: float | None
    insufficient: bool

    @classmethod
    def from_values(cls, values: list[float]) -> "RatingSummary":
        n = len(values)
        if n == 0:
            return cls(0, None, None, None, None, True)
        mean = sum(values) / n
        if n < 2:
            return cls(n, mean, None, None, None, True)
        sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
        half = float(stats.t.ppf(0.975, n - 1)) * sd / math.sqrt(n)
        return cls(n, mean, sd, mean - half, mean + half, False)


def ingest_ratings(source: str | Path | Iterable[str]) -> RatingSet:
    """Validate and load a ratings table.

    Row numbers in errors are 1-based file line numbers (header is line 1).
    An empty file yields an empty set.
    """
    if isinstance(source, (str, Path)):
        with Path(source).open("r", newline="", encoding="utf-8") as fh:
            return _ingest_lines(fh)
    return _ingest_lines(source)


def _ingest_lines(lines: Iterable[str]) -> RatingSet:
    reader = csv.reader(lines)
    records: list[RatingRecord] = []
    seen: set[tuple[str, str]] = set()
    header_checked = False
    for row_number, row in enumerate(reader, start=1):
        if not row:
            continue
        if not header_checked:
            if [c.strip() for c in row] != EXPECTED_HEADER:
                raise RatingValidationError(
                    f"expected header {','.join(EXPECTED_HEADER)}, got {','.join(row)}", row_number
                )
            header_checked = True
            continue
        if len(row) != 3:
            raise RatingValidationError(f"expected 3 columns, got {len(row)}", row_number)
        story_id, rater_id, raw_rating = (c.strip() for c in row)
        if not story_id or not rater_id:
            raise RatingValidationError("empty story_id or rater_id", row_number)
        try:
            rating = int(raw_rating)
        except ValueError:
            raise RatingValidationError(f"rating {raw_rating!r} is not an integer", row_number) from None
        if not 1 <= rating <= 5:
            raise RatingValidationError(f"rating {rating} outside 1..5", row_number)
        key = (story_id, rater_id)
        if key in seen:
            raise RatingValidationError(f"duplicate rating for {story_id} by {rater_id}", row_number)
        seen.add(key)
        records.append(RatingRecord(story_id, rater_id, rating))
    return RatingSet(records)


def rating_summary(
    rating_set: RatingSet,
    group_of: Callable[[RatingRecord], str] | None = None,
) -> dict[str, RatingSummary]:
    """Per-group M / SD / CI95; ``group_of`` maps a record to its cell key.

    Cells with n < 2 come back flagged insufficient rather than failing the
    whole summary. An empty rating set raises.
    """
    if not rating_set.records:
        raise InsufficientDataError("no ratings to summarize")
    groups: dict[str, list[float]] = {}
    for rec in rating_set.records:
        key = group_of(rec) if group_of else "all"
        groups.setdefault(key, []).append(float(rec.rating))
    return {key: RatingSummary.from_values(values) for key, values in sorted(groups.items())}


def write_summary_csv(summaries: dict[str, RatingSummary], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("# ci95 = mean +/- t(0.975, n-1) * sd / sqrt(n); sd uses n-1\n")
        writer = csv.writer(fh)
        writer.writerow(["group", "n", "mean", "sd", "ci_low", "ci_high"])
        for key, s in summaries.items():
            writer.writerow(
                [
                    key,
                    s.n,
                    "" if s.mean is None else f"{s.mean:.12g}",
                    "" if s.sd is None else f"{s.sd:.12g}",
                    "" if s.ci_low is None else f"{s.ci_low:.12g}",
                    "" if s.ci_high is None else f"{s.ci_high:.12g}",
                ]
            )
