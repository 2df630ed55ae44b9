"""Rating ingestion and summary statistics against hand-computed oracles."""
from __future__ import annotations

import io

import pytest

from storynet.errors import InsufficientDataError, RatingValidationError
from storynet.metrics.ratings import RatingSet, ingest_ratings, rating_summary

from oracles import oracle_ci95, oracle_mean, oracle_sample_sd


def csv_of(rows: list[str]) -> io.StringIO:
    return io.StringIO("\n".join(["story_id,rater_id,rating"] + rows) + "\n")


class TestIngest:
    def test_basic_load(self):
        rs = ingest_ratings(csv_of(["s1,r1,3", "s2,r1,5", "s1,r2,1"]))
        assert len(rs) == 3
        assert rs.raters() == {"r1", "r2"}

    def test_rating_six_rejected_with_row(self):
        with pytest.raises(RatingValidationError) as err:
            ingest_ratings(csv_of(["s1,r1,3", "s2,r1,6"]))
        assert err.value.row == 3

    def test_rating_zero_rejected(self):
        with pytest.raises(RatingValidationError):
            ingest_ratings(csv_of(["s1,r1,0"]))

    def test_non_integer_rating_rejected(self):
        with pytest.raises(RatingValidationError):
            ingest_ratings(csv_of(["s1,r1,3.5"]))

    def test_duplicate_pair_rejected_with_row(self):
        with pytest.raises(RatingValidationError) as err:
            ingest_ratings(csv_of(["s1,r1,3", "s2,r1,4", "s1,r1,5"]))
        assert err.value.row == 4

    def test_same_story_different_raters_ok(self):
        rs = ingest_ratings(csv_of(["s1,r1,3", "s1,r2,3"]))
        assert len(rs) == 2

    def test_bad_header(self):
        with pytest.raises(RatingValidationError):
            ingest_ratings(io.StringIO("story,rater,score\ns1,r1,3\n"))

    def test_empty_file_is_empty_set(self):
        assert len(ingest_ratings(io.StringIO(""))) == 0
        assert len(ingest_ratings(io.StringIO("story_id,rater_id,rating\n"))) == 0

    def test_synthetic_100x20_scale(self):
        rows = [f"s{(r * 7 + k) % 200},r{r},{(r + k) % 5 + 1}" for r in range(100) for k in range(20)]
        rs = ingest_ratings(csv_of(rows))
        assert len(rs) == 2000
        assert len(rs.raters()) == 100


class TestSummary:
    def test_constant_ratings(self):
        rs = ingest_ratings(csv_of(["s1,r1,3", "s2,r2,3", "s3,r3,3"]))
        s = rating_summary(rs)["all"]
        assert s.mean == pytest.approx(3.0, abs=1e-12)
        assert s.sd == pytest.approx(0.0, abs=1e-12)
        assert s.ci_low == pytest.approx(3.0, abs=1e-12)
        assert s.ci_high == pytest.approx(3.0, abs=1e-12)

    def test_two_point_frozen_oracle(self):
        # [1, 5]: M = 3, SD = 2*sqrt(2), t(0.975, 1) = tan(0.475*pi)
        rs = ingest_ratings(csv_of(["s1,r1,1", "s2,r2,5"]))
        s = rating_summary(rs)["all"]
        assert s.mean == pytest.approx(3.0, abs=1e-12)
        assert s.sd == pytest.approx(2.8284271247461903, abs=1e-12)
        assert s.ci_low == pytest.approx(-22.412409472349395, abs=1e-9)
        assert s.ci_high == pytest.approx(28.412409472349395, abs=1e-9)

    def test_grouped_against_oracle(self):
        rows, expected = [], {}
        values = {"a": [1, 2, 3, 4, 5, 3], "b": [2, 2, 4], "c": [5, 1]}
        i = 0
        for key, vs in values.items():
            expected[key] = vs
            for v in vs:
                rows.append(f"{key}-s{i},r{i},{v}")
                i += 1
        rs = ingest_ratings(csv_of(rows))
        summaries = rating_summary(rs, group_of=lambda rec: rec.story_id.split("-")[0])
        for key, vs in expected.items():
            floats = [float(v) for v in vs]
            s = summaries[key]
            assert s.mean == pytest.approx(oracle_mean(floats), abs=1e-9)
            assert s.sd == pytest.approx(oracle_sample_sd(floats), abs=1e-9)
            low, high = oracle_ci95(floats)
            assert s.ci_low == pytest.approx(low, abs=1e-9)
            assert s.ci_high == pytest.approx(high, abs=1e-9)

    def test_single_observation_cell_marked_insufficient(self):
        rs = ingest_ratings(csv_of(["s1,r1,4"]))
        s = rating_summary(rs)["all"]
        assert s.insufficient
        assert s.n == 1
        assert s.mean == pytest.approx(4.0)
        assert s.sd is None and s.ci_low is None

    def test_empty_set_raises(self):
        with pytest.raises(InsufficientDataError):
            rating_summary(RatingSet([]))
