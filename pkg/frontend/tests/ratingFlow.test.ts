// Rating session: sequential presentation, resume, scale validation.
import { describe, expect, it } from "vitest";

import { ApiClient, RatingBatch } from "../src/api.js";
import { RatingSession } from "../src/ratingFlow.js";

const SCALE = { min: 1, max: 5, min_label: "not creative at all", max_label: "extremely creative" };

function batchOf(n: number, alreadyRated: string[] = []): RatingBatch {
  return {
    rater_id: "z",
    scale: SCALE,
    stories: Array.from({ length: n }, (_, i) => ({ story_id: `s${i}`, text: `story ${i}` })),
    already_rated: alreadyRated,
  };
}

function apiFor(batch: RatingBatch) {
  const posted: { story_id: string; rating: number }[] = [];
  const api = {
    ratingsNext: async () => batch,
    ratingsSubmit: async (_rater: string, ratings: { story_id: string; rating: number }[]) => {
      posted.push(...ratings);
      return { status: "accepted", stored: ratings.length };
    },
  } as unknown as ApiClient;
  return { api, posted };
}

describe("RatingSession", () => {
  it("walks all twenty stories exactly once", async () => {
    const { api, posted } = apiFor(batchOf(20));
    const session = new RatingSession(api, "z");
    await session.start();
    expect(session.total).toBe(20);
    let guard = 0;
    while (!session.complete && guard++ < 50) {
      await session.rate(((guard - 1) % 5) + 1);
    }
    expect(posted).toHaveLength(20);
    expect(new Set(posted.map((p) => p.story_id)).size).toBe(20);
    expect(session.complete).toBe(true);
  });

  it("resumes at the first unrated story", async () => {
    const rated = Array.from({ length: 7 }, (_, i) => `s${i}`);
    const { api } = apiFor(batchOf(20, rated));
    const session = new RatingSession(api, "z");
    await session.start();
    expect(session.progress()).toEqual({ position: 8, total: 20 });
    expect(session.current()?.story_id).toBe("s7");
  });

  it("rejects out-of-scale values before hitting the wire", async () => {
    const { api, posted } = apiFor(batchOf(3));
    const session = new RatingSession(api, "z");
    await session.start();
    await expect(session.rate(0)).rejects.toThrow("outside");
    await expect(session.rate(6)).rejects.toThrow("outside");
    await expect(session.rate(2.5)).rejects.toThrow("outside");
    expect(posted).toHaveLength(0);
  });

  it("refuses to rate past the end", async () => {
    const { api } = apiFor(batchOf(1));
    const session = new RatingSession(api, "z");
    await session.start();
    await session.rate(3);
    await expect(session.rate(3)).rejects.toThrow("complete");
  });
});
