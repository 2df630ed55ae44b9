// Sequential story-rating flow: one seeded 20-story batch per rater, one
// rating per story, no back-navigation. Each accepted rating is posted
// immediately, so a dropped connection resumes at the first unrated story.

import { ApiClient, RatingScale, RatingStory } from "./api.js";

export interface RatingProgress {
  position: number; // 1-based index of the story on screen
  total: number;
}

export class RatingSession {
  private stories: RatingStory[] = [];
  private rated = new Set<string>();
  private cursor = 0;
  scale: RatingScale = { min: 1, max: 5, min_label: "not creative at all", max_label: "extremely creative" };

  constructor(
    private readonly api: ApiClient,
    private readonly raterId: string,
  ) {}

  async start(): Promise<void> {
    const batch = await this.api.ratingsNext(this.raterId);
    this.stories = batch.stories;
    this.scale = batch.scale;
    this.rated = new Set(batch.already_rated);
    this.cursor = this.stories.findIndex((s) => !this.rated.has(s.story_id));
    if (this.cursor < 0) {
      this.cursor = this.stories.length;
    }
  }

  get total(): number {
    return this.stories.length;
  }

  get complete(): boolean {
    return this.cursor >= this.stories.length;
  }

  current(): RatingStory | null {
    return this.complete ? null : this.stories[this.cursor];
  }

  progress(): RatingProgress {
    return { position: Math.min(this.cursor + 1, this.total), total: this.total };
  }

  // Post one rating and advance; values outside the scale never reach the wire.
  async rate(value: number): Promise<void> {
    const story = this.current();
    if (!story) {
      throw new Error("rating flow already complete");
    }
    if (!Number.isInteger(value) || value < this.scale.min || value > this.scale.max) {
      throw new Error(`rating ${value} outside ${this.scale.min}..${this.scale.max}`);
    }
    await this.api.ratingsSubmit(this.raterId, [{ story_id: story.story_id, rating: value }]);
    this.rated.add(story.story_id);
    this.cursor += 1;
  }
}
