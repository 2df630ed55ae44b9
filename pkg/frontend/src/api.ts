// Typed client for the /api/v1 session endpoints. All UI state round-trips
// through these calls only; an optional exchange recorder lets contract
// tests assert that no payload ever carries agent provenance.

export interface CandidateView {
  number: number;
  text: string;
}

export interface TaskPayload {
  run_id: string;
  node: number;
  iteration: number;
  instruction: string;
  candidates: CandidateView[];
}

export interface ClaimResponse {
  status: "claimed" | "no_task" | "rejected";
  token?: string;
  expires_at?: string;
  task?: TaskPayload;
  reason?: string;
}

export interface SubmitResponse {
  status: "accepted" | "rejected";
  reason?: string;
  node?: number;
  iteration?: number;
}

export interface RatingScale {
  min: number;
  max: number;
  min_label: string;
  max_label: string;
}

export interface RatingStory {
  story_id: string;
  text: string;
}

export interface RatingBatch {
  rater_id: string;
  scale: RatingScale;
  stories: RatingStory[];
  already_rated: string[];
}

export interface RatingsSubmitResponse {
  status: string;
  stored?: number;
  reason?: string;
}

export interface Exchange {
  method: string;
  path: string;
  requestBody: unknown;
  status: number;
  responseBody: unknown;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch.bind(globalThis),
    private readonly onExchange?: (exchange: Exchange) => void,
  ) {}

  async claim(runId: string, participantId: string): Promise<ClaimResponse> {
    return this.request<ClaimResponse>(
      "POST",
      `/api/v1/runs/${encodeURIComponent(runId)}/claim`,
      { participant_id: participantId },
      [200, 409],
    );
  }

  async submit(token: string, selectedIndex: number, text: string): Promise<SubmitResponse> {
    return this.request<SubmitResponse>(
      "POST",
      `/api/v1/tasks/${encodeURIComponent(token)}/submit`,
      { selected_index: selectedIndex, text },
      [200, 404, 409, 410, 422],
    );
  }

  async ratingsNext(raterId: string): Promise<RatingBatch> {
    return this.request<RatingBatch>(
      "GET",
      `/api/v1/ratings/next?rater=${encodeURIComponent(raterId)}`,
      undefined,
      [200],
    );
  }

  async ratingsSubmit(
    raterId: string,
    ratings: { story_id: string; rating: number }[],
  ): Promise<RatingsSubmitResponse> {
    return this.request<RatingsSubmitResponse>(
      "POST",
      "/api/v1/ratings",
      { rater_id: raterId, ratings },
      [200],
    );
  }

  private async request<T>(
    method: string,
    path: string,
    body: unknown,
    okStatuses: number[],
  ): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let parsed: unknown = null;
    const raw = await response.text();
    if (raw) {
      try {
        parsed = JSON.parse(raw);
      } catch {
        throw new ApiError(`non-JSON response from ${path}`, response.status);
      }
    }
    this.onExchange?.({
      method,
      path,
      requestBody: body ?? null,
      status: response.status,
      responseBody: parsed,
    });
    if (!okStatuses.includes(response.status)) {
      const reason =
        parsed && typeof parsed === "object" && "reason" in parsed
          ? String((parsed as { reason: unknown }).reason)
          : `HTTP ${response.status}`;
      throw new ApiError(reason, response.status);
    }
    return parsed as T;
  }
}
