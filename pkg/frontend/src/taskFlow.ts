// Participant task flow: poll for an open slot, render candidates, submit
// one elaborated story. Pure logic; the DOM layer subscribes via onState.

import { ApiClient, ApiError, SubmitResponse, TaskPayload } from "./api.js";

export type TaskState =
  | { kind: "polling"; attempts: number }
  | { kind: "ready"; task: TaskPayload; token: string }
  | { kind: "submitting" }
  | { kind: "done" }
  | { kind: "already_contributed" }
  | { kind: "network_trouble"; message: string };

export interface TaskFlowOptions {
  api: ApiClient;
  runId: string;
  participantId: string;
  pollIntervalMs?: number; // default 3000 with jitter
  jitterMs?: number;
  maxPolls?: number;
  sleep?: (ms: number) => Promise<void>;
  random?: () => number;
  onState?: (state: TaskState) => void;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export type ClaimOutcome =
  | { kind: "task"; task: TaskPayload; token: string }
  | { kind: "already_contributed" }
  | { kind: "gave_up" };

export async function pollForTask(options: TaskFlowOptions): Promise<ClaimOutcome> {
  const {
    api,
    runId,
    participantId,
    pollIntervalMs = 3000,
    jitterMs = 500,
    maxPolls = Number.POSITIVE_INFINITY,
    sleep = defaultSleep,
    random = Math.random,
    onState,
  } = options;
  let attempts = 0;
  while (attempts < maxPolls) {
    attempts += 1;
    onState?.({ kind: "polling", attempts });
    try {
      const response = await api.claim(runId, participantId);
      if (response.status === "claimed" && response.task && response.token) {
        onState?.({ kind: "ready", task: response.task, token: response.token });
        return { kind: "task", task: response.task, token: response.token };
      }
      if (response.status === "rejected") {
        onState?.({ kind: "already_contributed" });
        return { kind: "already_contributed" };
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        onState?.({ kind: "already_contributed" });
        return { kind: "already_contributed" };
      }
      onState?.({
        kind: "network_trouble",
        message: error instanceof Error ? error.message : String(error),
      });
    }
    await sleep(pollIntervalMs + random() * jitterMs);
  }
  return { kind: "gave_up" };
}

// Submit is enabled only once a candidate is selected and the editor is
// nonempty; the server enforces the same rules regardless.
export function canSubmit(selectedNumber: number | null, text: string): boolean {
  return selectedNumber !== null && text.trim().length > 0;
}

export interface SubmitOutcome {
  accepted: boolean;
  reason?: string;
  expired: boolean;
}

export async function submitStory(
  api: ApiClient,
  token: string,
  selectedNumber: number,
  text: string,
): Promise<SubmitOutcome> {
  try {
    const response: SubmitResponse = await api.submit(token, selectedNumber - 1, text);
    if (response.status === "accepted") {
      return { accepted: true, expired: false };
    }
    return {
      accepted: false,
      reason: response.reason,
      expired: response.reason === "expired_token",
    };
  } catch (error) {
    if (error instanceof ApiError) {
      return { accepted: false, reason: error.message, expired: error.status === 410 };
    }
    throw error;
  }
}
