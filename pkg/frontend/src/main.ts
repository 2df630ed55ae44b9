// Entry point. Routes by query string:
//   ?page=task&run=<run_id>&participant=<id>   live storytelling task
//   ?page=rate&rater=<id>                      rating study

import { ApiClient } from "./api.js";
import {
  renderError,
  renderRating,
  renderRatingDone,
  renderTask,
  renderTerminal,
  renderWaiting,
} from "./dom.js";
import { RatingSession } from "./ratingFlow.js";
import { pollForTask, submitStory } from "./taskFlow.js";

const app = document.getElementById("app");

async function taskPage(api: ApiClient, runId: string, participantId: string): Promise<void> {
  if (!app) return;
  const outcome = await pollForTask({
    api,
    runId,
    participantId,
    onState: (state) => {
      if (state.kind === "polling") renderWaiting(app, state.attempts);
      if (state.kind === "network_trouble") renderError(app, state.message);
    },
  });
  if (outcome.kind === "already_contributed") {
    renderTerminal(app, "You have already contributed to this experiment.");
    return;
  }
  if (outcome.kind !== "task") return;

  renderTask(app, outcome.task, {
    onSubmit: async (selectedNumber, text) => {
      const result = await submitStory(api, outcome.token, selectedNumber, text);
      if (result.accepted) {
        renderTerminal(app, "Your story was submitted. Thank you for taking part!");
      } else if (result.expired) {
        // claim lapsed while writing: go back to the waiting room
        void taskPage(api, runId, participantId);
      } else {
        renderError(app, result.reason ?? "submission rejected");
      }
    },
  });
}

async function ratingPage(api: ApiClient, raterId: string): Promise<void> {
  if (!app) return;
  const session = new RatingSession(api, raterId);
  await session.start();

  const showNext = (): void => {
    const story = session.current();
    if (!story) {
      renderRatingDone(app, session.total);
      return;
    }
    renderRating(app, story, session.scale, session.progress(), async (value) => {
      try {
        await session.rate(value);
      } catch (error) {
        renderError(app, error instanceof Error ? error.message : String(error));
      }
      showNext();
    });
  };
  showNext();
}

function start(): void {
  if (!app) return;
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient("");
  const page = params.get("page") ?? "task";
  if (page === "rate") {
    const rater = params.get("rater") ?? `rater-${Math.random().toString(36).slice(2, 10)}`;
    void ratingPage(api, rater);
  } else {
    const run = params.get("run") ?? "default";
    const participant =
      params.get("participant") ?? `p-${Math.random().toString(36).slice(2, 10)}`;
    void taskPage(api, run, participant);
  }
}

start();
