// Thin DOM layer. Stories render as plain text (textContent, never
// innerHTML with story data) and carry no provenance cues of any kind.

import { RatingScale, RatingStory, TaskPayload } from "./api.js";
import { RatingProgress } from "./ratingFlow.js";
import { canSubmit } from "./taskFlow.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderWaiting(container: HTMLElement, attempts: number): void {
  container.replaceChildren(
    el("h2", "title", "Waiting for your turn"),
    el("p", "hint", `Looking for an open slot… (check ${attempts})`),
  );
}

export function renderTerminal(container: HTMLElement, message: string): void {
  container.replaceChildren(el("h2", "title", "Thank you!"), el("p", "hint", message));
}

export interface TaskHandlers {
  onSubmit: (selectedNumber: number, text: string) => void;
}

export function renderTask(container: HTMLElement, task: TaskPayload, handlers: TaskHandlers): void {
  const form = el("div", "task");
  form.appendChild(el("p", "instruction", task.instruction));
  form.appendChild(el("p", "hint", "Pick one story to build on:"));

  let selected: number | null = null;
  const editor = el("textarea", "editor") as HTMLTextAreaElement;
  editor.rows = 8;
  editor.placeholder = "Write your story here…";
  const submit = el("button", "submit", "Submit story") as HTMLButtonElement;
  submit.disabled = true;

  const refresh = () => {
    submit.disabled = !canSubmit(selected, editor.value);
  };

  const list = el("ol", "candidates");
  for (const candidate of task.candidates) {
    const item = el("li", "candidate");
    const label = el("label");
    const radio = el("input") as HTMLInputElement;
    radio.type = "radio";
    radio.name = "candidate";
    radio.value = String(candidate.number);
    radio.addEventListener("change", () => {
      selected = candidate.number;
      refresh();
    });
    label.appendChild(radio);
    label.appendChild(el("span", "story-text", candidate.text));
    item.appendChild(label);
    list.appendChild(item);
  }
  form.appendChild(list);

  editor.addEventListener("input", refresh);
  form.appendChild(editor);
  submit.addEventListener("click", () => {
    if (selected !== null && canSubmit(selected, editor.value)) {
      handlers.onSubmit(selected, editor.value);
    }
  });
  form.appendChild(submit);
  container.replaceChildren(form);
}

export function renderRating(
  container: HTMLElement,
  story: RatingStory,
  scale: RatingScale,
  progress: RatingProgress,
  onRate: (value: number) => void,
): void {
  const panel = el("div", "rating");
  panel.appendChild(el("p", "progress", `Story ${progress.position} of ${progress.total}`));
  panel.appendChild(el("p", "story-text", story.text));
  panel.appendChild(
    el("p", "hint", `How creative is this story? ${scale.min} = ${scale.min_label}, ${scale.max} = ${scale.max_label}`),
  );
  const buttons = el("div", "scale");
  for (let value = scale.min; value <= scale.max; value += 1) {
    const button = el("button", "scale-button", String(value)) as HTMLButtonElement;
    button.addEventListener("click", () => onRate(value), { once: true });
    buttons.appendChild(button);
  }
  panel.appendChild(buttons);
  container.replaceChildren(panel);
}

export function renderRatingDone(container: HTMLElement, total: number): void {
  renderTerminal(container, `All ${total} ratings submitted. You may close this window.`);
}

export function renderError(container: HTMLElement, message: string): void {
  const banner = el("p", "error-banner", `Connection trouble: ${message} — retrying…`);
  container.prepend(banner);
}
