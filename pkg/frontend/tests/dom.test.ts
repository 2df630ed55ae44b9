// @vitest-environment happy-dom
// DOM layer: submit gating, numbered candidates, no provenance cues.
import { describe, expect, it } from "vitest";

import { renderRating, renderTask, renderWaiting } from "../src/dom.js";

const TASK = {
  run_id: "r1",
  node: 0,
  iteration: 1,
  instruction: "Please creatively elaborate on the story, adding your own details and ideas.",
  candidates: [
    { number: 1, text: "first neighbour story" },
    { number: 2, text: "second neighbour story" },
  ],
};

function container(): HTMLElement {
  const node = document.createElement("div");
  document.body.appendChild(node);
  return node;
}

describe("renderTask", () => {
  it("renders numbered candidates and a disabled submit", () => {
    const root = container();
    renderTask(root, TASK, { onSubmit: () => {} });
    const items = root.querySelectorAll("li");
    expect(items).toHaveLength(2);
    expect(root.textContent).toContain("first neighbour story");
    const submit = root.querySelector("button") as HTMLButtonElement;
    expect(submit.disabled).toBe(true);
  });

  it("enables submit only after selection and text", () => {
    const root = container();
    renderTask(root, TASK, { onSubmit: () => {} });
    const submit = root.querySelector("button.submit") as HTMLButtonElement;
    const editor = root.querySelector("textarea") as HTMLTextAreaElement;
    const radio = root.querySelector("input[type=radio]") as HTMLInputElement;

    editor.value = "my elaboration";
    editor.dispatchEvent(new Event("input"));
    expect(submit.disabled).toBe(true); // no selection yet

    radio.checked = true;
    radio.dispatchEvent(new Event("change"));
    expect(submit.disabled).toBe(false);

    editor.value = "   ";
    editor.dispatchEvent(new Event("input"));
    expect(submit.disabled).toBe(true);
  });

  it("passes the selected display number on submit", () => {
    const root = container();
    const submitted: [number, string][] = [];
    renderTask(root, TASK, { onSubmit: (n, t) => submitted.push([n, t]) });
    const radios = root.querySelectorAll("input[type=radio]");
    (radios[1] as HTMLInputElement).dispatchEvent(new Event("change"));
    const editor = root.querySelector("textarea") as HTMLTextAreaElement;
    editor.value = "a new tale";
    editor.dispatchEvent(new Event("input"));
    (root.querySelector("button.submit") as HTMLButtonElement).click();
    expect(submitted).toEqual([[2, "a new tale"]]);
  });

  it("shows no provenance cues anywhere", () => {
    const root = container();
    renderTask(root, TASK, { onSubmit: () => {} });
    const html = root.innerHTML.toLowerCase();
    for (const marker of ["agent", "human", "llm", "gpt", "scripted", "condition"]) {
      expect(html).not.toContain(marker);
    }
  });
});

describe("renderRating", () => {
  const STORY = { story_id: "s1", text: "a story to rate" };
  const SCALE = { min: 1, max: 5, min_label: "not creative at all", max_label: "extremely creative" };

  it("renders the 1..5 scale with labels and progress", () => {
    const root = container();
    renderRating(root, STORY, SCALE, { position: 8, total: 20 }, () => {});
    const buttons = root.querySelectorAll("button");
    expect(buttons).toHaveLength(5);
    expect(root.textContent).toContain("Story 8 of 20");
    expect(root.textContent).toContain("not creative at all");
    expect(root.textContent).toContain("extremely creative");
  });

  it("reports the clicked value once", () => {
    const root = container();
    const clicks: number[] = [];
    renderRating(root, STORY, SCALE, { position: 1, total: 20 }, (v) => clicks.push(v));
    const buttons = root.querySelectorAll("button");
    (buttons[3] as HTMLButtonElement).click();
    (buttons[3] as HTMLButtonElement).click(); // once-only listener
    expect(clicks).toEqual([4]);
  });

  it("offers no control outside the scale", () => {
    const root = container();
    renderRating(root, STORY, SCALE, { position: 1, total: 20 }, () => {});
    const labels = Array.from(root.querySelectorAll("button")).map((b) => b.textContent);
    expect(labels).toEqual(["1", "2", "3", "4", "5"]);
  });
});

describe("renderWaiting", () => {
  it("shows the poll attempt count", () => {
    const root = container();
    renderWaiting(root, 4);
    expect(root.textContent).toContain("check 4");
  });
});
