/** Full re-render of the console DOM from controller state. */

import type { ConsoleController, TaskCard } from "./console.js";
import { SKILLS } from "./types.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function probabilityBars(card: TaskCard): HTMLElement {
  const wrap = el("div", "prob-bars");
  SKILLS.forEach((skill, index) => {
    const probability = card.decision.probabilities[index] ?? 0;
    const row = el("div", "prob-row");
    row.appendChild(el("span", "prob-label", skill));
    const track = el("div", "prob-track");
    const bar = el("div", "prob-bar");
    bar.dataset.skill = skill;
    bar.style.width = `${Math.round(probability * 1000) / 10}%`;
    if (card.decision.required[skill]) bar.classList.add("required");
    track.appendChild(bar);
    row.appendChild(track);
    row.appendChild(el("span", "prob-value", probability.toFixed(3)));
    wrap.appendChild(row);
  });
  return wrap;
}

function statusLine(card: TaskCard): string {
  switch (card.phase) {
    case "routed":
      return `proposed: ${card.decision.robot_id} (${card.decision.assignment_id})`;
    case "confirmed":
      return `confirmed on ${card.decision.robot_id}`;
    case "released":
      return "released";
    case "conflict":
      return "conflict";
    case "no_robot":
      return "no eligible robot";
    case "review":
      return "needs review";
  }
}

function taskCard(card: TaskCard, controller: ConsoleController): HTMLElement {
  const article = el("article", "task-card");
  article.dataset.key = String(card.key);
  article.dataset.phase = card.phase;

  const provenance = el(
    "span",
    "provenance",
    card.provenance === "model" ? "model prediction" : "dispatcher edit",
  );
  provenance.dataset.provenance = card.provenance;
  article.appendChild(provenance);
  article.appendChild(el("p", "task-text", card.decision.task_text));
  article.appendChild(probabilityBars(card));

  const required = el("div", "required-skills");
  SKILLS.filter((skill) => card.decision.required[skill]).forEach((skill) =>
    required.appendChild(el("span", "skill-chip", skill)),
  );
  article.appendChild(required);

  article.appendChild(
    el("div", "eligible-ids", `eligible: ${card.decision.eligible.join(", ") || "—"}`),
  );
  article.appendChild(el("div", `card-status status-${card.phase}`, statusLine(card)));
  if (card.note) article.appendChild(el("div", "card-note", card.note));

  const actions = el("div", "card-actions");
  if (card.phase === "routed") {
    const confirm = el("button", "confirm-btn", "confirm") as HTMLButtonElement;
    confirm.addEventListener("click", () => void controller.confirmCard(card.key));
    actions.appendChild(confirm);
    const release = el("button", "release-btn", "cancel") as HTMLButtonElement;
    release.addEventListener("click", () => void controller.releaseCard(card.key));
    actions.appendChild(release);
  } else if (card.phase === "confirmed") {
    const release = el("button", "release-btn", "release") as HTMLButtonElement;
    release.addEventListener("click", () => void controller.releaseCard(card.key));
    actions.appendChild(release);
  } else if (card.phase === "conflict") {
    const reroute = el("button", "reroute-btn", "re-route") as HTMLButtonElement;
    reroute.addEventListener("click", () => void controller.rerouteCard(card.key));
    actions.appendChild(reroute);
  }
  article.appendChild(actions);
  return article;
}

function reviewCard(card: TaskCard, controller: ConsoleController): HTMLElement {
  const article = el("article", "review-card");
  article.dataset.key = String(card.key);
  article.appendChild(el("p", "task-text", card.decision.task_text));
  const provenance = el(
    "span",
    "provenance",
    card.provenance === "model" ? "model prediction" : "dispatcher edit",
  );
  provenance.dataset.provenance = card.provenance;
  article.appendChild(provenance);

  const editor = el("div", "skill-editor");
  SKILLS.forEach((skill, index) => {
    const label = el("label", "skill-toggle");
    const input = document.createElement("input");
    input.type = "checkbox";
    input.className = "skill-edit";
    input.dataset.skill = skill;
    input.checked = card.editedSkills[skill];
    input.addEventListener("change", () =>
      controller.setEditedSkill(card.key, skill, input.checked),
    );
    label.appendChild(input);
    const probability = card.decision.probabilities[index] ?? 0;
    label.appendChild(
      document.createTextNode(` ${skill} (${probability.toFixed(2)})`),
    );
    editor.appendChild(label);
  });
  article.appendChild(editor);

  const override = el("button", "override-btn", "re-check eligibility") as HTMLButtonElement;
  override.addEventListener("click", () => void controller.overrideAndRequery(card.key));
  article.appendChild(override);

  if (card.overrideEligible !== null) {
    const list = el(
      "div",
      "override-eligible",
      `eligible for edit: ${card.overrideEligible.join(", ") || "—"}`,
    );
    article.appendChild(list);
    if (card.overrideSuggestion) {
      article.appendChild(
        el("div", "override-suggestion", `suggested: ${card.overrideSuggestion}`),
      );
    }
  }
  if (card.note) article.appendChild(el("div", "card-note", card.note));
  return article;
}

export function render(root: HTMLElement, controller: ConsoleController): void {
  const state = controller.state;
  root.textContent = "";

  const header = el("header", "console-header");
  header.appendChild(el("h1", undefined, "skillroute dispatcher"));
  const status = el("span", "conn-status", state.connection);
  status.dataset.state = state.connection;
  header.appendChild(status);
  if (state.modelName) header.appendChild(el("span", "model-name", state.modelName));

  const drawer = el("details", "settings-drawer");
  drawer.appendChild(el("summary", undefined, "settings"));
  const thresholdLabel = el("label", undefined, "review threshold (display only) ");
  const threshold = document.createElement("input");
  threshold.type = "number";
  threshold.step = "0.05";
  threshold.min = "0";
  threshold.max = "1";
  threshold.className = "threshold-input";
  threshold.value = String(state.reviewThreshold);
  threshold.addEventListener("change", () =>
    controller.setReviewThreshold(Number(threshold.value)),
  );
  thresholdLabel.appendChild(threshold);
  drawer.appendChild(thresholdLabel);
  header.appendChild(drawer);
  root.appendChild(header);

  if (state.banner) {
    root.appendChild(el("div", "banner", state.banner));
  }

  const submit = el("section", "submit-panel");
  const input = document.createElement("textarea");
  input.className = "task-input";
  input.placeholder = "describe the task, e.g. inspect the underside of the bridge for cracks";
  input.value = state.taskText;
  input.addEventListener("input", () => controller.setTaskText(input.value));
  submit.appendChild(input);
  const button = el("button", "submit-btn", "route task") as HTMLButtonElement;
  button.addEventListener("click", () => void controller.submitTask());
  submit.appendChild(button);
  if (state.inputError) submit.appendChild(el("div", "input-error", state.inputError));
  root.appendChild(submit);

  const main = el("main", "console-main");

  const cards = el("section", "cards-panel");
  cards.appendChild(el("h2", undefined, "decisions"));
  state.cards.forEach((card) => cards.appendChild(taskCard(card, controller)));
  main.appendChild(cards);

  const aside = el("aside", "side-panels");

  const review = el("section", "review-panel");
  review.appendChild(el("h2", undefined, `review queue (${controller.reviewQueue.length})`));
  controller.reviewQueue.forEach((card) => review.appendChild(reviewCard(card, controller)));
  aside.appendChild(review);

  const fleetPanel = el("section", "fleet-panel");
  fleetPanel.appendChild(el("h2", undefined, "fleet"));
  const table = el("div", "fleet-table");
  state.fleet.forEach((robot) => {
    const row = el("div", `robot-row ${robot.available ? "available" : "busy"}`);
    row.dataset.id = robot.id;
    row.appendChild(el("span", "robot-id", robot.id));
    row.appendChild(el("span", "robot-type", robot.type));
    row.appendChild(el("span", "robot-skills", robot.skills.join("+") || "(none)"));
    row.appendChild(el("span", "robot-state", robot.available ? "available" : "busy"));
    table.appendChild(row);
  });
  fleetPanel.appendChild(table);
  aside.appendChild(fleetPanel);

  main.appendChild(aside);
  root.appendChild(main);
}
