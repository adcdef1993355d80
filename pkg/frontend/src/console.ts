/** Console state and actions: one dispatcher session against the routing service.
 *
 * Every skill vector shown in the UI originates either from a service response
 * (provenance "model") or from an explicit dispatcher edit (provenance
 * "edited"); the console never infers skills from text itself.
 */

import { ApiError, ConsoleApi } from "./api.js";
import { eligibleForSkills, suggestRobot } from "./matching.js";
import type { Robot, RoutingDecision, Skill, SkillMap } from "./types.js";
import { skillNames } from "./types.js";

export type CardPhase = "routed" | "review" | "no_robot" | "confirmed" | "released" | "conflict";

export interface TaskCard {
  key: number;
  decision: RoutingDecision;
  phase: CardPhase;
  provenance: "model" | "edited";
  /** Review editor state; starts as a copy of the model's required vector. */
  editedSkills: SkillMap;
  overrideEligible: string[] | null;
  overrideSuggestion: string | null;
  note: string | null;
}

export interface ConsoleState {
  taskText: string;
  inputError: string | null;
  banner: string | null;
  connection: "idle" | "ok" | "error";
  reviewThreshold: number;
  modelName: string | null;
  cards: TaskCard[];
  fleet: Robot[];
}

const DEFAULT_REVIEW_THRESHOLD = 0.65;

function phaseForStatus(status: RoutingDecision["status"]): CardPhase {
  if (status === "routed") return "routed";
  if (status === "needs_review") return "review";
  return "no_robot";
}

export class ConsoleController {
  readonly state: ConsoleState = {
    taskText: "",
    inputError: null,
    banner: null,
    connection: "idle",
    reviewThreshold: DEFAULT_REVIEW_THRESHOLD,
    modelName: null,
    cards: [],
    fleet: [],
  };

  private nextKey = 1;

  constructor(
    private readonly api: ConsoleApi,
    private readonly onChange: () => void = () => {},
  ) {}

  private notify(): void {
    this.onChange();
  }

  card(key: number): TaskCard {
    const card = this.state.cards.find((c) => c.key === key);
    if (!card) throw new Error(`no card ${key}`);
    return card;
  }

  get reviewQueue(): TaskCard[] {
    return this.state.cards.filter((card) => card.phase === "review");
  }

  async init(): Promise<void> {
    try {
      const health = await this.api.health();
      this.state.modelName = health.model;
      this.state.connection = "ok";
      await this.refreshFleet();
    } catch (err) {
      this.state.connection = "error";
      this.state.banner = err instanceof Error ? err.message : String(err);
    }
    this.notify();
  }

  async refreshFleet(): Promise<void> {
    const snapshot = await this.api.fleet();
    this.state.fleet = snapshot.robots;
    this.notify();
  }

  setTaskText(text: string): void {
    this.state.taskText = text;
    this.state.inputError = null;
  }

  setReviewThreshold(value: number): void {
    if (Number.isFinite(value) && value >= 0 && value <= 1) {
      this.state.reviewThreshold = value;
      this.notify();
    }
  }

  /** POST /v1/route for the current input; the decision becomes a new card. */
  async submitTask(): Promise<TaskCard | null> {
    const text = this.state.taskText.trim();
    if (!text) {
      this.state.inputError = "enter a task description first";
      this.notify();
      return null; // no request leaves the service untouched
    }
    this.state.inputError = null;
    try {
      const decision = await this.api.route(text);
      const card: TaskCard = {
        key: this.nextKey++,
        decision,
        phase: phaseForStatus(decision.status),
        provenance: "model",
        editedSkills: { ...decision.required },
        overrideEligible: null,
        overrideSuggestion: null,
        note: null,
      };
      this.state.cards.unshift(card);
      this.state.taskText = "";
      this.state.banner = null;
      this.state.connection = "ok";
      this.notify();
      await this.refreshFleet();
      return card;
    } catch (err) {
      // Transport/service failure: surface a banner, keep the input intact.
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.state.connection = "error";
      this.notify();
      return null;
    }
  }

  /** Confirm the card's proposed assignment; the robot goes busy fleet-wide. */
  async confirmCard(key: number): Promise<void> {
    const card = this.card(key);
    if (!card.decision.assignment_id) return;
    try {
      await this.api.confirm(card.decision.assignment_id);
      card.phase = "confirmed";
      card.note = null;
      this.notify();
      await this.refreshFleet();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        card.phase = "conflict";
        card.note = "robot was taken meanwhile — re-route this task";
        this.notify();
        await this.refreshFleet();
        return;
      }
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.notify();
    }
  }

  async releaseCard(key: number): Promise<void> {
    const card = this.card(key);
    if (!card.decision.assignment_id) return;
    await this.api.release(card.decision.assignment_id);
    card.phase = "released";
    this.notify();
    await this.refreshFleet();
  }

  /** Ask the service for a fresh decision on the same text (after a conflict). */
  async rerouteCard(key: number): Promise<void> {
    const card = this.card(key);
    try {
      const decision = await this.api.route(card.decision.task_text);
      card.decision = decision;
      card.phase = phaseForStatus(decision.status);
      card.provenance = "model";
      card.editedSkills = { ...decision.required };
      card.overrideEligible = null;
      card.overrideSuggestion = null;
      card.note = null;
      this.notify();
      await this.refreshFleet();
    } catch (err) {
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.notify();
    }
  }

  /** Dispatcher edits one skill checkbox on a review card. */
  setEditedSkill(key: number, skill: Skill, value: boolean): void {
    const card = this.card(key);
    card.editedSkills[skill] = value;
    card.provenance = "edited";
    this.notify();
  }

  /** Re-query eligibility for the edited vector against a fresh fleet snapshot. */
  async overrideAndRequery(key: number): Promise<void> {
    const card = this.card(key);
    const required = skillNames(card.editedSkills);
    if (required.length === 0) {
      card.note = "pick at least one skill before re-checking eligibility";
      this.notify();
      return;
    }
    const snapshot = await this.api.fleet();
    this.state.fleet = snapshot.robots;
    card.provenance = "edited";
    card.overrideEligible = eligibleForSkills(required, snapshot.robots);
    card.overrideSuggestion = suggestRobot(required, snapshot.robots);
    card.note =
      card.overrideEligible.length === 0 ? "no available robot covers the edited skills" : null;
    this.notify();
  }
}
