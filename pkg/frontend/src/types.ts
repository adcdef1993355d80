/** Types mirroring the routing service's documented request/response bodies. */

export const SKILLS = [
  "fly",
  "legs",
  "wheels",
  "hands",
  "under_water",
  "surface_water",
] as const;

export type Skill = (typeof SKILLS)[number];

export type SkillMap = Record<Skill, boolean>;

export interface RoutingDecision {
  task_text: string;
  required: SkillMap;
  probabilities: number[];
  eligible: string[];
  status: "routed" | "needs_review" | "no_robot";
  robot_id: string | null;
  assignment_id: string | null;
  timestamp: string;
}

export interface Robot {
  id: string;
  type: string;
  skills: string[];
  available: boolean;
}

export interface FleetSnapshot {
  robots: Robot[];
}

export interface Assignment {
  id: string;
  robot_id: string;
  task_text: string;
  state: "proposed" | "confirmed" | "released";
  proposed_at: string;
  confirmed_at: string | null;
  released_at: string | null;
}

export interface PredictResponse {
  skills: SkillMap;
  probabilities: number[];
  model: string;
}

export function emptySkillMap(): SkillMap {
  return {
    fly: false,
    legs: false,
    wheels: false,
    hands: false,
    under_water: false,
    surface_water: false,
  };
}

export function skillNames(map: SkillMap): Skill[] {
  return SKILLS.filter((name) => map[name]);
}
