/** Client-side eligibility for human-edited skill vectors.
 *
 * The console never derives skills from text — that is the model's job on the
 * server. This subset check only re-queries eligibility when a dispatcher has
 * explicitly edited a requirement vector, against a fresh fleet snapshot.
 */

import type { Robot, Skill } from "./types.js";

export function eligibleForSkills(required: Skill[], robots: Robot[]): string[] {
  return robots
    .filter((robot) => robot.available && required.every((name) => robot.skills.includes(name)))
    .map((robot) => robot.id)
    .sort();
}

/** Mirror of the server's default pick: fewest skills, ties to the lowest id. */
export function suggestRobot(required: Skill[], robots: Robot[]): string | null {
  const eligible = new Set(eligibleForSkills(required, robots));
  const candidates = robots.filter((robot) => eligible.has(robot.id));
  if (candidates.length === 0) return null;
  candidates.sort((a, b) =>
    a.skills.length !== b.skills.length ? a.skills.length - b.skills.length : a.id < b.id ? -1 : 1,
  );
  return candidates[0]?.id ?? null;
}
