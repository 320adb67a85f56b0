/** Manifest loading: the harness's JSONL trial files, fetched statically. */

import { DmtsTrialSpec, GeoTrialSpec, OddballTrialSpec } from "./types.js";

export function parseJsonl<T>(text: string): T[] {
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as T);
}

export function parseDmtsTrials(text: string): DmtsTrialSpec[] {
  const trials = parseJsonl<DmtsTrialSpec>(text);
  for (const t of trials) {
    if (!t.slots || t.slots.length !== 6 || t.target_slot == null) {
      throw new Error(
        `trial ${t.trial_id}: manifest must fix the 6-slot layout (slots + target_slot)`,
      );
    }
    if (t.slots[t.target_slot] !== t.target) {
      throw new Error(`trial ${t.trial_id}: target_slot does not point at the target`);
    }
  }
  return trials;
}

export function parseOddballTrials(text: string): OddballTrialSpec[] {
  const trials = parseJsonl<OddballTrialSpec>(text);
  for (const t of trials) {
    if (t.slots.length !== 6) {
      throw new Error(`trial ${t.trial_id}: expected 6 slots`);
    }
  }
  return trials;
}

export function parseGeoTrials(text: string): GeoTrialSpec[] {
  return parseJsonl<GeoTrialSpec>(text);
}

/** Stimulus id -> image URL (ids may contain '/', files use '__'). */
export function imageUrl(base: string, stimulusId: string): string {
  const name = stimulusId.replace(/\//g, "__");
  return `${base.replace(/\/$/, "")}/${name}.png`;
}
