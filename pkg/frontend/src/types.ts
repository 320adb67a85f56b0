/** Manifest and session-log types shared across the three tasks. */

export interface DmtsTrialSpec {
  trial_id: string;
  target: string;
  distractors: string[]; // 5 ids
  slots: string[]; // 6 ids in display order (layout fixed by the manifest)
  target_slot: number;
}

export interface OddballSlotSpec {
  stim: string;
  rot: number;
  scale: number;
}

export interface OddballTrialSpec {
  trial_id: string;
  class: string;
  slots: OddballSlotSpec[]; // 6 entries, 2x3 grid order
  oddball_slot: number;
}

export interface GeoTrialSpec {
  concept_id: string;
  refs: string[];
  test: string;
  label: "positive" | "negative";
  condition: "close" | "far" | null;
}

export type TaskKind = "dmts" | "oddball" | "geo";

export interface DmtsRecord {
  trial_id: string;
  target: string;
  distractors: string[];
  encoding_rt_ms: number;
  choice_rt_ms: number;
  chosen_slot: number;
  correct: boolean;
  t_start: number;
}

export interface OddballRecord {
  trial_id: string;
  class: string;
  chosen_slot: number;
  oddball_slot: number;
  rt_ms: number;
  correct: boolean;
  t_start: number;
}

export interface GeoRecord {
  concept_id: string;
  test: string;
  label: "positive" | "negative";
  condition: "close" | "far" | null;
  response_member: boolean;
  rt_ms: number;
  correct: boolean;
  t_start: number;
}

export interface DisplayMetadata {
  user_agent: string;
  /** Upper bound on frame-boundary timing uncertainty, ms. */
  frame_uncertainty_ms: number;
  screen: string;
}

export interface SessionLog<R> {
  participant: string;
  task: TaskKind;
  app_version: string;
  display: DisplayMetadata;
  records: R[];
}

export const APP_VERSION = "0.1.0";
