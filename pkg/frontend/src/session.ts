/** Task session state machines, DOM-free for automated testing.
 *
 * Each session exposes a view describing exactly what may be on screen in
 * the current phase (stimuli of later phases are never present), accepts
 * input events, and accumulates one log record per shown trial.  The
 * DMTS blank interval is scheduled on the session's clock: exactly
 * BLANK_MS between memorization keypress and the choice grid.
 */

import { Clock } from "./clock.js";
import {
  APP_VERSION,
  DisplayMetadata,
  DmtsRecord,
  DmtsTrialSpec,
  GeoRecord,
  GeoTrialSpec,
  OddballRecord,
  OddballTrialSpec,
  SessionLog,
  TaskKind,
} from "./types.js";

export const BLANK_MS = 2000;

export type DmtsView =
  | { phase: "memorize"; trial_id: string; stimulus: string }
  | { phase: "blank"; trial_id: string }
  | { phase: "choice"; trial_id: string; slots: string[] }
  | { phase: "done" };

function displayMeta(clock: Clock): DisplayMetadata {
  return {
    user_agent: typeof navigator === "undefined" ? "test" : navigator.userAgent,
    frame_uncertainty_ms: clock.frameUncertaintyMs(),
    screen:
      typeof window === "undefined"
        ? "0x0"
        : `${window.screen.width}x${window.screen.height}`,
  };
}

abstract class BaseSession<R> {
  readonly log: SessionLog<R>;
  protected skipped: string[] = [];
  private lastStamp = -Infinity;

  constructor(
    readonly participant: string,
    task: TaskKind,
    protected clock: Clock,
  ) {
    this.log = {
      participant,
      task,
      app_version: APP_VERSION,
      display: displayMeta(clock),
      records: [],
    };
  }

  protected stamp(): number {
    const t = this.clock.now();
    if (t < this.lastStamp) {
      throw new Error("clock went backwards");
    }
    this.lastStamp = t;
    return t;
  }

  get skippedTrials(): readonly string[] {
    return this.skipped;
  }
}

export class DmtsSession extends BaseSession<DmtsRecord> {
  private index = 0;
  private viewState: DmtsView = { phase: "done" };
  private memorizeStart = 0;
  private encodingRt = 0;
  private choiceStart: number | null = null;
  private cancelBlank: (() => void) | null = null;

  constructor(
    participant: string,
    private trials: DmtsTrialSpec[],
    clock: Clock,
  ) {
    super(participant, "dmts", clock);
  }

  get view(): DmtsView {
    return this.viewState;
  }

  start(): void {
    this.index = -1;
    this.nextTrial();
  }

  private nextTrial(): void {
    this.index += 1;
    if (this.index >= this.trials.length) {
      this.viewState = { phase: "done" };
      return;
    }
    const trial = this.trials[this.index];
    this.memorizeStart = this.stamp();
    this.viewState = {
      phase: "memorize",
      trial_id: trial.trial_id,
      stimulus: trial.target,
    };
  }

  /** Keypress ends the self-paced memorization phase. */
  keypress(): void {
    if (this.viewState.phase !== "memorize") return;
    const trial = this.trials[this.index];
    this.encodingRt = this.stamp() - this.memorizeStart;
    this.viewState = { phase: "blank", trial_id: trial.trial_id };
    this.cancelBlank = this.clock.schedule(BLANK_MS, () => this.endBlank());
  }

  private endBlank(): void {
    if (this.viewState.phase !== "blank") return;
    const trial = this.trials[this.index];
    this.viewState = {
      phase: "choice",
      trial_id: trial.trial_id,
      slots: trial.slots.slice(),
    };
    // the choice timer starts on render completion, reported by the driver
  }

  /** Driver callback: the choice grid finished painting. */
  gridRendered(): void {
    if (this.viewState.phase !== "choice") return;
    this.choiceStart = this.stamp();
  }

  clickSlot(slot: number): void {
    if (this.viewState.phase !== "choice") return;
    if (this.choiceStart === null) {
      throw new Error("choice click before gridRendered()");
    }
    const trial = this.trials[this.index];
    const now = this.stamp();
    this.log.records.push({
      trial_id: trial.trial_id,
      target: trial.target,
      distractors: trial.distractors.slice(),
      encoding_rt_ms: this.encodingRt,
      choice_rt_ms: now - this.choiceStart!,
      chosen_slot: slot,
      correct: slot === trial.target_slot,
      t_start: this.memorizeStart,
    });
    this.choiceStart = null;
    this.nextTrial();
  }

  /** Asset failure: skip and log, never leave a half-shown trial. */
  assetFailed(): void {
    if (this.viewState.phase === "done") return;
    if (this.cancelBlank) this.cancelBlank();
    this.skipped.push(this.trials[this.index].trial_id);
    this.choiceStart = null;
    this.nextTrial();
  }
}

/** Skip past trials whose assets failed to preload.
 *
 * Drivers preload per trial before the session starts; the session only
 * learns of failures once those trials come up.  Call after start() and
 * after every completed trial: trials consumed so far = logged + skipped,
 * so the next trial's position decides whether to skip.
 */
export function advancePastFailed(
  session: {
    assetFailed(): void;
    log: { records: unknown[] };
    skippedTrials: readonly string[];
  },
  failedPositions: ReadonlySet<number>,
  totalTrials: number,
): void {
  for (;;) {
    const pos = session.log.records.length + session.skippedTrials.length;
    if (pos >= totalTrials || !failedPositions.has(pos)) break;
    session.assetFailed();
  }
}

export type OddballView =
  | { phase: "grid"; trial_id: string; slots: { stim: string; rot: number; scale: number }[] }
  | { phase: "done" };

export class OddballSession extends BaseSession<OddballRecord> {
  private index = 0;
  private viewState: OddballView = { phase: "done" };
  private gridStart: number | null = null;
  private shownAt = 0;

  constructor(
    participant: string,
    private trials: OddballTrialSpec[],
    clock: Clock,
  ) {
    super(participant, "oddball", clock);
  }

  get view(): OddballView {
    return this.viewState;
  }

  start(): void {
    this.index = -1;
    this.nextTrial();
  }

  private nextTrial(): void {
    this.index += 1;
    if (this.index >= this.trials.length) {
      this.viewState = { phase: "done" };
      return;
    }
    const trial = this.trials[this.index];
    this.shownAt = this.stamp();
    this.gridStart = null;
    this.viewState = {
      phase: "grid",
      trial_id: trial.trial_id,
      slots: trial.slots.map((s) => ({ ...s })),
    };
  }

  gridRendered(): void {
    if (this.viewState.phase !== "grid") return;
    this.gridStart = this.stamp();
  }

  clickSlot(slot: number): void {
    if (this.viewState.phase !== "grid") return;
    if (this.gridStart === null) {
      throw new Error("click before gridRendered()");
    }
    const trial = this.trials[this.index];
    const now = this.stamp();
    this.log.records.push({
      trial_id: trial.trial_id,
      class: trial.class,
      chosen_slot: slot,
      oddball_slot: trial.oddball_slot,
      rt_ms: now - this.gridStart!,
      correct: slot === trial.oddball_slot,
      t_start: this.shownAt,
    });
    this.nextTrial();
  }

  assetFailed(): void {
    if (this.viewState.phase === "done") return;
    this.skipped.push(this.trials[this.index].trial_id);
    this.nextTrial();
  }
}

export type GeoView =
  | { phase: "judge"; concept_id: string; refs: string[]; test: string }
  | { phase: "done" };

export class GeoSession extends BaseSession<GeoRecord> {
  private index = 0;
  private viewState: GeoView = { phase: "done" };
  private shownAt = 0;
  private renderedAt: number | null = null;

  constructor(
    participant: string,
    private trials: GeoTrialSpec[],
    clock: Clock,
  ) {
    super(participant, "geo", clock);
  }

  get view(): GeoView {
    return this.viewState;
  }

  start(): void {
    this.index = -1;
    this.nextTrial();
  }

  private nextTrial(): void {
    this.index += 1;
    if (this.index >= this.trials.length) {
      this.viewState = { phase: "done" };
      return;
    }
    const trial = this.trials[this.index];
    this.shownAt = this.stamp();
    this.renderedAt = null;
    this.viewState = {
      phase: "judge",
      concept_id: trial.concept_id,
      refs: trial.refs.slice(),
      test: trial.test,
    };
  }

  rendered(): void {
    if (this.viewState.phase !== "judge") return;
    this.renderedAt = this.stamp();
  }

  respond(member: boolean): void {
    if (this.viewState.phase !== "judge") return;
    if (this.renderedAt === null) {
      throw new Error("response before rendered()");
    }
    const trial = this.trials[this.index];
    const now = this.stamp();
    this.log.records.push({
      concept_id: trial.concept_id,
      test: trial.test,
      label: trial.label,
      condition: trial.condition,
      response_member: member,
      rt_ms: now - this.renderedAt!,
      correct: member === (trial.label === "positive"),
      t_start: this.shownAt,
    });
    this.nextTrial();
  }

  assetFailed(): void {
    if (this.viewState.phase === "done") return;
    this.skipped.push(this.trials[this.index].concept_id);
    this.nextTrial();
  }
}
