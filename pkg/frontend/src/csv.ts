/** CSV export in the harness's human-data schemas.
 *
 * dmts: subject,trial,target,distractors,encoding_rt_ms,choice_rt_ms,correct
 *        (distractors ';'-joined, reaction times in ms, correct 0/1)
 * oddball error table: class,group,error_rate (group fixed to "human")
 * geo: per-response rows (concept_id,condition,label,response,correct,rt_ms)
 */

import { DmtsRecord, GeoRecord, OddballRecord, SessionLog } from "./types.js";

function escape(field: string): string {
  if (/[",\n]/.test(field)) {
    return '"' + field.replace(/"/g, '""') + '"';
  }
  return field;
}

function rows(lines: string[][]): string {
  return lines.map((cells) => cells.map(escape).join(",")).join("\n") + "\n";
}

export function dmtsCsv(log: SessionLog<DmtsRecord>): string {
  const lines = [
    ["subject", "trial", "target", "distractors", "encoding_rt_ms", "choice_rt_ms", "correct"],
  ];
  log.records.forEach((r, i) => {
    lines.push([
      log.participant,
      String(i),
      r.target,
      r.distractors.join(";"),
      r.encoding_rt_ms.toFixed(3),
      r.choice_rt_ms.toFixed(3),
      r.correct ? "1" : "0",
    ]);
  });
  return rows(lines);
}

/** Raw per-trial oddball responses (not the aggregated loader schema). */
export function oddballTrialCsv(log: SessionLog<OddballRecord>): string {
  const lines = [
    ["subject", "trial_id", "class", "chosen_slot", "oddball_slot", "rt_ms", "correct"],
  ];
  for (const r of log.records) {
    lines.push([
      log.participant,
      r.trial_id,
      r.class,
      String(r.chosen_slot),
      String(r.oddball_slot),
      r.rt_ms.toFixed(3),
      r.correct ? "1" : "0",
    ]);
  }
  return rows(lines);
}

/** Per-class error table in the harness loader's oddball schema. */
export function oddballErrorTableCsv(log: SessionLog<OddballRecord>): string {
  const tally = new Map<string, { n: number; wrong: number }>();
  for (const r of log.records) {
    const t = tally.get(r.class) ?? { n: 0, wrong: 0 };
    t.n += 1;
    if (!r.correct) t.wrong += 1;
    tally.set(r.class, t);
  }
  const lines = [["class", "group", "error_rate"]];
  for (const cls of [...tally.keys()].sort()) {
    const t = tally.get(cls)!;
    lines.push([cls, "human", (t.wrong / t.n).toFixed(6)]);
  }
  return rows(lines);
}

export function geoCsv(log: SessionLog<GeoRecord>): string {
  const lines = [
    ["subject", "concept_id", "condition", "label", "response_member", "correct", "rt_ms"],
  ];
  for (const r of log.records) {
    lines.push([
      log.participant,
      r.concept_id,
      r.condition ?? "",
      r.label,
      r.response_member ? "1" : "0",
      r.correct ? "1" : "0",
      r.rt_ms.toFixed(3),
    ]);
  }
  return rows(lines);
}
