/** DOM driver: renders session views, wires input, exports CSVs.
 *
 * Static usage: serve this directory plus a harness gen/images pair, then
 *   index.html?task=dmts&trials=run/gen/dmts_trials.jsonl&images=run/images
 * Stimuli preload per trial; a failed asset skips that trial (logged).
 * Choice/grid timers start only after two animation frames, i.e. once the
 * grid has actually painted.
 */

import { BrowserClock } from "./clock.js";
import { dmtsCsv, geoCsv, oddballErrorTableCsv, oddballTrialCsv } from "./csv.js";
import { imageUrl, parseDmtsTrials, parseGeoTrials, parseOddballTrials } from "./manifest.js";
import { DmtsSession, GeoSession, OddballSession, advancePastFailed } from "./session.js";

const root = () => document.getElementById("root")!;

function afterPaint(fn: () => void): void {
  requestAnimationFrame(() => requestAnimationFrame(fn));
}

function preload(urls: string[]): Promise<void> {
  return Promise.all(
    urls.map(
      (url) =>
        new Promise<void>((resolve, reject) => {
          const img = new Image();
          img.onload = () => resolve();
          img.onerror = () => reject(new Error(`failed to load ${url}`));
          img.src = url;
        }),
    ),
  ).then(() => undefined);
}

async function preloadTrials(
  urlsPerTrial: string[][],
): Promise<Set<number>> {
  const failed = new Set<number>();
  for (let i = 0; i < urlsPerTrial.length; i++) {
    try {
      await preload(urlsPerTrial[i]);
    } catch {
      failed.add(i);
    }
  }
  return failed;
}

function download(name: string, text: string): void {
  const blob = new Blob([text], { type: "text/csv" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

function el(tag: string, attrs: Record<string, string> = {}, text = ""): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

async function runDmts(trialsUrl: string, imagesBase: string, participant: string) {
  const text = await (await fetch(trialsUrl)).text();
  const trials = parseDmtsTrials(text);
  const clock = new BrowserClock();
  const session = new DmtsSession(participant, trials, clock);

  const draw = () => {
    const view = session.view;
    const host = root();
    host.innerHTML = "";
    if (view.phase === "memorize") {
      host.append(el("p", { class: "hint" }, "Memorize the shape. Press any key when ready."));
      const img = el("img", {
        src: imageUrl(imagesBase, view.stimulus),
        class: "stimulus",
      });
      host.append(img);
    } else if (view.phase === "blank") {
      host.append(el("div", { class: "blank" }));
    } else if (view.phase === "choice") {
      host.append(el("p", { class: "hint" }, "Click the shape you memorized."));
      const grid = el("div", { class: "grid grid-3" });
      view.slots.forEach((sid, i) => {
        const img = el("img", { src: imageUrl(imagesBase, sid), class: "cell" });
        img.addEventListener("click", () => {
          session.clickSlot(i);
          advancePastFailed(session, failed, trials.length);
          draw();
        });
        grid.append(img);
      });
      host.append(grid);
      afterPaint(() => session.gridRendered());
    } else {
      finish();
    }
  };

  const finish = () => {
    const host = root();
    host.innerHTML = "";
    host.append(el("p", {}, `Done: ${session.log.records.length} trials logged.`));
    const btn = el("button", {}, "Download CSV");
    btn.addEventListener("click", () => download("dmts_session.csv", dmtsCsv(session.log)));
    host.append(btn);
  };

  document.addEventListener("keydown", () => {
    if (session.view.phase === "memorize") {
      session.keypress();
      draw();
      // the blank -> choice transition happens on the session clock
      const poll = () => {
        if (session.view.phase === "blank") {
          requestAnimationFrame(poll);
        } else {
          draw();
        }
      };
      requestAnimationFrame(poll);
    }
  });

  // preload each trial's six stimuli; failed trials get skipped in order
  const failed = await preloadTrials(
    trials.map((t) => t.slots.map((sid) => imageUrl(imagesBase, sid))),
  );
  session.start();
  advancePastFailed(session, failed, trials.length);
  draw();
}

async function runOddball(trialsUrl: string, imagesBase: string, participant: string) {
  const text = await (await fetch(trialsUrl)).text();
  const trials = parseOddballTrials(text);
  const session = new OddballSession(participant, trials, new BrowserClock());

  const draw = () => {
    const view = session.view;
    const host = root();
    host.innerHTML = "";
    if (view.phase === "grid") {
      host.append(el("p", { class: "hint" }, "Click the odd one out."));
      const grid = el("div", { class: "grid grid-3" });
      view.slots.forEach((slot, i) => {
        const img = el("img", { src: imageUrl(imagesBase, slot.stim), class: "cell" });
        img.addEventListener("click", () => {
          session.clickSlot(i);
          advancePastFailed(session, failed, trials.length);
          draw();
        });
        grid.append(img);
      });
      host.append(grid);
      afterPaint(() => session.gridRendered());
    } else {
      const host2 = root();
      host2.innerHTML = "";
      host2.append(el("p", {}, `Done: ${session.log.records.length} trials logged.`));
      const raw = el("button", {}, "Download trial CSV");
      raw.addEventListener("click", () =>
        download("oddball_trials.csv", oddballTrialCsv(session.log)),
      );
      const agg = el("button", {}, "Download error-rate CSV");
      agg.addEventListener("click", () =>
        download("oddball_rates.csv", oddballErrorTableCsv(session.log)),
      );
      host2.append(raw, agg);
    }
  };

  const failed = await preloadTrials(
    trials.map((t) => t.slots.map((s) => imageUrl(imagesBase, s.stim))),
  );
  session.start();
  advancePastFailed(session, failed, trials.length);
  draw();
}

async function runGeo(trialsUrl: string, imagesBase: string, participant: string) {
  const text = await (await fetch(trialsUrl)).text();
  const trials = parseGeoTrials(text).filter((t) => t.label);
  const session = new GeoSession(participant, trials, new BrowserClock());

  const draw = () => {
    const view = session.view;
    const host = root();
    host.innerHTML = "";
    if (view.phase === "judge") {
      host.append(el("p", { class: "hint" }, "Examples of one concept:"));
      const refs = el("div", { class: "grid grid-5" });
      for (const rid of view.refs) {
        refs.append(el("img", { src: imageUrl(imagesBase, rid), class: "cell small" }));
      }
      host.append(refs);
      host.append(el("p", { class: "hint" }, "Does this belong to the concept?"));
      host.append(el("img", { src: imageUrl(imagesBase, view.test), class: "stimulus" }));
      const yes = el("button", {}, "Yes");
      const no = el("button", {}, "No");
      yes.addEventListener("click", () => {
        session.respond(true);
        advancePastFailed(session, failed, trials.length);
        draw();
      });
      no.addEventListener("click", () => {
        session.respond(false);
        advancePastFailed(session, failed, trials.length);
        draw();
      });
      host.append(yes, no);
      afterPaint(() => session.rendered());
    } else {
      host.append(el("p", {}, `Done: ${session.log.records.length} judgments logged.`));
      const btn = el("button", {}, "Download CSV");
      btn.addEventListener("click", () => download("geo_session.csv", geoCsv(session.log)));
      host.append(btn);
    }
  };

  const failed = await preloadTrials(
    trials.map((t) => [...t.refs, t.test].map((sid) => imageUrl(imagesBase, sid))),
  );
  session.start();
  advancePastFailed(session, failed, trials.length);
  draw();
}

export function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const task = params.get("task") ?? "dmts";
  const trialsUrl = params.get("trials") ?? "";
  const imagesBase = params.get("images") ?? "images";
  const participant = params.get("participant") ?? `p-${Date.now().toString(36)}`;
  if (!trialsUrl) {
    root().textContent =
      "usage: index.html?task=dmts|oddball|geo&trials=<jsonl url>&images=<dir url>";
    return;
  }
  const run =
    task === "oddball" ? runOddball : task === "geo" ? runGeo : runDmts;
  run(trialsUrl, imagesBase, participant).catch((err) => {
    root().textContent = `failed to start session: ${err}`;
  });
}

if (typeof window !== "undefined" && document.getElementById("root")) {
  boot();
}
