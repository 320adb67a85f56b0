/** Monotonic clock abstraction so sessions are testable with fake time.
 *
 * The browser implementation reads performance.now() (sub-millisecond,
 * monotonic) and schedules via setTimeout; frame uncertainty is reported
 * as one 60 Hz frame unless measured otherwise.
 */

export interface Clock {
  /** Monotonic time in milliseconds. */
  now(): number;
  /** Call fn after delayMs; returns a cancel handle. */
  schedule(delayMs: number, fn: () => void): () => void;
  frameUncertaintyMs(): number;
}

export class BrowserClock implements Clock {
  now(): number {
    return performance.now();
  }

  schedule(delayMs: number, fn: () => void): () => void {
    // re-check the monotonic clock so early timer fire cannot shorten the
    // interval; late fire is bounded by frame/timer slop and reported
    const target = this.now() + delayMs;
    const tick = () => {
      const remaining = target - this.now();
      if (remaining <= 0) {
        fn();
      } else {
        handle = window.setTimeout(tick, remaining);
      }
    };
    let handle = window.setTimeout(tick, delayMs);
    return () => window.clearTimeout(handle);
  }

  frameUncertaintyMs(): number {
    return 1000 / 60;
  }
}

/** Deterministic clock for tests: time advances only via advance(). */
export class TestClock implements Clock {
  private t = 0;
  private timers: { at: number; fn: () => void; id: number }[] = [];
  private nextId = 1;

  now(): number {
    return this.t;
  }

  schedule(delayMs: number, fn: () => void): () => void {
    const id = this.nextId++;
    this.timers.push({ at: this.t + delayMs, fn, id });
    return () => {
      this.timers = this.timers.filter((x) => x.id !== id);
    };
  }

  frameUncertaintyMs(): number {
    return 0;
  }

  /** Advance time, firing due timers in order. */
  advance(ms: number): void {
    const target = this.t + ms;
    for (;;) {
      const due = this.timers
        .filter((x) => x.at <= target)
        .sort((a, b) => a.at - b.at || a.id - b.id)[0];
      if (!due) break;
      this.timers = this.timers.filter((x) => x.id !== due.id);
      this.t = due.at;
      due.fn();
    }
    this.t = target;
  }
}
