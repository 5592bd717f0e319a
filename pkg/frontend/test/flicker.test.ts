import { describe, expect, it } from 'vitest';
import { FlickerScheduler } from '../src/flicker.js';

/** Deterministic rAF clock: frames fire only when the test steps it. */
class FakeRafClock {
  private callbacks = new Map<number, (t: number) => void>();
  private nextHandle = 1;
  timeMs = 0;

  raf = (cb: (t: number) => void): number => {
    const handle = this.nextHandle++;
    this.callbacks.set(handle, cb);
    return handle;
  };

  caf = (handle: number): void => {
    this.callbacks.delete(handle);
  };

  /** Advance one frame of the given interval and fire pending callbacks. */
  step(intervalMs: number): void {
    this.timeMs += intervalMs;
    const due = [...this.callbacks.values()];
    this.callbacks.clear();
    for (const cb of due) cb(this.timeMs);
  }

  run(seconds: number, fps: number): void {
    const frames = Math.round(seconds * fps);
    for (let i = 0; i < frames; i++) this.step(1000 / fps);
  }
}

const FREQS = [9.25, 11.25, 13.25];

describe('FlickerScheduler at 60 Hz', () => {
  it('hits each nominal toggle rate within 0.5 Hz over 10 s', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler(FREQS, clock.raf, clock.caf);
    sched.start();
    clock.step(1000 / 60); // first frame sets the time origin
    const before = FREQS.map((_, i) => sched.target(i).toggles);
    clock.run(10, 60);
    for (let i = 0; i < FREQS.length; i++) {
      const toggles = sched.target(i).toggles - before[i];
      const measuredHz = toggles / 2 / 10; // two toggles per cycle
      expect(Math.abs(measuredHz - FREQS[i])).toBeLessThan(0.5);
    }
  });

  it('does not warn about degradation', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler(FREQS, clock.raf, clock.caf);
    sched.start();
    clock.run(1, 60);
    for (let i = 0; i < FREQS.length; i++) {
      expect(sched.isDegraded(i)).toBe(false);
    }
    expect(sched.refreshRateHz()).toBeCloseTo(60, 0);
  });

  it('discloses the quantization error in the tooltip', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler(FREQS, clock.raf, clock.caf);
    sched.start();
    clock.run(1, 60);
    const tip = sched.quantizationTooltip(2);
    expect(tip).toContain('13.25 Hz nominal');
    expect(tip).toContain('ms late');
    expect(FlickerScheduler.quantizationErrorMs(60)).toBeCloseTo(16.7, 1);
  });
});

describe('FlickerScheduler edge cases', () => {
  it('stays dark when not started (idle phase)', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler(FREQS, clock.raf, clock.caf);
    clock.run(1, 60);
    expect(sched.active).toBe(false);
    for (let i = 0; i < FREQS.length; i++) {
      expect(sched.target(i).on).toBe(false);
      expect(sched.target(i).toggles).toBe(0);
    }
  });

  it('warns when the refresh rate is below twice the frequency', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler(FREQS, clock.raf, clock.caf);
    sched.start();
    clock.run(1, 20); // 20 Hz refresh < 2 * 13.25 Hz
    expect(sched.isDegraded(2)).toBe(true);
  });

  it('distinguishes per-target degradation at 20 Hz', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler([9.25, 13.25], clock.raf, clock.caf);
    sched.start();
    clock.run(1, 20);
    expect(sched.isDegraded(0)).toBe(false); // 18.5 Hz needed, 20 available
    expect(sched.isDegraded(1)).toBe(true);
  });

  it('stop turns every target off and cancels the frame loop', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler(FREQS, clock.raf, clock.caf);
    const events: Array<[number, boolean]> = [];
    sched.onToggle = (i, on) => events.push([i, on]);
    sched.start();
    clock.run(0.5, 60);
    sched.stop();
    for (let i = 0; i < FREQS.length; i++) {
      expect(sched.target(i).on).toBe(false);
    }
    const count = events.length;
    clock.run(0.5, 60);
    expect(events.length).toBe(count); // no callbacks after stop
  });

  it('restart resets phase accounting', () => {
    const clock = new FakeRafClock();
    const sched = new FlickerScheduler([13.25], clock.raf, clock.caf);
    sched.start();
    clock.run(1, 60);
    sched.stop();
    sched.start();
    clock.step(1000 / 60);
    expect(sched.target(0).toggles).toBeLessThanOrEqual(1);
  });
});
