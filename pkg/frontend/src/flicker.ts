/**
 * Square-wave flicker scheduler driven by the display refresh callback.
 *
 * Each target follows the ideal square wave at its frequency, sampled at
 * frame timestamps (nearest-frame quantization with per-frame phase
 * accounting): the long-run toggle rate matches the nominal frequency,
 * while each individual edge lands up to half a frame late. That error is
 * disclosed rather than hidden; a refresh rate below twice the fastest
 * frequency cannot represent the wave at all and raises a warning instead.
 */

export const DUTY_CYCLE = 0.5; // assumed; exposed as a constant

export type RafLike = (cb: (timeMs: number) => void) => number;
export type CafLike = (handle: number) => void;

export interface TargetState {
  on: boolean;
  toggles: number;
}

export class FlickerScheduler {
  readonly freqs: number[];
  private raf: RafLike;
  private caf: CafLike;
  private handle: number | null = null;
  private running = false;
  private startMs: number | null = null;
  private lastFrameMs: number | null = null;
  private frameDeltas: number[] = [];
  private states: TargetState[];
  onToggle: ((target: number, on: boolean) => void) | null = null;

  constructor(freqs: number[], raf: RafLike, caf: CafLike) {
    this.freqs = freqs.slice();
    this.raf = raf;
    this.caf = caf;
    this.states = freqs.map(() => ({ on: false, toggles: 0 }));
  }

  get active(): boolean {
    return this.running;
  }

  target(i: number): TargetState {
    return this.states[i];
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.startMs = null;
    this.lastFrameMs = null;
    this.frameDeltas = [];
    this.states = this.freqs.map(() => ({ on: false, toggles: 0 }));
    this.handle = this.raf((t) => this.frame(t));
  }

  stop(): void {
    if (!this.running) return;
    this.running = false;
    if (this.handle !== null) this.caf(this.handle);
    this.handle = null;
    for (let i = 0; i < this.states.length; i++) {
      if (this.states[i].on) {
        this.states[i].on = false;
        this.onToggle?.(i, false);
      }
    }
  }

  private frame(timeMs: number): void {
    if (!this.running) return;
    if (this.startMs === null) this.startMs = timeMs;
    if (this.lastFrameMs !== null) {
      this.frameDeltas.push(timeMs - this.lastFrameMs);
      if (this.frameDeltas.length > 120) this.frameDeltas.shift();
    }
    this.lastFrameMs = timeMs;
    const t = (timeMs - this.startMs) / 1000;
    for (let i = 0; i < this.freqs.length; i++) {
      const halfCycles = Math.floor(2 * this.freqs[i] * t);
      const on = halfCycles % 2 === 0;
      if (on !== this.states[i].on) {
        this.states[i].on = on;
        this.states[i].toggles += 1;
        this.onToggle?.(i, on);
      }
    }
    this.handle = this.raf((t2) => this.frame(t2));
  }

  /** Estimated display refresh rate in Hz; null before two frames. */
  refreshRateHz(): number | null {
    if (this.frameDeltas.length === 0) return null;
    const mean =
      this.frameDeltas.reduce((a, b) => a + b, 0) / this.frameDeltas.length;
    return mean > 0 ? 1000 / mean : null;
  }

  /** True when the refresh rate cannot carry this target's square wave. */
  isDegraded(targetIndex: number): boolean {
    const refresh = this.refreshRateHz();
    if (refresh === null) return false;
    return refresh < 2 * this.freqs[targetIndex];
  }

  /**
   * Worst-case edge timing error in milliseconds at the given refresh
   * rate: each toggle is applied on the next frame, so up to one frame
   * interval late.
   */
  static quantizationErrorMs(refreshHz: number): number {
    return 1000 / refreshHz;
  }

  /** Human-readable disclosure for the target's tooltip. */
  quantizationTooltip(targetIndex: number): string {
    const refresh = this.refreshRateHz();
    const f = this.freqs[targetIndex];
    if (refresh === null) {
      return `${f} Hz nominal; refresh rate not yet measured`;
    }
    const err = FlickerScheduler.quantizationErrorMs(refresh);
    return (
      `${f} Hz nominal at ~${refresh.toFixed(1)} Hz refresh: ` +
      `edges quantized to frames, up to ${err.toFixed(1)} ms late`
    );
  }
}
