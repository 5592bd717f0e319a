import { COMMAND_NAMES, type ConsoleState } from './types.js';
import type { FlickerScheduler } from './flicker.js';

export interface ConsoleDom {
  banner: HTMLElement;
  maze: HTMLElement;
  status: HTMLElement;
  targets: HTMLElement[]; // three flicker target elements, index = class
  probs: HTMLElement[]; // three probability bars
  warning: HTMLElement;
}

const HEADING_GLYPHS: Record<string, string> = { N: '^', E: '>', S: 'v', W: '<' };

/** Maze text with the robot pose overlaid on its cell. */
export function mazeWithRobot(state: ConsoleState): string {
  if (state.maze === null) return '';
  if (state.pose === null) return state.maze;
  const lines = state.maze.split('\n');
  const row = 1 + 2 * state.pose.row;
  const col = 1 + 3 * state.pose.col;
  if (row >= lines.length || col >= lines[row].length) return state.maze;
  const glyph = HEADING_GLYPHS[state.pose.heading] ?? '?';
  lines[row] = lines[row].slice(0, col) + glyph + lines[row].slice(col + 1);
  return lines.join('\n');
}

export function statusLine(state: ConsoleState): string {
  if (!state.connected) return 'disconnected';
  if (state.robotFinished) return 'robot reached the exit';
  switch (state.phase) {
    case 'idle':
      return 'cruising; waiting for the next junction';
    case 'stimulus': {
      const ms = state.countdownMs ?? 0;
      return `junction ${state.junctionId}: look at a target (${ms} ms left)`;
    }
    case 'decided': {
      const name =
        state.command === null ? '?' : COMMAND_NAMES[state.command];
      const conf =
        state.confidence === null ? '' : ` (p=${state.confidence.toFixed(4)})`;
      return `decided: ${name}${conf}`;
    }
  }
}

/**
 * Write one state snapshot into the DOM. Pure with respect to the state:
 * identical snapshots render identically regardless of message history.
 */
export function render(
  state: ConsoleState,
  dom: ConsoleDom,
  flicker: FlickerScheduler,
): void {
  dom.banner.hidden = state.connected;
  dom.banner.textContent = state.connected ? '' : 'disconnected — retrying';
  dom.maze.textContent = mazeWithRobot(state);
  dom.status.textContent =
    state.lastError !== null
      ? `server error: ${state.lastError}`
      : statusLine(state);

  const stimulus = state.phase === 'stimulus';
  let degraded = false;
  for (let i = 0; i < 3; i++) {
    const el = dom.targets[i];
    el.hidden = !stimulus;
    el.classList.toggle('selected', state.selectedTarget === i);
    el.classList.toggle('lit', stimulus && flicker.target(i).on);
    el.title = flicker.quantizationTooltip(i);
    el.textContent = `${COMMAND_NAMES[i]} ${state.classFreqs[i]} Hz`;
    degraded = degraded || (stimulus && flicker.isDegraded(i));
  }
  dom.warning.hidden = !degraded;
  dom.warning.textContent = degraded
    ? 'degraded stimulus: display refresh below twice the flicker frequency'
    : '';

  for (let i = 0; i < 3; i++) {
    const p = state.probs?.[i] ?? 0;
    dom.probs[i].style.width = `${(100 * p).toFixed(1)}%`;
    dom.probs[i].textContent = state.probs ? p.toFixed(3) : '';
  }
}
