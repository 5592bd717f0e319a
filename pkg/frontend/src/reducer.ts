import type { ConsoleState, ServerMessage } from './types.js';

export type ConsoleEvent =
  | { kind: 'connected' }
  | { kind: 'disconnected' }
  | { kind: 'message'; message: ServerMessage }
  | { kind: 'select'; target: number }
  | { kind: 'deselect' };

/**
 * Pure state transition: rendering reads only the returned snapshot, so a
 * dropped message just leaves the previous frame on screen.
 */
export function reduce(state: ConsoleState, event: ConsoleEvent): ConsoleState {
  switch (event.kind) {
    case 'connected':
      return { ...state, connected: true, lastError: null };
    case 'disconnected':
      return { ...state, connected: false, selectedTarget: null };
    case 'message': {
      const msg = event.message;
      if (msg.type === 'error') {
        return { ...state, lastError: msg.text };
      }
      const next: ConsoleState = {
        ...state,
        phase: msg.phase,
        junctionId: msg.junction_id,
        openDirs: msg.open_dirs,
        countdownMs: msg.countdown_ms,
        probs: msg.probs,
        command: msg.command,
        confidence: msg.confidence,
        classFreqs: msg.class_freqs,
        maze: msg.maze ?? state.maze,
        pose: msg.pose ?? state.pose,
        robotFinished: msg.robot_finished ?? state.robotFinished,
      };
      // a selection only exists while the stimulus it steers is running
      if (msg.phase !== 'stimulus') next.selectedTarget = null;
      return next;
    }
    case 'select':
      if (state.phase !== 'stimulus') return state; // no-op outside stimulus
      return { ...state, selectedTarget: event.target };
    case 'deselect':
      return { ...state, selectedTarget: null };
  }
}
