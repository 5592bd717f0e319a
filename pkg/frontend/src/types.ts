export type Phase = 'idle' | 'stimulus' | 'decided';

export const COMMAND_NAMES = ['left', 'forward', 'right'] as const;

export interface Pose {
  col: number;
  row: number;
  heading: string;
}

/** Server -> console state snapshot (newline-JSON / WebSocket text frame). */
export interface StateMessage {
  type: 'state';
  phase: Phase;
  junction_id: number | null;
  open_dirs: number | null;
  countdown_ms: number | null;
  probs: number[] | null;
  command: number | null;
  confidence: number | null;
  class_freqs: number[];
  maze?: string;
  pose?: Pose;
  robot_finished?: boolean;
}

export interface ErrorMessage {
  type: 'error';
  text: string;
}

export type ServerMessage = StateMessage | ErrorMessage;

/** Everything the renderer needs; updated only by the reducer. */
export interface ConsoleState {
  connected: boolean;
  phase: Phase;
  junctionId: number | null;
  openDirs: number | null;
  countdownMs: number | null;
  probs: number[] | null;
  command: number | null;
  confidence: number | null;
  classFreqs: number[];
  maze: string | null;
  pose: Pose | null;
  robotFinished: boolean;
  selectedTarget: number | null;
  lastError: string | null;
}

export const DEFAULT_CLASS_FREQS = [9.25, 11.25, 13.25];

export function initialConsoleState(): ConsoleState {
  return {
    connected: false,
    phase: 'idle',
    junctionId: null,
    openDirs: null,
    countdownMs: null,
    probs: null,
    command: null,
    confidence: null,
    classFreqs: DEFAULT_CLASS_FREQS,
    maze: null,
    pose: null,
    robotFinished: false,
    selectedTarget: null,
    lastError: null,
  };
}
