import type { Phase, ServerMessage, StateMessage } from './types.js';

const PHASES: Phase[] = ['idle', 'stimulus', 'decided'];
const PROBS_SUM_TOL = 1e-6;

/**
 * Parse one server line. Returns null for anything malformed: the stream
 * must keep going on bad input, so this never throws.
 */
export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== 'object' || obj === null) return null;
  const msg = obj as Record<string, unknown>;
  if (msg.type === 'error') {
    return typeof msg.text === 'string' ? { type: 'error', text: msg.text } : null;
  }
  if (msg.type !== 'state') return null;
  if (!PHASES.includes(msg.phase as Phase)) return null;
  if (msg.probs != null) {
    const probs = msg.probs;
    if (!Array.isArray(probs) || probs.length !== 3) return null;
    if (!probs.every((p) => typeof p === 'number' && p >= 0 && p <= 1)) return null;
    const sum = probs.reduce((a, b) => a + b, 0);
    if (Math.abs(sum - 1) > PROBS_SUM_TOL + 3e-6) return null; // server rounds to 6dp
  }
  if (!Array.isArray(msg.class_freqs) || msg.class_freqs.length !== 3) return null;
  return msg as unknown as StateMessage;
}

export function selectMessage(target: number): string {
  if (!Number.isInteger(target) || target < 0 || target > 2) {
    throw new Error(`target out of range: ${target}`);
  }
  return JSON.stringify({ type: 'select', target });
}

export function deselectMessage(): string {
  return JSON.stringify({ type: 'deselect' });
}
