import { describe, expect, it } from 'vitest';
import { reduce } from '../src/reducer.js';
import { initialConsoleState, type StateMessage } from '../src/types.js';

function stateMsg(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: 'state',
    phase: 'idle',
    junction_id: null,
    open_dirs: null,
    countdown_ms: null,
    probs: null,
    command: null,
    confidence: null,
    class_freqs: [9.25, 11.25, 13.25],
    ...overrides,
  };
}

describe('reduce', () => {
  it('applies state snapshots', () => {
    const s = reduce(initialConsoleState(), {
      kind: 'message',
      message: stateMsg({ phase: 'stimulus', junction_id: 3, countdown_ms: 1500 }),
    });
    expect(s.phase).toBe('stimulus');
    expect(s.junctionId).toBe(3);
    expect(s.countdownMs).toBe(1500);
  });

  it('keeps the last maze when a snapshot omits it', () => {
    let s = reduce(initialConsoleState(), {
      kind: 'message',
      message: stateMsg({ maze: '+--+\n|S |\n+--+' }),
    });
    s = reduce(s, { kind: 'message', message: stateMsg() });
    expect(s.maze).toBe('+--+\n|S |\n+--+');
  });

  it('select is a no-op outside stimulus phase', () => {
    const idle = initialConsoleState();
    expect(reduce(idle, { kind: 'select', target: 1 })).toBe(idle);
  });

  it('select sticks during stimulus and clears on phase end', () => {
    let s = reduce(initialConsoleState(), {
      kind: 'message',
      message: stateMsg({ phase: 'stimulus' }),
    });
    s = reduce(s, { kind: 'select', target: 2 });
    expect(s.selectedTarget).toBe(2);
    s = reduce(s, {
      kind: 'message',
      message: stateMsg({ phase: 'decided', command: 2, confidence: 0.99,
                          probs: [0.005, 0.005, 0.99] }),
    });
    expect(s.selectedTarget).toBeNull();
    expect(s.command).toBe(2);
  });

  it('disconnect clears the selection and flags the banner', () => {
    let s = reduce(initialConsoleState(), {
      kind: 'message',
      message: stateMsg({ phase: 'stimulus' }),
    });
    s = reduce(s, { kind: 'select', target: 0 });
    s = reduce(s, { kind: 'disconnected' });
    expect(s.connected).toBe(false);
    expect(s.selectedTarget).toBeNull();
  });

  it('error messages surface without touching the snapshot', () => {
    const before = reduce(initialConsoleState(), {
      kind: 'message',
      message: stateMsg({ phase: 'stimulus', junction_id: 7 }),
    });
    const after = reduce(before, {
      kind: 'message',
      message: { type: 'error', text: 'source failed' },
    });
    expect(after.lastError).toBe('source failed');
    expect(after.junctionId).toBe(7);
  });

  it('reconnect clears the previous error', () => {
    let s = reduce(initialConsoleState(), {
      kind: 'message',
      message: { type: 'error', text: 'boom' },
    });
    s = reduce(s, { kind: 'connected' });
    expect(s.lastError).toBeNull();
    expect(s.connected).toBe(true);
  });
});
