import { ConsoleConnection, type SocketLike } from './connection.js';
import { FlickerScheduler } from './flicker.js';
import { deselectMessage, selectMessage } from './protocol.js';
import { reduce, type ConsoleEvent } from './reducer.js';
import { render, type ConsoleDom } from './render.js';
import { DEFAULT_CLASS_FREQS, initialConsoleState } from './types.js';

function el(tag: string, cls: string, parent: HTMLElement): HTMLElement {
  const node = document.createElement(tag);
  node.className = cls;
  parent.appendChild(node);
  return node;
}

function buildDom(root: HTMLElement): ConsoleDom {
  const banner = el('div', 'banner', root);
  const status = el('div', 'status', root);
  const warning = el('div', 'warning', root);
  const maze = el('pre', 'maze', root);
  const targetRow = el('div', 'targets', root);
  const targets = [0, 1, 2].map(() => el('button', 'target', targetRow));
  const probRow = el('div', 'probs', root);
  const probs = [0, 1, 2].map(() => el('div', 'prob-bar', el('div', 'prob-track', probRow)));
  return { banner, maze, status, targets, probs, warning };
}

export function startConsole(root: HTMLElement, url?: string): void {
  const endpoint = url ?? `ws://${location.hostname}:7072/`;
  const dom = buildDom(root);
  let state = initialConsoleState();

  const flicker = new FlickerScheduler(
    DEFAULT_CLASS_FREQS,
    (cb) => requestAnimationFrame(cb),
    (h) => cancelAnimationFrame(h),
  );
  flicker.onToggle = () => render(state, dom, flicker);

  const dispatch = (event: ConsoleEvent) => {
    state = reduce(state, event);
    if (state.phase === 'stimulus' && !flicker.active) flicker.start();
    if (state.phase !== 'stimulus' && flicker.active) flicker.stop();
    render(state, dom, flicker);
  };

  const connection = new ConsoleConnection(
    endpoint,
    (u) => new WebSocket(u) as unknown as SocketLike,
    {
      onOpen: () => dispatch({ kind: 'connected' }),
      onClose: () => dispatch({ kind: 'disconnected' }),
      onMessage: (msg) => dispatch({ kind: 'message', message: msg }),
    },
  );

  dom.targets.forEach((button, i) => {
    button.addEventListener('click', () => {
      if (state.phase !== 'stimulus') {
        dom.status.textContent = 'selection works only while the targets flicker';
        return;
      }
      if (connection.send(selectMessage(i))) dispatch({ kind: 'select', target: i });
    });
  });
  document.addEventListener('keydown', (ev) => {
    if (ev.key >= '1' && ev.key <= '3') dom.targets[Number(ev.key) - 1].click();
    if (ev.key === 'Escape' && connection.send(deselectMessage())) {
      dispatch({ kind: 'deselect' });
    }
  });

  connection.connect();
  render(state, dom, flicker);
}
