import { parseServerMessage } from './protocol.js';
import type { ServerMessage } from './types.js';

/** The subset of the WebSocket API the console uses; injectable in tests. */
export interface SocketLike {
  onopen: ((ev: never) => void) | null;
  onclose: ((ev: never) => void) | null;
  onerror: ((ev: never) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionHandlers {
  onOpen: () => void;
  onClose: () => void;
  onMessage: (msg: ServerMessage) => void;
}

export interface ConnectionOptions {
  initialBackoffMs?: number;
  maxBackoffMs?: number;
  setTimeoutFn?: (cb: () => void, ms: number) => unknown;
}

/**
 * Status-stream connection with exponential-backoff reconnect. A dropped
 * server never fails silently: every close reaches onClose so the UI can
 * show its disconnected banner.
 */
export class ConsoleConnection {
  readonly url: string;
  private factory: SocketFactory;
  private handlers: ConnectionHandlers;
  private socket: SocketLike | null = null;
  private backoffMs: number;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;
  private setTimeoutFn: (cb: () => void, ms: number) => unknown;
  private stopped = false;
  attempts = 0;

  constructor(
    url: string,
    factory: SocketFactory,
    handlers: ConnectionHandlers,
    options: ConnectionOptions = {},
  ) {
    this.url = url;
    this.factory = factory;
    this.handlers = handlers;
    this.initialBackoffMs = options.initialBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 10_000;
    this.backoffMs = this.initialBackoffMs;
    this.setTimeoutFn =
      options.setTimeoutFn ?? ((cb, ms) => setTimeout(cb, ms));
  }

  connect(): void {
    if (this.stopped) return;
    this.attempts += 1;
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.backoffMs = this.initialBackoffMs;
      this.handlers.onOpen();
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data !== 'string') return;
      const msg = parseServerMessage(ev.data);
      if (msg === null) {
        console.warn('ignoring malformed console message', ev.data);
        return;
      }
      this.handlers.onMessage(msg);
    };
    sock.onerror = () => {
      // close always follows; reconnect is scheduled there
    };
    sock.onclose = () => {
      this.socket = null;
      this.handlers.onClose();
      if (this.stopped) return;
      const delay = this.backoffMs;
      this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
      this.setTimeoutFn(() => this.connect(), delay);
    };
  }

  send(data: string): boolean {
    if (this.socket === null) return false;
    try {
      this.socket.send(data);
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.stopped = true;
    this.socket?.close();
    this.socket = null;
  }
}
