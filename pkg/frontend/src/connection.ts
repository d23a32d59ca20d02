/**
 * WebSocket connection to the gateway monitor port.
 *
 * The constructor is injectable so tests can run under Node with the
 * `ws` package; in the browser the global WebSocket is used.
 */

import { WireMessage, parseMessage, serializeMessage } from './protocol.js';

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

function defaultFactory(url: string): WebSocketLike {
  const ctor = (globalThis as { WebSocket?: new (url: string) => WebSocketLike })
    .WebSocket;
  if (!ctor) {
    throw new Error('no WebSocket implementation available; pass a factory');
  }
  return new ctor(url);
}

export type MessageHandler = (msg: WireMessage) => void;
export type CloseHandler = () => void;

export class MonitorConnection {
  private socket: WebSocketLike | null = null;
  private handlers = new Set<MessageHandler>();
  private closeHandlers = new Set<CloseHandler>();
  private closed = false;

  constructor(
    readonly url: string,
    private readonly factory: WebSocketFactory = defaultFactory,
  ) {}

  connect(timeoutMs = 10_000): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.factory(this.url);
      this.socket = socket;
      const timer = setTimeout(
        () => reject(new Error(`timed out connecting to ${this.url}`)),
        timeoutMs,
      );
      socket.onopen = () => {
        clearTimeout(timer);
        resolve();
      };
      socket.onerror = (ev) => {
        clearTimeout(timer);
        reject(new Error(`websocket error connecting to ${this.url}: ${String(ev)}`));
      };
      socket.onclose = () => {
        this.closed = true;
        for (const handler of this.closeHandlers) handler();
      };
      socket.onmessage = (ev) => {
        const raw = typeof ev.data === 'string' ? ev.data : String(ev.data);
        let msg: WireMessage;
        try {
          msg = parseMessage(raw);
        } catch (err) {
          console.warn('dropping unparseable gateway message', err);
          return;
        }
        for (const handler of [...this.handlers]) handler(msg);
      };
    });
  }

  get isClosed(): boolean {
    return this.closed;
  }

  send(msg: WireMessage): void {
    if (!this.socket) throw new Error('not connected');
    this.socket.send(serializeMessage(msg));
  }

  /** Subscribe to every incoming message; returns an unsubscribe. */
  onMessage(handler: MessageHandler): () => void {
    this.handlers.add(handler);
    return () => this.handlers.delete(handler);
  }

  onClose(handler: CloseHandler): () => void {
    this.closeHandlers.add(handler);
    return () => this.closeHandlers.delete(handler);
  }

  /** Send a message and resolve with the first reply of the given type. */
  request(
    msg: WireMessage,
    expectType: WireMessage['type'],
    timeoutMs = 10_000,
  ): Promise<WireMessage> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        unsubscribe();
        reject(new Error(`timed out waiting for ${expectType}`));
      }, timeoutMs);
      const unsubscribe = this.onMessage((incoming) => {
        if (incoming.type === expectType || incoming.type === 'ERROR') {
          clearTimeout(timer);
          unsubscribe();
          resolve(incoming);
        }
      });
      this.send(msg);
    });
  }

  close(): void {
    this.socket?.close();
  }
}
