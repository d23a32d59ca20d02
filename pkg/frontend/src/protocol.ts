/**
 * Message schema shared with the gateway.
 *
 * Over the monitor WebSocket every message is one JSON text frame with a
 * `type` and `protocol_version`. The console only ever consumes
 * AUTH_RESPONSE, SIGHTING_BATCH, ALERT, STATUS_UPDATE, HEARTBEAT and
 * ERROR, and emits AUTH_REQUEST, SUBSCRIBE, SET_INTERVAL, STATUS_UPDATE.
 */

export const PROTOCOL_VERSION = 1;

export const MESSAGE_TYPES = [
  'NODE_HELLO',
  'FRAME',
  'HEARTBEAT',
  'AUTH_REQUEST',
  'AUTH_RESPONSE',
  'SUBSCRIBE',
  'SET_INTERVAL',
  'SIGHTING_BATCH',
  'ALERT',
  'STATUS_UPDATE',
  'ERROR',
] as const;

export type MessageType = (typeof MESSAGE_TYPES)[number];

export interface WireMessage {
  type: MessageType;
  protocol_version: number;
  [key: string]: unknown;
}

export interface BoxDict {
  x: number;
  y: number;
  w: number;
  h: number;
  score: number;
}

export interface SightingEvent {
  identity_id: string;
  display_name: string;
  distance: number;
  confidence: number;
  box: BoxDict;
  node_id: string;
  timestamp_ms: number;
  frame_sequence: number;
  status: string;
  guest_enrollment: boolean;
  crop_path?: string;
}

export interface SightingBatchMessage extends WireMessage {
  type: 'SIGHTING_BATCH';
  events: SightingEvent[];
  count: number;
  interval: number;
}

export interface AlertMessage extends WireMessage {
  type: 'ALERT';
  reason: string;
  event: SightingEvent;
}

export interface StatusUpdateMessage extends WireMessage {
  type: 'STATUS_UPDATE';
  identity_id: string;
  status: string;
  display_name?: string;
  applied?: boolean;
}

export interface AuthResponseMessage extends WireMessage {
  type: 'AUTH_RESPONSE';
  ok: boolean;
  session_id?: string;
  operator_id?: string;
  method: string;
  reason?: string;
}

export interface ErrorMessage extends WireMessage {
  type: 'ERROR';
  code: string;
  message: string;
}

export function makeMessage(
  type: MessageType,
  body: Record<string, unknown> = {},
): WireMessage {
  return { type, protocol_version: PROTOCOL_VERSION, ...body };
}

/** Parse one incoming text frame; throws on anything malformed. */
export function parseMessage(raw: string): WireMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    throw new Error(`gateway sent invalid JSON: ${raw.slice(0, 80)}`);
  }
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new Error('gateway message must be an object');
  }
  const msg = doc as WireMessage;
  if (!MESSAGE_TYPES.includes(msg.type)) {
    throw new Error(`unknown message type ${String(msg.type)}`);
  }
  if (msg.protocol_version !== PROTOCOL_VERSION) {
    throw new Error(`unsupported protocol version ${msg.protocol_version}`);
  }
  return msg;
}

export function serializeMessage(msg: WireMessage): string {
  return JSON.stringify(msg);
}
