/**
 * Login flows. Both paths send AUTH_REQUEST and surface the gateway's
 * failure reason verbatim; on success the session id is retained and
 * the caller can subscribe to the feed.
 */

import { MonitorConnection } from './connection.js';
import { AuthResponseMessage, ErrorMessage, makeMessage } from './protocol.js';

export interface LoginResult {
  ok: boolean;
  sessionId?: string;
  operatorId?: string;
  method: string;
  reason?: string;
}

function toResult(reply: AuthResponseMessage | ErrorMessage, method: string): LoginResult {
  if (reply.type === 'ERROR') {
    return { ok: false, method, reason: reply.message };
  }
  return {
    ok: reply.ok,
    sessionId: reply.session_id,
    operatorId: reply.operator_id,
    method: reply.method,
    reason: reply.reason,
  };
}

export async function loginWithCredentials(
  connection: MonitorConnection,
  operatorId: string,
  password: string,
): Promise<LoginResult> {
  const reply = await connection.request(
    makeMessage('AUTH_REQUEST', {
      method: 'credentials',
      operator_id: operatorId,
      password,
    }),
    'AUTH_RESPONSE',
  );
  return toResult(reply as AuthResponseMessage | ErrorMessage, 'credentials');
}

export async function loginWithFace(
  connection: MonitorConnection,
  crop: number[],
): Promise<LoginResult> {
  const reply = await connection.request(
    makeMessage('AUTH_REQUEST', { method: 'face', crop }),
    'AUTH_RESPONSE',
  );
  return toResult(reply as AuthResponseMessage | ErrorMessage, 'face');
}
