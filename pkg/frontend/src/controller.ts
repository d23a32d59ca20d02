/**
 * Feed controller: wires a connection to the model and owns the
 * operator commands. Status toggles go to the gateway and only its
 * echo mutates the model, so the console never claims authority over
 * identity state.
 */

import { MonitorConnection } from './connection.js';
import { FeedModel } from './feed.js';
import { makeMessage } from './protocol.js';

export class FeedController {
  readonly model = new FeedModel();
  private unsubscribe: (() => void) | null = null;

  constructor(private readonly connection: MonitorConnection) {}

  /** Activate the feed after a successful login. */
  subscribe(intervalSeconds?: number): void {
    this.unsubscribe ??= this.connection.onMessage((msg) => this.model.apply(msg));
    this.connection.send(makeMessage('SUBSCRIBE'));
    if (intervalSeconds !== undefined) {
      this.setInterval(intervalSeconds);
    }
  }

  setInterval(seconds: number): void {
    this.connection.send(makeMessage('SET_INTERVAL', { seconds }));
    this.model.setIntervalSeconds(seconds);
  }

  setStatus(identityId: string, status: 'neutral' | 'whitelist' | 'blacklist'): void {
    this.connection.send(
      makeMessage('STATUS_UPDATE', { identity_id: identityId, status }),
    );
  }

  stop(): void {
    this.unsubscribe?.();
    this.unsubscribe = null;
  }
}
