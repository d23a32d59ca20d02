/**
 * Feed state: the single source of truth behind the console.
 *
 * Everything flows in through gateway messages; the model never
 * invents state. Rows render in timestamp order and reconnect replays
 * deduplicate on (node_id, frame_sequence, identity_id). Alerts stay
 * until acknowledged. Identity statuses track the gateway's
 * STATUS_UPDATE echoes only, so a toggle shows up when (and only when)
 * the gateway applied it.
 */

import {
  AlertMessage,
  SightingBatchMessage,
  SightingEvent,
  StatusUpdateMessage,
  WireMessage,
} from './protocol.js';

export interface FeedRow extends SightingEvent {
  key: string;
}

export interface AlertEntry {
  event: SightingEvent;
  reason: string;
  receivedAt: number;
  acknowledged: boolean;
}

export function eventKey(event: SightingEvent): string {
  return `${event.node_id}#${event.frame_sequence}#${event.identity_id}`;
}

export class FeedModel {
  rows: FeedRow[] = [];
  alerts: AlertEntry[] = [];
  intervalSeconds = 5;
  private seen = new Set<string>();
  private statuses = new Map<string, string>();
  private listeners = new Set<() => void>();

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of [...this.listeners]) listener();
  }

  /** Route one gateway message; returns true when state changed. */
  apply(msg: WireMessage): boolean {
    switch (msg.type) {
      case 'SIGHTING_BATCH':
        return this.applyBatch((msg as SightingBatchMessage).events ?? []);
      case 'ALERT':
        return this.applyAlert(msg as AlertMessage);
      case 'STATUS_UPDATE':
        return this.applyStatusEcho(msg as StatusUpdateMessage);
      default:
        return false;
    }
  }

  applyBatch(events: SightingEvent[]): boolean {
    let changed = false;
    for (const event of events) {
      const key = eventKey(event);
      if (this.seen.has(key)) continue;
      this.seen.add(key);
      this.rows.push({ ...event, key });
      changed = true;
    }
    if (changed) {
      this.rows.sort(
        (a, b) =>
          a.timestamp_ms - b.timestamp_ms ||
          a.node_id.localeCompare(b.node_id) ||
          a.frame_sequence - b.frame_sequence,
      );
      this.notify();
    }
    return changed;
  }

  applyAlert(msg: AlertMessage): boolean {
    this.alerts.push({
      event: msg.event,
      reason: msg.reason,
      receivedAt: Date.now(),
      acknowledged: false,
    });
    this.notify();
    return true;
  }

  applyStatusEcho(msg: StatusUpdateMessage): boolean {
    if (!msg.applied) return false;
    this.statuses.set(msg.identity_id, msg.status);
    this.notify();
    return true;
  }

  /** Current status of an identity per the gateway's echoes. */
  statusOf(identityId: string, fallback = 'neutral'): string {
    return this.statuses.get(identityId) ?? fallback;
  }

  get unacknowledgedAlerts(): AlertEntry[] {
    return this.alerts.filter((a) => !a.acknowledged);
  }

  acknowledgeAlerts(): void {
    let changed = false;
    for (const alert of this.alerts) {
      if (!alert.acknowledged) {
        alert.acknowledged = true;
        changed = true;
      }
    }
    if (changed) this.notify();
  }

  setIntervalSeconds(seconds: number): void {
    this.intervalSeconds = seconds;
    this.notify();
  }
}
