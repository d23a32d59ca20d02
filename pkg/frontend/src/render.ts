/**
 * DOM rendering: model state in, table rows and banner out.
 *
 * Rendering is a full redraw of small regions (desk-scale feeds); the
 * controller's callbacks are attached per render pass.
 */

import { FeedModel, FeedRow } from './feed.js';

export interface FeedCallbacks {
  onToggleStatus(identityId: string, status: 'blacklist' | 'whitelist' | 'neutral'): void;
  onAcknowledgeAlerts(): void;
}

function formatTime(timestampMs: number): string {
  return new Date(timestampMs).toISOString().replace('T', ' ').slice(0, 19);
}

function rowElement(
  doc: Document,
  model: FeedModel,
  row: FeedRow,
  callbacks: FeedCallbacks,
): HTMLTableRowElement {
  const tr = doc.createElement('tr');
  tr.dataset.key = row.key;
  const status = model.statusOf(row.identity_id, row.status);
  tr.className = `sighting status-${status}` + (row.guest_enrollment ? ' guest' : '');

  const cells = [
    formatTime(row.timestamp_ms),
    row.display_name,
    row.identity_id,
    row.node_id,
    `#${row.frame_sequence}`,
    `${(row.confidence * 100).toFixed(1)}%`,
    status,
  ];
  for (const text of cells) {
    const td = doc.createElement('td');
    td.textContent = text;
    tr.appendChild(td);
  }

  // Face column: guests carry a stored crop path, others a placeholder.
  const face = doc.createElement('td');
  face.className = 'face';
  face.textContent =
    row.guest_enrollment && row.crop_path ? row.crop_path : '(no image)';
  tr.appendChild(face);

  const actions = doc.createElement('td');
  for (const target of ['blacklist', 'whitelist', 'neutral'] as const) {
    const button = doc.createElement('button');
    button.textContent = target;
    button.className = `toggle-${target}`;
    button.disabled = status === target;
    button.addEventListener('click', () => callbacks.onToggleStatus(row.identity_id, target));
    actions.appendChild(button);
  }
  tr.appendChild(actions);
  return tr;
}

export function renderFeed(
  model: FeedModel,
  tbody: HTMLElement,
  callbacks: FeedCallbacks,
): void {
  const doc = tbody.ownerDocument;
  tbody.replaceChildren();
  for (const row of model.rows) {
    tbody.appendChild(rowElement(doc, model, row, callbacks));
  }
}

export function renderAlertBanner(
  model: FeedModel,
  banner: HTMLElement,
  callbacks: FeedCallbacks,
): void {
  const doc = banner.ownerDocument;
  const pending = model.unacknowledgedAlerts;
  banner.replaceChildren();
  if (pending.length === 0) {
    banner.classList.remove('active');
    return;
  }
  banner.classList.add('active');
  const label = doc.createElement('span');
  const latest = pending[pending.length - 1];
  label.textContent =
    `${pending.length} alert${pending.length > 1 ? 's' : ''}: ` +
    `${latest.event.display_name} (${latest.reason}) on ${latest.event.node_id}`;
  banner.appendChild(label);
  const ack = doc.createElement('button');
  ack.textContent = 'acknowledge';
  ack.className = 'ack';
  ack.addEventListener('click', () => callbacks.onAcknowledgeAlerts());
  banner.appendChild(ack);
}
