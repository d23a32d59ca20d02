/**
 * Bootstrap: login view, then the live feed.
 */

import { gatewayUrl } from './config.js';
import { MonitorConnection } from './connection.js';
import { FeedController } from './controller.js';
import { parsePgm } from './pgm.js';
import { renderAlertBanner, renderFeed } from './render.js';
import { loginWithCredentials, loginWithFace } from './session.js';

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing #${id}`);
  return found as T;
}

async function enterFeed(connection: MonitorConnection): Promise<void> {
  element('login-view').hidden = true;
  element('feed-view').hidden = false;

  const controller = new FeedController(connection);
  const tbody = element('feed-rows');
  const banner = element('alert-banner');
  const callbacks = {
    onToggleStatus: (identityId: string, status: 'blacklist' | 'whitelist' | 'neutral') =>
      controller.setStatus(identityId, status),
    onAcknowledgeAlerts: () => controller.model.acknowledgeAlerts(),
  };
  controller.model.onChange(() => {
    renderFeed(controller.model, tbody, callbacks);
    renderAlertBanner(controller.model, banner, callbacks);
  });

  const intervalInput = element<HTMLSelectElement>('interval');
  intervalInput.addEventListener('change', () => {
    controller.setInterval(Number(intervalInput.value));
  });

  connection.onClose(() => {
    element('feed-view').hidden = true;
    element('login-view').hidden = false;
    showLoginError('connection lost; log in again');
  });

  controller.subscribe(Number(intervalInput.value));
}

function showLoginError(reason: string): void {
  const box = element('login-error');
  box.textContent = reason;
  box.hidden = false;
}

async function connect(): Promise<MonitorConnection> {
  const connection = new MonitorConnection(gatewayUrl());
  await connection.connect();
  return connection;
}

export function bootstrap(): void {
  element<HTMLFormElement>('credentials-form').addEventListener('submit', async (ev) => {
    ev.preventDefault();
    try {
      const connection = await connect();
      const result = await loginWithCredentials(
        connection,
        element<HTMLInputElement>('operator-id').value,
        element<HTMLInputElement>('password').value,
      );
      if (result.ok) {
        await enterFeed(connection);
      } else {
        connection.close();
        showLoginError(result.reason ?? 'login failed');
      }
    } catch (err) {
      showLoginError(String(err));
    }
  });

  element<HTMLInputElement>('face-file').addEventListener('change', async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const crop = parsePgm(new Uint8Array(await file.arrayBuffer()));
      const connection = await connect();
      const result = await loginWithFace(connection, crop.values);
      if (result.ok) {
        await enterFeed(connection);
      } else {
        connection.close();
        showLoginError(result.reason ?? 'face not recognized');
      }
    } catch (err) {
      showLoginError(String(err));
    } finally {
      input.value = '';
    }
  });
}

if (typeof document !== 'undefined' && document.getElementById('login-view')) {
  bootstrap();
}
