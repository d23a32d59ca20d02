/**
 * The console has exactly one setting: the gateway monitor URL.
 *
 * Resolution order: `?gateway=` query parameter (also persisted),
 * previously saved value, then the default local gateway.
 */

const STORAGE_KEY = 'sentinel.gateway_url';
const DEFAULT_URL = 'ws://127.0.0.1:7402';

export function gatewayUrl(): string {
  if (typeof window === 'undefined') return DEFAULT_URL;
  const fromQuery = new URLSearchParams(window.location.search).get('gateway');
  if (fromQuery) {
    try {
      window.localStorage.setItem(STORAGE_KEY, fromQuery);
    } catch {
      // storage may be unavailable; the query value still wins
    }
    return fromQuery;
  }
  try {
    return window.localStorage.getItem(STORAGE_KEY) ?? DEFAULT_URL;
  } catch {
    return DEFAULT_URL;
  }
}
