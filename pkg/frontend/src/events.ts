// Gateway event stream: SSE frame parsing plus a browser subscription
// helper.  Parsing is kept pure so it can be tested without a socket.

import type { GatewayEvent } from './types.js';

const EVENT_TYPES = new Set(['ActivationChange', 'LedFeedback', 'AnomalyReport']);

/**
 * Incremental SSE decoder: feed raw chunks, collect complete events.
 * Unknown event types and malformed JSON payloads are dropped.
 */
export class SseDecoder {
  private buffer = '';

  feed(chunk: string): GatewayEvent[] {
    this.buffer += chunk;
    const events: GatewayEvent[] = [];
    let sep: number;
    while ((sep = this.buffer.indexOf('\n\n')) !== -1) {
      const frame = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      const parsed = parseFrame(frame);
      if (parsed) events.push(parsed);
    }
    return events;
  }
}

function parseFrame(frame: string): GatewayEvent | null {
  let type = 'message';
  const dataLines: string[] = [];
  for (const line of frame.split('\n')) {
    if (line.startsWith('event:')) type = line.slice(6).trim();
    else if (line.startsWith('data:')) dataLines.push(line.slice(5).trim());
  }
  if (!EVENT_TYPES.has(type) || dataLines.length === 0) return null;
  try {
    return { type, data: JSON.parse(dataLines.join('\n')) } as GatewayEvent;
  } catch {
    return null;
  }
}

export type EventHandler = (e: GatewayEvent) => void;

/** Subscribe to `${baseUrl}/events`; returns an unsubscribe function. */
export function subscribe(baseUrl: string, handler: EventHandler): () => void {
  const source = new EventSource(`${baseUrl}/events`);
  const listeners: [string, (m: MessageEvent) => void][] = [];
  for (const type of EVENT_TYPES) {
    const listener = (m: MessageEvent) => {
      try {
        handler({ type, data: JSON.parse(m.data) } as GatewayEvent);
      } catch {
        /* ignore malformed payloads */
      }
    };
    source.addEventListener(type, listener);
    listeners.push([type, listener]);
  }
  return () => {
    for (const [type, listener] of listeners) source.removeEventListener(type, listener);
    source.close();
  };
}
