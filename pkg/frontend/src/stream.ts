// Event-stream following with reconnect and replay.
//
// The transport is injectable: production wraps EventSource, tests wrap a
// jitter-injecting mock endpoint. On connection loss the follower
// reconnects asking for events after the last sequence it saw; the server
// replays from its retained buffer, and the timeline fold dedupes any
// overlap, so nothing is lost or duplicated.

import { buildView } from './timeline.js';
import type { SessionEvent, UiSessionView } from './types.js';

export interface Connection {
  close(): void;
}

export type Connector = (
  after: number,
  handlers: {
    onFrame: (event: SessionEvent) => void;
    onError: () => void;
  },
) => Connection;

export interface FollowOptions {
  retryDelayMs?: number;
  maxRetries?: number;
}

export interface FollowHandle {
  close(): void;
  done: Promise<UiSessionView>;
}

export function followSession(
  sessionId: string,
  connector: Connector,
  onChange: (view: UiSessionView) => void,
  options: FollowOptions = {},
): FollowHandle {
  const retryDelay = options.retryDelayMs ?? 1000;
  const maxRetries = options.maxRetries ?? 20;
  const events: SessionEvent[] = [];
  let lastSeq = 0;
  let retries = 0;
  let closed = false;
  let connection: Connection | null = null;
  let retryTimer: ReturnType<typeof setTimeout> | null = null;

  let resolveDone!: (view: UiSessionView) => void;
  let rejectDone!: (err: Error) => void;
  const done = new Promise<UiSessionView>((resolve, reject) => {
    resolveDone = resolve;
    rejectDone = reject;
  });

  const emit = (): UiSessionView => {
    const view = buildView(sessionId, events);
    onChange(view);
    return view;
  };

  const connect = () => {
    if (closed) return;
    connection = connector(lastSeq, {
      onFrame: (event) => {
        if (closed) return;
        retries = 0;
        events.push(event);
        lastSeq = Math.max(lastSeq, event.sequence);
        const view = emit();
        if (event.event_kind === 'session_ended') {
          closed = true;
          connection?.close();
          resolveDone(view);
        }
      },
      onError: () => {
        if (closed) return;
        connection?.close();
        connection = null;
        retries += 1;
        if (retries > maxRetries) {
          closed = true;
          rejectDone(new Error(`connection lost after ${maxRetries} retries`));
          return;
        }
        retryTimer = setTimeout(connect, retryDelay);
      },
    });
  };

  connect();
  return {
    close() {
      closed = true;
      if (retryTimer) clearTimeout(retryTimer);
      connection?.close();
    },
    done,
  };
}

/** Production connector over the browser's EventSource. */
export function eventSourceConnector(baseUrl: string, sessionId: string): Connector {
  return (after, handlers) => {
    const source = new EventSource(`${baseUrl}/sessions/${sessionId}/events?after=${after}`);
    let sawEnd = false;
    source.onmessage = (message) => {
      try {
        const event = JSON.parse(message.data) as SessionEvent;
        if (event.event_kind === 'session_ended') sawEnd = true;
        handlers.onFrame(event);
      } catch {
        // non-JSON frames are ignored
      }
    };
    source.onerror = () => {
      // EventSource fires error on normal stream end too; only a stream
      // that never reached session_ended is a real connection loss.
      if (!sawEnd) handlers.onError();
      source.close();
    };
    return { close: () => source.close() };
  };
}
