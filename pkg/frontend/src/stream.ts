import type { StateSnapshot } from "./types.js";
import { isStateSnapshot } from "./types.js";

export interface EventSourceLike {
  addEventListener(type: string, cb: (ev: MessageEvent) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface StreamHandlers {
  onSnapshot: (snap: StateSnapshot) => void;
  onMalformed: (raw: string) => void;
}

/** Subscribe to the server's state stream. Frames arrive as "state" events;
 * a frame that fails the structural check is reported but never forwarded,
 * so the caller's last good snapshot stays on screen. EventSource handles
 * reconnection itself; dedup across reconnects is the log merge's job. */
export function openStream(
  factory: EventSourceFactory,
  url: string,
  handlers: StreamHandlers,
): EventSourceLike {
  const source = factory(url);
  source.addEventListener("state", (ev) => {
    let parsed: unknown;
    try {
      parsed = JSON.parse(ev.data as string);
    } catch {
      handlers.onMalformed(String(ev.data));
      return;
    }
    if (!isStateSnapshot(parsed)) {
      handlers.onMalformed(String(ev.data));
      return;
    }
    handlers.onSnapshot(parsed);
  });
  return source;
}
