import type { HistoryRow, InterventionEventView } from "./types.js";

export interface LogEntry {
  episodeIndex: number;
  period: number;
  text: string;
  intervened: boolean;
  failure: boolean;
}

const key = (e: { episodeIndex: number; period: number }) => `${e.episodeIndex}:${e.period}`;

/** Merge decision rows from a (possibly replayed) snapshot into the local
 * log. Entries are keyed by (episode index, period) so a stream reconnect
 * that resends old rows cannot duplicate them; a resent key overwrites in
 * place. Returns a new sorted array. */
export function mergeLog(log: LogEntry[], episodeIndex: number, rows: HistoryRow[]): LogEntry[] {
  const byKey = new Map<string, LogEntry>();
  for (const e of log) byKey.set(key(e), e);
  for (const r of rows) {
    const entry: LogEntry = {
      episodeIndex,
      period: r.period,
      text: r.m_d_text,
      intervened: r.intervened,
      failure: r.failure,
    };
    byKey.set(key(entry), entry);
  }
  const out = [...byKey.values()];
  out.sort((a, b) => a.episodeIndex - b.episodeIndex || a.period - b.period);
  return out;
}

/** Local record of accepted interventions, same idempotence rule. */
export function mergeEvents(
  log: InterventionEventView[],
  events: InterventionEventView[],
): InterventionEventView[] {
  const byKey = new Map<string, InterventionEventView>();
  for (const e of log) byKey.set(`${e.episode_index}:${e.period}`, e);
  for (const e of events) byKey.set(`${e.episode_index}:${e.period}`, e);
  const out = [...byKey.values()];
  out.sort((a, b) => a.episode_index - b.episode_index || a.period - b.period);
  return out;
}
