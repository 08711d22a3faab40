export type Vec3 = [number, number, number];

export type SessionStatus = "idle" | "running" | "paused" | "done";

export interface SessionView {
  id: string;
  status: SessionStatus;
  gated: boolean;
  task: string;
  vocab_id: string;
  k_budget: number;
  period_seconds: number;
}

export interface EpisodeView {
  index: number;
  seed: number;
  period: number;
  success: boolean;
  total_steps: number;
  done: boolean;
}

export interface GripperView {
  pos: Vec3;
  open: boolean;
  held: string | null;
}

export interface EnvView {
  gripper: GripperView;
  objects: Record<string, Vec3>;
  step: number;
  success: boolean;
  task: string;
  workspace: [Vec3, Vec3];
}

export interface DecisionView {
  period: number;
  m_i: number;
  m_i_text: string;
  failure: boolean;
  semantic: string;
  m_a: number | null;
  m_d: number;
  m_d_text: string;
}

export interface HistoryRow {
  period: number;
  m_i: number;
  m_d: number;
  m_d_text: string;
  failure: boolean;
  intervened: boolean;
}

export interface InterventionEventView {
  period: number;
  shown_m_i: number;
  failure: boolean;
  semantic: string;
  instruction_id: number;
  timestamp: number;
  episode_index: number;
}

export interface StateSnapshot {
  session: SessionView;
  at_decision: boolean;
  episode: EpisodeView | null;
  env: EnvView | null;
  decision: DecisionView | null;
  history: HistoryRow[];
  events: InterventionEventView[];
}

export type Direction = [string, string];

export interface VocabEntry {
  id: number;
  text: string;
  directions: Direction[];
  gripper: string | null;
}

export interface VocabPayload {
  id: string;
  mode: "combined" | "flat";
  entries: VocabEntry[];
}

function isVec3(x: unknown): x is Vec3 {
  return Array.isArray(x) && x.length === 3 && x.every((v) => typeof v === "number" && isFinite(v));
}

function isGripper(x: unknown): x is GripperView {
  if (typeof x !== "object" || x === null) return false;
  const g = x as Record<string, unknown>;
  return isVec3(g.pos) && typeof g.open === "boolean" && (g.held === null || typeof g.held === "string");
}

function isEnv(x: unknown): x is EnvView {
  if (x === null) return true;
  if (typeof x !== "object") return false;
  const e = x as Record<string, unknown>;
  if (!isGripper(e.gripper)) return false;
  if (typeof e.objects !== "object" || e.objects === null) return false;
  for (const pos of Object.values(e.objects as Record<string, unknown>)) {
    if (!isVec3(pos)) return false;
  }
  if (!Array.isArray(e.workspace) || e.workspace.length !== 2) return false;
  return isVec3(e.workspace[0]) && isVec3(e.workspace[1]) && typeof e.step === "number";
}

const STATUSES: SessionStatus[] = ["idle", "running", "paused", "done"];

/** Structural check on an incoming frame. A frame failing this must never
 * replace the last rendered one. */
export function isStateSnapshot(x: unknown): x is StateSnapshot {
  if (typeof x !== "object" || x === null) return false;
  const s = x as Record<string, unknown>;
  const session = s.session as Record<string, unknown> | undefined;
  if (typeof session !== "object" || session === null) return false;
  if (!STATUSES.includes(session.status as SessionStatus)) return false;
  if (typeof session.id !== "string" || typeof session.gated !== "boolean") return false;
  if (typeof session.period_seconds !== "number") return false;
  if (typeof s.at_decision !== "boolean") return false;
  if (!isEnv(s.env ?? null)) return false;
  if (!Array.isArray(s.history) || !Array.isArray(s.events)) return false;
  for (const row of s.history) {
    const r = row as Record<string, unknown>;
    if (typeof r.period !== "number" || typeof r.m_d !== "number") return false;
    if (typeof r.intervened !== "boolean") return false;
  }
  if (s.decision !== null) {
    const d = s.decision as Record<string, unknown>;
    if (typeof d !== "object" || d === null) return false;
    if (typeof d.m_i !== "number" || typeof d.period !== "number") return false;
  }
  return true;
}

export function isVocabPayload(x: unknown): x is VocabPayload {
  if (typeof x !== "object" || x === null) return false;
  const v = x as Record<string, unknown>;
  if (typeof v.id !== "string") return false;
  if (v.mode !== "combined" && v.mode !== "flat") return false;
  if (!Array.isArray(v.entries)) return false;
  return v.entries.every((e) => {
    const t = e as Record<string, unknown>;
    return typeof t.id === "number" && typeof t.text === "string" && Array.isArray(t.directions);
  });
}
