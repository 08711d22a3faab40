import type { StateSnapshot, VocabPayload } from "./types.js";
import { isStateSnapshot, isVocabPayload } from "./types.js";
import type { InterventionPayload } from "./form.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  reason: string;

  constructor(status: number, reason: string) {
    super(`${status}: ${reason}`);
    this.status = status;
    this.reason = reason;
  }
}

async function reasonOf(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as Record<string, unknown>;
    if (typeof body.error === "string") return body.error;
  } catch {
    // non-JSON error body, fall through
  }
  return res.statusText || `http ${res.status}`;
}

export class ApiClient {
  private fetchFn: FetchLike;
  private base: string;
  readonly session: string | null;

  constructor(fetchFn: FetchLike, base = "", session: string | null = null) {
    this.fetchFn = fetchFn;
    this.base = base;
    this.session = session;
  }

  private url(path: string): string {
    const q = this.session === null ? "" : `?session=${encodeURIComponent(this.session)}`;
    return `${this.base}${path}${q}`;
  }

  private async getJson(path: string): Promise<unknown> {
    const res = await this.fetchFn(this.url(path));
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
    return res.json();
  }

  async state(): Promise<StateSnapshot> {
    const body = await this.getJson("/api/state");
    if (!isStateSnapshot(body)) throw new ApiError(0, "malformed state snapshot");
    return body;
  }

  async vocab(): Promise<VocabPayload> {
    const body = await this.getJson("/api/vocab");
    if (!isVocabPayload(body)) throw new ApiError(0, "malformed vocabulary payload");
    return body;
  }

  async control(command: string): Promise<void> {
    const res = await this.fetchFn(this.url("/api/control"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ command }),
    });
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
  }

  async intervene(payload: InterventionPayload): Promise<void> {
    const res = await this.fetchFn(this.url("/api/intervention"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
  }

  streamUrl(): string {
    return this.url("/api/stream");
  }
}
