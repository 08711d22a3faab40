import type { StateSnapshot, VocabPayload } from "./types.js";
import type { Viewport } from "./projection.js";
import type { LogEntry } from "./merge.js";
import type { FormState } from "./form.js";
import { ApiClient, ApiError } from "./api.js";
import { sceneModel } from "./scene.js";
import { drawPane } from "./render.js";
import { groupEntries, shortcutEntry, SHORTCUT_KEYS } from "./palette.js";
import { mergeLog } from "./merge.js";
import { EMPTY_FORM, buildPayload, canSubmit, windowOpen } from "./form.js";
import { openStream } from "./stream.js";

const VIEWPORT: Viewport = { width: 360, height: 360, margin: 24 };

interface UiState {
  vocab: VocabPayload | null;
  snap: StateSnapshot | null;
  lastGoodEnvSnap: StateSnapshot | null;
  form: FormState;
  log: LogEntry[];
  banner: string | null;
  inflight: boolean;
  deadline: number | null;
  deadlineKey: string | null;
  lastInstructionText: string | null;
  prevInstructionText: string | null;
}

const ui: UiState = {
  vocab: null,
  snap: null,
  lastGoodEnvSnap: null,
  form: { ...EMPTY_FORM },
  log: [],
  banner: null,
  inflight: false,
  deadline: null,
  deadlineKey: null,
  lastInstructionText: null,
  prevInstructionText: null,
};

let dirty = true;
function invalidate(): void {
  dirty = true;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const sessionParam = new URLSearchParams(window.location.search).get("session");
const api = new ApiClient((url, init) => fetch(url, init), "", sessionParam);

function setBanner(msg: string | null): void {
  ui.banner = msg;
  invalidate();
}

function decisionKey(snap: StateSnapshot): string | null {
  if (!snap.decision || !snap.episode) return null;
  return `${snap.episode.index}:${snap.decision.period}`;
}

function acceptSnapshot(snap: StateSnapshot): void {
  ui.snap = snap;
  if (snap.env !== null) ui.lastGoodEnvSnap = snap;
  if (snap.episode) {
    ui.log = mergeLog(ui.log, snap.episode.index, snap.history);
  }
  if (snap.decision && snap.decision.m_i_text !== ui.lastInstructionText) {
    ui.prevInstructionText = ui.lastInstructionText;
    ui.lastInstructionText = snap.decision.m_i_text;
  }
  const key = decisionKey(snap);
  if (snap.at_decision && key !== null && key !== ui.deadlineKey) {
    ui.deadlineKey = key;
    ui.form = { ...EMPTY_FORM };
    // paced sessions keep the window open for one period; the countdown is
    // advisory, the server closes the window by advancing on its own clock
    ui.deadline = snap.session.gated ? null : Date.now() + snap.session.period_seconds * 1000;
  }
  if (!snap.at_decision && ui.deadlineKey !== null && key === null) {
    ui.deadline = null;
  }
  invalidate();
}

async function refreshState(): Promise<void> {
  try {
    acceptSnapshot(await api.state());
  } catch (err) {
    setBanner(err instanceof Error ? err.message : String(err));
  }
}

async function sendControl(command: string): Promise<void> {
  try {
    await api.control(command);
    setBanner(null);
  } catch (err) {
    if (err instanceof ApiError) setBanner(`${command}: ${err.reason}`);
    else setBanner(String(err));
  }
  await refreshState();
}

async function submitIntervention(): Promise<void> {
  if (ui.inflight || !ui.snap || !ui.vocab) return;
  if (!canSubmit(ui.snap, ui.form, ui.vocab)) return;
  ui.inflight = true;
  invalidate();
  try {
    await api.intervene(buildPayload(ui.form));
    setBanner(null);
    ui.form = { ...EMPTY_FORM };
    await refreshState();
  } catch (err) {
    if (err instanceof ApiError && err.status === 0) {
      setBanner("network failure, intervention not sent; use retry");
      el<HTMLButtonElement>("retry-btn").hidden = false;
    } else if (err instanceof ApiError) {
      setBanner(`intervention rejected: ${err.reason}`);
    } else {
      setBanner("network failure, intervention not sent; use retry");
      el<HTMLButtonElement>("retry-btn").hidden = false;
    }
  } finally {
    ui.inflight = false;
    invalidate();
  }
}

function buildPalette(vocab: VocabPayload): void {
  const host = el<HTMLDivElement>("palette");
  host.textContent = "";
  for (const group of groupEntries(vocab)) {
    const section = document.createElement("section");
    const title = document.createElement("h3");
    title.textContent = group.label;
    section.appendChild(title);
    const wrap = document.createElement("div");
    wrap.className = "palette-group";
    for (const entry of group.entries) {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.textContent = entry.text;
      btn.dataset.entryId = String(entry.id);
      btn.addEventListener("click", () => {
        ui.form = { ...ui.form, failure: true, instructionId: entry.id };
        invalidate();
      });
      wrap.appendChild(btn);
    }
    section.appendChild(wrap);
    host.appendChild(section);
  }
}

function renderPaletteSelection(): void {
  const host = el<HTMLDivElement>("palette");
  const buttons = host.querySelectorAll<HTMLButtonElement>("button[data-entry-id]");
  buttons.forEach((btn) => {
    const selected = ui.form.instructionId !== null && btn.dataset.entryId === String(ui.form.instructionId);
    btn.classList.toggle("selected", selected);
    btn.disabled = !ui.form.failure;
  });
}

function describeCountdown(): string {
  if (!ui.snap || !ui.snap.at_decision) return "";
  if (ui.snap.session.gated) return "paused, waiting for resume";
  if (ui.deadline === null) return "";
  const remaining = (ui.deadline - Date.now()) / 1000;
  if (remaining <= 0) return "window closing";
  return `${remaining.toFixed(1)}s left in this period`;
}

function render(): void {
  const snap = ui.snap;
  el<HTMLSpanElement>("status-badge").textContent = snap ? snap.session.status : "connecting";
  el<HTMLSpanElement>("session-line").textContent = snap
    ? `${snap.session.task} / ${snap.session.vocab_id}` +
      (snap.episode ? ` / episode ${snap.episode.index}, period ${snap.episode.period}` : "")
    : "";

  const banner = el<HTMLDivElement>("banner");
  banner.hidden = ui.banner === null;
  banner.textContent = ui.banner ?? "";

  const envSnap = snap && snap.env !== null ? snap : ui.lastGoodEnvSnap;
  if (envSnap && envSnap.env) {
    const model = sceneModel(envSnap.env, VIEWPORT);
    drawPane(el<HTMLCanvasElement>("pane-top"), model, "top", VIEWPORT);
    drawPane(el<HTMLCanvasElement>("pane-side"), model, "side", VIEWPORT);
    el<HTMLSpanElement>("scene-line").textContent =
      `step ${model.step}` + (model.success ? ", task solved" : "");
  }

  el<HTMLSpanElement>("instr-current").textContent =
    snap && snap.decision ? snap.decision.m_i_text : ui.lastInstructionText ?? "none yet";
  el<HTMLSpanElement>("instr-prev").textContent = ui.prevInstructionText ?? "none";
  el<HTMLSpanElement>("countdown").textContent = describeCountdown();

  const open = snap !== null && windowOpen(snap);
  el<HTMLFieldSetElement>("form-fields").disabled = !open || ui.inflight;
  const submit = el<HTMLButtonElement>("submit-btn");
  submit.disabled =
    ui.inflight || !snap || !ui.vocab || !canSubmit(snap, ui.form, ui.vocab);
  el<HTMLInputElement>("verdict-failure").checked = ui.form.failure;
  el<HTMLInputElement>("verdict-correct").checked = !ui.form.failure;
  const semantic = el<HTMLTextAreaElement>("semantic");
  if (semantic.value !== ui.form.semantic) semantic.value = ui.form.semantic;
  renderPaletteSelection();

  const logHost = el<HTMLUListElement>("log");
  logHost.textContent = "";
  for (const entry of ui.log) {
    const li = document.createElement("li");
    li.textContent =
      `ep ${entry.episodeIndex} p${entry.period}: ${entry.text}` +
      (entry.intervened ? " (intervened)" : entry.failure ? " (flagged)" : "");
    logHost.appendChild(li);
  }
}

function loop(): void {
  if (dirty) {
    dirty = false;
    render();
  }
  window.requestAnimationFrame(loop);
}

function wireControls(): void {
  el<HTMLButtonElement>("start-btn").addEventListener("click", () => void sendControl("start"));
  el<HTMLButtonElement>("pause-btn").addEventListener("click", () => void sendControl("pause"));
  el<HTMLButtonElement>("resume-btn").addEventListener("click", () => void sendControl("resume"));
  el<HTMLButtonElement>("reset-btn").addEventListener("click", () => void sendControl("reset"));
  el<HTMLButtonElement>("submit-btn").addEventListener("click", () => void submitIntervention());
  el<HTMLButtonElement>("retry-btn").addEventListener("click", () => {
    el<HTMLButtonElement>("retry-btn").hidden = true;
    void submitIntervention();
  });
  el<HTMLInputElement>("verdict-failure").addEventListener("change", () => {
    ui.form = { ...ui.form, failure: true };
    invalidate();
  });
  el<HTMLInputElement>("verdict-correct").addEventListener("change", () => {
    ui.form = { ...ui.form, failure: false, instructionId: null };
    invalidate();
  });
  el<HTMLTextAreaElement>("semantic").addEventListener("input", (ev) => {
    ui.form = { ...ui.form, semantic: (ev.target as HTMLTextAreaElement).value };
    invalidate();
  });
  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLTextAreaElement || ev.target instanceof HTMLInputElement) return;
    if (!(ev.key.toLowerCase() in SHORTCUT_KEYS)) return;
    if (!ui.vocab || !ui.snap || !windowOpen(ui.snap)) return;
    const prefer = ui.snap.env && !ui.snap.env.gripper.open ? "closed" : "open";
    const entry = shortcutEntry(ev.key, ui.vocab, prefer);
    if (entry) {
      // picking an instruction is only meaningful for a failure verdict
      ui.form = { ...ui.form, failure: true, instructionId: entry.id };
      invalidate();
    }
  });
}

async function boot(): Promise<void> {
  wireControls();
  window.setInterval(() => {
    if (ui.deadline !== null) invalidate();
  }, 100);
  loop();
  try {
    ui.vocab = await api.vocab();
    buildPalette(ui.vocab);
  } catch (err) {
    setBanner(`vocabulary fetch failed: ${err instanceof Error ? err.message : String(err)}`);
    return;
  }
  await refreshState();
  openStream((url) => new EventSource(url), api.streamUrl(), {
    onSnapshot: acceptSnapshot,
    onMalformed: () => setBanner("malformed frame from stream; showing last good state"),
  });
}

void boot();
