"""Human-in-the-loop intervention service over the dual-process control loop.

A single session thread owns the environment and episode loop; HTTP
handlers exchange messages with it through queues and an intervention
mailbox. In gated mode the loop stops before every chunk until a resume
command arrives; in paced mode each decision point stays open for a fixed
wall-clock window during which an intervention may be posted for the next
chunk. Accepted interventions replace the decided instruction and are
logged append-only, then exported as correction records when the episode
ends.
"""

import json
import logging
import os
import queue
import threading
import time
from dataclasses import asdict, dataclass

import numpy as np

from .annotate import AnnotationConfig, Vocabulary, build_vocabulary
from .control import EpisodeRecord, StepDecision, run_episode, save_episodes
from .lifecycle import CorrectionRecord, CorrectionSource, save_corrections
from .sim import (
    FaultConfig,
    FaultyPredictor,
    InstructionFollowPolicy,
    OracleCorrector,
    OraclePredictor,
    SimConfig,
    TabletopEnv,
    episode_seed,
    make_task,
    state_snapshot,
)

log = logging.getLogger(__name__)

__all__ = [
    "ServeConfig",
    "InterventionEvent",
    "InterventionError",
    "Session",
    "SessionManager",
    "export_corrections",
    "build_app",
    "serve_intervention",
]


@dataclass(frozen=True)
class InterventionEvent:
    period: int
    shown_m_i: int
    failure: bool
    semantic: str
    instruction_id: int
    timestamp: float
    episode_index: int


@dataclass(frozen=True)
class _PendingIntervention:
    """Accepted but not yet applied; the event is logged with the period it
    ends up attached to, keeping event periods strictly increasing."""

    failure: bool
    semantic: str
    instruction_id: int | None
    timestamp: float


class InterventionError(Exception):
    """Rejected intervention; http_status tells the handler how."""

    def __init__(self, message: str, http_status: int):
        super().__init__(message)
        self.http_status = http_status


@dataclass
class ServeConfig:
    task: str = "Reach"
    mode: str = "combined"
    k_budget: int = 12
    seed: int = 0
    step_gate: bool = False
    period_seconds: float = 2.0
    predictor: str = "oracle"  # "oracle" | "faulty"
    fault_p: float = 0.3
    corrector: str = "none"  # "none" | "oracle"
    sigma: float = 0.0
    slip: float = 0.0
    H: int = 5
    session_id: str = "default"
    episodes_out: str | None = None
    corrections_out: str | None = None
    static_dir: str | None = None
    host: str = "127.0.0.1"
    port: int = 8000

    def validate(self) -> None:
        if self.k_budget < 1:
            raise ValueError("k_budget must be >= 1")
        if self.period_seconds <= 0:
            raise ValueError("period_seconds must be > 0")
        if self.predictor not in ("oracle", "faulty"):
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if self.corrector not in ("none", "oracle"):
            raise ValueError(f"unknown corrector {self.corrector!r}")
        if self.mode not in ("combined", "flat"):
            raise ValueError(f"unknown vocabulary mode {self.mode!r}")


class _EpisodeAborted(Exception):
    pass


class Session:
    """Owns one live episode at a time; all env mutation happens on its thread."""

    def __init__(self, cfg: ServeConfig):
        cfg.validate()
        self.cfg = cfg
        self.ann_cfg = AnnotationConfig()
        self.vocab: Vocabulary = build_vocabulary(self.ann_cfg, mode=cfg.mode)
        self.task = make_task(cfg.task)
        self.sim_cfg = SimConfig()
        self.faults = FaultConfig(sigma=cfg.sigma, slip_prob=cfg.slip)

        self._cond = threading.Condition()
        self._status = "idle"  # idle | running | done
        self._paused = False
        self._at_decision = False
        self._gate_open = False
        self._abort = False
        self._stop = False
        self._pending: _PendingIntervention | None = None
        self._live_env: TabletopEnv | None = None
        self._decision_view: dict | None = None
        self._env_view: dict | None = None
        self._episode_view: dict | None = None
        self._history: list[dict] = []
        self._start_requests: queue.Queue[int] = queue.Queue()

        self.events: list[InterventionEvent] = []
        self.episodes: list[EpisodeRecord] = []
        self._episode_index = 0
        self._subscribers: list[queue.Queue] = []

        self._thread = threading.Thread(target=self._loop, name="session-loop", daemon=True)
        self._thread.start()

    # -- component wiring ------------------------------------------------

    def _make_components(self, seed: int):
        mpm = OraclePredictor(self.task, self.vocab, self.ann_cfg, self.sim_cfg)
        if self.cfg.predictor == "faulty":
            mpm = FaultyPredictor(
                mpm, self.cfg.fault_p, len(self.vocab), np.random.default_rng([seed, 2])
            )
        mcm = (
            OracleCorrector(self.task, self.vocab, self.ann_cfg, self.sim_cfg)
            if self.cfg.corrector == "oracle"
            else None
        )
        policy = InstructionFollowPolicy(self.task, self.vocab, self.ann_cfg, self.sim_cfg)
        return mpm, mcm, policy

    # -- session thread ---------------------------------------------------

    def _loop(self) -> None:
        while not self._stop:
            try:
                self._start_requests.get(timeout=0.1)
            except queue.Empty:
                continue
            if self._stop:
                break
            self._run_one_episode()

    def _run_one_episode(self) -> None:
        idx = self._episode_index
        seed = episode_seed(self.cfg.seed, idx)
        env = TabletopEnv(self.task, self.sim_cfg, self.faults)
        mpm, mcm, policy = self._make_components(seed)
        with self._cond:
            self._status = "running"
            self._abort = False
            self._pending = None
            self._history = []
            self._live_env = env
            self._episode_view = {
                "index": idx,
                "seed": seed,
                "period": 0,
                "success": False,
                "total_steps": 0,
                "done": False,
            }
        self._publish()
        try:
            rec = run_episode(
                env,
                mpm,
                mcm,
                policy,
                self.cfg.k_budget,
                seed,
                intervention_hook=self._decision_gate,
                H=self.cfg.H,
            )
        except _EpisodeAborted:
            with self._cond:
                self._status = "idle"
                self._decision_view = None
                self._episode_view = None
                self._env_view = None
                self._live_env = None
            self._broadcast()
            return
        except Exception:
            log.exception("episode failed")
            with self._cond:
                self._status = "idle"
                self._live_env = None
            self._broadcast()
            return
        self.episodes.append(rec)
        self._episode_index += 1
        with self._cond:
            self._status = "done"
            self._at_decision = False
            self._decision_view = None
            self._episode_view.update(
                success=rec.success,
                total_steps=rec.total_steps,
                period=len(rec.periods),
                done=True,
            )
        self._publish()
        with self._cond:
            self._live_env = None
        self._flush_outputs()

    def _decision_gate(self, period: int, window, decision: StepDecision) -> StepDecision | None:
        """Intervention hook: publish the decision, hold the loop open, then
        apply any accepted intervention to the chunk about to run."""
        with self._cond:
            self._at_decision = True
            self._gate_open = False
            self._decision_view = self._decision_dict(period, decision)
            if self._episode_view is not None:
                self._episode_view["period"] = period
        self._publish()
        deadline = time.monotonic() + self.cfg.period_seconds
        with self._cond:
            while not self._abort and not self._stop:
                if self.cfg.step_gate:
                    if self._gate_open:
                        break
                elif not self._paused and time.monotonic() >= deadline:
                    break
                self._cond.wait(0.02)
            self._at_decision = False
            ev = self._pending
            self._pending = None
            aborted = self._abort
        if aborted or self._stop:
            raise _EpisodeAborted()
        if ev is None:
            self._append_history(period, decision, intervened=False)
            return None
        self.events.append(
            InterventionEvent(
                period=period,
                shown_m_i=decision.m_i,
                failure=ev.failure,
                semantic=ev.semantic,
                instruction_id=ev.instruction_id if ev.failure else decision.m_i,
                timestamp=ev.timestamp,
                episode_index=self._episode_index,
            )
        )
        if not ev.failure:
            self._append_history(period, decision, intervened=False)
            return None
        replacement = StepDecision(
            m_i=decision.m_i,
            failure_flag=True,
            semantic_info=ev.semantic,
            m_a=ev.instruction_id,
            m_d=ev.instruction_id,
        )
        self._append_history(period, replacement, intervened=True)
        return replacement

    def _append_history(self, period: int, decision: StepDecision, intervened: bool) -> None:
        with self._cond:
            self._history.append(
                {
                    "period": period,
                    "m_i": decision.m_i,
                    "m_d": decision.m_d,
                    "m_d_text": self.vocab.text_of(decision.m_d),
                    "failure": decision.failure_flag,
                    "intervened": intervened,
                }
            )

    def _decision_dict(self, period: int, decision: StepDecision) -> dict:
        return {
            "period": period,
            "m_i": decision.m_i,
            "m_i_text": self.vocab.text_of(decision.m_i),
            "failure": decision.failure_flag,
            "semantic": decision.semantic_info,
            "m_a": decision.m_a,
            "m_d": decision.m_d,
            "m_d_text": self.vocab.text_of(decision.m_d),
        }

    def _publish(self) -> None:
        with self._cond:
            env = self._live_env
            if env is not None and env.state is not None:
                self._env_view = state_snapshot(env.state, self.task, self.sim_cfg)
                if self._episode_view is not None and not self._episode_view.get("done"):
                    self._episode_view["total_steps"] = env.steps
        self._broadcast()

    def _flush_outputs(self) -> None:
        if self.cfg.episodes_out:
            save_episodes(self.episodes, self.cfg.episodes_out)
        if self.cfg.corrections_out:
            save_corrections(self.export_corrections(), self.cfg.corrections_out)

    # -- handler-facing API -----------------------------------------------

    def snapshot(self) -> dict:
        with self._cond:
            status = "paused" if self._status == "running" and self._effectively_paused() else self._status
            return {
                "session": {
                    "id": self.cfg.session_id,
                    "status": status,
                    "gated": self.cfg.step_gate,
                    "task": self.task.name,
                    "vocab_id": self.vocab.id,
                    "k_budget": self.cfg.k_budget,
                    "period_seconds": self.cfg.period_seconds,
                },
                "at_decision": self._at_decision,
                "episode": dict(self._episode_view) if self._episode_view else None,
                "env": dict(self._env_view) if self._env_view else None,
                "decision": dict(self._decision_view) if self._decision_view else None,
                "history": [dict(h) for h in self._history],
                "events": [self._event_dict(e) for e in self.events],
            }

    def _effectively_paused(self) -> bool:
        if self.cfg.step_gate:
            return self._at_decision and not self._gate_open
        return self._paused

    @staticmethod
    def _event_dict(ev: InterventionEvent) -> dict:
        d = asdict(ev)
        d["timestamp"] = round(ev.timestamp, 3)
        return d

    def control(self, command: str) -> dict:
        if command == "start":
            with self._cond:
                if self._status == "running":
                    raise InterventionError("an episode is already running", 409)
                self._status = "running"
            self._start_requests.put(1)
        elif command == "pause":
            with self._cond:
                self._paused = True
                self._cond.notify_all()
        elif command == "resume":
            with self._cond:
                self._paused = False
                if self.cfg.step_gate and self._at_decision:
                    self._gate_open = True
                self._cond.notify_all()
        elif command == "reset":
            with self._cond:
                if self._status == "running":
                    self._abort = True
                    self._cond.notify_all()
                else:
                    self._status = "idle"
                    self._decision_view = None
                    self._episode_view = None
                    self._env_view = None
                    self._history = []
            self._broadcast()
        else:
            raise InterventionError(f"unknown command {command!r}", 400)
        return {"status": self.status()}

    def status(self) -> str:
        with self._cond:
            if self._status == "running" and self._effectively_paused():
                return "paused"
            return self._status

    def intervene(self, failure: bool, semantic: str, instruction_id: int | None) -> dict:
        """Validate and queue an intervention.

        Gated mode requires the loop to be paused at a decision point; paced
        mode accepts any time an episode is live, applying the event to the
        next chunk. Only one intervention may wait at a time.
        """
        if failure:
            if instruction_id is None:
                raise InterventionError("failure intervention requires instruction_id", 400)
            if not (0 <= int(instruction_id) < len(self.vocab)):
                raise InterventionError(f"instruction_id {instruction_id} not in vocabulary", 400)
        with self._cond:
            if self._status != "running":
                raise InterventionError("no live episode", 409)
            if self.cfg.step_gate and not (self._at_decision and not self._gate_open):
                raise InterventionError("not paused at a decision point", 409)
            if self._pending is not None:
                raise InterventionError("an intervention is already waiting", 409)
            self._pending = _PendingIntervention(
                failure=bool(failure),
                semantic=str(semantic),
                instruction_id=None if instruction_id is None else int(instruction_id),
                timestamp=time.time(),
            )
            open_period = (
                self._decision_view["period"] if self._at_decision and self._decision_view else None
            )
            chosen = self._pending.instruction_id
            self._cond.notify_all()
        return {"accepted": True, "period": open_period, "instruction_id": chosen}

    def export_corrections(self) -> list[CorrectionRecord]:
        return export_corrections(self.events, self.task.name, self.cfg.session_id)

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=256)
        with self._cond:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._cond:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _broadcast(self) -> None:
        snap = self.snapshot()
        with self._cond:
            subs = list(self._subscribers)
        for q in subs:
            try:
                q.put_nowait(snap)
            except queue.Full:
                pass

    def wait_for(self, predicate, timeout: float = 5.0) -> bool:
        """Poll the snapshot until predicate(snapshot) is true; test helper."""
        end = time.monotonic() + timeout
        while time.monotonic() < end:
            if predicate(self.snapshot()):
                return True
            time.sleep(0.01)
        return False

    def shutdown(self) -> None:
        with self._cond:
            self._stop = True
            self._abort = True
            self._cond.notify_all()
        self._thread.join(timeout=2.0)


class SessionManager:
    """Holds one session by default; multi mode creates per-id sessions with
    their own env instances on first use."""

    def __init__(self, cfg: ServeConfig, multi: bool = False):
        self.cfg = cfg
        self.multi = multi
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {cfg.session_id: Session(cfg)}

    @property
    def default(self) -> Session:
        return self._sessions[self.cfg.session_id]

    def get(self, session_id: str | None) -> Session:
        sid = session_id or self.cfg.session_id
        with self._lock:
            if sid in self._sessions:
                return self._sessions[sid]
            if not self.multi:
                raise InterventionError(f"unknown session {sid!r}", 404)
            cfg = ServeConfig(**{**asdict(self.cfg), "session_id": sid})
            self._sessions[sid] = Session(cfg)
            return self._sessions[sid]

    def shutdown(self) -> None:
        with self._lock:
            sessions = list(self._sessions.values())
        for s in sessions:
            s.shutdown()
            s._flush_outputs()


def export_corrections(
    events: list[InterventionEvent], task_name: str, session_id: str = "default"
) -> list[CorrectionRecord]:
    """One correction record per intervention event, deterministically ordered."""
    out = []
    for ev in sorted(events, key=lambda e: (e.episode_index, e.period)):
        out.append(
            CorrectionRecord(
                source=CorrectionSource.ONLINE_INTERVENTION,
                traj_id=f"session-{session_id}-ep{ev.episode_index}",
                period=ev.period,
                m_i=ev.shown_m_i,
                failure_flag=ev.failure,
                semantic_info=ev.semantic,
                m_a=ev.instruction_id if ev.failure else None,
                task=task_name,
            )
        )
    for rec in out:
        rec.check()
    return out


def _vocab_dict(vocab: Vocabulary) -> dict:
    return {
        "id": vocab.id,
        "mode": vocab.mode,
        "entries": [
            {
                "id": e.instr_id,
                "text": e.text,
                "directions": [[a, s] for a, s in e.directions],
                "gripper": e.gripper.value if e.gripper else None,
            }
            for e in vocab.entries
        ],
    }


def build_app(target):
    """FastAPI app over a Session or SessionManager; static UI mounted last
    so /api routes win. Sessions are addressed by the optional ?session=
    query parameter, defaulting to the configured one."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, StreamingResponse

    manager = target if isinstance(target, SessionManager) else None
    single = target if isinstance(target, Session) else None
    if manager is None and single is None:
        raise TypeError("build_app expects a Session or SessionManager")

    def resolve(session_id: str | None) -> Session:
        if manager is not None:
            return manager.get(session_id)
        if session_id not in (None, single.cfg.session_id):
            raise InterventionError(f"unknown session {session_id!r}", 404)
        return single

    def error(exc: InterventionError):
        return JSONResponse({"error": str(exc)}, status_code=exc.http_status)

    app = FastAPI(title="motionloop intervention service", docs_url=None, redoc_url=None)
    app.state.sessions = target

    @app.get("/api/state")
    def get_state(session: str | None = None):
        try:
            return resolve(session).snapshot()
        except InterventionError as exc:
            return error(exc)

    @app.get("/api/vocab")
    def get_vocab(session: str | None = None):
        try:
            return _vocab_dict(resolve(session).vocab)
        except InterventionError as exc:
            return error(exc)

    @app.post("/api/control")
    async def post_control(request: Request):
        body = await request.json()
        command = body.get("command")
        if not isinstance(command, str):
            return JSONResponse({"error": "missing command"}, status_code=400)
        try:
            return resolve(request.query_params.get("session")).control(command)
        except InterventionError as exc:
            return error(exc)

    @app.post("/api/intervention")
    async def post_intervention(request: Request):
        body = await request.json()
        if "failure" not in body:
            return JSONResponse({"error": "missing failure verdict"}, status_code=400)
        iid = body.get("instruction_id")
        if iid is not None and not isinstance(iid, int):
            return JSONResponse({"error": "instruction_id must be an integer"}, status_code=400)
        try:
            sess = resolve(request.query_params.get("session"))
            return sess.intervene(
                failure=bool(body["failure"]),
                semantic=str(body.get("semantic", "")),
                instruction_id=iid,
            )
        except InterventionError as exc:
            return error(exc)

    @app.get("/api/stream")
    def get_stream(session: str | None = None):
        try:
            sess = resolve(session)
        except InterventionError as exc:
            return error(exc)

        def gen():
            q = sess.subscribe()
            try:
                yield _sse_event(sess.snapshot())
                while True:
                    try:
                        snap = q.get(timeout=15.0)
                        yield _sse_event(snap)
                    except queue.Empty:
                        yield ": keepalive\n\n"
            finally:
                sess.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    base_cfg = manager.cfg if manager is not None else single.cfg
    static_dir = base_cfg.static_dir
    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return JSONResponse(
                {
                    "service": "motionloop",
                    "endpoints": [
                        "/api/state",
                        "/api/vocab",
                        "/api/control",
                        "/api/intervention",
                        "/api/stream",
                    ],
                }
            )

    return app


def _sse_event(snapshot: dict) -> str:
    return f"event: state\ndata: {json.dumps(snapshot, separators=(',', ':'))}\n\n"


def serve_intervention(cfg: ServeConfig, multi_session: bool = False) -> None:
    """Run the service until interrupted; outputs flush after every episode."""
    import uvicorn

    manager = SessionManager(cfg, multi=multi_session)
    app = build_app(manager)
    try:
        uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    finally:
        manager.shutdown()
