"""Dual-process control loop: predict, assess, correct, then act.

Each instruction period the motion predictor proposes an instruction m_i,
the corrector assesses it, and on a flagged failure supplies the adjusted
instruction m_a; the decided instruction m_d conditions one sampled action
chunk. An optional intervention hook lets a human replace the decision
before execution. Episodes are recorded in full for replay and dataset
building.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
import requests

from .annotate import Vocabulary
from .codebook import MotionCodebook, TextEmbedder, resolve
from .policy import NoiseSchedule, PolicyModel, chunk_to_actions, pad_history, sample_chunk
from .trajdata import Observation, Source, Trajectory, quantize, traj_from_dict, traj_to_dict

log = logging.getLogger(__name__)

__all__ = [
    "MotionPredictor",
    "MotionCorrector",
    "ChunkPolicy",
    "StepDecision",
    "PeriodRecord",
    "EpisodeRecord",
    "StepAborted",
    "EnvFault",
    "Timeout",
    "ProtocolError",
    "UnresolvableInstruction",
    "dual_process_step",
    "run_episode",
    "verify_episode",
    "DiffusionChunkPolicy",
    "RemoteModelClient",
    "save_episodes",
    "load_episodes",
    "episode_to_dict",
    "episode_from_dict",
]


class MotionPredictor(Protocol):
    def predict(self, obs_window: Sequence[Observation], task: object = None) -> int: ...


class MotionCorrector(Protocol):
    def assess(self, obs_window: Sequence[Observation], m_i: int) -> tuple[bool, str]: ...

    def correct(self, obs_window: Sequence[Observation], semantic_info: str) -> int: ...


class ChunkPolicy(Protocol):
    C: int

    def sample(
        self,
        obs_window: Sequence[Observation],
        instr_id: int,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray: ...


class StepAborted(Exception):
    pass


class EnvFault(Exception):
    pass


class Timeout(Exception):
    pass


class ProtocolError(Exception):
    pass


class UnresolvableInstruction(Exception):
    pass


@dataclass(frozen=True)
class StepDecision:
    m_i: int
    failure_flag: bool
    semantic_info: str
    m_a: int | None
    m_d: int

    def check(self) -> None:
        if self.failure_flag:
            if self.m_a is None or self.m_d != self.m_a:
                raise ValueError("failure flagged but m_d != m_a")
        else:
            if self.m_a is not None or self.m_d != self.m_i:
                raise ValueError("no failure flagged but m_d != m_i")


@dataclass(frozen=True)
class PeriodRecord:
    index: int
    decision: StepDecision
    intervened: bool
    chunk: np.ndarray  # executed C x 4 chunk
    steps_executed: int


@dataclass
class EpisodeRecord:
    task: str
    seed: int
    trajectory: Trajectory
    periods: list[PeriodRecord]
    success: bool
    total_steps: int
    K_budget: int
    C: int


def dual_process_step(
    obs_window: Sequence[Observation],
    task: object,
    mpm: MotionPredictor,
    mcm: MotionCorrector | None,
) -> StepDecision:
    """One predict/assess/correct round; correct runs at most once."""
    try:
        m_i = int(mpm.predict(obs_window, task))
    except Exception as exc:
        raise StepAborted(f"predictor failed: {exc}") from exc
    if mcm is None:
        return StepDecision(m_i=m_i, failure_flag=False, semantic_info="", m_a=None, m_d=m_i)
    try:
        failure_flag, semantic_info = mcm.assess(obs_window, m_i)
    except Exception as exc:
        raise StepAborted(f"corrector assess failed: {exc}") from exc
    if failure_flag:
        try:
            m_a = int(mcm.correct(obs_window, semantic_info))
        except Exception as exc:
            raise StepAborted(f"corrector correct failed: {exc}") from exc
        return StepDecision(
            m_i=m_i, failure_flag=True, semantic_info=semantic_info, m_a=m_a, m_d=m_a
        )
    return StepDecision(m_i=m_i, failure_flag=False, semantic_info="", m_a=None, m_d=m_i)


InterventionHook = Callable[[int, Sequence[Observation], StepDecision], StepDecision | None]


def run_episode(
    env,
    mpm: MotionPredictor,
    mcm: MotionCorrector | None,
    policy: ChunkPolicy,
    K_budget: int,
    seed: int,
    intervention_hook: InterventionHook | None = None,
    H: int = 5,
) -> EpisodeRecord:
    """Closed-loop episode of at most K_budget instruction periods.

    The hook may return a replacement StepDecision (e.g. from a human); it
    must satisfy the same m_d/m_a invariant, which is re-checked here.
    Stops as soon as the environment reports success.
    """
    if K_budget < 1:
        raise ValueError("K_budget must be >= 1")
    obs = env.reset(seed)
    rng = np.random.default_rng([seed, 1])
    obs_hist: list[Observation] = [obs]
    steps: list[tuple[Observation, object]] = []
    periods: list[PeriodRecord] = []
    success = False

    for period in range(K_budget):
        window = pad_history(obs_hist, H)
        decision = dual_process_step(window, env.task.name, mpm, mcm)
        intervened = False
        if intervention_hook is not None:
            replacement = intervention_hook(period, window, decision)
            if replacement is not None and replacement != decision:
                replacement.check()
                decision = replacement
                intervened = True
        chunk = policy.sample(window, decision.m_d, rng)
        actions = chunk_to_actions(chunk)
        executed = 0
        for act in actions:
            before = obs_hist[-1]
            try:
                obs, success = env.step(act)
            except Exception as exc:
                raise EnvFault(f"env step failed: {exc}") from exc
            steps.append((before, act))
            obs_hist.append(obs)
            executed += 1
            if success:
                break
        periods.append(
            PeriodRecord(
                index=period,
                decision=decision,
                intervened=intervened,
                chunk=np.asarray(chunk, dtype=np.float64),
                steps_executed=executed,
            )
        )
        if success:
            break

    traj = Trajectory(
        id=f"ep-{env.task.name}-{seed}",
        task=env.task.name,
        steps=steps,
        source=Source.ROLLOUT,
        success=success,
    )
    return EpisodeRecord(
        task=env.task.name,
        seed=seed,
        trajectory=traj,
        periods=periods,
        success=success,
        total_steps=len(steps),
        K_budget=K_budget,
        C=policy.C,
    )


def verify_episode(rec: EpisodeRecord) -> list[str]:
    """Replay-style conformance check; returns a list of violation strings."""
    problems: list[str] = []
    if len(rec.periods) > rec.K_budget:
        problems.append(f"{len(rec.periods)} periods exceed budget {rec.K_budget}")
    if rec.total_steps > rec.K_budget * rec.C:
        problems.append(f"{rec.total_steps} env steps exceed K*C = {rec.K_budget * rec.C}")
    if rec.total_steps != len(rec.trajectory.steps):
        problems.append("trajectory length disagrees with step count")
    for p in rec.periods:
        d = p.decision
        try:
            d.check()
        except ValueError as exc:
            problems.append(f"period {p.index}: {exc}")
        if p.steps_executed > rec.C:
            problems.append(f"period {p.index}: executed {p.steps_executed} > C")
    if sum(p.steps_executed for p in rec.periods) != rec.total_steps:
        problems.append("per-period step counts do not sum to total")
    indices = [p.index for p in rec.periods]
    if indices != list(range(len(indices))):
        problems.append("period indices not consecutive from 0")
    return problems


class DiffusionChunkPolicy:
    """Adapter exposing the trained diffusion sampler as a chunk policy."""

    def __init__(self, model: PolicyModel, cb: MotionCodebook, sched: NoiseSchedule):
        self.model = model
        self.cb = cb
        self.sched = sched
        self.C = model.C

    def sample(
        self,
        obs_window: Sequence[Observation],
        instr_id: int,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(0)
        return sample_chunk(self.model, self.cb, list(obs_window), instr_id, self.sched, rng)


def _obs_summary(obs: Observation) -> dict:
    return {
        "eef": [quantize(v) for v in obs.eef_pos],
        "width": quantize(obs.gripper_width),
        "objects": {k: [quantize(x) for x in v] for k, v in sorted(obs.object_poses.items())},
    }


class RemoteModelClient:
    """Predictor + corrector backed by an external model service.

    Speaks a small JSON protocol; returned instruction text is resolved to
    a vocabulary id by embedding similarity, falling back to the
    adjustment instruction when resolution is impossible.
    """

    def __init__(
        self,
        endpoint_url: str,
        vocab: Vocabulary,
        cb: MotionCodebook,
        embedder: TextEmbedder,
        prompt_template: str | None = None,
        timeout: float = 10.0,
    ):
        self.endpoint_url = endpoint_url
        self.vocab = vocab
        self.cb = cb
        self.embedder = embedder
        self.prompt_template = prompt_template
        self.timeout = timeout

    def _post(self, payload: dict) -> dict:
        if self.prompt_template is not None:
            payload = dict(payload)
            payload["prompt"] = self.prompt_template.format(**payload)
        try:
            resp = requests.post(self.endpoint_url, json=payload, timeout=self.timeout)
        except requests.Timeout as exc:
            raise Timeout(f"no response from {self.endpoint_url}") from exc
        except requests.RequestException as exc:
            raise ProtocolError(f"request to {self.endpoint_url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(f"{self.endpoint_url} returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {self.endpoint_url}") from exc

    def _resolve_text(self, text: object) -> int:
        if isinstance(text, str) and text.strip():
            try:
                return resolve(self.cb, self.vocab, text.strip(), self.embedder)
            except ValueError:
                pass
        fallback = self.vocab.adjustment_id
        if fallback is None:
            raise UnresolvableInstruction(f"cannot resolve {text!r} and no adjustment entry")
        log.warning("unresolvable instruction %r, falling back to adjustment", text)
        return fallback

    def predict(self, obs_window: Sequence[Observation], task: object = None) -> int:
        resp = self._post(
            {"mode": "predict", "task": str(task), "obs": _obs_summary(obs_window[-1])}
        )
        return self._resolve_text(resp.get("text"))

    def assess(self, obs_window: Sequence[Observation], m_i: int) -> tuple[bool, str]:
        resp = self._post(
            {
                "mode": "assess",
                "task": "",
                "obs": _obs_summary(obs_window[-1]),
                "m_i": self.vocab.text_of(m_i),
            }
        )
        if "failure" not in resp:
            raise ProtocolError(f"assess response missing 'failure': {resp}")
        return bool(resp["failure"]), str(resp.get("semantic", ""))

    def correct(self, obs_window: Sequence[Observation], semantic_info: str) -> int:
        resp = self._post(
            {
                "mode": "correct",
                "task": "",
                "obs": _obs_summary(obs_window[-1]),
                "semantic": semantic_info,
            }
        )
        return self._resolve_text(resp.get("text"))


def _decision_to_dict(d: StepDecision) -> dict:
    return {
        "m_i": d.m_i,
        "failure": d.failure_flag,
        "semantic": d.semantic_info,
        "m_a": d.m_a,
        "m_d": d.m_d,
    }


def _decision_from_dict(obj: dict) -> StepDecision:
    return StepDecision(
        m_i=int(obj["m_i"]),
        failure_flag=bool(obj["failure"]),
        semantic_info=str(obj["semantic"]),
        m_a=None if obj["m_a"] is None else int(obj["m_a"]),
        m_d=int(obj["m_d"]),
    )


def episode_to_dict(rec: EpisodeRecord) -> dict:
    return {
        "task": rec.task,
        "seed": rec.seed,
        "success": rec.success,
        "k_budget": rec.K_budget,
        "c": rec.C,
        "total_steps": rec.total_steps,
        "periods": [
            {
                "index": p.index,
                "decision": _decision_to_dict(p.decision),
                "intervened": p.intervened,
                "chunk": [[quantize(v) for v in row] for row in p.chunk],
                "steps": p.steps_executed,
            }
            for p in rec.periods
        ],
        "traj": traj_to_dict(rec.trajectory),
    }


def episode_from_dict(obj: dict) -> EpisodeRecord:
    periods = [
        PeriodRecord(
            index=int(p["index"]),
            decision=_decision_from_dict(p["decision"]),
            intervened=bool(p["intervened"]),
            chunk=np.asarray(p["chunk"], dtype=np.float64),
            steps_executed=int(p["steps"]),
        )
        for p in obj["periods"]
    ]
    return EpisodeRecord(
        task=str(obj["task"]),
        seed=int(obj["seed"]),
        trajectory=traj_from_dict(obj["traj"]),
        periods=periods,
        success=bool(obj["success"]),
        total_steps=int(obj["total_steps"]),
        K_budget=int(obj["k_budget"]),
        C=int(obj["c"]),
    )


def save_episodes(records: list[EpisodeRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(episode_to_dict(rec), separators=(",", ":"), allow_nan=False))
            f.write("\n")


def load_episodes(path: str) -> list[EpisodeRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(episode_from_dict(json.loads(line)))
    return records
