"""Correction datasets, the learned instruction predictor, and lifelong loops.

Successful self-reflection rollouts (with corrected instruction labels)
are mixed with a sample of expert demonstrations to retrain a small
linear-softmax predictor, and a fixed seeded harness evaluates instruction
accuracy and closed-loop success so improvement across iterations is
measurable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _binio
from .annotate import AnnotationConfig, Vocabulary, annotate_trajectory
from .control import ChunkPolicy, EpisodeRecord, MotionCorrector, run_episode
from .sim import SimConfig, TabletopEnv, TaskSpec, episode_seed, oracle_instruction
from .trajdata import Observation, Trajectory, quantize

__all__ = [
    "CorrectionSource",
    "CorrectionRecord",
    "LearnedPredictor",
    "PredictorConfig",
    "EvalReport",
    "EmptyDataset",
    "DegenerateData",
    "featurize",
    "build_correction_dataset",
    "train_predictor",
    "mix_datasets",
    "pairs_from_trajectories",
    "pairs_from_episodes",
    "LifelongConfig",
    "lifelong_iteration",
    "evaluate",
    "save_corrections",
    "load_corrections",
    "save_predictor",
    "load_predictor",
    "report_to_dict",
    "save_eval_table",
    "save_lifelong_curve",
]

FEATURE_DIM = 20
_POS_SCALE = 5.0


class EmptyDataset(Exception):
    pass


class DegenerateData(Exception):
    pass


class CorrectionSource(Enum):
    ONLINE_INTERVENTION = "online_intervention"
    OFFLINE_ANNOTATION = "offline_annotation"
    EXPERT_DEMO = "expert_demo"


@dataclass(frozen=True)
class CorrectionRecord:
    source: CorrectionSource
    traj_id: str
    period: int
    m_i: int
    failure_flag: bool
    semantic_info: str
    m_a: int | None
    task: str

    def check(self) -> None:
        if self.failure_flag != (self.m_a is not None):
            raise ValueError("m_a must be present iff failure_flag")


def featurize(obs: Observation, task: TaskSpec) -> np.ndarray:
    """Hand-crafted feature vector: gripper pos, relative vectors, gripper
    state, and holding-gated copies of the deltas.

    The gated copies let a linear model switch which delta drives the
    instruction depending on whether an object is held.
    """
    from .sim import HOLDING_WIDTH, _goal_point

    eef = np.asarray(obs.eef_pos, dtype=np.float64)
    objects = {k: np.asarray(v, dtype=np.float64) for k, v in obs.object_poses.items()}
    primary = objects[task.primary_object]
    goal = _goal_point(task, objects)
    holding = 1.0 if obs.gripper_width == HOLDING_WIDTH else 0.0
    to_primary = (primary - eef) * _POS_SCALE
    to_goal = (goal - eef) * _POS_SCALE
    feats = np.concatenate(
        [
            eef * _POS_SCALE,
            to_primary,
            (goal - primary) * _POS_SCALE,
            to_goal,
            holding * to_goal,
            (1.0 - holding) * to_primary,
            [obs.gripper_width, holding],
        ]
    )
    return feats


def build_correction_dataset(
    records: list[CorrectionRecord],
    cap_ratio: float | None = None,
    seed: int = 0,
) -> tuple[list[CorrectionRecord], dict]:
    """Optionally undersample over-represented (failure, m_a) classes.

    With cap_ratio set, every class is cut down to at most
    cap_ratio * (smallest class size); classes are never dropped and never
    grown. The manifest reports per-source and per-class counts.
    """
    if not records:
        raise EmptyDataset("no correction records")
    for rec in records:
        rec.check()
    out = list(records)
    if cap_ratio is not None:
        if cap_ratio < 1.0:
            raise ValueError("cap_ratio must be >= 1")
        classes: dict[tuple[bool, int | None], list[int]] = {}
        for idx, rec in enumerate(records):
            classes.setdefault((rec.failure_flag, rec.m_a), []).append(idx)
        cap = max(1, int(cap_ratio * min(len(v) for v in classes.values())))
        rng = np.random.default_rng(seed)
        keep: list[int] = []
        for key in sorted(classes, key=str):
            idxs = classes[key]
            if len(idxs) > cap:
                chosen = rng.choice(len(idxs), size=cap, replace=False)
                idxs = [idxs[i] for i in sorted(chosen)]
            keep.extend(idxs)
        out = [records[i] for i in sorted(keep)]
    per_source: dict[str, int] = {}
    per_class: dict[str, int] = {}
    for rec in out:
        per_source[rec.source.value] = per_source.get(rec.source.value, 0) + 1
        key = f"{rec.failure_flag}:{rec.m_a}"
        per_class[key] = per_class.get(key, 0) + 1
    manifest = {"total": len(out), "per_source": per_source, "per_class": per_class}
    return out, manifest


@dataclass
class LearnedPredictor:
    """Linear-softmax instruction classifier over hand-crafted features."""

    task_name: str
    n_classes: int
    W: np.ndarray  # n_classes x FEATURE_DIM
    b: np.ndarray
    seed: int
    train_accuracy: float = 0.0
    _task: TaskSpec | None = None

    def bind_task(self, task: TaskSpec) -> "LearnedPredictor":
        self._task = task
        return self

    def probs(self, feats: np.ndarray) -> np.ndarray:
        logits = self.W @ feats + self.b
        logits = logits - logits.max()
        e = np.exp(logits)
        return e / e.sum()

    def predict(self, obs_window, task: object = None) -> int:
        if self._task is None:
            raise RuntimeError("predictor not bound to a task")
        feats = featurize(obs_window[-1], self._task)
        return int(np.argmax(self.probs(feats)))


@dataclass
class PredictorConfig:
    # full-batch GD on a tiny linear model: plenty of epochs are cheap and
    # larger mixed datasets need them to converge
    epochs: int = 3000
    lr: float = 0.5
    l2: float = 1e-4
    seed: int = 0


def train_predictor(
    pairs: list[tuple[np.ndarray, int]],
    n_classes: int,
    task: TaskSpec,
    cfg: PredictorConfig = PredictorConfig(),
) -> LearnedPredictor:
    """Full-batch multinomial logistic regression, deterministic per seed."""
    if not pairs:
        raise EmptyDataset("no training pairs")
    labels = {iid for _, iid in pairs}
    if len(labels) < 2:
        raise DegenerateData("need at least 2 distinct instruction classes")
    X = np.stack([f for f, _ in pairs])
    y = np.array([iid for _, iid in pairs], dtype=np.int64)
    n = len(y)
    W = np.zeros((n_classes, FEATURE_DIM))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(cfg.epochs):
        logits = X @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)
        delta = (probs - onehot) / n
        W -= cfg.lr * (delta.T @ X + cfg.l2 * W)
        b -= cfg.lr * delta.sum(axis=0)
    preds = np.argmax(X @ W.T + b, axis=1)
    acc = float((preds == y).mean())
    return LearnedPredictor(
        task_name=task.name, n_classes=n_classes, W=W, b=b, seed=cfg.seed, train_accuracy=acc
    ).bind_task(task)


def mix_datasets(
    refined: list[Trajectory],
    expert: list[Trajectory],
    expert_count: int,
    seed: int = 0,
) -> list[Trajectory]:
    """Successful refined trajectories plus a seeded expert sample."""
    if expert_count > len(expert):
        raise ValueError(f"expert_count {expert_count} exceeds pool of {len(expert)}")
    kept = [t for t in refined if t.success]
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(expert), size=expert_count, replace=False)) if expert_count else []
    return kept + [expert[i] for i in idx]


def pairs_from_trajectories(
    trajs: list[Trajectory],
    vocab: Vocabulary,
    ann_cfg: AnnotationConfig,
    task: TaskSpec,
) -> list[tuple[np.ndarray, int]]:
    """(features at window start, annotated instruction) pairs."""
    pairs = []
    for traj in trajs:
        for (start, _), iid in annotate_trajectory(traj, ann_cfg, vocab):
            pairs.append((featurize(traj.steps[start][0], task), iid))
    return pairs


def pairs_from_episodes(
    records: list[EpisodeRecord], task: TaskSpec
) -> list[tuple[np.ndarray, int]]:
    """(features at period start, decided instruction m_d) pairs."""
    pairs = []
    for rec in records:
        step = 0
        for p in rec.periods:
            obs = rec.trajectory.steps[step][0]
            pairs.append((featurize(obs, task), p.decision.m_d))
            step += p.steps_executed
    return pairs


def episodes_to_corrections(
    records: list[EpisodeRecord], source: CorrectionSource
) -> list[CorrectionRecord]:
    out = []
    for rec in records:
        for p in rec.periods:
            d = p.decision
            out.append(
                CorrectionRecord(
                    source=source,
                    traj_id=rec.trajectory.id,
                    period=p.index,
                    m_i=d.m_i,
                    failure_flag=d.failure_flag,
                    semantic_info=d.semantic_info,
                    m_a=d.m_a,
                    task=rec.task,
                )
            )
    return out


@dataclass
class EvalReport:
    per_task: dict[str, float]
    mean_rate: float
    trials: int
    fingerprint: str
    extras: dict[str, float] = field(default_factory=dict)


def _fingerprint(payload: dict) -> str:
    raw = json.dumps(payload, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def evaluate(
    tasks: list[TaskSpec],
    component_factory,
    trials: int,
    seed: int,
    K_budget: int | dict[str, int],
    sim_cfg: SimConfig = SimConfig(),
    faults=None,
    H: int = 5,
) -> EvalReport:
    """Seeded closed-loop success rates per task.

    ``component_factory(task)`` returns (mpm, mcm_or_None, policy); mcm=None
    is the correction-off ablation arm. Episode i of task t uses seed
    ``seed xor (t * trials + i)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    from .sim import FaultConfig

    faults = faults or FaultConfig()
    per_task: dict[str, float] = {}
    for t_idx, task in enumerate(tasks):
        budget = K_budget[task.name] if isinstance(K_budget, dict) else K_budget
        mpm, mcm, policy = component_factory(task)
        successes = 0
        for i in range(trials):
            env = TabletopEnv(task, sim_cfg, faults)
            ep_seed = episode_seed(seed, t_idx * trials + i)
            rec = run_episode(env, mpm, mcm, policy, budget, ep_seed, H=H)
            successes += int(rec.success)
        per_task[task.name] = successes / trials
    mean_rate = float(np.mean(list(per_task.values())))
    fp = _fingerprint(
        {
            "tasks": [t.name for t in tasks],
            "trials": trials,
            "seed": seed,
            "budget": K_budget if isinstance(K_budget, int) else dict(sorted(K_budget.items())),
        }
    )
    return EvalReport(per_task=per_task, mean_rate=mean_rate, trials=trials, fingerprint=fp)


@dataclass
class LifelongConfig:
    vocab: Vocabulary
    ann_cfg: AnnotationConfig
    expert_trajs: list[Trajectory]
    expert_count: int = 20
    K_budget: int = 12
    seed: int = 0
    eval_seed: int = 10_000
    eval_trials: int = 30
    predictor_cfg: PredictorConfig = field(default_factory=PredictorConfig)
    sim_cfg: SimConfig = field(default_factory=SimConfig)
    H: int = 5


def _oracle_eval_pairs(
    task: TaskSpec, cfg: LifelongConfig, policy: ChunkPolicy, episodes: int
) -> list[tuple[np.ndarray, int]]:
    """Fixed eval set: states visited by oracle episodes, oracle labels."""
    from .sim import OraclePredictor

    mpm = OraclePredictor(task, cfg.vocab, cfg.ann_cfg, cfg.sim_cfg)
    pairs = []
    for i in range(episodes):
        env = TabletopEnv(task, cfg.sim_cfg)
        rec = run_episode(env, mpm, None, policy, cfg.K_budget, episode_seed(cfg.eval_seed, i), H=cfg.H)
        step = 0
        for p in rec.periods:
            obs = rec.trajectory.steps[step][0]
            label = oracle_instruction(obs, task, cfg.vocab, cfg.ann_cfg, cfg.sim_cfg)
            pairs.append((featurize(obs, task), label))
            step += p.steps_executed
    return pairs


def _accuracy(predictor: LearnedPredictor, pairs: list[tuple[np.ndarray, int]]) -> float:
    if not pairs:
        return 0.0
    hits = sum(int(np.argmax(predictor.probs(f)) == iid) for f, iid in pairs)
    return hits / len(pairs)


def lifelong_iteration(
    env: TabletopEnv,
    predictor: LearnedPredictor,
    mcm: MotionCorrector,
    policy: ChunkPolicy,
    rollouts: int,
    cfg: LifelongConfig,
) -> tuple[LearnedPredictor, EvalReport]:
    """One self-reflection learning round.

    Runs rollouts with the current predictor under correction, keeps the
    successful episodes as refined supervision labeled by m_d, mixes in a
    seeded sample of expert demonstrations, retrains the predictor from
    scratch, and evaluates it without the corrector. With zero successful
    rollouts the incoming predictor is returned unchanged.
    """
    task = env.task
    records: list[EpisodeRecord] = []
    for i in range(rollouts):
        ep_env = TabletopEnv(task, env.cfg, env.faults)
        rec = run_episode(
            ep_env, predictor, mcm, policy, cfg.K_budget, episode_seed(cfg.seed, i), H=cfg.H
        )
        records.append(rec)
    successful = [r for r in records if r.success]

    new_predictor = predictor
    if successful:
        refined_pairs = pairs_from_episodes(successful, task)
        expert_sample = mix_datasets([], cfg.expert_trajs, cfg.expert_count, seed=cfg.seed)
        expert_pairs = pairs_from_trajectories(expert_sample, cfg.vocab, cfg.ann_cfg, task)
        new_predictor = train_predictor(
            refined_pairs + expert_pairs, len(cfg.vocab), task, cfg.predictor_cfg
        )

    eval_pairs = _oracle_eval_pairs(task, cfg, policy, episodes=cfg.eval_trials)
    expert_eval_pairs = pairs_from_trajectories(cfg.expert_trajs, cfg.vocab, cfg.ann_cfg, task)
    report = evaluate(
        [task],
        lambda t: (new_predictor, None, policy),
        trials=cfg.eval_trials,
        seed=cfg.eval_seed,
        K_budget=cfg.K_budget,
        sim_cfg=cfg.sim_cfg,
        H=cfg.H,
    )
    report.extras["instruction_accuracy"] = _accuracy(new_predictor, eval_pairs)
    report.extras["expert_accuracy"] = _accuracy(new_predictor, expert_eval_pairs)
    report.extras["rollouts"] = float(rollouts)
    report.extras["successful_rollouts"] = float(len(successful))
    return new_predictor, report


def save_corrections(records: list[CorrectionRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            row = {
                "source": rec.source.value,
                "traj": rec.traj_id,
                "period": rec.period,
                "m_i": rec.m_i,
                "failure": rec.failure_flag,
                "semantic": rec.semantic_info,
                "m_a": rec.m_a,
                "task": rec.task,
            }
            f.write(json.dumps(row, separators=(",", ":")))
            f.write("\n")


def load_corrections(path: str) -> list[CorrectionRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            rec = CorrectionRecord(
                source=CorrectionSource(obj["source"]),
                traj_id=str(obj["traj"]),
                period=int(obj["period"]),
                m_i=int(obj["m_i"]),
                failure_flag=bool(obj["failure"]),
                semantic_info=str(obj["semantic"]),
                m_a=None if obj["m_a"] is None else int(obj["m_a"]),
                task=str(obj["task"]),
            )
            rec.check()
            out.append(rec)
    return out


def save_predictor(pred: LearnedPredictor, path: str) -> None:
    meta = {
        "kind": "predictor",
        "task": pred.task_name,
        "n_classes": pred.n_classes,
        "seed": pred.seed,
        "train_accuracy": quantize(pred.train_accuracy),
    }
    _binio.save_arrays(path, meta, {"W": pred.W, "b": pred.b[None, :]})


def load_predictor(path: str) -> LearnedPredictor:
    meta, arrays = _binio.load_arrays(path)
    if meta.get("kind") != "predictor":
        raise _binio.BadContainer(f"{path!r} is not a predictor file")
    return LearnedPredictor(
        task_name=str(meta["task"]),
        n_classes=int(meta["n_classes"]),
        W=arrays["W"],
        b=arrays["b"][0],
        seed=int(meta["seed"]),
        train_accuracy=float(meta["train_accuracy"]),
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "per_task": {k: quantize(v) for k, v in sorted(report.per_task.items())},
        "mean": quantize(report.mean_rate),
        "trials": report.trials,
        "fingerprint": report.fingerprint,
        "extras": {k: quantize(v) for k, v in sorted(report.extras.items())},
    }


def save_eval_table(reports: dict[str, EvalReport], path: str) -> None:
    """CSV with methods as rows and tasks as columns, plus the mean."""
    tasks: list[str] = []
    for rep in reports.values():
        for name in rep.per_task:
            if name not in tasks:
                tasks.append(name)
    with open(path, "w", encoding="utf-8") as f:
        f.write("method," + ",".join(tasks) + ",mean\n")
        for method, rep in reports.items():
            cells = [f"{rep.per_task.get(t, float('nan')):.3f}" for t in tasks]
            f.write(f"{method}," + ",".join(cells) + f",{rep.mean_rate:.3f}\n")


def save_lifelong_curve(points: list[tuple[int, float, float]], path: str) -> None:
    """CSV of (cumulative rollouts, closed-loop success, instruction accuracy)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("rollouts,success_rate,instruction_accuracy\n")
        for rollouts, rate, acc in points:
            f.write(f"{rollouts},{rate:.6g},{acc:.6g}\n")
