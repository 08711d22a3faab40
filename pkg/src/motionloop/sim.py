"""Kinematic tabletop world with tasks, fault injection, and scripted oracles.

A point gripper moves inside a 40x40x30 cm workspace in 2 cm steps. There
are no dynamics: closing within the grasp radius attaches the nearest
graspable object, which then tracks the gripper exactly until released or
slipped. The module also provides analytic stand-ins for the learned
components: an oracle instruction predictor, a fault-injecting wrapper, an
oracle corrector, and instruction-following / straight-line policies used
to close the loop in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .annotate import (
    AggregatedAction,
    AnnotationConfig,
    GripperState,
    Vocabulary,
    compose_instruction,
    dominant_directions,
)
from .trajdata import (
    DEFAULT_MAX_STEP_M,
    DEFAULT_WORKSPACE,
    Action,
    GripperCmd,
    Observation,
    Trajectory,
    Source,
)

__all__ = [
    "OPEN_WIDTH",
    "CLOSED_WIDTH",
    "HOLDING_WIDTH",
    "Phase",
    "SimConfig",
    "ObjectInit",
    "TaskSpec",
    "FaultConfig",
    "EnvState",
    "TabletopEnv",
    "make_reach_task",
    "make_pickplace_task",
    "make_stacktwo_task",
    "make_task",
    "env_reset",
    "env_step",
    "observe",
    "task_success",
    "infer_phase",
    "oracle_instruction",
    "OraclePredictor",
    "FaultyPredictor",
    "OracleCorrector",
    "InstructionFollowPolicy",
    "StraightLinePolicy",
    "episode_seed",
    "state_snapshot",
    "make_instruction_dataset",
]

OPEN_WIDTH = 1.0
CLOSED_WIDTH = 0.0
HOLDING_WIDTH = 0.3

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class Phase(Enum):
    APPROACH = "approach"
    GRASP = "grasp"
    TRANSPORT = "transport"
    RELEASE = "release"


@dataclass(frozen=True)
class SimConfig:
    workspace: tuple[tuple[float, float, float], tuple[float, float, float]] = DEFAULT_WORKSPACE
    max_step_m: float = DEFAULT_MAX_STEP_M
    grasp_radius: float = 0.015
    home: tuple[float, float, float] = (0.0, 0.0, 0.15)
    retreat_dz: float = 0.05  # upward retreat target after releasing


@dataclass(frozen=True)
class ObjectInit:
    """Initial pose: a fixed point, or uniform inside an axis-aligned box."""

    low: tuple[float, float, float]
    high: tuple[float, float, float]

    @staticmethod
    def point(p: Sequence[float]) -> "ObjectInit":
        t = (float(p[0]), float(p[1]), float(p[2]))
        return ObjectInit(low=t, high=t)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.low, dtype=np.float64)
        hi = np.asarray(self.high, dtype=np.float64)
        return np.where(lo == hi, lo, rng.uniform(lo, hi))


@dataclass(frozen=True)
class TaskSpec:
    name: str  # Reach | PickPlace | StackTwo
    objects: dict[str, ObjectInit]
    graspable: tuple[str, ...]
    primary_object: str  # object (or marker) the task is about
    delta_succ: float
    max_steps: int
    stack_dz: float = 0.03

    def validate(self, cfg: SimConfig) -> None:
        if self.delta_succ <= 0:
            raise ValueError("delta_succ must be > 0")
        lo, hi = cfg.workspace
        for name, init in self.objects.items():
            for bound in (init.low, init.high):
                for a in range(3):
                    if not (lo[a] <= bound[a] <= hi[a]):
                        raise ValueError(f"object {name!r} init outside workspace")


def make_reach_task(
    delta_succ: float = 0.02,
    max_steps: int = 60,
    target: ObjectInit | None = None,
) -> TaskSpec:
    return TaskSpec(
        name="Reach",
        objects={
            "target": target or ObjectInit(low=(-0.15, -0.15, 0.05), high=(0.15, 0.15, 0.25))
        },
        graspable=(),
        primary_object="target",
        delta_succ=delta_succ,
        max_steps=max_steps,
    )


def make_pickplace_task(
    delta_succ: float = 0.025,
    max_steps: int = 140,
    cube: ObjectInit | None = None,
    goal: ObjectInit | None = None,
) -> TaskSpec:
    return TaskSpec(
        name="PickPlace",
        objects={
            "cube": cube or ObjectInit(low=(-0.15, -0.10, 0.02), high=(-0.05, 0.10, 0.02)),
            "goal": goal or ObjectInit.point((0.12, 0.0, 0.02)),
        },
        graspable=("cube",),
        primary_object="cube",
        delta_succ=delta_succ,
        max_steps=max_steps,
    )


def make_stacktwo_task(delta_succ: float = 0.02, max_steps: int = 140) -> TaskSpec:
    return TaskSpec(
        name="StackTwo",
        objects={
            "cube_a": ObjectInit(low=(-0.15, -0.10, 0.015), high=(-0.05, 0.10, 0.015)),
            "cube_b": ObjectInit(low=(0.05, -0.10, 0.015), high=(0.15, 0.10, 0.015)),
        },
        graspable=("cube_a", "cube_b"),
        primary_object="cube_a",
        delta_succ=delta_succ,
        max_steps=max_steps,
    )


def make_task(name: str, **kwargs) -> TaskSpec:
    factories = {
        "Reach": make_reach_task,
        "PickPlace": make_pickplace_task,
        "StackTwo": make_stacktwo_task,
    }
    if name not in factories:
        raise ValueError(f"unknown task {name!r}")
    return factories[name](**kwargs)


@dataclass(frozen=True)
class FaultConfig:
    sigma: float = 0.0  # per-component action noise, meters
    slip_prob: float = 0.0  # per-step detach probability while holding
    predictor_p: float = 0.0  # instruction corruption probability

    def validate(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        for p in (self.slip_prob, self.predictor_p):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass
class EnvState:
    gripper_pos: np.ndarray
    gripper_open: bool
    held: str | None
    objects: dict[str, np.ndarray]
    steps: int


def _goal_point(task: TaskSpec, objects: dict[str, np.ndarray]) -> np.ndarray:
    if task.name == "Reach":
        return objects["target"]
    if task.name == "PickPlace":
        return objects["goal"]
    return objects["cube_b"] + np.array([0.0, 0.0, task.stack_dz])


def task_success(task: TaskSpec, state: EnvState) -> bool:
    goal = _goal_point(task, state.objects)
    if task.name == "Reach":
        return bool(np.linalg.norm(state.gripper_pos - goal) <= task.delta_succ)
    obj = state.objects[task.primary_object]
    placed = bool(np.linalg.norm(obj - goal) <= task.delta_succ)
    return placed and state.held != task.primary_object


def observe(state: EnvState) -> Observation:
    if state.held is not None:
        width = HOLDING_WIDTH
    elif state.gripper_open:
        width = OPEN_WIDTH
    else:
        width = CLOSED_WIDTH
    return Observation(
        eef_pos=tuple(float(v) for v in state.gripper_pos),
        gripper_width=width,
        object_poses={
            name: tuple(float(v) for v in pos) for name, pos in sorted(state.objects.items())
        },
    )


def env_reset(
    task: TaskSpec, seed: int, cfg: SimConfig = SimConfig()
) -> tuple[EnvState, Observation]:
    task.validate(cfg)
    rng = np.random.default_rng(seed)
    objects = {name: task.objects[name].sample(rng) for name in sorted(task.objects)}
    state = EnvState(
        gripper_pos=np.asarray(cfg.home, dtype=np.float64),
        gripper_open=True,
        held=None,
        objects=objects,
        steps=0,
    )
    return state, observe(state)


def env_step(
    state: EnvState,
    action: Action,
    faults: FaultConfig,
    rng: np.random.Generator,
    task: TaskSpec,
    cfg: SimConfig = SimConfig(),
) -> tuple[EnvState, Observation, bool]:
    """Advance one step: gripper command first, then clamped motion.

    The command-first order lets a "with gripper closed" instruction grasp
    and start transporting within a single instruction period.
    """
    pos = state.gripper_pos.copy()
    objects = {k: v.copy() for k, v in state.objects.items()}
    gripper_open = state.gripper_open
    held = state.held

    if action.gripper_cmd is GripperCmd.CLOSE:
        gripper_open = False
        if held is None:
            best, best_d = None, cfg.grasp_radius
            for name in task.graspable:
                d = float(np.linalg.norm(objects[name] - pos))
                if d <= best_d:
                    best, best_d = name, d
            held = best
    elif action.gripper_cmd is GripperCmd.OPEN:
        gripper_open = True
        held = None

    dp = np.clip(np.asarray(action.delta_pos, dtype=np.float64), -1.0, 1.0)
    disp = dp * cfg.max_step_m
    if faults.sigma > 0.0:
        noise = rng.normal(0.0, faults.sigma, size=3)
        disp = disp + np.clip(noise, -4.0 * faults.sigma, 4.0 * faults.sigma)
    lo, hi = (np.asarray(b, dtype=np.float64) for b in cfg.workspace)
    pos = np.clip(pos + disp, lo, hi)
    if held is not None:
        objects[held] = pos.copy()

    if held is not None and faults.slip_prob > 0.0 and rng.random() < faults.slip_prob:
        held = None

    new_state = EnvState(
        gripper_pos=pos,
        gripper_open=gripper_open,
        held=held,
        objects=objects,
        steps=state.steps + 1,
    )
    return new_state, observe(new_state), task_success(task, new_state)


class TabletopEnv:
    """Stateful wrapper over the pure reset/step functions."""

    def __init__(
        self,
        task: TaskSpec,
        cfg: SimConfig = SimConfig(),
        faults: FaultConfig = FaultConfig(),
    ):
        faults.validate()
        self.task = task
        self.cfg = cfg
        self.faults = faults
        self.state: EnvState | None = None
        self._rng: np.random.Generator | None = None

    def reset(self, seed: int) -> Observation:
        self.state, obs = env_reset(self.task, seed, self.cfg)
        self._rng = np.random.default_rng(seed)
        return obs

    def step(self, action: Action) -> tuple[Observation, bool]:
        if self.state is None or self._rng is None:
            raise RuntimeError("env not reset")
        self.state, obs, success = env_step(
            self.state, action, self.faults, self._rng, self.task, self.cfg
        )
        return obs, success

    @property
    def steps(self) -> int:
        return 0 if self.state is None else self.state.steps


def episode_seed(base: int, index: int) -> int:
    """Counter-based per-episode seed."""
    return base ^ index


def infer_phase(
    obs: Observation, task: TaskSpec, cfg: SimConfig = SimConfig()
) -> tuple[Phase, np.ndarray, GripperState, str]:
    """Subgoal decomposition from the observation alone.

    Returns (phase, target point, wanted gripper state, focus object name).
    During grasp the target already points at the place goal so the
    grasp-phase instruction both closes the gripper and starts transport.
    """
    eef = np.asarray(obs.eef_pos, dtype=np.float64)
    objects = {k: np.asarray(v, dtype=np.float64) for k, v in obs.object_poses.items()}
    goal = _goal_point(task, objects)

    if task.name == "Reach":
        return Phase.APPROACH, goal, GripperState.OPEN, "target"

    primary = task.primary_object
    holding = obs.gripper_width == HOLDING_WIDTH
    if holding:
        held_name = None
        for name in task.graspable:
            if np.allclose(objects[name], eef, atol=1e-9):
                held_name = name
                break
        if held_name != primary:
            # wrong object in hand: put it down and retreat
            retreat = eef + np.array([0.0, 0.0, cfg.retreat_dz])
            return Phase.RELEASE, retreat, GripperState.OPEN, held_name or primary
        if np.linalg.norm(objects[primary] - goal) <= 0.8 * task.delta_succ:
            retreat = eef + np.array([0.0, 0.0, cfg.retreat_dz])
            return Phase.RELEASE, retreat, GripperState.OPEN, primary
        return Phase.TRANSPORT, goal, GripperState.CLOSED, primary
    if np.linalg.norm(objects[primary] - eef) <= cfg.grasp_radius:
        return Phase.GRASP, goal, GripperState.CLOSED, primary
    return Phase.APPROACH, objects[primary], GripperState.OPEN, primary


def oracle_instruction(
    obs: Observation,
    task: TaskSpec,
    vocab: Vocabulary,
    ann_cfg: AnnotationConfig,
    cfg: SimConfig = SimConfig(),
) -> int:
    """Instruction whose directions point at the current subgoal."""
    phase, target, grip, _ = infer_phase(obs, task, cfg)
    d = target - np.asarray(obs.eef_pos, dtype=np.float64)
    m = float(np.max(np.abs(d)))
    if m < 1e-12:
        return compose_instruction([], grip, vocab, ann_cfg)
    agg = AggregatedAction(tuple(d / m), grip, (0, 0))
    dirs = dominant_directions(agg, ann_cfg)
    return compose_instruction(dirs, grip, vocab, ann_cfg)


class OraclePredictor:
    """Scripted motion predictor that always names the subgoal direction."""

    def __init__(
        self,
        task: TaskSpec,
        vocab: Vocabulary,
        ann_cfg: AnnotationConfig,
        cfg: SimConfig = SimConfig(),
    ):
        self.task = task
        self.vocab = vocab
        self.ann_cfg = ann_cfg
        self.cfg = cfg

    def predict(self, obs_window: Sequence[Observation], task: object = None) -> int:
        return oracle_instruction(obs_window[-1], self.task, self.vocab, self.ann_cfg, self.cfg)


class FaultyPredictor:
    """Wraps a predictor; with probability p emits a different random id."""

    def __init__(self, base, p: float, vocab_size: int, rng: np.random.Generator):
        if not (0.0 <= p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        self.base = base
        self.p = p
        self.n = vocab_size
        self.rng = rng
        self.corrupted_calls = 0
        self.total_calls = 0

    def predict(self, obs_window: Sequence[Observation], task: object = None) -> int:
        iid = self.base.predict(obs_window, task)
        self.total_calls += 1
        if self.p > 0.0 and self.rng.random() < self.p:
            self.corrupted_calls += 1
            other = int(self.rng.integers(self.n - 1))
            return other + 1 if other >= iid else other
        return iid


_SEMANTIC_TEMPLATES = {
    Phase.APPROACH: "move gripper toward the {name}",
    Phase.GRASP: "close the gripper on the {name}",
    Phase.TRANSPORT: "carry the {name} to the goal",
    Phase.RELEASE: "open the gripper and retreat upward",
}


class OracleCorrector:
    """Assess/correct pair built on the same subgoal decomposition.

    assess flags a failure when the proposed instruction disagrees with
    the oracle one, or when the distance to the (phase-stable) subgoal grew
    by more than delta_fail across the observation window.
    """

    def __init__(
        self,
        task: TaskSpec,
        vocab: Vocabulary,
        ann_cfg: AnnotationConfig,
        cfg: SimConfig = SimConfig(),
        delta_fail: float = 0.05,
    ):
        if delta_fail <= 0:
            raise ValueError("delta_fail must be > 0")
        self.task = task
        self.vocab = vocab
        self.ann_cfg = ann_cfg
        self.cfg = cfg
        self.delta_fail = delta_fail
        self.assess_calls = 0
        self.correct_calls = 0

    def _semantic(self, obs: Observation) -> str:
        phase, _, _, name = infer_phase(obs, self.task, self.cfg)
        return _SEMANTIC_TEMPLATES[phase].format(name=name)

    def assess(self, obs_window: Sequence[Observation], m_i: int) -> tuple[bool, str]:
        self.assess_calls += 1
        last = obs_window[-1]
        oracle_id = oracle_instruction(last, self.task, self.vocab, self.ann_cfg, self.cfg)
        if m_i != oracle_id:
            return True, self._semantic(last)
        first = obs_window[0]
        ph_f, tgt_f, _, _ = infer_phase(first, self.task, self.cfg)
        ph_l, tgt_l, _, _ = infer_phase(last, self.task, self.cfg)
        if ph_f is ph_l:
            d_first = float(np.linalg.norm(np.asarray(first.eef_pos) - tgt_f))
            d_last = float(np.linalg.norm(np.asarray(last.eef_pos) - tgt_l))
            if d_last - d_first > self.delta_fail:
                return True, self._semantic(last)
        return False, ""

    def correct(self, obs_window: Sequence[Observation], semantic_info: str) -> int:
        self.correct_calls += 1
        return oracle_instruction(obs_window[-1], self.task, self.vocab, self.ann_cfg, self.cfg)


class InstructionFollowPolicy:
    """Scripted chunk policy that obeys the instruction literally.

    Signs and the gripper command come from the instruction; only the step
    magnitude uses task knowledge, decelerating so the gripper lands on the
    subgoal instead of oscillating around it. A wrong instruction therefore
    stalls or moves away from the subgoal.
    """

    def __init__(
        self,
        task: TaskSpec,
        vocab: Vocabulary,
        ann_cfg: AnnotationConfig,
        cfg: SimConfig = SimConfig(),
        C: int = 4,
    ):
        self.task = task
        self.vocab = vocab
        self.ann_cfg = ann_cfg
        self.cfg = cfg
        self.C = C

    def sample(
        self,
        obs_window: Sequence[Observation],
        instr_id: int,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        obs = obs_window[-1]
        entry = self.vocab.entries[instr_id]
        _, target, _, _ = infer_phase(obs, self.task, self.cfg)
        pos = np.asarray(obs.eef_pos, dtype=np.float64).copy()
        step = self.cfg.max_step_m
        keep_closed = obs.gripper_width <= 0.5
        if entry.gripper is GripperState.CLOSED:
            grip_logit = 1.0
        elif entry.gripper is GripperState.OPEN:
            grip_logit = -1.0
        else:
            grip_logit = 1.0 if keep_closed else -1.0

        rows = []
        for _ in range(self.C):
            dp = np.zeros(3)
            if entry.directions:
                for axis, sign in entry.directions:
                    i = _AXIS_INDEX[axis]
                    mag = min(abs(target[i] - pos[i]), step) / step
                    dp[i] = mag if sign == "+" else -mag
            else:
                # adjustment entry: crawl toward the subgoal
                dp = np.clip(target - pos, -0.25 * step, 0.25 * step) / step
            pos = pos + dp * step
            rows.append([dp[0], dp[1], dp[2], grip_logit])
        return np.asarray(rows, dtype=np.float64)


class StraightLinePolicy:
    """Moves straight at the task goal, ignoring instructions entirely."""

    def __init__(self, task: TaskSpec, cfg: SimConfig = SimConfig(), C: int = 4):
        self.task = task
        self.cfg = cfg
        self.C = C

    def sample(
        self,
        obs_window: Sequence[Observation],
        instr_id: int = 0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        obs = obs_window[-1]
        objects = {k: np.asarray(v, dtype=np.float64) for k, v in obs.object_poses.items()}
        target = _goal_point(self.task, objects)
        pos = np.asarray(obs.eef_pos, dtype=np.float64).copy()
        step = self.cfg.max_step_m
        rows = []
        for _ in range(self.C):
            d = target - pos
            dist = float(np.linalg.norm(d))
            dp = np.zeros(3) if dist < 1e-12 else (d / dist) * min(1.0, dist / step)
            pos = pos + dp * step
            rows.append([dp[0], dp[1], dp[2], -1.0])
        return np.asarray(rows, dtype=np.float64)


def state_snapshot(state: EnvState, task: TaskSpec, cfg: SimConfig = SimConfig()) -> dict:
    """JSON-ready snapshot consumed by the intervention service and UI."""
    return {
        "gripper": {
            "pos": [float(v) for v in state.gripper_pos],
            "open": bool(state.gripper_open),
            "held": state.held,
        },
        "objects": {k: [float(x) for x in v] for k, v in sorted(state.objects.items())},
        "step": int(state.steps),
        "success": task_success(task, state),
        "task": task.name,
        "workspace": [list(cfg.workspace[0]), list(cfg.workspace[1])],
    }


def make_instruction_dataset(
    n_windows: int,
    vocab: Vocabulary,
    ann_cfg: AnnotationConfig,
    seed: int,
    cfg: SimConfig = SimConfig(),
    windows_per_traj: int = 5,
    include_pairs: bool = False,
) -> list[Trajectory]:
    """Synthetic trajectories whose motion is driven by random instructions.

    Every window moves decisively along the instructed axis (sub-threshold
    noise on the others), so annotating a window recovers exactly the
    driving instruction. With ``include_pairs`` the pool also covers
    two-direction entries, both axes decisive. Used to train and probe
    instruction following.
    """
    rng = np.random.default_rng(seed)
    max_dirs = 2 if include_pairs else 1
    pool = [e.instr_id for e in vocab.entries if 1 <= len(e.directions) <= max_dirs and e.gripper]
    if not pool:
        raise ValueError("vocabulary has no direction entries")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in cfg.workspace)
    margin = 0.02
    trajs: list[Trajectory] = []
    made = 0
    t = 0
    while made < n_windows:
        eef = rng.uniform(lo + margin, hi - margin)
        # width shows the state BEFORE each step so gripper flips are only
        # announced by the instruction, never leaked by the observation
        width = OPEN_WIDTH
        steps = []
        for _ in range(min(windows_per_traj, n_windows - made)):
            iid = pool[int(rng.integers(len(pool)))]
            entry = vocab.entries[iid]
            cmd = GripperCmd.CLOSE if entry.gripper is GripperState.CLOSED else GripperCmd.OPEN
            for _ in range(ann_cfg.window):
                dp = rng.uniform(-0.15, 0.15, size=3)
                for axis, sign in entry.directions:
                    s = 1.0 if sign == "+" else -1.0
                    dp[_AXIS_INDEX[axis]] = s * rng.uniform(0.55, 0.95)
                obs = Observation(
                    eef_pos=tuple(float(v) for v in eef),
                    gripper_width=width,
                    object_poses={},
                )
                steps.append((obs, Action(delta_pos=tuple(float(v) for v in dp), gripper_cmd=cmd)))
                eef = np.clip(eef + dp * cfg.max_step_m, lo, hi)
                width = OPEN_WIDTH if cmd is GripperCmd.OPEN else CLOSED_WIDTH
            made += 1
        trajs.append(
            Trajectory(id=f"instr-{seed}-{t}", task="InstructionFollow", steps=steps, source=Source.EXPERT)
        )
        t += 1
    return trajs
