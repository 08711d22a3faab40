"""Trajectory data model and deterministic JSONL persistence.

Values are plain frozen dataclasses; every numeric field is validated
against the declared invariants before anything touches disk. Floats are
serialized at 9 significant digits with a fixed key order so that saving
the same dataset twice produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import math

__all__ = [
    "GripperCmd",
    "Source",
    "Observation",
    "Action",
    "Trajectory",
    "DatasetManifest",
    "Violation",
    "MalformedRecord",
    "InvariantViolation",
    "IoFailure",
    "DEFAULT_WORKSPACE",
    "DEFAULT_MAX_STEP_M",
    "quantize",
    "validate_trajectory",
    "load_trajectories",
    "save_trajectories",
    "save_manifest",
    "load_manifest",
]

Vec3 = tuple[float, float, float]

# Axis-aligned workspace box, meters: 40 x 40 cm table, 30 cm of height.
DEFAULT_WORKSPACE: tuple[Vec3, Vec3] = ((-0.2, -0.2, 0.0), (0.2, 0.2, 0.3))

# Meters of gripper travel produced by a unit action component.
DEFAULT_MAX_STEP_M = 0.02


class GripperCmd(Enum):
    OPEN = "open"
    CLOSE = "close"
    HOLD = "hold"


class Source(Enum):
    EXPERT = "expert"
    ROLLOUT = "rollout"
    REFINED = "refined"


class MalformedRecord(Exception):
    """A JSONL line could not be parsed into a trajectory."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class InvariantViolation(Exception):
    """A trajectory violates a declared invariant."""

    def __init__(self, traj_id: str, field_name: str, detail: str = ""):
        self.traj_id = traj_id
        self.field_name = field_name
        msg = f"trajectory {traj_id!r}: invalid {field_name}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class IoFailure(Exception):
    """Filesystem-level failure while reading or writing a dataset."""


@dataclass(frozen=True)
class Observation:
    """One proprioceptive snapshot: gripper pose, opening, and object poses.

    ``task_phase_hint`` is oracle-only metadata used by scripted components;
    learned feature extractors never read it.
    """

    eef_pos: Vec3
    gripper_width: float
    object_poses: Mapping[str, Vec3] = field(default_factory=dict)
    task_phase_hint: int | None = None


@dataclass(frozen=True)
class Action:
    """Normalized controller command: per-axis delta in [-1, 1] plus gripper."""

    delta_pos: Vec3
    gripper_cmd: GripperCmd = GripperCmd.HOLD


@dataclass
class Trajectory:
    id: str
    task: str
    steps: list[tuple[Observation, Action]]
    source: Source = Source.ROLLOUT
    success: bool | None = None
    max_step_m: float = DEFAULT_MAX_STEP_M


@dataclass
class DatasetManifest:
    counts: dict[str, int]
    vocab: str = ""
    annotation_cfg_hash: str = ""

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class Violation:
    traj_id: str
    step_index: int | None
    field_name: str
    reason: str


def quantize(x: float) -> float:
    """Round a float through the 9-significant-digit wire representation."""
    return float(f"{x:.9g}")


def _qvec(v: Iterable[float]) -> list[float]:
    return [quantize(float(x)) for x in v]


def _obs_to_dict(obs: Observation) -> dict:
    d: dict = {
        "eef_pos": _qvec(obs.eef_pos),
        "gripper_width": quantize(obs.gripper_width),
        "objects": {k: _qvec(v) for k, v in sorted(obs.object_poses.items())},
    }
    if obs.task_phase_hint is not None:
        d["phase"] = int(obs.task_phase_hint)
    return d


def _obs_from_dict(d: dict) -> Observation:
    return Observation(
        eef_pos=tuple(float(x) for x in d["eef_pos"]),
        gripper_width=float(d["gripper_width"]),
        object_poses={k: tuple(float(x) for x in v) for k, v in d.get("objects", {}).items()},
        task_phase_hint=int(d["phase"]) if "phase" in d else None,
    )


def traj_to_dict(traj: Trajectory) -> dict:
    return {
        "id": traj.id,
        "task": traj.task,
        "source": traj.source.value,
        "success": traj.success,
        "max_step_m": quantize(traj.max_step_m),
        "steps": [
            {
                "obs": _obs_to_dict(obs),
                "act": {"dp": _qvec(act.delta_pos), "grip": act.gripper_cmd.value},
            }
            for obs, act in traj.steps
        ],
    }


def traj_from_dict(d: dict) -> Trajectory:
    steps = [
        (
            _obs_from_dict(s["obs"]),
            Action(
                delta_pos=tuple(float(x) for x in s["act"]["dp"]),
                gripper_cmd=GripperCmd(s["act"]["grip"]),
            ),
        )
        for s in d["steps"]
    ]
    return Trajectory(
        id=str(d["id"]),
        task=str(d["task"]),
        steps=steps,
        source=Source(d["source"]),
        success=d.get("success"),
        max_step_m=float(d.get("max_step_m", DEFAULT_MAX_STEP_M)),
    )


def _check_vec3(
    out: list[Violation], traj_id: str, step: int | None, name: str, v: tuple
) -> None:
    if len(v) != 3:
        out.append(Violation(traj_id, step, name, f"expected 3 components, got {len(v)}"))
        return
    for x in v:
        if not math.isfinite(x):
            out.append(Violation(traj_id, step, name, "non-finite component"))
            return


def validate_trajectory(
    traj: Trajectory, workspace: tuple[Vec3, Vec3] = DEFAULT_WORKSPACE
) -> list[Violation]:
    """Check every declared invariant; returns one Violation per breach.

    Never raises: an empty report means the trajectory is valid.
    """
    out: list[Violation] = []
    if not traj.steps:
        out.append(Violation(traj.id, None, "steps", "trajectory has no steps"))
    if not (math.isfinite(traj.max_step_m) and traj.max_step_m > 0):
        out.append(Violation(traj.id, None, "max_step_m", "must be finite and > 0"))
    lo, hi = workspace
    for i, (obs, act) in enumerate(traj.steps):
        _check_vec3(out, traj.id, i, "eef_pos", obs.eef_pos)
        if len(obs.eef_pos) == 3 and all(math.isfinite(x) for x in obs.eef_pos):
            for a in range(3):
                if not (lo[a] - 1e-9 <= obs.eef_pos[a] <= hi[a] + 1e-9):
                    out.append(
                        Violation(traj.id, i, "eef_pos", f"outside workspace on axis {a}")
                    )
                    break
        if not (math.isfinite(obs.gripper_width) and 0.0 <= obs.gripper_width <= 1.0):
            out.append(Violation(traj.id, i, "gripper_width", "must be in [0, 1]"))
        for name, pos in obs.object_poses.items():
            _check_vec3(out, traj.id, i, f"object_poses[{name}]", pos)
        _check_vec3(out, traj.id, i, "delta_pos", act.delta_pos)
        if len(act.delta_pos) == 3 and all(math.isfinite(x) for x in act.delta_pos):
            for a in range(3):
                if abs(act.delta_pos[a]) > 1.0 + 1e-12:
                    out.append(
                        Violation(traj.id, i, "delta_pos", f"|component {a}| > 1")
                    )
                    break
    return out


def save_trajectories(
    trajs: list[Trajectory],
    path: str,
    vocab_id: str = "",
    annotation_cfg_hash: str = "",
) -> DatasetManifest:
    """Write trajectories as one JSON object per line; returns the manifest.

    Serialization is deterministic: fixed key order, floats at 9 significant
    digits, no whitespace. Saving the same input twice is byte-identical.
    """
    counts = {"expert": 0, "rollout": 0, "refined": 0}
    seen: set[str] = set()
    for traj in trajs:
        report = validate_trajectory(traj)
        if report:
            v = report[0]
            raise InvariantViolation(v.traj_id, v.field_name, v.reason)
        if traj.id in seen:
            raise InvariantViolation(traj.id, "id", "duplicate id in dataset")
        seen.add(traj.id)
        counts[traj.source.value] += 1
    try:
        with open(path, "w", encoding="utf-8") as f:
            for traj in trajs:
                f.write(json.dumps(traj_to_dict(traj), separators=(",", ":"), allow_nan=False))
                f.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
    return DatasetManifest(counts=counts, vocab=vocab_id, annotation_cfg_hash=annotation_cfg_hash)


def load_trajectories(path: str) -> list[Trajectory]:
    """Load and validate a trajectory JSONL file, preserving order."""
    trajs: list[Trajectory] = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(line_no, f"invalid JSON: {e.msg}") from e
        try:
            traj = traj_from_dict(d)
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord(line_no, f"bad record structure: {e}") from e
        trajs.append(traj)
    seen: set[str] = set()
    for traj in trajs:
        report = validate_trajectory(traj)
        if report:
            v = report[0]
            raise InvariantViolation(v.traj_id, v.field_name, v.reason)
        if traj.id in seen:
            raise InvariantViolation(traj.id, "id", "duplicate id in dataset")
        seen.add(traj.id)
    return trajs


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    doc = {
        "counts": {k: manifest.counts.get(k, 0) for k in ("expert", "rollout", "refined")},
        "vocab": manifest.vocab,
        "annotation_cfg_hash": manifest.annotation_cfg_hash,
    }
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, separators=(",", ":"))
            f.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_manifest(path: str) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return DatasetManifest(
        counts={k: int(v) for k, v in doc["counts"].items()},
        vocab=doc.get("vocab", ""),
        annotation_cfg_hash=doc.get("annotation_cfg_hash", ""),
    )
