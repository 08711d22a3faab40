"""Coarse motion-instruction annotation of trajectories.

Consecutive action windows are aggregated into a single temporal action,
filtered for dominant movement directions against a threshold, and mapped
to a closed vocabulary of instructions such as "move arm right with
gripper closed". The combined 3-axis vocabulary has 37 entries; the flat
real-world vocabulary has 8.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .trajdata import Action, GripperCmd, Observation, Trajectory

__all__ = [
    "GripperState",
    "AnnotationConfig",
    "VocabEntry",
    "Vocabulary",
    "AggregatedAction",
    "ConfigInvalid",
    "EmptyWindow",
    "VocabularyMismatch",
    "ADJUSTMENT_TEXT",
    "FLAT_TEXTS",
    "build_vocabulary",
    "aggregate_window",
    "dominant_directions",
    "compose_instruction",
    "annotate_trajectory",
    "offline_annotate",
    "config_hash",
    "save_annotations",
]

ADJUSTMENT_TEXT = "make slight adjustments to gripper position"

DEFAULT_AXIS_WORDS = {
    ("x", "+"): "right",
    ("x", "-"): "left",
    ("y", "+"): "forward",
    ("y", "-"): "backward",
    ("z", "+"): "upward",
    ("z", "-"): "downward",
}

FLAT_TEXTS = (
    "move arm upward",
    "move arm downward",
    "move arm right",
    "move arm left",
    "move arm forward",
    "move arm backward",
    "open the gripper",
    "close the gripper",
)


class GripperState(Enum):
    OPEN = "open"
    CLOSED = "closed"


class ConfigInvalid(Exception):
    pass


class EmptyWindow(Exception):
    pass


class VocabularyMismatch(Exception):
    """The direction set is not representable in the given vocabulary."""


Direction = tuple[str, str]  # (axis name, "+" or "-")


@dataclass(frozen=True)
class AnnotationConfig:
    window: int = 4
    threshold: float = 0.3
    max_directions: int = 2
    axes: tuple[str, ...] = ("x", "y", "z")
    axis_word_map: dict[Direction, str] = field(
        default_factory=lambda: dict(DEFAULT_AXIS_WORDS)
    )

    def validate(self) -> None:
        if self.window < 1:
            raise ConfigInvalid("window must be >= 1")
        if not (0.0 < self.threshold < 1.0):
            raise ConfigInvalid("threshold must be in (0, 1)")
        if self.max_directions not in (1, 2):
            raise ConfigInvalid("max_directions must be 1 or 2")
        if len(set(self.axes)) != len(self.axes) or not self.axes:
            raise ConfigInvalid("axes must be non-empty and distinct")
        for axis in self.axes:
            for sign in ("+", "-"):
                if (axis, sign) not in self.axis_word_map:
                    raise ConfigInvalid(f"axis_word_map missing ({axis}, {sign})")


@dataclass(frozen=True)
class VocabEntry:
    instr_id: int
    text: str
    directions: tuple[Direction, ...]  # canonical order; empty for non-move entries
    gripper: GripperState | None  # None: entry does not constrain the gripper


@dataclass
class Vocabulary:
    id: str
    mode: str  # "combined" | "flat"
    entries: list[VocabEntry]

    def __post_init__(self) -> None:
        self._by_text = {e.text: e.instr_id for e in self.entries}
        self._by_form = {(e.directions, e.gripper): e.instr_id for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def text_of(self, instr_id: int) -> str:
        return self.entries[instr_id].text

    def id_of_text(self, text: str) -> int | None:
        return self._by_text.get(text)

    def id_of_form(
        self, directions: tuple[Direction, ...], gripper: GripperState | None
    ) -> int | None:
        return self._by_form.get((directions, gripper))

    @property
    def adjustment_id(self) -> int | None:
        return self._by_text.get(ADJUSTMENT_TEXT)


@dataclass(frozen=True)
class AggregatedAction:
    mean_delta: tuple[float, float, float]
    gripper_state: GripperState
    window_span: tuple[int, int]  # [start, end) step indices


def _entries_hash(entries: list[VocabEntry]) -> str:
    payload = json.dumps(
        [
            [e.text, list(map(list, e.directions)), e.gripper.value if e.gripper else None]
            for e in entries
        ],
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def canonical_directions(dirs: Sequence[Direction], cfg: AnnotationConfig) -> tuple[Direction, ...]:
    """Order a direction set by (axis position, sign) so pairs compare as sets."""
    axis_pos = {a: i for i, a in enumerate(cfg.axes)}
    return tuple(sorted(dirs, key=lambda d: (axis_pos[d[0]], d[1] != "+")))


def build_vocabulary(cfg: AnnotationConfig, mode: str = "combined") -> Vocabulary:
    """Enumerate the instruction vocabulary deterministically.

    Combined mode: single directions x gripper state, then unordered
    direction pairs on distinct axes x gripper state, then the single
    below-threshold adjustment entry. Flat mode: the fixed 8-instruction
    real-world set.
    """
    cfg.validate()
    entries: list[VocabEntry] = []

    def add(text: str, dirs: tuple[Direction, ...], grip: GripperState | None) -> None:
        entries.append(VocabEntry(len(entries), text, dirs, grip))

    if mode == "combined":
        singles = [(axis, sign) for axis in cfg.axes for sign in ("+", "-")]
        for d in singles:
            word = cfg.axis_word_map[d]
            for grip in (GripperState.OPEN, GripperState.CLOSED):
                add(f"move arm {word} with gripper {grip.value}", (d,), grip)
        for i in range(len(singles)):
            for j in range(i + 1, len(singles)):
                if singles[i][0] == singles[j][0]:
                    continue
                pair = canonical_directions((singles[i], singles[j]), cfg)
                w1, w2 = (cfg.axis_word_map[d] for d in pair)
                for grip in (GripperState.OPEN, GripperState.CLOSED):
                    add(f"move arm {w1} and {w2} with gripper {grip.value}", pair, grip)
        add(ADJUSTMENT_TEXT, (), None)
    elif mode == "flat":
        word_to_dir = {w: d for d, w in cfg.axis_word_map.items()}
        for text in FLAT_TEXTS:
            if text.startswith("move arm "):
                word = text.removeprefix("move arm ")
                if word not in word_to_dir:
                    raise ConfigInvalid(f"axis_word_map does not cover {word!r}")
                add(text, (word_to_dir[word],), None)
            elif text == "open the gripper":
                add(text, (), GripperState.OPEN)
            else:
                add(text, (), GripperState.CLOSED)
    else:
        raise ConfigInvalid(f"unknown vocabulary mode {mode!r}")

    return Vocabulary(id=_entries_hash(entries), mode=mode, entries=entries)


def aggregate_window(
    steps: Sequence[tuple[Observation, Action]],
    cfg: AnnotationConfig,
    prev_state: GripperState = GripperState.OPEN,
    span_start: int = 0,
) -> AggregatedAction:
    """Aggregate a window of steps into one temporal action.

    The movement component is the arithmetic mean of the per-step deltas.
    The gripper state is the one implied by the last Open/Close command in
    the window; with only Hold commands the previous state carries over.
    """
    if not steps:
        raise EmptyWindow("cannot aggregate an empty window")
    if len(steps) > cfg.window:
        raise ConfigInvalid(f"window of {len(steps)} steps exceeds configured size {cfg.window}")
    n = len(steps)
    mean = tuple(sum(act.delta_pos[a] for _, act in steps) / n for a in range(3))
    state = prev_state
    for _, act in steps:
        if act.gripper_cmd is GripperCmd.CLOSE:
            state = GripperState.CLOSED
        elif act.gripper_cmd is GripperCmd.OPEN:
            state = GripperState.OPEN
    return AggregatedAction(mean, state, (span_start, span_start + n))


def dominant_directions(agg: AggregatedAction, cfg: AnnotationConfig) -> list[Direction]:
    """Axes whose mean component strictly exceeds the threshold, strongest first.

    Truncated to ``cfg.max_directions``; magnitude ties resolve by axis order.
    """
    scored = []
    for i, axis in enumerate(cfg.axes):
        if i >= 3:
            break
        v = agg.mean_delta[i]
        if abs(v) > cfg.threshold:
            scored.append((-abs(v), i, (axis, "+" if v > 0 else "-")))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [d for _, _, d in scored[: cfg.max_directions]]


def compose_instruction(
    dirs: Sequence[Direction],
    gripper: GripperState,
    vocab: Vocabulary,
    cfg: AnnotationConfig | None = None,
) -> int:
    """Map a direction set plus gripper state to its vocabulary id.

    An empty direction set maps to the adjustment entry (combined mode) or
    to the matching bare gripper entry (flat mode). Pair ordering does not
    matter: direction sets are canonicalized before lookup.
    """
    cfg = cfg or AnnotationConfig()
    canon = canonical_directions(tuple(dirs), cfg)
    if vocab.mode == "combined":
        if not canon:
            iid = vocab.adjustment_id
            if iid is None:
                raise VocabularyMismatch("vocabulary has no adjustment entry")
            return iid
        iid = vocab.id_of_form(canon, gripper)
    else:
        if not canon:
            iid = vocab.id_of_form((), gripper)
        elif len(canon) == 1:
            iid = vocab.id_of_form(canon, None)
        else:
            iid = None
    if iid is None:
        raise VocabularyMismatch(f"direction set {canon!r} with gripper {gripper} not in vocabulary")
    return iid


def _initial_gripper_state(traj: Trajectory) -> GripperState:
    for _, act in traj.steps:
        if act.gripper_cmd is GripperCmd.CLOSE:
            return GripperState.CLOSED
        if act.gripper_cmd is GripperCmd.OPEN:
            return GripperState.OPEN
    return GripperState.OPEN


def annotate_trajectory(
    traj: Trajectory, cfg: AnnotationConfig, vocab: Vocabulary
) -> list[tuple[tuple[int, int], int]]:
    """Annotate consecutive non-overlapping windows of a trajectory.

    Returns one ((start, end), instruction_id) per window; the final window
    may be shorter than ``cfg.window``. Deterministic in all inputs.
    """
    cfg.validate()
    out: list[tuple[tuple[int, int], int]] = []
    carry = _initial_gripper_state(traj)
    for start in range(0, len(traj.steps), cfg.window):
        window = traj.steps[start : start + cfg.window]
        agg = aggregate_window(window, cfg, prev_state=carry, span_start=start)
        dirs = dominant_directions(agg, cfg)
        iid = compose_instruction(dirs, agg.gripper_state, vocab, cfg)
        out.append((agg.window_span, iid))
        carry = agg.gripper_state
    return out


def offline_annotate(trajs: list[Trajectory], stride: int = 30) -> list[tuple[str, int]]:
    """Sampling points (trajectory id, step index) every ``stride`` steps."""
    if stride < 1:
        raise ConfigInvalid("stride must be >= 1")
    points: list[tuple[str, int]] = []
    for traj in trajs:
        points.extend((traj.id, i) for i in range(0, len(traj.steps), stride))
    return points


def config_hash(cfg: AnnotationConfig) -> str:
    payload = json.dumps(
        {
            "window": cfg.window,
            "threshold": f"{cfg.threshold:.9g}",
            "max_directions": cfg.max_directions,
            "axes": list(cfg.axes),
            "axis_word_map": {f"{a}{s}": w for (a, s), w in sorted(cfg.axis_word_map.items())},
        },
        separators=(",", ":"),
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_annotations(
    annotations: list[tuple[str, tuple[int, int], int]],
    vocab: Vocabulary,
    path: str,
) -> None:
    """Write (trajectory id, span, instruction) rows as JSONL."""
    with open(path, "w", encoding="utf-8") as f:
        for traj_id, span, iid in annotations:
            row = {
                "traj": traj_id,
                "span": [span[0], span[1]],
                "instr": iid,
                "text": vocab.text_of(iid),
            }
            f.write(json.dumps(row, separators=(",", ":")))
            f.write("\n")


def count_windows(n_steps: int, window: int) -> int:
    return math.ceil(n_steps / window)
