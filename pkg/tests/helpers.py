"""Independent brute-force oracles shared by unit and acceptance tests.

These deliberately reimplement the annotation and resolution rules from
scratch (straight-line style, no shared code with the package) so that
agreement is evidence rather than tautology.
"""

import hashlib
import math

import numpy as np

from motionloop.annotate import ADJUSTMENT_TEXT, AnnotationConfig, GripperState, Vocabulary
from motionloop.trajdata import Action, GripperCmd, Observation, Trajectory

AXIS_WORDS = {
    ("x", "+"): "right",
    ("x", "-"): "left",
    ("y", "+"): "forward",
    ("y", "-"): "backward",
    ("z", "+"): "upward",
    ("z", "-"): "downward",
}


def brute_window_mean(deltas: list[tuple[float, float, float]]) -> tuple[float, float, float]:
    n = len(deltas)
    return (
        sum(d[0] for d in deltas) / n,
        sum(d[1] for d in deltas) / n,
        sum(d[2] for d in deltas) / n,
    )


def brute_dominant(mean: tuple[float, float, float], threshold: float) -> list[tuple[str, str]]:
    """Strictly-above-threshold axes, top 2 by |mean|, earlier axis wins ties."""
    axes = ("x", "y", "z")
    cands = []
    for i, axis in enumerate(axes):
        if abs(mean[i]) > threshold:
            cands.append((abs(mean[i]), -i, axis, "+" if mean[i] > 0 else "-"))
    cands.sort(reverse=True)
    picked = [(axis, sign) for _, _, axis, sign in cands[:2]]
    return picked


def brute_text(dirs: list[tuple[str, str]], grip: GripperState) -> str:
    if not dirs:
        return ADJUSTMENT_TEXT
    axes = ("x", "y", "z")
    ordered = sorted(dirs, key=lambda d: axes.index(d[0]))
    words = [AXIS_WORDS[d] for d in ordered]
    state = "open" if grip is GripperState.OPEN else "closed"
    if len(words) == 1:
        return f"move arm {words[0]} with gripper {state}"
    return f"move arm {words[0]} and {words[1]} with gripper {state}"


def brute_annotate(
    traj: Trajectory, vocab: Vocabulary, window: int = 4, threshold: float = 0.3
) -> list[int]:
    """Window-by-window reimplementation of the annotation rules."""
    first_width = traj.steps[0][0].gripper_width
    state = GripperState.OPEN if first_width >= 0.5 else GripperState.CLOSED
    out = []
    for start in range(0, len(traj.steps), window):
        chunk = traj.steps[start : start + window]
        for _, act in chunk:
            if act.gripper_cmd is GripperCmd.OPEN:
                state = GripperState.OPEN
            elif act.gripper_cmd is GripperCmd.CLOSE:
                state = GripperState.CLOSED
        mean = brute_window_mean([tuple(act.delta_pos) for _, act in chunk])
        text = brute_text(brute_dominant(mean, threshold), state)
        iid = vocab.id_of_text(text)
        assert iid is not None, f"oracle built unknown text {text!r}"
        out.append(iid)
    return out


def brute_trigram_embed(text: str, dim: int) -> np.ndarray:
    """From-scratch hashed character trigram bag, L2-normalized."""
    padded = f" {text.lower()} "
    counts = np.zeros(dim, dtype=np.float64)
    for i in range(len(padded) - 2):
        tri = padded[i : i + 3]
        h = hashlib.md5(tri.encode("utf-8")).digest()
        idx = int.from_bytes(h[:8], "big") % dim
        counts[idx] += 1.0
    norm = math.sqrt(float(np.sum(counts * counts)))
    return counts / norm if norm > 0 else counts


def brute_resolve(text: str, vocab: Vocabulary, dim: int = 256) -> int:
    """Exact text match, else argmax cosine over canonical texts, lowest id."""
    iid = vocab.id_of_text(text)
    if iid is not None:
        return iid
    q = brute_trigram_embed(text, dim)
    best_id, best_sim = 0, -np.inf
    for e in vocab.entries:
        v = brute_trigram_embed(e.text, dim)
        sim = float(np.dot(q, v))
        if sim > best_sim + 1e-15:
            best_id, best_sim = e.instr_id, sim
    return best_id


def make_window_trajectory(
    rng: np.random.Generator,
    cfg: AnnotationConfig,
    n_windows: int,
) -> Trajectory:
    """Synthetic trajectory exercising singles, pairs, fallbacks, and flips.

    Deltas are drawn so every regime appears: decisive single axes, decisive
    pairs, three decisive axes (top-2 selection), all below threshold, and
    values straddling the strict threshold.
    """
    steps = []
    width = 1.0 if rng.random() < 0.5 else 0.0
    # the initial carry-over state is only well-defined once a command has
    # been seen, so the very first step announces the starting state
    first_cmd = GripperCmd.OPEN if width >= 0.5 else GripperCmd.CLOSE
    for _ in range(n_windows):
        regime = rng.integers(0, 5)
        base = rng.uniform(-0.2, 0.2, size=3)
        if regime >= 1:
            k = int(regime) if regime <= 3 else 3
            axes = rng.choice(3, size=k, replace=False)
            for a in axes:
                base[a] = rng.uniform(0.35, 0.95) * (1 if rng.random() < 0.5 else -1)
        if regime == 4:
            base[rng.integers(0, 3)] = cfg.threshold * rng.choice([0.999, 1.0, 1.001])
        for _ in range(cfg.window):
            jitter = rng.uniform(-0.02, 0.02, size=3)
            delta = np.clip(base + jitter, -1.0, 1.0)
            # keep the window mean in the intended regime
            delta = base if rng.random() < 0.5 else delta
            if not steps:
                cmd = first_cmd
            else:
                cmd = GripperCmd.HOLD
                r = rng.random()
                if r < 0.07:
                    cmd = GripperCmd.OPEN
                elif r < 0.14:
                    cmd = GripperCmd.CLOSE
            obs = Observation(
                eef_pos=tuple(rng.uniform(-0.2, 0.2, size=3)),
                gripper_width=width,
                object_poses={},
            )
            steps.append((obs, Action(delta_pos=tuple(delta), gripper_cmd=cmd)))
            if cmd is GripperCmd.OPEN:
                width = 1.0
            elif cmd is GripperCmd.CLOSE:
                width = 0.0
    return Trajectory(id=f"synthetic-{rng.integers(1 << 30)}", task="Reach", steps=steps)
