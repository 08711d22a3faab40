"""Motion-conditioned diffusion policy over action chunks.

A small fully-connected denoiser predicts the noise added to a C-step
action chunk, conditioned in two stages: the temporally attended
observation feature enters at the input, the motion feature (a codebook
row) is added into the second hidden layer after a linear map. Training
minimizes MSE between the true and predicted noise; gradients are
hand-derived and checked against finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from .annotate import AnnotationConfig, Vocabulary, annotate_trajectory
from .codebook import MotionCodebook, apply_row_grad, lookup
from .trajdata import Action, GripperCmd, Observation, Trajectory

__all__ = [
    "NoiseSchedule",
    "PolicyModel",
    "TrainConfig",
    "TrainItem",
    "ConfigInvalid",
    "ShapeMismatch",
    "NonFiniteLoss",
    "make_schedule",
    "forward_diffuse",
    "obs_to_vec",
    "pad_history",
    "timestep_embedding",
    "init_model",
    "encode_history",
    "predict_noise",
    "loss_and_grads",
    "train_step",
    "AdamState",
    "RowAdamState",
    "train_policy",
    "sample_chunk",
    "chunk_to_actions",
    "actions_to_chunk",
    "build_training_items",
    "save_model",
    "load_model",
    "save_loss_curve",
]

POS_SCALE = 5.0  # workspace is +-0.2 m, so scaled coordinates sit near [-1, 1]


class ConfigInvalid(Exception):
    pass


class ShapeMismatch(Exception):
    pass


class NonFiniteLoss(Exception):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    K: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def make_schedule(K: int = 50, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    if K < 1:
        raise ConfigInvalid("K must be >= 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigInvalid("need 0 < beta_min <= beta_max < 1")
    beta = np.linspace(beta_min, beta_max, K, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(K=K, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def forward_diffuse(a0: np.ndarray, k: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noising step: sqrt(abar_k) * a0 + sqrt(1 - abar_k) * eps."""
    a0 = np.asarray(a0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if a0.shape != eps.shape:
        raise ShapeMismatch(f"a0 {a0.shape} vs eps {eps.shape}")
    if not (0 <= k < sched.K):
        raise ShapeMismatch(f"k={k} outside schedule of length {sched.K}")
    ab = sched.alpha_bar[k]
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * eps


def obs_to_vec(obs: Observation, object_names: tuple[str, ...]) -> np.ndarray:
    """Fixed-layout proprioceptive vector: eef, gripper width, object positions."""
    parts = [np.asarray(obs.eef_pos, dtype=np.float64) * POS_SCALE, [obs.gripper_width]]
    for name in object_names:
        if name not in obs.object_poses:
            raise ShapeMismatch(f"observation lacks object {name!r}")
        parts.append(np.asarray(obs.object_poses[name], dtype=np.float64) * POS_SCALE)
    return np.concatenate([np.ravel(p) for p in parts])


def pad_history(obs_list: list[Observation], H: int) -> list[Observation]:
    """Left-pad a short history by repeating its first observation."""
    if not obs_list:
        raise ShapeMismatch("history must contain at least one observation")
    if len(obs_list) >= H:
        return list(obs_list[-H:])
    return [obs_list[0]] * (H - len(obs_list)) + list(obs_list)


def timestep_embedding(k: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal embedding of the denoising step index."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = k * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


@dataclass
class PolicyModel:
    obs_dim: int
    object_names: tuple[str, ...]
    H: int
    C: int
    act_dim: int
    d_obs: int  # per-step embedding width
    d_attn: int
    d_time: int
    hidden: int
    motion_dim: int
    vocab_id: str
    seed: int
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def chunk_size(self) -> int:
        return self.C * self.act_dim


def init_model(
    object_names: tuple[str, ...],
    cb: MotionCodebook,
    seed: int = 0,
    H: int = 5,
    C: int = 4,
    d_obs: int = 64,
    d_attn: int = 64,
    d_time: int = 16,
    hidden: int = 128,
) -> PolicyModel:
    """Seeded init; the output layer starts at zero so an untrained model
    predicts zero noise."""
    obs_dim = 4 + 3 * len(object_names)
    act_dim = 4
    model = PolicyModel(
        obs_dim=obs_dim,
        object_names=tuple(object_names),
        H=H,
        C=C,
        act_dim=act_dim,
        d_obs=d_obs,
        d_attn=d_attn,
        d_time=d_time,
        hidden=hidden,
        motion_dim=cb.dim,
        vocab_id=cb.vocab_id,
        seed=seed,
    )
    rng = np.random.default_rng(seed)

    def init_w(rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    z_in = model.chunk_size + d_time + d_obs
    model.params = {
        "W_e": init_w(d_obs, obs_dim),
        "b_e": np.zeros(d_obs),
        "W_q": init_w(d_attn, d_obs),
        "W_k": init_w(d_attn, d_obs),
        "W1": init_w(hidden, z_in),
        "b1": np.zeros(hidden),
        "W2": init_w(hidden, hidden),
        "b2": np.zeros(hidden),
        "W_m": init_w(hidden, cb.dim),
        "b_m": np.zeros(hidden),
        "W3": np.zeros((model.chunk_size, hidden)),
        "b3": np.zeros(model.chunk_size),
    }
    return model


def _embed_steps(model: PolicyModel, window: np.ndarray) -> np.ndarray:
    return window @ model.params["W_e"].T + model.params["b_e"]


def _attend(model: PolicyModel, e: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """Single-head scaled dot-product attention, most recent step as query.

    Values are the embeddings themselves, so a history of identical
    observations returns exactly the per-step embedding.
    """
    p = model.params
    q = p["W_q"] @ e[-1]
    keys = e @ p["W_k"].T
    scores = keys @ q / math.sqrt(model.d_attn)
    scores = scores - scores.max()  # stabilized softmax
    expw = np.exp(scores)
    w = expw / expw.sum()
    out = w @ e
    return out, w, {"q": q, "keys": keys}


def encode_history(model: PolicyModel, obs_window: list[Observation] | np.ndarray) -> np.ndarray:
    """Temporal observation feature for the most recent H steps."""
    if isinstance(obs_window, np.ndarray):
        window = obs_window
    else:
        padded = pad_history(list(obs_window), model.H)
        window = np.stack([obs_to_vec(o, model.object_names) for o in padded])
    if window.shape != (model.H, model.obs_dim):
        raise ShapeMismatch(f"window {window.shape}, expected {(model.H, model.obs_dim)}")
    e = _embed_steps(model, window)
    out, _, _ = _attend(model, e)
    return out


def predict_noise(
    model: PolicyModel,
    obs_feature: np.ndarray,
    motion_feature: np.ndarray,
    noisy_chunk: np.ndarray,
    k: int,
) -> np.ndarray:
    """Denoiser forward pass; see _forward for the cached variant."""
    out, _ = _forward(model, obs_feature, motion_feature, noisy_chunk, k)
    return out


def _forward(
    model: PolicyModel,
    obs_feature: np.ndarray,
    motion_feature: np.ndarray,
    noisy_chunk: np.ndarray,
    k: int,
) -> tuple[np.ndarray, dict]:
    p = model.params
    chunk = np.asarray(noisy_chunk, dtype=np.float64)
    if chunk.shape != (model.C, model.act_dim):
        raise ShapeMismatch(f"chunk {chunk.shape}, expected {(model.C, model.act_dim)}")
    if obs_feature.shape != (model.d_obs,):
        raise ShapeMismatch(f"obs feature {obs_feature.shape}, expected ({model.d_obs},)")
    if motion_feature.shape != (model.motion_dim,):
        raise ShapeMismatch(f"motion feature {motion_feature.shape}, expected ({model.motion_dim},)")
    t_emb = timestep_embedding(k, model.d_time)
    z = np.concatenate([chunk.ravel(), t_emb, obs_feature])
    pre1 = p["W1"] @ z + p["b1"]
    h1 = np.tanh(pre1)
    m_inj = p["W_m"] @ motion_feature + p["b_m"]
    pre2 = p["W2"] @ h1 + p["b2"] + m_inj
    h2 = np.tanh(pre2)
    out = (p["W3"] @ h2 + p["b3"]).reshape(model.C, model.act_dim)
    cache = {"z": z, "h1": h1, "h2": h2, "m": motion_feature}
    return out, cache


@dataclass(frozen=True)
class TrainItem:
    obs_window: np.ndarray  # H x obs_dim
    instr_id: int
    chunk: np.ndarray  # C x act_dim


def loss_and_grads(
    model: PolicyModel,
    cb: MotionCodebook,
    items: list[TrainItem],
    sched: NoiseSchedule,
    ks: list[int],
    eps_list: list[np.ndarray],
) -> tuple[float, dict[str, np.ndarray], dict[int, np.ndarray]]:
    """Batch loss plus exact gradients for every parameter tensor.

    ``ks`` and ``eps_list`` carry the pre-drawn noise so the function is
    deterministic, which is what the finite-difference check relies on.
    Returns (loss, parameter grads, codebook-row grads keyed by id).
    """
    if not items:
        raise ConfigInvalid("batch must be non-empty")
    p = model.params
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    row_grads: dict[int, np.ndarray] = {}
    inv_sqrt = 1.0 / math.sqrt(model.d_attn)
    total_loss = 0.0
    n = len(items)
    chunk_size = model.chunk_size

    for item, k, eps in zip(items, ks, eps_list):
        window = item.obs_window
        e = _embed_steps(model, window)
        obs_feat, w, att = _attend(model, e)
        m = lookup(cb, item.instr_id)
        noisy = forward_diffuse(item.chunk, k, eps, sched)
        out, cache = _forward(model, obs_feat, m, noisy, k)

        diff = out - eps
        total_loss += float((diff * diff).mean())

        # d loss / d out, including the 1/n batch mean
        d_out = (2.0 / (chunk_size * n)) * diff.ravel()

        h1, h2, z = cache["h1"], cache["h2"], cache["z"]
        grads["W3"] += np.outer(d_out, h2)
        grads["b3"] += d_out
        d_h2 = p["W3"].T @ d_out
        d_pre2 = d_h2 * (1.0 - h2 * h2)
        grads["W2"] += np.outer(d_pre2, h1)
        grads["b2"] += d_pre2
        grads["W_m"] += np.outer(d_pre2, m)
        grads["b_m"] += d_pre2
        d_m = p["W_m"].T @ d_pre2
        if item.instr_id in row_grads:
            row_grads[item.instr_id] += d_m
        else:
            row_grads[item.instr_id] = d_m
        d_h1 = p["W2"].T @ d_pre2
        d_pre1 = d_h1 * (1.0 - h1 * h1)
        grads["W1"] += np.outer(d_pre1, z)
        grads["b1"] += d_pre1
        d_z = p["W1"].T @ d_pre1
        d_obs_feat = d_z[chunk_size + model.d_time :]

        # attention backward: out = w @ e with identity value map
        q, keys = att["q"], att["keys"]
        d_w = e @ d_obs_feat
        d_e = np.outer(w, d_obs_feat)
        d_scores = w * (d_w - float(w @ d_w))
        d_q = (d_scores @ keys) * inv_sqrt
        d_keys = np.outer(d_scores, q) * inv_sqrt
        grads["W_q"] += np.outer(d_q, e[-1])
        d_e[-1] += p["W_q"].T @ d_q
        grads["W_k"] += d_keys.T @ e
        d_e += d_keys @ p["W_k"]

        grads["W_e"] += d_e.T @ window
        grads["b_e"] += d_e.sum(axis=0)

    loss = total_loss / n
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    return loss, grads, row_grads


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 3e-4
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"  # "sgd" or "adam"

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigInvalid("epochs, batch_size, lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigInvalid(f"unknown optimizer {self.optimizer!r}")


class AdamState:
    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        b1, b2, eps = 0.9, 0.999, 1e-8
        self.t += 1
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + eps)


class RowAdamState:
    """Sparse Adam over codebook rows.

    Only rows that received gradient are touched; their moment buffers and
    bias-correction counters are per row, so a step conditioned on
    instruction i leaves every row j != i unchanged.
    """

    def __init__(self, cb: MotionCodebook):
        self.m = np.zeros_like(cb.entries)
        self.v = np.zeros_like(cb.entries)
        self.t = np.zeros(cb.entries.shape[0], dtype=np.int64)

    def update(self, cb: MotionCodebook, row_grads: dict[int, np.ndarray], lr: float) -> None:
        if not cb.trainable:
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        for iid in sorted(row_grads):
            g = row_grads[iid]
            self.t[iid] += 1
            self.m[iid] = b1 * self.m[iid] + (1 - b1) * g
            self.v[iid] = b2 * self.v[iid] + (1 - b2) * g * g
            corr1 = 1.0 - b1 ** int(self.t[iid])
            corr2 = 1.0 - b2 ** int(self.t[iid])
            cb.entries[iid] -= lr * (self.m[iid] / corr1) / (np.sqrt(self.v[iid] / corr2) + eps)


def train_step(
    model: PolicyModel,
    cb: MotionCodebook,
    items: list[TrainItem],
    sched: NoiseSchedule,
    lr: float,
    rng: np.random.Generator,
    opt_state: AdamState | None = None,
    row_opt: RowAdamState | None = None,
) -> float:
    """One optimization step; returns the pre-update loss.

    Codebook rows ride the same optimizer choice as the model: sparse Adam
    when ``row_opt`` is passed, plain sparse SGD otherwise.
    """
    ks = [int(rng.integers(0, sched.K)) for _ in items]
    eps_list = [rng.standard_normal((model.C, model.act_dim)) for _ in items]
    loss, grads, row_grads = loss_and_grads(model, cb, items, sched, ks, eps_list)
    if opt_state is not None:
        opt_state.update(model.params, grads, lr)
    else:
        for name in sorted(model.params):
            model.params[name] -= lr * grads[name]
    if row_opt is not None:
        row_opt.update(cb, row_grads, lr)
    else:
        for iid in sorted(row_grads):
            apply_row_grad(cb, iid, row_grads[iid], lr)
    return loss


def train_policy(
    model: PolicyModel,
    cb: MotionCodebook,
    items: list[TrainItem],
    sched: NoiseSchedule,
    cfg: TrainConfig,
) -> list[float]:
    """Epoch loop over shuffled minibatches; returns mean loss per epoch."""
    cfg.validate()
    if not items:
        raise ConfigInvalid("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = AdamState(model.params) if cfg.optimizer == "adam" else None
    row_opt = RowAdamState(cb) if cfg.optimizer == "adam" else None
    curve: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(items), cfg.batch_size):
            batch = [items[i] for i in order[start : start + cfg.batch_size]]
            losses.append(train_step(model, cb, batch, sched, cfg.lr, rng, opt, row_opt))
        curve.append(float(np.mean(losses)))
    return curve


def sample_chunk(
    model: PolicyModel,
    cb: MotionCodebook,
    obs_window: list[Observation] | np.ndarray,
    instr_id: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Ancestral denoising from pure noise down to an action chunk.

    The result is clamped to the normalized action range [-1, 1].
    """
    obs_feat = encode_history(model, obs_window)
    m = lookup(cb, instr_id)
    a = rng.standard_normal((model.C, model.act_dim))
    for k in range(sched.K - 1, -1, -1):
        eps_hat = predict_noise(model, obs_feat, m, a, k)
        ab = sched.alpha_bar[k]
        mean = (a - sched.beta[k] / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(sched.alpha[k])
        if k > 0:
            ab_prev = sched.alpha_bar[k - 1]
            var = (1.0 - ab_prev) / (1.0 - ab) * sched.beta[k]
            a = mean + math.sqrt(var) * rng.standard_normal((model.C, model.act_dim))
        else:
            a = mean
    return np.clip(a, -1.0, 1.0)


def chunk_to_actions(chunk: np.ndarray) -> list[Action]:
    """Rows become actions; positive grip logit means Close, else Open."""
    actions = []
    for row in np.asarray(chunk, dtype=np.float64):
        dp = tuple(float(v) for v in np.clip(row[:3], -1.0, 1.0))
        cmd = GripperCmd.CLOSE if row[3] > 0 else GripperCmd.OPEN
        actions.append(Action(delta_pos=dp, gripper_cmd=cmd))
    return actions


def actions_to_chunk(actions: list[Action], prev_closed: bool = False) -> np.ndarray:
    """Training target: Hold keeps the previous gripper sign."""
    rows = []
    closed = prev_closed
    for act in actions:
        if act.gripper_cmd is GripperCmd.CLOSE:
            closed = True
        elif act.gripper_cmd is GripperCmd.OPEN:
            closed = False
        rows.append([act.delta_pos[0], act.delta_pos[1], act.delta_pos[2], 1.0 if closed else -1.0])
    return np.asarray(rows, dtype=np.float64)


def build_training_items(
    trajs: list[Trajectory],
    vocab: Vocabulary,
    ann_cfg: AnnotationConfig,
    model: PolicyModel,
) -> list[TrainItem]:
    """Chunked (history, instruction, action chunk) triples from trajectories.

    Each full annotation window becomes one item: the instruction is the
    window's own annotation, the observation window is the padded history
    ending at the window's first step. Trailing short windows are dropped.
    """
    items: list[TrainItem] = []
    for traj in trajs:
        annos = annotate_trajectory(traj, ann_cfg, vocab)
        obs_seq = [obs for obs, _ in traj.steps]
        closed = False
        for (start, end), iid in annos:
            acts = [act for _, act in traj.steps[start:end]]
            chunk = actions_to_chunk(acts, prev_closed=closed)
            if chunk.shape[0] == model.C:
                window = pad_history(obs_seq[: start + 1], model.H)
                arr = np.stack([obs_to_vec(o, model.object_names) for o in window])
                items.append(TrainItem(obs_window=arr, instr_id=iid, chunk=chunk))
            closed = chunk[-1, 3] > 0
    return items


def save_model(model: PolicyModel, cb: MotionCodebook, path: str) -> None:
    meta = {
        "kind": "policy",
        "obs_dim": model.obs_dim,
        "object_names": list(model.object_names),
        "H": model.H,
        "C": model.C,
        "act_dim": model.act_dim,
        "d_obs": model.d_obs,
        "d_attn": model.d_attn,
        "d_time": model.d_time,
        "hidden": model.hidden,
        "motion_dim": model.motion_dim,
        "vocab_id": model.vocab_id,
        "seed": model.seed,
        "cb_seed": cb.rng_seed,
    }
    arrays = dict(model.params)
    arrays["codebook"] = cb.entries
    _binio.save_arrays(path, meta, arrays)


def load_model(path: str) -> tuple[PolicyModel, MotionCodebook]:
    meta, arrays = _binio.load_arrays(path)
    if meta.get("kind") != "policy":
        raise _binio.BadContainer(f"{path!r} is not a policy checkpoint")
    cb = MotionCodebook(
        vocab_id=meta["vocab_id"],
        dim=int(meta["motion_dim"]),
        entries=arrays.pop("codebook"),
        rng_seed=int(meta.get("cb_seed", 0)),
    )
    model = PolicyModel(
        obs_dim=int(meta["obs_dim"]),
        object_names=tuple(meta["object_names"]),
        H=int(meta["H"]),
        C=int(meta["C"]),
        act_dim=int(meta["act_dim"]),
        d_obs=int(meta["d_obs"]),
        d_attn=int(meta["d_attn"]),
        d_time=int(meta["d_time"]),
        hidden=int(meta["hidden"]),
        motion_dim=int(meta["motion_dim"]),
        vocab_id=meta["vocab_id"],
        seed=int(meta["seed"]),
        params=arrays,
    )
    return model, cb


def save_loss_curve(curve: list[float], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,loss\n")
        for i, loss in enumerate(curve):
            f.write(f"{i},{loss:.9g}\n")
