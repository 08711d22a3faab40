"""Command line entry points.

Every subcommand reads an optional JSON config file, with explicit flags
taking precedence over config values over built-in defaults. Exit codes:
0 success, 2 configuration or usage error, 1 runtime failure. Errors are
printed to stderr as one line with a machine-parsable prefix
(``error: config:`` or ``error: runtime:``).
"""

import argparse
import json
import sys

import numpy as np

__all__ = ["main", "build_parser"]


class ConfigError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _pick(args: argparse.Namespace, cfg: dict, key: str, default):
    """Flag > config > default. Flags parse with default=None so an unset
    flag is distinguishable from an explicit value."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in cfg:
        return cfg[key]
    return default


def _parse_axes(spec) -> tuple[str, ...]:
    if isinstance(spec, (list, tuple)):
        return tuple(str(a) for a in spec)
    return tuple(a.strip() for a in str(spec).split(",") if a.strip())


def _ann_config(args: argparse.Namespace, cfg: dict):
    from .annotate import AnnotationConfig, ConfigInvalid

    kwargs = {}
    axes = _pick(args, cfg, "axes", None)
    if axes is not None:
        kwargs["axes"] = _parse_axes(axes)
    window = _pick(args, cfg, "window", None)
    if window is not None:
        kwargs["window"] = int(window)
    threshold = _pick(args, cfg, "threshold", None)
    if threshold is not None:
        kwargs["threshold"] = float(threshold)
    ann = AnnotationConfig(**kwargs)
    try:
        ann.validate()
    except ConfigInvalid as exc:
        raise ConfigError(str(exc)) from exc
    return ann


def _vocab(args: argparse.Namespace, cfg: dict, ann):
    from .annotate import build_vocabulary

    mode = _pick(args, cfg, "mode", "combined")
    if mode not in ("combined", "flat"):
        raise ConfigError(f"unknown vocabulary mode {mode!r}")
    return build_vocabulary(ann, mode=mode)


# -- subcommand implementations -------------------------------------------


def _cmd_vocab(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    if args.json:
        out = [
            {
                "id": e.instr_id,
                "text": e.text,
                "directions": [[a, s] for a, s in e.directions],
                "gripper": e.gripper.value if e.gripper else None,
            }
            for e in vocab.entries
        ]
        print(json.dumps({"vocab_id": vocab.id, "mode": vocab.mode, "entries": out}, indent=2))
    else:
        for e in vocab.entries:
            print(f"{e.instr_id}\t{e.text}")
    return 0


def _cmd_annotate(args: argparse.Namespace) -> int:
    from .annotate import annotate_trajectory, config_hash, save_annotations
    from .trajdata import DatasetManifest, load_trajectories, save_manifest

    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    trajs = load_trajectories(args.input)
    rows = []
    counts: dict[str, int] = {}
    for traj in trajs:
        counts[traj.source.value] = counts.get(traj.source.value, 0) + 1
        for span, iid in annotate_trajectory(traj, ann, vocab):
            rows.append((traj.id, span, iid))
    save_annotations(rows, vocab, args.output)
    manifest_path = args.manifest or args.output + ".manifest.json"
    save_manifest(
        DatasetManifest(counts=counts, vocab=vocab.id, annotation_cfg_hash=config_hash(ann)),
        manifest_path,
    )
    print(json.dumps({"trajectories": len(trajs), "windows": len(rows), "manifest": manifest_path}))
    return 0


def _cmd_train_policy(args: argparse.Namespace) -> int:
    from .codebook import init_codebook
    from .policy import (
        TrainConfig,
        build_training_items,
        init_model,
        make_schedule,
        save_loss_curve,
        save_model,
        train_policy,
    )
    from .trajdata import load_trajectories

    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    seed = int(_pick(args, cfg, "seed", 0))
    dim = int(_pick(args, cfg, "dim", 32))
    objects = tuple(cfg.get("objects", ()))

    trajs = load_trajectories(args.input)
    cb = init_codebook(vocab, dim=dim, seed=seed)
    model = init_model(
        objects,
        cb,
        seed=seed + 1,
        H=int(_pick(args, cfg, "history", 5)),
        C=int(_pick(args, cfg, "chunk", 4)),
    )
    items = build_training_items(trajs, vocab, ann, model)
    if not items:
        raise ConfigError("no training items (trajectories shorter than one chunk?)")
    tc = TrainConfig(
        epochs=int(_pick(args, cfg, "epochs", 30)),
        lr=float(_pick(args, cfg, "lr", 3e-4)),
        batch_size=int(_pick(args, cfg, "batch-size", 32)),
        seed=seed,
    )
    curve = train_policy(model, cb, items, make_schedule(), tc)
    save_model(model, cb, args.out)
    if args.loss_curve:
        save_loss_curve(curve, args.loss_curve)
    print(
        json.dumps(
            {
                "items": len(items),
                "epochs": tc.epochs,
                "initial_loss": round(curve[0], 6),
                "final_loss": round(curve[-1], 6),
                "model": args.out,
            }
        )
    )
    return 0


def _cmd_train_predictor(args: argparse.Namespace) -> int:
    from .lifecycle import PredictorConfig, pairs_from_trajectories, save_predictor, train_predictor
    from .sim import make_task
    from .trajdata import load_trajectories

    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    task = make_task(_pick(args, cfg, "task", "PickPlace"))
    trajs = load_trajectories(args.input)
    pairs = pairs_from_trajectories(trajs, vocab, ann, task)
    pc = PredictorConfig(
        epochs=int(_pick(args, cfg, "epochs", PredictorConfig.epochs)),
        lr=float(_pick(args, cfg, "lr", PredictorConfig.lr)),
        l2=float(_pick(args, cfg, "l2", PredictorConfig.l2)),
        seed=int(_pick(args, cfg, "seed", 0)),
    )
    predictor = train_predictor(pairs, len(vocab), task, pc)
    save_predictor(predictor, args.out)
    print(
        json.dumps(
            {
                "pairs": len(pairs),
                "train_accuracy": round(predictor.train_accuracy, 4),
                "predictor": args.out,
            }
        )
    )
    return 0


def _build_components(args: argparse.Namespace, cfg: dict, task, vocab, ann, seed: int):
    """Shared predictor/corrector/policy wiring for rollout and eval."""
    from .control import DiffusionChunkPolicy
    from .lifecycle import load_predictor
    from .policy import load_model, make_schedule
    from .sim import (
        FaultyPredictor,
        InstructionFollowPolicy,
        OracleCorrector,
        OraclePredictor,
        SimConfig,
    )

    sim_cfg = SimConfig()
    pred_spec = str(_pick(args, cfg, "predictor", "oracle"))
    if pred_spec == "oracle":
        mpm = OraclePredictor(task, vocab, ann, sim_cfg)
    elif pred_spec == "faulty":
        mpm = OraclePredictor(task, vocab, ann, sim_cfg)
    else:
        mpm = load_predictor(pred_spec)
        mpm.bind_task(task)
    fault_p = float(_pick(args, cfg, "fault-p", 0.3))
    if pred_spec == "faulty":
        mpm = FaultyPredictor(mpm, fault_p, len(vocab), np.random.default_rng([seed, 2]))

    corr_spec = str(_pick(args, cfg, "corrector", "none"))
    if corr_spec == "oracle":
        mcm = OracleCorrector(task, vocab, ann, sim_cfg)
    elif corr_spec == "none":
        mcm = None
    else:
        raise ConfigError(f"unknown corrector {corr_spec!r}")

    pol_spec = str(_pick(args, cfg, "policy", "scripted"))
    if pol_spec == "scripted":
        policy = InstructionFollowPolicy(task, vocab, ann, sim_cfg)
    else:
        model, cb = load_model(pol_spec)
        policy = DiffusionChunkPolicy(model, cb, make_schedule())
    return mpm, mcm, policy, sim_cfg


def _cmd_rollout(args: argparse.Namespace) -> int:
    from .control import run_episode, save_episodes
    from .lifecycle import CorrectionSource, episodes_to_corrections, save_corrections
    from .sim import TabletopEnv, episode_seed, make_task

    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    task = make_task(_pick(args, cfg, "task", "Reach"))
    seed = int(_pick(args, cfg, "seed", 0))
    episodes = int(_pick(args, cfg, "episodes", 1))
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    budget = int(_pick(args, cfg, "k-budget", 12))
    mpm, mcm, policy, sim_cfg = _build_components(args, cfg, task, vocab, ann, seed)

    records = []
    for i in range(episodes):
        env = TabletopEnv(task, sim_cfg)
        records.append(run_episode(env, mpm, mcm, policy, budget, episode_seed(seed, i)))
    if args.out:
        save_episodes(records, args.out)
    if args.corrections:
        save_corrections(
            episodes_to_corrections(records, CorrectionSource.OFFLINE_ANNOTATION),
            args.corrections,
        )
    if args.trajectories:
        from .trajdata import save_trajectories

        save_trajectories([r.trajectory for r in records], args.trajectories)
    successes = sum(int(r.success) for r in records)
    print(json.dumps({"episodes": episodes, "successes": successes, "rate": successes / episodes}))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    from .lifecycle import evaluate, save_eval_table
    from .sim import FaultConfig, make_task

    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    seed = int(_pick(args, cfg, "seed", 0))
    trials = int(_pick(args, cfg, "trials", 20))
    budget = int(_pick(args, cfg, "k-budget", 12))
    task_names = _parse_axes(_pick(args, cfg, "tasks", "Reach,PickPlace,StackTwo"))
    tasks = [make_task(n) for n in task_names]

    def factory(task):
        mpm, mcm, policy, _ = _build_components(args, cfg, task, vocab, ann, seed)
        return mpm, mcm, policy

    report = evaluate(tasks, factory, trials=trials, seed=seed, K_budget=budget, faults=FaultConfig())
    label = str(_pick(args, cfg, "label", "eval"))
    if args.out:
        save_eval_table({label: report}, args.out)
    print(
        json.dumps(
            {
                "per_task": {k: round(v, 4) for k, v in sorted(report.per_task.items())},
                "mean_rate": round(report.mean_rate, 4),
                "fingerprint": report.fingerprint,
            }
        )
    )
    return 0


def _cmd_lifelong(args: argparse.Namespace) -> int:
    from .lifecycle import (
        LifelongConfig,
        lifelong_iteration,
        pairs_from_trajectories,
        save_lifelong_curve,
        train_predictor,
    )
    from .sim import InstructionFollowPolicy, OracleCorrector, SimConfig, TabletopEnv, make_task
    from .trajdata import load_trajectories

    cfg = _load_config(args.config)
    ann = _ann_config(args, cfg)
    vocab = _vocab(args, cfg, ann)
    task = make_task(_pick(args, cfg, "task", "PickPlace"))
    seed = int(_pick(args, cfg, "seed", 0))
    sim_cfg = SimConfig()
    expert = load_trajectories(args.expert)
    init_experts = int(_pick(args, cfg, "init-experts", 1))
    rollout_counts = [int(x) for x in _parse_axes(_pick(args, cfg, "rollouts", "0,10,30"))]

    lcfg = LifelongConfig(
        vocab=vocab,
        ann_cfg=ann,
        expert_trajs=expert,
        expert_count=int(_pick(args, cfg, "expert-count", 20)),
        K_budget=int(_pick(args, cfg, "k-budget", 35)),
        seed=seed,
        eval_trials=int(_pick(args, cfg, "eval-trials", 30)),
        sim_cfg=sim_cfg,
    )
    baseline_pairs = pairs_from_trajectories(expert[:init_experts], vocab, ann, task)
    p0 = train_predictor(baseline_pairs, len(vocab), task, lcfg.predictor_cfg)
    policy = InstructionFollowPolicy(task, vocab, ann, sim_cfg)
    mcm = OracleCorrector(task, vocab, ann, sim_cfg)

    points = []
    for r in rollout_counts:
        env = TabletopEnv(task, sim_cfg)
        _, report = lifelong_iteration(env, p0, mcm, policy, r, lcfg)
        points.append((r, report.mean_rate, report.extras["instruction_accuracy"]))
    if args.out:
        save_lifelong_curve(points, args.out)
    print(
        json.dumps(
            {
                "curve": [
                    {"rollouts": r, "success_rate": round(s, 4), "instruction_accuracy": round(a, 4)}
                    for r, s, a in points
                ]
            }
        )
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import ServeConfig, serve_intervention

    cfg = _load_config(args.config)
    sc = ServeConfig(
        task=str(_pick(args, cfg, "task", "Reach")),
        mode=str(_pick(args, cfg, "mode", "combined")),
        k_budget=int(_pick(args, cfg, "k-budget", 12)),
        seed=int(_pick(args, cfg, "seed", 0)),
        step_gate=bool(args.step_gate or cfg.get("step-gate", False)),
        period_seconds=float(_pick(args, cfg, "period", 2.0)),
        predictor=str(_pick(args, cfg, "predictor", "oracle")),
        fault_p=float(_pick(args, cfg, "fault-p", 0.3)),
        corrector=str(_pick(args, cfg, "corrector", "none")),
        session_id=str(_pick(args, cfg, "session-id", "default")),
        episodes_out=_pick(args, cfg, "episodes-out", None),
        corrections_out=_pick(args, cfg, "corrections-out", None),
        static_dir=_pick(args, cfg, "static", None),
        host=str(_pick(args, cfg, "host", "127.0.0.1")),
        port=int(_pick(args, cfg, "port", 8000)),
    )
    try:
        sc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    multi = bool(args.multi_session or cfg.get("multi-session", False))
    serve_intervention(sc, multi_session=multi)
    return 0


def _cmd_codebook_report(args: argparse.Namespace) -> int:
    from ._binio import BadContainer
    from .codebook import load_codebook, mean_offdiagonal, similarity_matrix

    try:
        cb = load_codebook(args.input)
    except BadContainer:
        # policy checkpoints embed their codebook; report that one
        from .policy import load_model

        _, cb = load_model(args.input)
    sim = similarity_matrix(cb.entries)
    norms = np.linalg.norm(cb.entries, axis=1)
    print(
        json.dumps(
            {
                "vocab_id": cb.vocab_id,
                "entries": int(cb.entries.shape[0]),
                "dim": cb.dim,
                "trainable": cb.trainable,
                "mean_offdiagonal_similarity": round(float(mean_offdiagonal(sim)), 6),
                "row_norm_min": round(float(norms.min()), 6),
                "row_norm_max": round(float(norms.max()), 6),
            },
            indent=2,
        )
    )
    return 0


# -- parser ----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int, help="base RNG seed")


def _add_ann_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, help="annotation window length in steps")
    p.add_argument("--threshold", type=float, help="dominant-direction threshold")
    p.add_argument("--axes", help="comma-separated axis names")
    p.add_argument("--mode", choices=["combined", "flat"], help="vocabulary mode")


def _add_component_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--predictor", help="oracle | faulty | path to a saved predictor")
    p.add_argument("--fault-p", type=float, help="corruption probability for the faulty predictor")
    p.add_argument("--corrector", help="none | oracle")
    p.add_argument("--policy", help="scripted | path to a saved policy model")
    p.add_argument("--k-budget", type=int, help="max instruction periods per episode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionloop",
        description="Motion-instruction annotation, diffusion policy, and dual-process control tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", help="print the instruction vocabulary")
    _add_common(p)
    _add_ann_flags(p)
    p.add_argument("--json", action="store_true", help="emit JSON instead of id/text lines")
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("annotate", help="annotate trajectories with motion instructions")
    _add_common(p)
    _add_ann_flags(p)
    p.add_argument("input", help="trajectories JSONL")
    p.add_argument("output", help="annotations JSONL to write")
    p.add_argument("--manifest", help="manifest path (default: OUTPUT.manifest.json)")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("train-policy", help="train the instruction-conditioned diffusion policy")
    _add_common(p)
    _add_ann_flags(p)
    p.add_argument("input", help="trajectories JSONL")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dim", type=int, help="codebook feature dimension")
    p.add_argument("--history", type=int, help="observation history length H")
    p.add_argument("--chunk", type=int, help="action chunk length C")
    p.add_argument("--loss-curve", help="CSV path for the per-epoch loss curve")
    p.set_defaults(func=_cmd_train_policy)

    p = sub.add_parser("train-predictor", help="train the instruction predictor")
    _add_common(p)
    _add_ann_flags(p)
    p.add_argument("input", help="trajectories JSONL")
    p.add_argument("--out", required=True, help="predictor file to write")
    p.add_argument("--task", help="task name the features are computed against")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.set_defaults(func=_cmd_train_predictor)

    p = sub.add_parser("rollout", help="run closed-loop episodes and save the records")
    _add_common(p)
    _add_ann_flags(p)
    _add_component_flags(p)
    p.add_argument("--task", help="task name")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", help="episodes JSONL to write")
    p.add_argument("--corrections", help="corrections JSONL to write")
    p.add_argument("--trajectories", help="trajectories JSONL to write, trainable by the train subcommands")
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("eval", help="seeded success-rate evaluation over tasks")
    _add_common(p)
    _add_ann_flags(p)
    _add_component_flags(p)
    p.add_argument("--tasks", help="comma-separated task names")
    p.add_argument("--trials", type=int)
    p.add_argument("--label", help="row label in the output table")
    p.add_argument("--out", help="CSV path for the results table")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("lifelong", help="self-improvement iterations from corrected rollouts")
    _add_common(p)
    _add_ann_flags(p)
    p.add_argument("--expert", required=True, help="expert demonstration trajectories JSONL")
    p.add_argument("--task", help="task name")
    p.add_argument("--rollouts", help="comma-separated rollout counts, each an independent run")
    p.add_argument("--init-experts", type=int, help="expert demos used for the baseline predictor")
    p.add_argument("--expert-count", type=int, help="expert demos mixed into each retraining")
    p.add_argument("--k-budget", type=int)
    p.add_argument("--eval-trials", type=int)
    p.add_argument("--out", help="CSV path for the learning curve")
    p.set_defaults(func=_cmd_lifelong)

    p = sub.add_parser("serve", help="run the human intervention service")
    _add_common(p)
    p.add_argument("--task")
    p.add_argument("--mode", choices=["combined", "flat"])
    p.add_argument("--k-budget", type=int)
    p.add_argument("--step-gate", action="store_true", help="pause before every chunk")
    p.add_argument("--period", type=float, help="seconds each decision stays open in paced mode")
    p.add_argument("--predictor", help="oracle | faulty")
    p.add_argument("--fault-p", type=float)
    p.add_argument("--corrector", help="none | oracle")
    p.add_argument("--session-id")
    p.add_argument("--multi-session", action="store_true", help="create sessions on first use")
    p.add_argument("--episodes-out", help="episodes JSONL flushed after each episode")
    p.add_argument("--corrections-out", help="corrections JSONL flushed after each episode")
    p.add_argument("--static", help="directory with the built UI bundle to host at /")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("codebook-report", help="similarity statistics of a saved codebook")
    _add_common(p)
    p.add_argument("input", help="codebook file or policy checkpoint")
    p.set_defaults(func=_cmd_codebook_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: runtime: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
