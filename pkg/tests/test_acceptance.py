"""End-to-end acceptance checks, one test per criterion.

Each test asserts a headline property of the finished system at its stated
tolerance: vocabulary layout, oracle equivalence of the annotation pipeline,
diffusion-policy correctness, instruction-conditioned sampling, the gain from
dual-process correction, codebook ablation ordering and discriminativeness,
lifelong improvement, control-loop conformance, pipeline determinism, and the
intervention-service contract the browser UI builds on. The terminal summary
hook prints one pass/fail line per criterion.
"""

import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

import motionloop
from helpers import brute_annotate, make_window_trajectory
from motionloop.annotate import (
    FLAT_TEXTS,
    GripperState,
    annotate_trajectory,
)
from motionloop.cli import main as cli_main
from motionloop.codebook import (
    TrigramEmbedder,
    init_codebook,
    init_frozen_codebook,
    mean_offdiagonal,
    similarity_matrix,
)
from motionloop.control import DiffusionChunkPolicy, run_episode, verify_episode
from motionloop.lifecycle import (
    LifelongConfig,
    evaluate,
    lifelong_iteration,
    pairs_from_trajectories,
    train_predictor,
)
from motionloop.policy import (
    AdamState,
    NoiseSchedule,
    RowAdamState,
    TrainConfig,
    TrainItem,
    build_training_items,
    forward_diffuse,
    init_model,
    loss_and_grads,
    make_schedule,
    obs_to_vec,
    sample_chunk,
    train_policy,
    train_step,
)
from motionloop.server import ServeConfig, Session, build_app
from motionloop.sim import (
    FaultyPredictor,
    InstructionFollowPolicy,
    OracleCorrector,
    OraclePredictor,
    TabletopEnv,
    episode_seed,
    make_instruction_dataset,
    make_reach_task,
    make_task,
)
from motionloop.trajdata import Observation, save_trajectories

STATE_SCHEMA = json.loads(
    (Path(motionloop.__file__).parent / "schemas" / "api_state.schema.json").read_text()
)


def test_criterion_01_vocabulary_counts(vocab, flat_vocab):
    assert len(vocab) == 37
    assert len({e.text for e in vocab.entries}) == 37
    assert [e.instr_id for e in vocab.entries] == list(range(37))
    assert len(flat_vocab) == 8
    assert tuple(e.text for e in flat_vocab.entries) == FLAT_TEXTS


def test_criterion_02_annotation_matches_brute_force(vocab, ann_cfg):
    rng = np.random.default_rng(4242)
    windows = 0
    for _ in range(220):
        traj = make_window_trajectory(rng, ann_cfg, n_windows=5)
        got = [iid for _, iid in annotate_trajectory(traj, ann_cfg, vocab)]
        want = brute_annotate(traj, vocab, ann_cfg.window, ann_cfg.threshold)
        assert got == want
        windows += len(want)
    assert windows >= 1000


def test_criterion_03_diffusion_correctness(vocab):
    # (a) analytic gradients against central finite differences
    sched = make_schedule(K=10)
    cb = init_codebook(vocab, dim=5, seed=2)
    model = init_model((), cb, seed=3, H=3, C=2, d_obs=6, d_attn=4, d_time=4, hidden=8)
    rng = np.random.default_rng(7)
    for name, arr in model.params.items():
        model.params[name] = rng.uniform(-0.4, 0.4, size=arr.shape)
    items = [
        TrainItem(
            obs_window=rng.uniform(-0.5, 0.5, size=(3, model.obs_dim)),
            instr_id=int(rng.integers(0, len(vocab))),
            chunk=rng.uniform(-1.0, 1.0, size=(2, 4)),
        )
        for _ in range(3)
    ]
    ks = [int(rng.integers(0, sched.K)) for _ in items]
    eps_list = [rng.standard_normal((2, 4)) for _ in items]
    _, grads, row_grads = loss_and_grads(model, cb, items, sched, ks, eps_list)

    # step keeps central differences above the float64 roundoff floor for
    # the smallest gradient entries (|g| ~ 1e-6)
    h = 1e-5
    worst = 0.0

    def fd(read, write):
        orig = read()
        write(orig + h)
        lp, _, _ = loss_and_grads(model, cb, items, sched, ks, eps_list)
        write(orig - h)
        lm, _, _ = loss_and_grads(model, cb, items, sched, ks, eps_list)
        write(orig)
        return (lp - lm) / (2.0 * h)

    for name, g in grads.items():
        arr = model.params[name]
        for idx in np.ndindex(arr.shape):
            num = fd(lambda: arr[idx], lambda v: arr.__setitem__(idx, v))
            denom = max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, abs(num - g[idx]) / denom)
    for iid, g in row_grads.items():
        for j in range(cb.dim):
            num = fd(
                lambda: cb.entries[iid, j],
                lambda v: cb.entries.__setitem__((iid, j), v),
            )
            denom = max(abs(num), abs(g[j]), 1e-8)
            worst = max(worst, abs(num - g[j]) / denom)
    assert worst < 1e-4

    # (b) noising limits are exact
    keep = NoiseSchedule(
        K=1, beta=np.array([0.0]), alpha=np.array([1.0]), alpha_bar=np.array([1.0])
    )
    destroy = NoiseSchedule(
        K=1, beta=np.array([1.0]), alpha=np.array([0.0]), alpha_bar=np.array([0.0])
    )
    a0 = rng.uniform(-1.0, 1.0, size=(2, 4))
    eps = rng.standard_normal((2, 4))
    assert np.array_equal(forward_diffuse(a0, 0, eps, keep), a0)
    assert np.array_equal(forward_diffuse(a0, 0, eps, destroy), eps)

    # (c) overfits a single item to loss < 0.05 within 500 steps
    full_sched = make_schedule()
    for seed in (2, 3, 4):
        cb2 = init_codebook(vocab, dim=32, seed=seed)
        model2 = init_model((), cb2, seed=seed + 1)
        obs = Observation(eef_pos=(0.05, -0.03, 0.12), gripper_width=1.0, object_poses={})
        window = np.tile(obs_to_vec(obs, ()), (model2.H, 1))
        chunk_rng = np.random.default_rng(seed + 10)
        chunk = np.clip(chunk_rng.uniform(-0.8, 0.8, size=(4, 4)), -1.0, 1.0)
        batch = [TrainItem(obs_window=window, instr_id=3, chunk=chunk)] * 128
        step_rng = np.random.default_rng(seed + 20)
        opt = AdamState(model2.params)
        row_opt = RowAdamState(cb2)
        best = float("inf")
        for step in range(500):
            lr = 5e-3 if step < 250 else 1e-3
            loss = train_step(model2, cb2, batch, full_sched, lr, step_rng, opt, row_opt)
            best = min(best, loss)
            if best < 0.05:
                break
        assert best < 0.05, f"seed {seed}: best loss {best:.4f}"


def test_criterion_04_instruction_following(vocab, ann_cfg):
    trajs = make_instruction_dataset(600, vocab, ann_cfg, seed=100)
    cb = init_codebook(vocab, dim=32, seed=11)
    model = init_model((), cb, seed=12)
    items = build_training_items(trajs, vocab, ann_cfg, model)
    sched = make_schedule()
    curve = train_policy(
        model, cb, items, sched, TrainConfig(epochs=80, lr=1e-3, batch_size=32, seed=13)
    )
    assert curve[-1] < 0.5 * curve[0]

    right = vocab.id_of_form((("x", "+"),), GripperState.OPEN)
    left = vocab.id_of_form((("x", "-"),), GripperState.OPEN)
    assert right is not None and left is not None
    agree = flips = 0
    for i in range(200):
        srng = np.random.default_rng([600, i])
        obs = Observation(
            eef_pos=(
                float(srng.uniform(-0.18, 0.18)),
                float(srng.uniform(-0.18, 0.18)),
                float(srng.uniform(0.02, 0.28)),
            ),
            gripper_width=1.0,
            object_poses={},
        )
        cr = sample_chunk(model, cb, [obs], right, sched, np.random.default_rng([700, i]))
        cl = sample_chunk(model, cb, [obs], left, sched, np.random.default_rng([700, i]))
        dx_r = float(cr[:, 0].mean())
        dx_l = float(cl[:, 0].mean())
        agree += int(dx_r > 0.0)
        flips += int(dx_r > 0.0 and dx_l < 0.0)
    assert agree >= 190, f"sign agreement {agree}/200"
    assert flips >= 190, f"left/right flips {flips}/200"


@pytest.fixture(scope="module")
def dual_process(vocab, ann_cfg):
    task = make_task("PickPlace")
    policy = InstructionFollowPolicy(task, vocab, ann_cfg)

    def run(p, with_corrector, episodes, base):
        mcm = OracleCorrector(task, vocab, ann_cfg) if with_corrector else None
        records = []
        for i in range(episodes):
            oracle = OraclePredictor(task, vocab, ann_cfg)
            mpm = FaultyPredictor(oracle, p, len(vocab), np.random.default_rng([base, i]))
            records.append(
                run_episode(TabletopEnv(task), mpm, mcm, policy, 10, episode_seed(base, i))
            )
        rate = sum(int(r.success) for r in records) / episodes
        return rate, records, mcm

    with_rate, with_records, _ = run(0.3, True, 200, 777)
    without_rate, without_records, _ = run(0.3, False, 200, 777)
    _, clean_records, clean_mcm = run(0.0, True, 50, 777)
    return {
        "with_rate": with_rate,
        "without_rate": without_rate,
        "clean_correct_calls": clean_mcm.correct_calls,
        "records": with_records + without_records + clean_records,
    }


def test_criterion_05_dual_process_gain(dual_process):
    gain = dual_process["with_rate"] - dual_process["without_rate"]
    assert gain >= 0.15, (
        f"corrected {dual_process['with_rate']:.3f} vs "
        f"uncorrected {dual_process['without_rate']:.3f}"
    )
    assert dual_process["clean_correct_calls"] == 0


@pytest.fixture(scope="module")
def ablation(vocab, ann_cfg):
    trajs = make_instruction_dataset(1200, vocab, ann_cfg, seed=200, include_pairs=True)
    sched = make_schedule()
    tc = TrainConfig(epochs=60, lr=2e-3, batch_size=64, seed=13)

    cb_on = init_codebook(vocab, dim=32, seed=11)
    model_on = init_model((), cb_on, seed=12)
    train_policy(model_on, cb_on, build_training_items(trajs, vocab, ann_cfg, model_on), sched, tc)

    cb_off = init_frozen_codebook(vocab, TrigramEmbedder(dim=32))
    model_off = init_model((), cb_off, seed=12)
    train_policy(
        model_off, cb_off, build_training_items(trajs, vocab, ann_cfg, model_off), sched, tc
    )

    task = make_reach_task(delta_succ=0.035, max_steps=60)

    def factory_for(mdl, cbk, with_corrector):
        def factory(t):
            mpm = FaultyPredictor(
                OraclePredictor(t, vocab, ann_cfg), 0.4, len(vocab), np.random.default_rng([900, 2])
            )
            mcm = OracleCorrector(t, vocab, ann_cfg) if with_corrector else None
            return mpm, mcm, DiffusionChunkPolicy(mdl, cbk, sched)

        return factory

    rates = {}
    for corr in (False, True):
        for flag, (mdl, cbk) in (("on", (model_on, cb_on)), ("off", (model_off, cb_off))):
            report = evaluate(
                [task], factory_for(mdl, cbk, corr), trials=80, seed=900, K_budget=4
            )
            rates[(corr, flag)] = report.mean_rate
    return {"rates": rates, "trained_cb": cb_on}


def test_criterion_06_codebook_ablation_ordering(ablation):
    r = ablation["rates"]
    chain = [r[(False, "off")], r[(False, "on")], r[(True, "off")], r[(True, "on")]]
    assert chain[0] <= chain[1] <= chain[2] <= chain[3], chain
    assert chain[3] > max(chain[:3]), chain


def test_criterion_07_codebook_discriminativeness(ablation, vocab):
    trained = mean_offdiagonal(similarity_matrix(ablation["trained_cb"].entries))
    frozen = init_frozen_codebook(vocab, TrigramEmbedder())
    baseline = mean_offdiagonal(similarity_matrix(frozen.entries))
    assert trained < baseline, f"trained {trained:.4f} vs frozen {baseline:.4f}"


def test_criterion_08_lifelong_improvement(vocab, ann_cfg):
    task = make_task("PickPlace")
    policy = InstructionFollowPolicy(task, vocab, ann_cfg)
    oracle = OraclePredictor(task, vocab, ann_cfg)
    demos = []
    for i in range(60):
        rec = run_episode(TabletopEnv(task), oracle, None, policy, 35, episode_seed(5000, i))
        assert rec.success
        demos.append(rec.trajectory)
    cfg = LifelongConfig(
        vocab=vocab,
        ann_cfg=ann_cfg,
        expert_trajs=demos,
        expert_count=20,
        K_budget=35,
        seed=3000,
        eval_seed=10_000,
        eval_trials=50,
    )
    p0 = train_predictor(
        pairs_from_trajectories(demos[:1], vocab, ann_cfg, task),
        len(vocab),
        task,
        cfg.predictor_cfg,
    )
    mcm = OracleCorrector(task, vocab, ann_cfg)
    reports = {}
    for rollouts in (0, 10, 30):
        _, report = lifelong_iteration(TabletopEnv(task), p0, mcm, policy, rollouts, cfg)
        reports[rollouts] = report

    success = {r: reports[r].mean_rate for r in reports}
    accuracy = {r: reports[r].extras["instruction_accuracy"] for r in reports}
    expert_acc = {r: reports[r].extras["expert_accuracy"] for r in reports}
    assert success[0] <= success[10] <= success[30], success
    assert accuracy[0] <= accuracy[10] <= accuracy[30], accuracy
    assert accuracy[30] > accuracy[0], accuracy
    for r in (10, 30):
        assert expert_acc[0] - expert_acc[r] <= 0.05, expert_acc


def test_criterion_09_control_loop_conformance(dual_process):
    for rec in dual_process["records"]:
        assert verify_episode(rec) == []
        assert rec.total_steps <= rec.K_budget * rec.C
        for period in rec.periods:
            period.decision.check()
            d = period.decision
            if d.failure_flag:
                assert d.m_a is not None and d.m_d == d.m_a
            else:
                assert d.m_a is None and d.m_d == d.m_i


def test_criterion_10_pipeline_determinism(tmp_path, vocab, ann_cfg):
    def pipeline(root):
        root.mkdir()
        trajs = make_instruction_dataset(40, vocab, ann_cfg, seed=321)
        tpath = str(root / "trajs.jsonl")
        save_trajectories(trajs, tpath)
        assert cli_main(["annotate", tpath, str(root / "ann.jsonl")]) == 0
        assert (
            cli_main(
                [
                    "train-policy",
                    tpath,
                    "--out",
                    str(root / "model.json"),
                    "--epochs",
                    "2",
                    "--dim",
                    "8",
                    "--seed",
                    "4",
                    "--loss-curve",
                    str(root / "curve.csv"),
                ]
            )
            == 0
        )
        assert (
            cli_main(
                [
                    "eval",
                    "--tasks",
                    "Reach",
                    "--trials",
                    "2",
                    "--seed",
                    "8",
                    "--k-budget",
                    "4",
                    "--policy",
                    str(root / "model.json"),
                    "--out",
                    str(root / "table.csv"),
                ]
            )
            == 0
        )
        return [
            "trajs.jsonl",
            "ann.jsonl",
            "ann.jsonl.manifest.json",
            "model.json",
            "curve.csv",
            "table.csv",
        ]

    names = pipeline(tmp_path / "a")
    pipeline(tmp_path / "b")
    for name in names:
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_criterion_11_intervention_service_contract(vocab):
    session = Session(
        ServeConfig(task="Reach", step_gate=True, seed=0, k_budget=14, period_seconds=30.0)
    )
    try:
        with TestClient(build_app(session)) as client:
            jsonschema.validate(client.get("/api/state").json(), STATE_SCHEMA)

            body = client.get("/api/vocab").json()
            assert body["id"] == vocab.id
            assert [e["text"] for e in body["entries"]] == [e.text for e in vocab.entries]
            assert [e["id"] for e in body["entries"]] == [e.instr_id for e in vocab.entries]

            assert client.post("/api/control", json={"command": "start"}).status_code == 200
            assert session.wait_for(
                lambda s: s["session"]["status"] == "paused" and s["at_decision"]
            )
            snap = session.snapshot()
            jsonschema.validate(snap, STATE_SCHEMA)
            target = (snap["decision"]["m_i"] + 2) % len(vocab)
            resp = client.post(
                "/api/intervention",
                json={"failure": True, "semantic": "redirect", "instruction_id": target},
            )
            assert resp.status_code == 200 and resp.json()["accepted"] is True
            assert client.post("/api/control", json={"command": "resume"}).status_code == 200
            assert session.wait_for(
                lambda s: s["at_decision"] and s["decision"]["period"] == 1
            )
            state = client.get("/api/state").json()
            jsonschema.validate(state, STATE_SCHEMA)
            assert state["history"][0]["m_d"] == target
            assert state["history"][0]["intervened"] is True
    finally:
        session.shutdown()
