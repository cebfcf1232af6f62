"""Acceptance criteria 1-9, one test each.

Every test records a PASS/FAIL line (printed at the end of the run) before it
asserts. Criteria 5-8 read the cached ablation grid from ``acceptance_cache``.
"""

import json
import time

import numpy as np
import pytest

from acceptance_cache import cached_ablation
from conftest import ACCEPTANCE
from lad import config as C
from lad.agent.batch import build_batch
from lad.cli import EXIT_OK, main
from lad.evaluation import assert_identities, score_episode
from lad.pipeline import build_model, make_codebook, make_dataset, make_imaginations
from lad.selftest import check_kmeans, check_metrics, check_planner, random_trajectories, run_selftest
from lad.training import TrainConfig, step_losses, teacher_states, train

# pinned tolerances
SELFTEST_SECONDS = 120.0
CAPACITY_DSAP, CAPACITY_ITERS, CAPACITY_SECONDS = 0.05, 2000, 600.0
CHANCE_MARGIN, FULL_SECONDS = 0.20, 3600.0
MODULE_MARGIN, CODEBOOK_MARGIN = 0.02, 0.01
APPROX = 0.01        # "greater than or approximately equal" slack for textual vs classifier
TREND_MARGIN = 0.03


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


@pytest.fixture(scope="module")
def grid():
    rep, timing = cached_ablation()
    sr = {k: v["sr"] for k, v in rep["variants"].items()}
    return rep, timing, sr


def test_c1_gradient_fidelity():
    t0 = time.time()
    results = run_selftest(seed=0)
    secs = time.time() - t0
    worst = max(r["error"] / r["tol"] for r in results if r["name"].startswith("grad:"))
    ok = all(r["passed"] for r in results) and secs < SELFTEST_SECONDS
    record(1, ok, f"{len(results)} selftest checks, worst grad error/tol {worst:.3g}, {secs:.1f}s")
    assert ok


def test_c2_oracle_equivalence():
    checks = [check_planner(0, graphs=100, max_nodes=15), check_metrics(0, count=200), check_kmeans(0, n=20, k=3)]
    ok = all(c["passed"] for c in checks)
    record(2, ok, "; ".join(f"{c['name']} mismatches {c['error']}" for c in checks))
    assert ok


def test_c3_metric_identities():
    rows = [score_episode(t, e, h) for t, e, h in random_trajectories(np.random.default_rng(3), 1000)]
    try:
        assert_identities(rows)
        ok, detail = True, "0 violations over 1000 trajectories"
    except AssertionError as e:
        ok, detail = False, str(e)
    record(3, ok, detail)
    assert ok


class _Reached(Exception):
    pass


def test_c4_capacity():
    cfg = C.load("default")
    cfg.update({"data.train_houses": 2, "data.train_episodes_per_house": 2, "data.val_unseen_houses": 1})
    ds = make_dataset(cfg)
    ims = make_imaginations(ds, cfg)
    eps = ds.episodes["train"]
    assert len(eps) == 4
    model = build_model(cfg, ds, 0, make_codebook(ds, cfg))
    states = [s for e in eps for s in teacher_states(eps, ds, ims, 15)[e.episode_id]]
    batch = build_batch(states, 15)
    seen = []

    def probe(m):
        dsap = step_losses(m, batch, ("dsap",))[0]["dsap"].item()
        seen.append(dsap)
        if dsap < CAPACITY_DSAP:
            raise _Reached
        return {"val-unseen.sr": -dsap}

    tc = TrainConfig(stage="warmup", iterations=CAPACITY_ITERS, batch_size=4, lr=1e-3, seed=0, val_every=25,
                     patience=CAPACITY_ITERS)
    t0 = time.time()
    try:
        train(model, tc, ds, ims, episodes=eps, validate_fn=probe)
        reached = False
    except _Reached:
        reached = True
    secs = time.time() - t0
    ok = reached and secs < CAPACITY_SECONDS
    record(4, ok, f"DSAP {seen[-1]:.4f} after {25 * len(seen)} iterations in {secs:.0f}s")
    assert ok


@pytest.mark.slow
def test_c5_beats_random_walk(grid):
    rep, timing, sr = grid
    rw = rep["random_walk"]["sr"]
    secs = sum(timing["full"])
    ok = sr["full"] - rw >= CHANCE_MARGIN and secs < FULL_SECONDS
    record(5, ok, f"full SR {100 * sr['full']:.2f} vs random walk {100 * rw:.2f} "
                  f"(seeds {rep['seeds']}, {secs / 60:.1f} min)")
    assert ok


@pytest.mark.slow
def test_c6_module_ablation_direction(grid):
    _, _, sr = grid
    ok = (sr["full"] >= sr["layout"] >= sr["baseline"] and sr["full"] >= sr["dreamer"] >= sr["baseline"]
          and sr["full"] - sr["baseline"] >= MODULE_MARGIN)
    record(6, ok, " ".join(f"{k} {100 * sr[k]:.2f}" for k in ("baseline", "layout", "dreamer", "full")))
    assert ok


@pytest.mark.slow
def test_c7_codebook_ablation_direction(grid):
    _, _, sr = grid
    ok = (sr["full"] - sr["textual"] >= CODEBOOK_MARGIN and sr["textual"] >= sr["classifier"] - APPROX)
    record(7, ok, f"visual {100 * sr['full']:.2f} textual {100 * sr['textual']:.2f} "
                  f"classifier {100 * sr['classifier']:.2f}")
    assert ok


@pytest.mark.slow
def test_c8_room_accuracy_trend(grid):
    rep, _, _ = grid
    curves = [s["room_accuracy"] for s in rep["variants"]["full"]["per_seed"]]
    a1 = float(np.mean([c["1"] for c in curves]))
    a10 = float(np.mean([c["10"] for c in curves]))
    chance = 1.0 / 8
    ok = a10 - a1 >= TREND_MARGIN and min(a1, a10) > chance
    record(8, ok, f"room accuracy t=1 {100 * a1:.2f} t=10 {100 * a10:.2f} chance {100 * chance:.2f}")
    assert ok


TINY = ["--set", "data.train_houses=3", "--set", "data.val_unseen_houses=2",
        "--set", "data.train_episodes_per_house=2", "--set", "data.val_unseen_episodes_per_house=2",
        "--set", "model.hidden=16", "--set", "model.heads=2", "--set", "model.lang_layers=1",
        "--set", "model.cross_layers=1", "--set", "codebook.samples=20",
        "--set", "warmup.iterations=2", "--set", "warmup.batch_size=2", "--set", "warmup.val_every=2",
        "--set", "dagger.iterations=2", "--set", "dagger.batch_size=2", "--set", "dagger.val_every=2",
        "--quiet"]


def test_c9_manifest_replay(tmp_path):
    d, cb, im = tmp_path / "data", tmp_path / "cb" / "cb.bin", tmp_path / "im" / "im.bin"
    ck = tmp_path / "dagger" / "model.ckpt"
    runs = {
        "gen-data": ["--out", str(d)],
        "build-codebook": ["--data", str(d), "--out", str(cb)],
        "imagine": ["--data", str(d), "--out", str(im)],
        "warmup": ["--data", str(d), "--imaginations", str(im), "--codebook", str(cb),
                   "--out", str(tmp_path / "warmup")],
        "dagger": ["--data", str(d), "--imaginations", str(im), "--init", str(tmp_path / "warmup" / "model.ckpt"),
                   "--out", str(tmp_path / "dagger")],
        "eval": ["--data", str(d), "--imaginations", str(im), "--ckpt", str(ck), "--out", str(tmp_path / "eval")],
        "trace": ["--data", str(d), "--imaginations", str(im), "--ckpt", str(ck), "--limit", "2",
                  "--out", str(tmp_path / "trace")],
        "ablate": ["--seeds", "0", "--variants", "baseline,full", "--out", str(tmp_path / "ablate")],
        "selftest": ["--out", str(tmp_path / "selftest")],
    }
    manifests = {"gen-data": d, "build-codebook": cb.parent, "imagine": im.parent}
    bad = []
    for cmd, argv in runs.items():
        assert main([cmd] + argv + TINY) == EXIT_OK, cmd
        man = manifests.get(cmd, tmp_path / cmd) / "manifest.json"
        n = len(json.loads(man.read_text())["outputs"])
        if n == 0 or main(["--replay", str(man), "--replay-out", str(tmp_path / "replay" / cmd)]) != EXIT_OK:
            bad.append(cmd)
    ok = not bad
    record(9, ok, f"{len(runs) - len(bad)}/{len(runs)} subcommands replay bit-identically"
                  + (f"; mismatched: {', '.join(bad)}" if bad else ""))
    assert ok
