import json
from pathlib import Path

import pytest

from lad.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main

TINY = ["--set", "data.train_houses=3", "--set", "data.val_unseen_houses=2",
        "--set", "data.train_episodes_per_house=2", "--set", "data.val_unseen_episodes_per_house=2",
        "--set", "model.hidden=16", "--set", "model.heads=2", "--set", "model.lang_layers=1",
        "--set", "model.cross_layers=1", "--set", "codebook.samples=20",
        "--set", "warmup.iterations=3", "--set", "warmup.batch_size=2", "--set", "warmup.val_every=3",
        "--set", "dagger.iterations=2", "--set", "dagger.batch_size=2", "--set", "dagger.val_every=2",
        "--quiet"]


def outputs(manifest: Path) -> dict:
    return json.loads(manifest.read_text())["outputs"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    d, cb, im = root / "data", root / "cb" / "codebook.bin", root / "im" / "imaginations.bin"
    w, g, ev, tr = root / "warmup", root / "dagger", root / "eval", root / "trace"
    steps = [
        ["gen-data", "--out", str(d)],
        ["build-codebook", "--data", str(d), "--out", str(cb)],
        ["imagine", "--data", str(d), "--out", str(im)],
        ["warmup", "--data", str(d), "--imaginations", str(im), "--codebook", str(cb), "--out", str(w)],
        ["dagger", "--data", str(d), "--imaginations", str(im), "--init", str(w / "model.ckpt"), "--out", str(g)],
        ["eval", "--data", str(d), "--imaginations", str(im), "--ckpt", str(g / "model.ckpt"), "--out", str(ev)],
        ["trace", "--data", str(d), "--imaginations", str(im), "--ckpt", str(g / "model.ckpt"),
         "--limit", "2", "--out", str(tr)],
    ]
    for argv in steps:
        assert main(argv + TINY) == EXIT_OK, argv[0]
    return {"root": root, "data": d, "dirs": [d, cb.parent, im.parent, w, g, ev, tr]}


def test_gen_data_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-data", "--out", str(a)] + TINY) == EXIT_OK
    assert main(["gen-data", "--out", str(b)] + TINY) == EXIT_OK
    assert outputs(a / "manifest.json") == outputs(b / "manifest.json")
    assert main(["gen-data", "--out", str(tmp_path / "c"), "--seed", "5"] + TINY) == EXIT_OK
    assert outputs(a / "manifest.json") != outputs(tmp_path / "c" / "manifest.json")


def test_every_stage_replays_bit_identically(pipeline, tmp_path):
    for i, d in enumerate(pipeline["dirs"]):
        man = d / "manifest.json"
        assert man.exists()
        assert outputs(man)
        assert main(["--replay", str(man), "--replay-out", str(tmp_path / str(i))]) == EXIT_OK


def test_replay_detects_tampering(pipeline, tmp_path):
    man = json.loads((pipeline["data"] / "manifest.json").read_text())
    key = sorted(man["outputs"])[0]
    man["outputs"][key] = "0" * 64
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(man))
    assert main(["--replay", str(p), "--replay-out", str(tmp_path / "r")]) == EXIT_FAIL


def test_eval_report_and_trace(pipeline):
    root = pipeline["root"]
    rep = json.loads((root / "eval" / "report.json").read_text())
    assert rep["split"] == "val-unseen" and rep["n"] == 4
    assert 0.0 <= rep["spl"] <= rep["sr"] <= rep["osr"] <= 1.0
    lines = (root / "eval" / "episodes.tsv").read_text().splitlines()
    assert len(lines) == 5
    recs = [json.loads(x) for x in (root / "trace" / "trace.jsonl").read_text().splitlines()]
    assert recs and {r["episode_id"] for r in recs} <= {l.split("\t")[0] for l in lines[1:]}


def test_usage_errors_exit_two(capsys):
    assert main(["gen-data", "--bogus"]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["gen-data"]) == EXIT_USAGE


def test_runtime_errors_exit_one(tmp_path, capsys):
    assert main(["eval", "--data", str(tmp_path / "missing"), "--imaginations", "x", "--ckpt", "y",
                 "--out", str(tmp_path / "o")]) == EXIT_FAIL
    assert "not found" in capsys.readouterr().err
    assert main(["gen-data", "--out", str(tmp_path / "o"), "--set", "data.bogus_key=1"]) == EXIT_FAIL
    assert main(["gen-data", "--out", str(tmp_path / "o"), "--threads", "0"]) == EXIT_FAIL


def test_dagger_requires_init_or_cold_start(pipeline, tmp_path):
    d = pipeline["data"]
    im = pipeline["root"] / "im" / "imaginations.bin"
    assert main(["dagger", "--data", str(d), "--imaginations", str(im), "--out", str(tmp_path)] + TINY) == EXIT_FAIL


def test_selftest_passes(tmp_path):
    assert main(["selftest", "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    rep = json.loads((tmp_path / "selftest.json").read_text())
    assert rep["passed"] and len(rep["results"]) >= 5
