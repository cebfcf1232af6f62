"""The ``lad`` command line.

Every subcommand writes ``manifest.json`` beside its outputs: the argv, the
resolved config, the seed, and sha256 digests of inputs and outputs.
``lad --replay manifest.json`` re-runs it and checks the output digests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CommandError(RuntimeError):
    pass


def _threads_from_env() -> int:
    raw = os.environ.get("LAD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise CommandError(f"LAD_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _digests(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for q in sorted(p.rglob("*")):
                if q.is_file() and q.name != "manifest.json":
                    out[str(q)] = digest(q)
        elif p.is_file():
            out[str(p)] = digest(p)
    return out


def write_manifest(out_dir: Path, args, cfg: dict, inputs, outputs) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    rel_out = {os.path.relpath(k, out_dir): v for k, v in _digests(outputs).items()}
    man = {
        "command": args.command,
        "argv": args.argv,
        "config": cfg,
        "seed": cfg.get("seed"),
        "inputs": _digests(inputs),
        "outputs": rel_out,
    }
    p = out_dir / "manifest.json"
    p.write_text(json.dumps(man, indent=1, sort_keys=True) + "\n")
    return p


# ---------------------------------------------------------------- helpers

def _load_cfg(args) -> dict:
    from . import config as C
    cfg = C.load(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise CommandError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = C._coerce(v)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "seed" not in cfg:
        raise CommandError("a seed is required (config key 'seed' or --seed)")
    return cfg


def _need(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CommandError(f"{what} not found: {p}")
    return p


def _dataset(path):
    from .env.dataset import read_dataset
    return read_dataset(_need(path, "data directory"))


def _imaginations(path):
    from .codebook import load_imaginations
    return load_imaginations(_need(path, "imagination file"))


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, flush=True)


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, cfg):
    from .env.dataset import write_dataset
    from .pipeline import make_dataset
    out = Path(args.out)
    ds = make_dataset(cfg)
    files = write_dataset(ds, out)
    _say(args, f"wrote {', '.join(f'{k}={len(v)}' for k, v in ds.episodes.items())} episodes to {out}")
    return out, [], files


def cmd_build_codebook(args, cfg):
    from .pipeline import make_codebook
    ds = _dataset(args.data)
    cb = make_codebook(ds, cfg, args.kind)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cb.save(out)
    _say(args, f"{cb.kind} codebook K={cb.num_rooms} S={cb.per_room} -> {out}")
    return out.parent, [args.data], [out]


def cmd_imagine(args, cfg):
    from .codebook import save_imaginations
    from .pipeline import make_imaginations
    ds = _dataset(args.data)
    ims = make_imaginations(ds, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_imaginations(out, ims)
    _say(args, f"{len(ims)} imagination sets -> {out}")
    return out.parent, [args.data], [out]


def _progress(args):
    if args.quiet:
        return None

    def show(row):
        if "variant" in row:
            print(f"[{row['variant']} seed {row['seed']}] val-unseen SR {100 * row['sr']:.2f}", flush=True)
        elif "val-unseen.sr" in row:
            print(f"it {row['iteration']:5d} total {row['total']:.4f} val-unseen SR "
                  f"{100 * row['val-unseen.sr']:.2f}", flush=True)
    return show


def _train_cmd(args, cfg, stage: str):
    from .codebook import Codebook
    from .pipeline import build_model, load_model, run_stage, save_model
    ds = _dataset(args.data)
    ims = _imaginations(args.imaginations)
    seed = int(cfg["seed"])
    inputs = [args.data, args.imaginations]
    if args.init:
        model = load_model(_need(args.init, "initial checkpoint"))
        inputs.append(args.init)
    else:
        if stage == "dagger" and not args.cold_start:
            raise CommandError("dagger needs --init <warmup checkpoint> (or --cold-start)")
        cb = None
        if args.codebook:
            cb = Codebook.load(_need(args.codebook, "codebook"), tuple(ds.world.room_names))
            inputs.append(args.codebook)
        model = build_model(cfg, ds, seed, cb)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    info = run_stage(model, cfg, ds, ims, stage, seed, out / "metrics.jsonl", _progress(args))
    ck = out / "model.ckpt"
    save_model(ck, model)
    (out / "summary.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    _say(args, f"{stage}: best val-unseen SR {100 * info['best_val_sr']:.2f} at iteration "
               f"{info['best_iteration']} -> {ck}")
    return out, inputs, [ck, out / "metrics.jsonl", out / "summary.json"]


def cmd_warmup(args, cfg):
    return _train_cmd(args, cfg, "warmup")


def cmd_dagger(args, cfg):
    return _train_cmd(args, cfg, "dagger")


def cmd_eval(args, cfg):
    from .evaluation import aggregate, assert_identities, room_accuracy_by_step, run_policy, score_episode
    from .pipeline import load_model
    ds = _dataset(args.data)
    ims = _imaginations(args.imaginations)
    model = load_model(_need(args.ckpt, "checkpoint"))
    if args.split not in ds.episodes:
        raise CommandError(f"unknown split {args.split!r}")
    eps = ds.episodes[args.split]
    trajs = _parallel_policy(model, eps, ds, ims, args.threads, record_layout=model.cfg.layout != "none")
    rows = [score_episode(t, e, ds.houses[e.house_id]) for t, e in zip(trajs, eps)]
    assert_identities(rows)
    agg = aggregate(rows, seed=int(cfg["seed"]))
    agg["room_accuracy_by_step"] = {str(k): v for k, v in room_accuracy_by_step(trajs).items()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps({"split": args.split, **agg}, indent=1, sort_keys=True) + "\n")
    with open(out / "episodes.tsv", "w") as fh:
        fh.write("episode_id\ttl\tsr\tosr\tspl\trgs\trgspl\n")
        for r in rows:
            fh.write(f"{r.episode_id}\t{r.tl:.6f}\t{r.sr:g}\t{r.osr:g}\t{r.spl:.6f}\t{r.rgs:g}\t{r.rgspl:.6f}\n")
    _say(args, " ".join(f"{m.upper()} {100 * agg[m]:.2f}" if m != "tl" else f"TL {agg[m]:.2f}"
                        for m in ("tl", "sr", "osr", "spl", "rgs", "rgspl")))
    return out, [args.data, args.imaginations, args.ckpt], [out / "report.json", out / "episodes.tsv"]


def _parallel_policy(model, eps, ds, ims, threads: int, record_layout=False, trace=False):
    from .evaluation import run_policy
    if threads <= 1 or len(eps) <= 32:
        return run_policy(model, eps, ds, ims, record_layout=record_layout, trace=trace)
    from concurrent.futures import ThreadPoolExecutor
    chunks = [eps[i:i + 32] for i in range(0, len(eps), 32)]
    with ThreadPoolExecutor(threads) as ex:
        parts = list(ex.map(lambda c: run_policy(model, c, ds, ims, record_layout=record_layout,
                                                 trace=trace), chunks))
    return [t for p in parts for t in p]


def _int_list(raw) -> list[int]:
    if isinstance(raw, (tuple, list)):
        return [int(x) for x in raw]
    if isinstance(raw, int):
        return [raw]
    return [int(x) for x in str(raw).split(",") if x.strip()]


def cmd_ablate(args, cfg):
    from .pipeline import VARIANTS, ablation, format_report, write_json
    seeds = _int_list(args.seeds if args.seeds else cfg.get("ablate.seeds", (0, 1, 2)))
    variants = tuple(args.variants.split(",")) if args.variants else tuple(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise CommandError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = ablation(cfg, seeds, variants, out, _progress(args))
    write_json(out / "ablation.json", rep)
    text = format_report(rep)
    (out / "report.txt").write_text(text)
    _say(args, text)
    outputs = [out / "ablation.json", out / "report.txt"] + sorted(out.glob("*.ckpt")) + sorted(out.glob("*.jsonl"))
    return out, [], outputs


def cmd_trace(args, cfg):
    from .pipeline import load_model
    ds = _dataset(args.data)
    ims = _imaginations(args.imaginations)
    model = load_model(_need(args.ckpt, "checkpoint"))
    eps = ds.episodes[args.split]
    if args.episode:
        eps = [e for e in eps if e.episode_id in set(args.episode.split(","))]
        if not eps:
            raise CommandError(f"no episode {args.episode!r} in split {args.split}")
    elif args.limit:
        eps = eps[:args.limit]
    trajs = _parallel_policy(model, eps, ds, ims, 1, record_layout=model.cfg.layout != "none", trace=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "trace.jsonl"
    with open(p, "w") as fh:
        for tr in trajs:
            for rec in tr.trace:
                fh.write(json.dumps({"episode_id": tr.episode_id, **rec}, sort_keys=True) + "\n")
    _say(args, f"{sum(len(t.trace) for t in trajs)} step records for {len(trajs)} episodes -> {p}")
    return out, [args.data, args.imaginations, args.ckpt], [p]


def cmd_selftest(args, cfg):
    from .selftest import run_selftest
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="lad-selftest-"))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    results = run_selftest(seed=int(cfg["seed"]), log=None if args.quiet else print)
    # wall-clock times go in a side file so the digested report is reproducible
    timing = {r["name"]: r.pop("seconds") for r in results}
    report = {"results": results, "passed": all(r["passed"] for r in results)}
    (out / "selftest.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True) + "\n")
    _say(args, f"selftest: {sum(r['passed'] for r in results)}/{len(results)} checks passed "
               f"in {time.time() - t0:.1f}s")
    if not report["passed"]:
        failed = ", ".join(r["name"] for r in results if not r["passed"])
        raise CommandError(f"selftest failures: {failed}")
    return out, [], [out / "selftest.json"]


COMMANDS = {
    "gen-data": cmd_gen_data, "build-codebook": cmd_build_codebook, "imagine": cmd_imagine,
    "warmup": cmd_warmup, "dagger": cmd_dagger, "eval": cmd_eval, "ablate": cmd_ablate,
    "trace": cmd_trace, "selftest": cmd_selftest,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lad", description="Layout-aware navigation agent on synthetic houses.")
    p.add_argument("--replay", metavar="MANIFEST", help="re-run a manifest and verify output digests")
    p.add_argument("--replay-out", metavar="DIR", help="output directory for --replay (default: temp)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", default="default", help="config file or shipped config name")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default LAD_THREADS or 1)")
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("gen-data", help="generate houses and episodes")
    common(sp)
    sp = sub.add_parser("build-codebook", help="build the room-type codebook")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--kind", choices=("visual", "textual"), default=None)
    sp = sub.add_parser("imagine", help="destination imaginations for every episode")
    common(sp)
    sp.add_argument("--data", required=True)
    for name in ("warmup", "dagger"):
        sp = sub.add_parser(name, help=f"{name} training stage")
        common(sp)
        sp.add_argument("--data", required=True)
        sp.add_argument("--imaginations", required=True)
        sp.add_argument("--codebook")
        sp.add_argument("--init")
        sp.add_argument("--cold-start", action="store_true")
    sp = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--imaginations", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", default="val-unseen")
    sp = sub.add_parser("ablate", help="module and codebook ablation grids")
    common(sp)
    sp.add_argument("--seeds", help="comma-separated seeds (default from config)")
    sp.add_argument("--variants", help="comma-separated subset of variants")
    sp = sub.add_parser("trace", help="per-step trajectory records")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--imaginations", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", default="val-unseen")
    sp.add_argument("--episode")
    sp.add_argument("--limit", type=int, default=20)
    sp = sub.add_parser("selftest", help="gradient checks and oracle suites")
    common(sp, out_required=False)
    return p


def _run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replay:
        return replay(args.replay, args.replay_out)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args.argv = list(argv)
    if args.threads is None:
        args.threads = _threads_from_env()
    if args.threads < 1:
        raise CommandError("--threads must be at least 1")
    cfg = _load_cfg(args)
    out_dir, inputs, outputs = COMMANDS[args.command](args, cfg)
    write_manifest(Path(out_dir), args, cfg, inputs, outputs)
    return EXIT_OK


def replay(manifest_path, out_dir=None) -> int:
    man = json.loads(_need(manifest_path, "manifest").read_text())
    argv = list(man["argv"])
    target = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="lad-replay-"))
    if "--out" in argv:
        i = argv.index("--out")
        old = Path(argv[i + 1])
        new = target / old.name if old.suffix else target
        argv[i + 1] = str(new)
    code = _run(argv)
    if code != EXIT_OK:
        return code
    new_man = json.loads((_locate_manifest(argv)).read_text())
    if new_man["outputs"] != man["outputs"]:
        diff = sorted(k for k in set(man["outputs"]) | set(new_man["outputs"])
                      if man["outputs"].get(k) != new_man["outputs"].get(k))
        print(f"replay mismatch in: {', '.join(diff)}", file=sys.stderr)
        return EXIT_FAIL
    print(f"replay reproduced {len(man['outputs'])} output digests")
    return EXIT_OK


def _locate_manifest(argv: list[str]) -> Path:
    out = Path(argv[argv.index("--out") + 1])
    return (out.parent if out.suffix else out) / "manifest.json"


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        code = _run(argv)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else EXIT_USAGE
    except (CommandError, FileNotFoundError, KeyError, ValueError) as e:
        print(f"lad: error: {e}", file=sys.stderr)
        code = EXIT_FAIL
    return code


if __name__ == "__main__":
    sys.exit(main())
