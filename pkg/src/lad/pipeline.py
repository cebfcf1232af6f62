"""Glue from a flat run configuration to data, codebooks, models and reports."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from . import config as C
from .agent.model import LADModel, ModelConfig, init_params
from .codebook import (Codebook, build_room_codebook, high_frequency_objects, imagine_all,
                       textual_codebook)
from .env.dataset import DataConfig, Dataset, generate_dataset
from .evaluation import evaluate, random_walk_baseline, room_accuracy_by_step
from .training import TrainConfig, train

MODEL_DERIVED = ("vocab_size", "dim", "num_rooms")

# name -> (model overrides, codebook kind)
VARIANTS = {
    "baseline": ({"layout": "none", "dreamer": False}, None),
    "layout": ({"layout": "codebook", "dreamer": False}, "visual"),
    "dreamer": ({"layout": "none", "dreamer": True}, None),
    "full": ({"layout": "codebook", "dreamer": True}, "visual"),
    "textual": ({"layout": "codebook", "dreamer": True}, "textual"),
    "classifier": ({"layout": "classifier", "dreamer": True}, None),
}
MODULE_GRID = ("baseline", "layout", "dreamer", "full")
CODEBOOK_GRID = ("full", "textual", "classifier")
VARIANT_LABELS = {"baseline": "baseline", "layout": "baseline+LayoutLearner",
                  "dreamer": "baseline+GoalDreamer", "full": "full (visual codebook)",
                  "textual": "textual codebook", "classifier": "classifier head"}


def data_config(cfg: dict) -> DataConfig:
    dc = C.apply(DataConfig(), C.section(cfg, "data"), "data")
    dc.seed = int(cfg.get("data.seed", cfg.get("seed", 0)))
    C.apply(dc.gen, C.section(cfg, "gen"), "gen")
    C.apply(dc.episodes, C.section(cfg, "episodes"), "episodes")
    return dc


def make_dataset(cfg: dict) -> Dataset:
    return generate_dataset(data_config(cfg))


def make_codebook(ds: Dataset, cfg: dict, kind: str | None = None) -> Codebook:
    kind = kind or cfg.get("codebook.kind", "visual")
    if kind == "textual":
        return textual_codebook(ds.world)
    if kind != "visual":
        raise C.ConfigFileError(f"codebook.kind must be visual or textual, got {kind!r}")
    hf = high_frequency_objects(ds.world, ds.episodes["train"], float(cfg.get("codebook.threshold", 0.8)))
    return build_room_codebook(ds.world, hf, n_samples=int(cfg.get("codebook.samples", 100)),
                               per_room=int(cfg.get("codebook.per_room", 4)),
                               sigma=float(cfg.get("codebook.sigma", 0.5)),
                               seed=int(cfg.get("codebook.seed", cfg.get("seed", 0))))


def make_imaginations(ds: Dataset, cfg: dict) -> dict:
    eps = [e for split in ds.episodes.values() for e in split]
    return imagine_all(eps, ds.world, int(cfg.get("imagine.seed", cfg.get("seed", 0))),
                       float(cfg.get("imagine.sigma", 0.5)))


def model_config(cfg: dict, ds: Dataset, overrides: dict | None = None) -> ModelConfig:
    mc = ModelConfig(vocab_size=len(ds.world.vocab), dim=ds.world.dim, num_rooms=ds.world.num_rooms)
    vals = {k: v for k, v in C.section(cfg, "model").items() if k not in MODEL_DERIVED}
    C.apply(mc, vals, "model")
    if overrides:
        C.apply(mc, overrides, "model")
    mc.max_steps = int(cfg.get("max_steps", mc.max_steps))
    mc.validate()
    return mc


def train_config(cfg: dict, stage: str, seed: int) -> TrainConfig:
    tc = TrainConfig(stage=stage, seed=seed)
    vals = C.section(cfg, stage)
    weights = {k[len("loss."):]: float(v) for k, v in vals.items() if k.startswith("loss.")}
    C.apply(tc, {k: v for k, v in vals.items() if not k.startswith("loss.")}, stage)
    tc.loss_weights.update(weights)
    tc.max_steps = int(cfg.get("max_steps", tc.max_steps))
    tc.validate()
    return tc


# ------------------------------------------------------------------ model files

def _text_entry(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def _entry_text(a: np.ndarray) -> str:
    return bytes(np.asarray(a, dtype=np.uint8).tolist()).decode("utf-8")


def save_model(path, model: LADModel, params: dict[str, np.ndarray] | None = None) -> str:
    arrays = model.ps.arrays() if params is None else params
    entries = {f"param.{k}": v for k, v in arrays.items()}
    entries["meta.model_config"] = _text_entry(json.dumps(model.cfg.to_dict(), sort_keys=True))
    if model.codebook is not None:
        entries["meta.codebook"] = model.codebook
    return checkpoint.save(path, entries)


def load_model(path) -> LADModel:
    entries = checkpoint.load(path)
    if "meta.model_config" not in entries:
        raise checkpoint.CheckpointFormatError(f"{path} is not a model checkpoint")
    mc = ModelConfig(**json.loads(_entry_text(entries["meta.model_config"])))
    ps = init_params(mc, 0)
    ps.load_arrays({k[6:]: v for k, v in entries.items() if k.startswith("param.")})
    return LADModel(mc, ps, entries.get("meta.codebook"))


def build_model(cfg: dict, ds: Dataset, seed: int, codebook: Codebook | None,
                overrides: dict | None = None) -> LADModel:
    mc = model_config(cfg, ds, overrides)
    ps = init_params(mc, seed)
    return LADModel(mc, ps, None if codebook is None or mc.layout != "codebook" else codebook.summed())


# ------------------------------------------------------------------ runs

def val_episodes(ds: Dataset, cfg: dict, split: str = "val-unseen"):
    eps = ds.episodes[split]
    n = int(cfg.get("eval.val_episodes", 0))
    return eps[:n] if n > 0 else eps


def validator(ds: Dataset, ims: dict, cfg: dict):
    eps = val_episodes(ds, cfg)

    def fn(model: LADModel) -> dict:
        agg, _, _ = evaluate(model, eps, ds, ims)
        return {"val-unseen.sr": agg["sr"], "val-unseen.spl": agg["spl"], "val-unseen.rgs": agg["rgs"]}

    return fn


def run_stage(model: LADModel, cfg: dict, ds: Dataset, ims: dict, stage: str, seed: int,
              log_path=None, progress=None) -> dict:
    """Train one stage in place; the model ends on its best-by-validation parameters."""
    tc = train_config(cfg, stage, seed)
    res = train(model, tc, ds, ims, validate_fn=validator(ds, ims, cfg), log_path=log_path,
                progress=progress)
    model.ps.load_arrays(res.best_params)
    return {"best_iteration": res.best_iteration, "best_val_sr": res.best_val_sr,
            "iterations_run": len(res.log)}


@dataclass
class VariantResult:
    name: str
    seed: int
    metrics: dict
    room_accuracy: dict
    train: dict


def run_variant(name: str, cfg: dict, ds: Dataset, ims: dict, codebooks: dict[str, Codebook], seed: int,
                out_dir: Path | None = None, progress=None) -> VariantResult:
    overrides, kind = VARIANTS[name]
    model = build_model(cfg, ds, seed, codebooks.get(kind) if kind else None, overrides)
    info = {}
    for stage in ("warmup", "dagger"):
        if int(cfg.get(f"{stage}.iterations", 1)) <= 0:
            continue
        log = None if out_dir is None else out_dir / f"{name}.seed{seed}.{stage}.jsonl"
        info[stage] = run_stage(model, cfg, ds, ims, stage, seed, log, progress)
    if out_dir is not None:
        save_model(out_dir / f"{name}.seed{seed}.ckpt", model)
    agg, _, trajs = evaluate(model, ds.episodes["val-unseen"], ds, ims, seed=seed,
                             record_layout=model.cfg.layout != "none")
    ra = {str(k): v for k, v in room_accuracy_by_step(trajs).items()}
    return VariantResult(name, seed, agg, ra, info)


def ablation(cfg: dict, seeds: list[int], variants=tuple(VARIANTS), out_dir: Path | None = None,
             progress=None) -> dict:
    """Module and codebook grids over ``seeds``; one shared dataset."""
    ds = make_dataset(cfg)
    ims = make_imaginations(ds, cfg)
    codebooks = {"visual": make_codebook(ds, cfg, "visual"), "textual": make_codebook(ds, cfg, "textual")}
    rw, _, _ = random_walk_baseline(ds.episodes["val-unseen"], ds, seed=int(cfg.get("seed", 0)))
    runs: dict[str, list[VariantResult]] = {}
    for name in variants:
        for seed in seeds:
            r = run_variant(name, cfg, ds, ims, codebooks, seed, out_dir, progress)
            runs.setdefault(name, []).append(r)
            if progress:
                progress({"variant": name, "seed": seed, "sr": r.metrics["sr"]})
    return summarize(runs, rw, seeds)


def summarize(runs: dict[str, list[VariantResult]], random_walk: dict, seeds: list[int]) -> dict:
    rows = {}
    for name, rs in runs.items():
        rows[name] = {
            "label": VARIANT_LABELS[name],
            "sr": float(np.mean([r.metrics["sr"] for r in rs])),
            "spl": float(np.mean([r.metrics["spl"] for r in rs])),
            "rgs": float(np.mean([r.metrics["rgs"] for r in rs])),
            "rgspl": float(np.mean([r.metrics["rgspl"] for r in rs])),
            "osr": float(np.mean([r.metrics["osr"] for r in rs])),
            "per_seed": [{"seed": r.seed, **{m: r.metrics[m] for m in ("sr", "spl", "rgs", "osr")},
                          "room_accuracy": r.room_accuracy, "train": r.train} for r in rs],
        }
    return {"seeds": list(seeds), "random_walk": random_walk, "variants": rows,
            "module_grid": [n for n in MODULE_GRID if n in rows],
            "codebook_grid": [n for n in CODEBOOK_GRID if n in rows]}


def format_report(rep: dict) -> str:
    lines = [f"seeds: {','.join(str(s) for s in rep['seeds'])}",
             f"random walk: SR {100 * rep['random_walk']['sr']:.2f}", "", "module grid"]
    hdr = f"{'variant':28s} {'SR':>7s} {'OSR':>7s} {'SPL':>7s} {'RGS':>7s} {'RGSPL':>7s}"
    for grid in ("module_grid", "codebook_grid"):
        if grid == "codebook_grid":
            lines += ["", "codebook grid"]
        lines.append(hdr)
        for n in rep[grid]:
            v = rep["variants"][n]
            lines.append(f"{v['label']:28s} {100 * v['sr']:7.2f} {100 * v['osr']:7.2f} {100 * v['spl']:7.2f} "
                         f"{100 * v['rgs']:7.2f} {100 * v['rgspl']:7.2f}")
    return "\n".join(lines) + "\n"


def deepcopy_cfg(cfg: dict) -> dict:
    return copy.deepcopy(cfg)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
