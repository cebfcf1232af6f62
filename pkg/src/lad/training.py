"""Multi-task warmup and DAgger imitation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .agent.batch import Batch, StepState, build_batch
from .agent.model import LADModel
from .agent.policy import rollout, start_run, teacher_rollout
from .env.dataset import Dataset
from .env.episodes import Episode
from .env.world import MASK, PAD
from .optim import AdamW

LOSS_NAMES = ("mlm", "mrc", "og", "lp", "d", "dsap")
IL_LOSSES = ("og", "lp", "dsap")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str = "warmup"
    iterations: int = 600
    batch_size: int = 8
    lr: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    loss_weights: dict[str, float] = field(default_factory=lambda: {k: 1.0 for k in LOSS_NAMES})
    beta0: float = 0.95
    beta_every: int = 50          # iterations per DAgger "epoch"
    sample: bool = True           # DAgger rollouts sample from the policy (else greedy)
    seed: int = 0
    max_steps: int = 15
    mask_prob: float = 0.15
    val_every: int = 250
    val_episodes: int = 100
    patience: int = 10
    grad_clip: float = 5.0

    def validate(self) -> None:
        if self.stage not in ("warmup", "dagger"):
            raise ValueError(f"stage must be warmup or dagger, got {self.stage!r}")
        if self.iterations <= 0 or self.batch_size <= 0:
            raise ValueError("iterations and batch_size must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


# ------------------------------------------------------------------ losses

def mask_tokens(tokens: np.ndarray, lang_mask: np.ndarray, prob: float, rng: np.random.Generator
                ) -> tuple[np.ndarray, np.ndarray]:
    """Replace ~prob of the real tokens by MASK (at least one per row); targets are -1 elsewhere."""
    masked = tokens.copy()
    target = np.full(tokens.shape, -1, dtype=np.int64)
    for i in range(tokens.shape[0]):
        pos = np.flatnonzero(lang_mask[i] & (tokens[i] != PAD))
        pick = pos[rng.random(len(pos)) < prob]
        if len(pick) == 0:
            pick = pos[[rng.integers(len(pos))]]
        target[i, pick] = tokens[i, pick]
        masked[i, pick] = MASK
    return masked, target


def _ce(logits: T.Tensor, target: np.ndarray, mask=None) -> T.Tensor | None:
    if not np.any(target >= 0):
        return None
    return T.cross_entropy(logits, target, mask=mask)


def step_losses(model: LADModel, b: Batch, names=LOSS_NAMES, rng: np.random.Generator | None = None,
                mask_prob: float = 0.15) -> tuple[dict[str, T.Tensor], dict[str, int]]:
    """Named losses for one batch; a loss with no live rows is skipped and counted."""
    out = model.forward(b)
    losses: dict[str, T.Tensor] = {}
    skipped: dict[str, int] = {}
    S, N1 = b.eligible.shape

    def put(name, value, n_skip):
        skipped[name] = int(n_skip)
        if value is not None:
            losses[name] = value

    if "dsap" in names:
        put("dsap", _ce(out.scores, b.dsap_target, b.eligible), np.sum(b.dsap_target < 0))
    if "og" in names:
        put("og", _ce(out.ground, b.og_target, b.object_mask), 0)
    if "lp" in names and out.layout is not None:
        K = out.layout.shape[-1]
        put("lp", _ce(T.reshape(out.layout, (-1, K)), b.room_labels.reshape(-1)), 0)
    if "d" in names and out.dream_scores is not None:
        m = b.frontier_mask.copy()
        m[~b.has_frontier, 0] = True
        put("d", _ce(out.dream_scores, b.dream_target, m), np.sum(~b.has_frontier))
    if "mrc" in names and out.mrc is not None:
        put("mrc", _ce(out.mrc, b.mrc_label), np.sum(b.mrc_row < 0))
    if "mlm" in names:
        if rng is None:
            raise ValueError("the MLM loss needs an rng for masking")
        masked, target = mask_tokens(b.tokens, b.lang_mask, mask_prob, rng)
        lang = model.encode_instruction(masked, b.lang_mask)
        logits = model.mlm_logits(lang)
        put("mlm", _ce(T.reshape(logits, (-1, logits.shape[-1])), target.reshape(-1)), 0)
    return losses, skipped


def total_loss(losses: dict[str, T.Tensor], weights: dict[str, float] | None = None) -> T.Tensor:
    total = None
    for name in LOSS_NAMES:
        if name in losses:
            term = losses[name] if weights is None else T.mul(losses[name], weights.get(name, 1.0))
            total = term if total is None else total + term
    if total is None:
        raise TrainingError("no live loss terms in batch")
    return total


def warmup_losses(model: LADModel, states: list[StepState], rng: np.random.Generator,
                  mask_prob: float = 0.15) -> tuple[dict[str, T.Tensor], dict[str, int]]:
    """The six warmup losses plus their unweighted sum under 'total'."""
    b = build_batch(states, model.cfg.max_steps, mrc_rng=rng)
    losses, skipped = step_losses(model, b, LOSS_NAMES, rng, mask_prob)
    losses["total"] = total_loss(losses)
    return losses, skipped


def teacher_states(episodes: list[Episode], dataset: Dataset, imaginations: dict, max_steps: int
                   ) -> dict[str, list[StepState]]:
    """Teacher-forced step states per episode (deterministic, so computed once)."""
    out = {}
    for ep in episodes:
        run = start_run(ep, dataset.houses[ep.house_id], _imag(imaginations, ep))
        teacher_rollout([run], max_steps)
        out[ep.episode_id] = run.states
    return out


def _imag(imaginations: dict | None, ep: Episode):
    if not imaginations:
        return None
    im = imaginations.get(ep.episode_id)
    return None if im is None else getattr(im, "features", im)


def dagger_states(model: LADModel, episodes: list[Episode], dataset: Dataset, imaginations: dict,
                  beta: float, rng: np.random.Generator, sample: bool = True) -> tuple[list[StepState], dict]:
    """Roll out the beta-mixed policy and label every visited state with the teacher."""
    runs = [start_run(ep, dataset.houses[ep.house_id], _imag(imaginations, ep)) for ep in episodes]
    rollout(model, runs, mode="sample" if sample else "greedy", rng=rng, beta=beta, label=True)
    states = [s for r in runs for s in r.states]
    stats = {"rollout_sr": float(np.mean([r.tmap.current == r.episode.goal for r in runs])),
             "rollout_steps": float(np.mean([r.t for r in runs]))}
    return states, stats


def dagger_iteration(model: LADModel, episodes: list[Episode], dataset: Dataset, imaginations: dict,
                     beta: float, seed: int, sample: bool = True):
    """Imitation losses (OG + LP + DSAP) on a mixture-policy rollout; returns (losses, skipped, stats)."""
    rng = np.random.default_rng(seed)
    states, stats = dagger_states(model, episodes, dataset, imaginations, beta, rng, sample)
    b = build_batch(states, model.cfg.max_steps)
    losses, skipped = step_losses(model, b, IL_LOSSES)
    losses["total"] = total_loss(losses)
    return losses, skipped, stats


# ------------------------------------------------------------------ loop

def _clip(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    best_iteration: int
    best_val_sr: float
    log: list[dict]


def train(model: LADModel, cfg: TrainConfig, dataset: Dataset, imaginations: dict,
          episodes: list[Episode] | None = None, validate_fn=None, log_path: str | Path | None = None,
          progress=None) -> TrainResult:
    """AdamW loop for one stage. ``validate_fn(model) -> dict`` with key 'val-unseen.sr'
    drives best-checkpoint selection; without it the final parameters are kept."""
    cfg.validate()
    episodes = list(dataset.episodes["train"] if episodes is None else episodes)
    ss = np.random.SeedSequence([cfg.seed, 0 if cfg.stage == "warmup" else 1])
    batch_rng = np.random.default_rng(ss.spawn(1)[0])
    loss_rng = np.random.default_rng(ss.spawn(1)[0])
    opt = AdamW(model.ps, lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
    cache = teacher_states(episodes, dataset, imaginations, cfg.max_steps) if cfg.stage == "warmup" else None
    log: list[dict] = []
    best = (-1.0, 0, model.ps.arrays())
    bad = 0
    fh = open(log_path, "w") if log_path else None
    try:
        for it in range(1, cfg.iterations + 1):
            pick = batch_rng.choice(len(episodes), size=min(cfg.batch_size, len(episodes)), replace=False)
            batch_eps = [episodes[i] for i in sorted(pick)]
            model.ps.zero_grad()
            stats: dict = {}
            if cfg.stage == "warmup":
                states = [s for e in batch_eps for s in cache[e.episode_id]]
                losses, skipped = warmup_losses(model, states, loss_rng, cfg.mask_prob)
                losses["total"] = total_loss({k: v for k, v in losses.items() if k != "total"},
                                             cfg.loss_weights)
            else:
                beta = cfg.beta0 ** ((it - 1) // cfg.beta_every)
                losses, skipped, stats = dagger_iteration(
                    model, batch_eps, dataset, imaginations, beta,
                    int(loss_rng.integers(2**63)), sample=cfg.sample)
                stats["beta"] = beta
            total = losses["total"]
            if not np.isfinite(total.item()):
                raise TrainingError(f"non-finite loss at iteration {it}; batch episodes "
                                    f"{[e.episode_id for e in batch_eps]}; "
                                    f"terms {({k: v.item() for k, v in losses.items()})}")
            total.backward()
            grads = model.ps.grads()
            gnorm = _clip(grads, cfg.grad_clip)
            opt.step(grads)
            row = {"iteration": it, **{k: round(v.item(), 10) for k, v in losses.items()},
                   "skipped": skipped, "grad_norm": round(gnorm, 8), **stats}
            if validate_fn is not None and (it % cfg.val_every == 0 or it == cfg.iterations):
                val = validate_fn(model)
                row.update(val)
                sr = val.get("val-unseen.sr", 0.0)
                if sr > best[0]:
                    best = (sr, it, {k: v.copy() for k, v in model.ps.arrays().items()})
                    bad = 0
                else:
                    bad += 1
            log.append(row)
            if fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
            if progress:
                progress(row)
            if bad >= cfg.patience:
                break
    finally:
        if fh:
            fh.close()
    if validate_fn is None:
        best = (float("nan"), cfg.iterations, model.ps.arrays())
    return TrainResult(best_params=best[2], best_iteration=best[1], best_val_sr=best[0], log=log)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
