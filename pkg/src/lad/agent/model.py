"""The layout-aware navigation model, batched over decision states.

Every op below works on a whole batch of step states at once (see
``batch.build_batch``). Row 0 of each node block is the STOP entry.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import nn
from .. import tensor as T
from ..nn import ParamSet
from ..tensor import Tensor
from .batch import Batch

LAYOUT_MODES = ("codebook", "classifier", "none")
FUSE_MODES = ("dynamic", "global")
NUM_BUCKETS = 4


@dataclass
class ModelConfig:
    vocab_size: int = 44
    dim: int = 32                 # feature size d
    hidden: int = 64              # model size h
    heads: int = 4
    lang_layers: int = 2
    cross_layers: int = 2
    fuse_layers: int = 1
    ffn_mult: int = 2
    max_len: int = 16
    max_steps: int = 15
    num_rooms: int = 8
    layout: str = "codebook"
    dreamer: bool = True
    fuse: str = "dynamic"

    def validate(self) -> None:
        if self.layout not in LAYOUT_MODES:
            raise nn.ConfigError(f"layout must be one of {LAYOUT_MODES}, got {self.layout!r}")
        if self.fuse not in FUSE_MODES:
            raise nn.ConfigError(f"fuse must be one of {FUSE_MODES}, got {self.fuse!r}")
        for name, dim in (("hidden", self.hidden), ("dim", self.dim)):
            if dim % self.heads:
                raise nn.ConfigError(f"{name}={dim} is not divisible by heads={self.heads}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Outputs:
    lang: Tensor                  # S x L x h
    glo: Tensor                   # S x (1+N) x h
    loc: Tensor                   # S x Lloc x h
    scores: Tensor                # S x (1+N) fused pre-softmax scores
    global_scores: Tensor
    local_scores: Tensor          # scattered into S x (1+N)
    dream_scores: Tensor | None
    lam: Tensor | None            # S x (1+N)
    gate: Tensor | None           # S x 1
    layout: Tensor | None         # S x N x K
    ground: Tensor                # S x Mc
    mrc: Tensor | None            # S x K (rows without a masked node are junk)


def init_params(cfg: ModelConfig, seed: int = 0) -> ParamSet:
    cfg.validate()
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    h, d = cfg.hidden, cfg.dim
    f = cfg.ffn_mult * h
    nn.add_embedding(ps, "lang.tok", cfg.vocab_size, h, rng)
    nn.add_embedding(ps, "lang.pos", cfg.max_len, h, rng)
    nn.add_embedding(ps, "lang.type", 1, h, rng)
    nn.add_norm(ps, "lang.ln", h)
    for i in range(cfg.lang_layers):
        nn.add_encoder_layer(ps, f"lang.{i}", h, cfg.heads, f, rng)
    nn.add_norm(ps, "lang.out", h)
    for i in range(cfg.fuse_layers):
        nn.add_encoder_layer(ps, f"vis.{i}", d, cfg.heads, cfg.ffn_mult * d, rng)
    nn.add_linear(ps, "embed.vis", d, h, rng)
    nn.add_linear(ps, "embed.loc", 3, h, rng)
    nn.add_embedding(ps, "embed.step", cfg.max_steps + 1, h, rng)
    nn.add_embedding(ps, "embed.stop", 1, h, rng)
    nn.add_norm(ps, "embed.ln", h)
    ps.add("gasa.bias", rng.normal(0.0, 0.02, (NUM_BUCKETS, cfg.heads)))
    nn.add_encoder_layer(ps, "gasa", h, cfg.heads, f, rng)
    for i in range(cfg.cross_layers):
        nn.add_decoder_layer(ps, f"glo.{i}", h, cfg.heads, f, rng)
        nn.add_decoder_layer(ps, f"loc.{i}", h, cfg.heads, f, rng)
    nn.add_norm(ps, "glo.out", h)
    nn.add_norm(ps, "loc.out", h)
    nn.add_ffn(ps, "head.glo", h, h, 1, rng)
    nn.add_ffn(ps, "head.loc", h, h, 1, rng)
    if cfg.fuse == "dynamic":
        nn.add_ffn(ps, "fuse.gate", 2 * h, h, 1, rng)
    if cfg.dreamer:
        nn.add_norm(ps, "dream.ln", h)
        nn.add_attention(ps, "dream.attn", h, cfg.heads, rng, kv_dim=d)
        nn.add_ffn(ps, "head.dream", h, h, 1, rng)
        nn.add_ffn(ps, "fuse.lam", 2 * h, h, 1, rng)
    if cfg.layout == "codebook":
        ps.add("layout.proj.w", rng.normal(0.0, 0.02, (h, d)))
        ps.add("layout.proj.b", np.zeros(d))
    elif cfg.layout == "classifier":
        nn.add_linear(ps, "layout.cls", h, cfg.num_rooms, rng)
    nn.add_linear(ps, "ground.in", d, h, rng)
    nn.add_norm(ps, "ground.ln", h)
    nn.add_attention(ps, "ground.attn", h, cfg.heads, rng)
    nn.add_ffn(ps, "head.ground", h, h, 1, rng)
    nn.add_linear(ps, "head.mlm", h, cfg.vocab_size, rng)
    nn.add_linear(ps, "head.mrc", h, cfg.num_rooms, rng)
    return ps


def normalized_codebook(summed: np.ndarray) -> np.ndarray:
    """d x K summed codebook with unit-length columns."""
    n = np.linalg.norm(summed, axis=0, keepdims=True)
    return summed / np.where(n > 0, n, 1.0)


class LADModel:
    def __init__(self, cfg: ModelConfig, params: ParamSet, codebook: np.ndarray | None = None):
        """``codebook`` is the d x K summed room codebook (required for layout='codebook')."""
        cfg.validate()
        if cfg.layout == "codebook" and codebook is None:
            raise nn.ConfigError("layout='codebook' needs a room codebook")
        self.cfg = cfg
        self.ps = params
        self.codebook = None if codebook is None else normalized_codebook(np.asarray(codebook, float))

    # ------------------------------------------------------------ components
    def encode_instruction(self, tokens: np.ndarray, mask: np.ndarray) -> Tensor:
        tokens = np.asarray(tokens, dtype=np.int64)
        if np.any(tokens < 0) or np.any(tokens >= self.cfg.vocab_size):
            raise ValueError(f"token id outside vocabulary of size {self.cfg.vocab_size}")
        if tokens.shape[1] > self.cfg.max_len:
            raise ValueError(f"instruction length {tokens.shape[1]} exceeds max_len {self.cfg.max_len}")
        ps = self.ps
        L = tokens.shape[1]
        x = T.take(ps["lang.tok"], tokens) + T.take(ps["lang.pos"], np.arange(L)) \
            + T.take(ps["lang.type"], np.zeros(L, dtype=np.int64))
        x = nn.norm(ps, "lang.ln", x)
        for i in range(self.cfg.lang_layers):
            x = nn.encoder_layer(ps, f"lang.{i}", x, self.cfg.heads, mask=mask)
        return nn.norm(ps, "lang.out", x)

    def fuse_local_visuals(self, views: Tensor, objects: Tensor, block_mask: np.ndarray) -> Tensor:
        """Joint self-attention over each node's view and object rows; V x (D+M) x d."""
        x = T.concat([T.as_tensor(views), T.as_tensor(objects)], axis=1)
        for i in range(self.cfg.fuse_layers):
            x = nn.encoder_layer(self.ps, f"vis.{i}", x, self.cfg.heads, mask=block_mask)
        return x

    def embed_nodes(self, vis: Tensor, loc: np.ndarray, steps: np.ndarray) -> Tensor:
        """vis S x N x d -> S x (1+N) x h with the STOP row first."""
        ps = self.ps
        S = vis.shape[0]
        node = nn.linear(ps, "embed.vis", vis) + nn.linear(ps, "embed.loc", T.as_tensor(loc)) \
            + T.take(ps["embed.step"], steps)
        stop = T.take(ps["embed.stop"], np.zeros((S, 1), dtype=np.int64))
        return nn.norm(ps, "embed.ln", T.concat([stop, node], axis=1))

    def gasa(self, H: Tensor, buckets: np.ndarray, mask: np.ndarray) -> Tensor:
        bias = T.transpose(T.take(self.ps["gasa.bias"], buckets), (0, 3, 1, 2))
        return nn.encoder_layer(self.ps, "gasa", H, self.cfg.heads, mask=mask, bias=bias)

    def _decode(self, prefix: str, x: Tensor, lang: Tensor, self_mask, lang_mask) -> Tensor:
        for i in range(self.cfg.cross_layers):
            x = nn.decoder_layer(self.ps, f"{prefix}.{i}", x, lang, self.cfg.heads,
                                 self_mask=self_mask, mem_mask=lang_mask)
        return nn.norm(self.ps, f"{prefix}.out", x)

    def cross_global(self, H: Tensor, lang: Tensor, node_mask, lang_mask) -> Tensor:
        return self._decode("glo", H, lang, node_mask, lang_mask)

    def cross_local(self, H: Tensor, lang: Tensor, local_index: np.ndarray, local_mask, lang_mask) -> Tensor:
        S, R, h = H.shape
        flat = (np.arange(S)[:, None] * R + local_index).astype(np.int64)
        x = T.take(T.reshape(H, (S * R, h)), flat)
        return self._decode("loc", x, lang, local_mask, lang_mask)

    def layout_predict(self, glo: Tensor) -> Tensor | None:
        """S x N x K room scores for the map rows (STOP excluded)."""
        nodes = glo[:, 1:]
        if self.cfg.layout == "codebook":
            proj = nn.linear(self.ps, "layout.proj", nodes)
            return T.matmul(proj, T.as_tensor(self.codebook))
        if self.cfg.layout == "classifier":
            return nn.linear(self.ps, "layout.cls", nodes)
        return None

    def dreamer(self, glo: Tensor, imagination: np.ndarray) -> tuple[Tensor, Tensor]:
        ps = self.ps
        Hd = glo + nn.attend(ps, "dream.attn", nn.norm(ps, "dream.ln", glo), T.as_tensor(imagination),
                             self.cfg.heads)
        return Hd, _squeeze(nn.ffn(ps, "head.dream", Hd))

    def fuse_decision(self, glo: Tensor, loc: Tensor, Hd: Tensor | None, dream: Tensor | None,
                      local_scatter: np.ndarray):
        ps = self.ps
        g = _squeeze(nn.ffn(ps, "head.glo", glo))
        lsc = _squeeze(nn.ffn(ps, "head.loc", loc))
        l_glob = _squeeze(T.matmul(T.as_tensor(local_scatter), T.reshape(lsc, lsc.shape + (1,))))
        in_local = local_scatter.sum(axis=-1)
        gate = None
        if self.cfg.fuse == "dynamic":
            gate = T.sigmoid(nn.ffn(ps, "fuse.gate", T.concat([glo[:, 0], loc[:, 0]], axis=-1)))
            # local rows: gate*g + (1-gate)*l ; rows outside the local set keep g
            floc = g + T.mul(T.mul(1.0 - gate, T.as_tensor(in_local)), l_glob - g)
        else:
            floc = g
        lam = None
        if Hd is not None:
            lam = T.sigmoid(_squeeze(nn.ffn(ps, "fuse.lam", T.concat([glo, Hd], axis=-1))))
            fgd = T.mul(1.0 - lam, g) + T.mul(lam, dream)
        else:
            fgd = g
        return floc + fgd, g, l_glob, lam, gate

    def ground_objects(self, pool: Tensor, object_rows: np.ndarray, lang: Tensor, lang_mask) -> Tensor:
        ps = self.ps
        x = nn.linear(ps, "ground.in", T.take(pool, object_rows))
        x = x + nn.attend(ps, "ground.attn", nn.norm(ps, "ground.ln", x), lang, self.cfg.heads,
                          mask=lang_mask)
        return _squeeze(nn.ffn(ps, "head.ground", x))

    def mlm_logits(self, lang: Tensor) -> Tensor:
        return nn.linear(self.ps, "head.mlm", lang)

    # ------------------------------------------------------------ full pass
    def forward(self, b: Batch, lang: Tensor | None = None) -> Outputs:
        S, N = b.size, b.max_nodes
        if lang is None:
            lang = self.encode_instruction(b.tokens, b.lang_mask)
        lang_s = T.take(lang, b.lang_index)
        lmask = b.lang_mask[b.lang_index]
        fused = self.fuse_local_visuals(b.views, b.objects, b.block_mask)
        V, R, d = fused.shape
        pool = T.reshape(fused, (V * R, d))
        vis = T.reshape(T.gather_weighted(pool, b.gather_index, b.gather_weight), (S, N, d))
        H = self.embed_nodes(vis, b.loc, b.steps)
        H = self.gasa(H, b.buckets, b.node_mask)
        glo = self.cross_global(H, lang_s, b.node_mask, lmask)
        loc = self.cross_local(H, lang_s, b.local_index, b.local_mask, lmask)
        Hd = dream = None
        if self.cfg.dreamer:
            Hd, dream = self.dreamer(glo, b.imagination)
        scores, g, l_glob, lam, gate = self.fuse_decision(glo, loc, Hd, dream, b.local_scatter)
        layout = self.layout_predict(glo)
        ground = self.ground_objects(pool, b.object_rows, lang_s, lmask)
        mrc = None
        if np.any(b.mrc_row >= 0):
            rows = np.maximum(b.mrc_row, 0) + 1
            picked = T.take(T.reshape(glo, (S * (N + 1), glo.shape[-1])), np.arange(S) * (N + 1) + rows)
            mrc = nn.linear(self.ps, "head.mrc", picked)
        return Outputs(lang=lang_s, glo=glo, loc=loc, scores=scores, global_scores=g,
                       local_scores=l_glob, dream_scores=dream, lam=lam, gate=gate, layout=layout,
                       ground=ground, mrc=mrc)


def _squeeze(x: Tensor) -> Tensor:
    return T.reshape(x, x.shape[:-1])


def action_probs(out: Outputs, b: Batch) -> np.ndarray:
    """Pr(DSAP) over STOP + frontier rows; zeros elsewhere."""
    return T.softmax(out.scores, mask=b.eligible).data


def dream_probs(out: Outputs, b: Batch) -> np.ndarray:
    """Pr(im) over frontier rows; all-zero rows where no frontier exists."""
    if out.dream_scores is None:
        return np.zeros_like(b.frontier_mask, dtype=float)
    m = b.frontier_mask.copy()
    m[~b.has_frontier, 0] = True
    p = T.softmax(out.dream_scores, mask=m).data
    p[~b.has_frontier] = 0.0
    return p
