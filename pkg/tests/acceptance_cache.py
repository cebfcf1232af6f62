"""Shared long-running results for the acceptance suite.

The ablation grid over the shipped config takes hours on one core, so its
report is cached under ``LAD_ACCEPTANCE_CACHE`` (default ``.acceptance/`` in the
repo) keyed by a digest of the resolved config. Delete the directory to force a
fresh run.
"""

import hashlib
import json
import os
import time
from pathlib import Path

from lad import config as C
from lad.pipeline import VARIANTS, ablation

ROOT = Path(__file__).resolve().parent.parent
CACHE = Path(os.environ.get("LAD_ACCEPTANCE_CACHE", ROOT / ".acceptance"))


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(C.dumps(cfg).encode()).hexdigest()[:16]


def cached_ablation(name: str = "default", log=print) -> tuple[dict, dict]:
    cfg = C.load(name)
    out = CACHE / f"ablate-{config_digest(cfg)}"
    rep_path, time_path = out / "ablation.json", out / "timing.json"
    if rep_path.exists() and time_path.exists():
        return json.loads(rep_path.read_text()), json.loads(time_path.read_text())
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in cfg.get("ablate.seeds", (0, 1, 2))]
    timing: dict = {}
    last = [time.monotonic()]

    def progress(row):
        if "variant" in row:
            now = time.monotonic()
            timing.setdefault(row["variant"], []).append(now - last[0])
            last[0] = now
            if log:
                log(f"[{row['variant']} seed {row['seed']}] SR {row['sr']:.3f} ({timing[row['variant']][-1]:.0f}s)")

    rep = ablation(cfg, seeds, tuple(VARIANTS), out, progress)
    rep_path.write_text(json.dumps(rep, indent=1, sort_keys=True) + "\n")
    time_path.write_text(json.dumps(timing, indent=1, sort_keys=True) + "\n")
    return rep, timing


if __name__ == "__main__":
    cached_ablation()
