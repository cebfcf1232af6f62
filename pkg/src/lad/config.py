"""Flat ``key = value`` run configuration with dotted keys and ``#`` comments."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


class ConfigFileError(ValueError):
    pass


def _coerce(raw: str):
    v = raw.strip()
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        pass
    if "," in v:
        return tuple(_coerce(p) for p in v.split(","))
    return v


def parse(text: str, source: str = "<config>") -> dict:
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigFileError(f"{source}:{lineno}: bad key {key!r}")
        if key in out:
            raise ConfigFileError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    return out


def dumps(cfg: dict) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (tuple, list)):
            return ",".join(fmt(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)
    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in sorted(cfg))


def load(name_or_path: str) -> dict:
    """A config file path, or the name of a shipped config ('default')."""
    p = Path(name_or_path)
    if p.is_file():
        return parse(p.read_text(), str(p))
    shipped = resources.files("lad") / "configs" / f"{name_or_path}.cfg"
    if shipped.is_file():
        return parse(shipped.read_text(), f"configs/{name_or_path}.cfg")
    raise FileNotFoundError(f"no config file or shipped config named {name_or_path!r}")


def section(cfg: dict, prefix: str) -> dict:
    """Keys under ``prefix.`` with the prefix stripped."""
    pre = prefix + "."
    return {k[len(pre):]: v for k, v in cfg.items() if k.startswith(pre)}


def apply(obj, values: dict, where: str):
    """Set dataclass fields from ``values``; unknown keys are an error."""
    for k, v in values.items():
        if not hasattr(obj, k):
            raise ConfigFileError(f"unknown key {where}.{k}")
        cur = getattr(obj, k)
        if isinstance(cur, tuple) and not isinstance(v, tuple):
            v = (v,)
        if isinstance(cur, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        setattr(obj, k, v)
    return obj
