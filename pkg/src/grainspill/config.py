"""Run configuration read from an INI-style key-value file."""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

OUTPUT_ENV = "GRAINSPILL_OUTPUT"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _list(text, cast=str):
    items = [t.strip() for t in str(text).replace("\n", ",").split(",")]
    return [cast(t) for t in items if t]


def _opt_int(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "inf", "null") else int(t)


def _max_features(text):
    t = str(text).strip().lower()
    if t in ("none", "all", "d"):
        return None
    if t in ("sqrt", "third"):
        return t
    return float(t) if "." in t else int(t)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class FactorFile:
    path: str
    frequency: str


@dataclass(frozen=True)
class RunConfig:
    prices: str = ""
    factors: tuple = ()
    series: tuple = ()
    # decomposition
    ensemble: int = 100
    noise: float = 0.2
    max_modes: int | None = None
    # reconstruction
    k: int = 3
    scale: str = "log"
    restarts: int = 10
    residue_to_ltc: bool = True
    # connectedness
    mode: str = "r2"
    window: int = 252
    step: int = 1
    horizon: int = 10
    lags: int = 0
    var_lags: int = 1
    # network
    edge_threshold: float = 0.0
    network_source: str = "static"
    # forest
    n_estimators: tuple = (100, 300, 500)
    max_depth: tuple = (4, 8, 16, None)
    max_features: tuple = ("third", "sqrt", None)
    min_leaf: int = 2
    ratio: float = 0.8
    split: str = "random"
    cv: int = 5
    permutation: bool = False
    # run
    seed: int = 0
    threads: int = 1
    output: str = "grainspill-out"
    base_dir: str = field(default=".", compare=False)

    def validate(self, check_files=True):
        if self.window < 30:
            raise ConfigError(f"window must be at least 30, got {self.window}")
        if self.step < 1:
            raise ConfigError("step must be at least 1")
        if not 0 < self.ratio < 1:
            raise ConfigError(f"split ratio must lie in (0, 1), got {self.ratio}")
        if self.ensemble < 1 or self.noise <= 0:
            raise ConfigError("ensemble must be >= 1 and noise > 0")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.mode not in ("r2", "gfevd"):
            raise ConfigError(f"connect mode must be r2 or gfevd, got {self.mode!r}")
        if self.scale not in ("log", "raw"):
            raise ConfigError(f"scale must be log or raw, got {self.scale!r}")
        if self.split not in ("random", "chronological"):
            raise ConfigError(f"split must be random or chronological, got {self.split!r}")
        if self.network_source not in ("static", "average"):
            raise ConfigError("network source must be static or average")
        if check_files:
            for p in [self.prices] + [f.path for f in self.factors]:
                if not p:
                    raise ConfigError("no price file configured ([data] prices)")
                if not self.resolve(p).is_file():
                    raise ConfigError(f"input file not found: {self.resolve(p)}")
        return self

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def output_root(self, override=None) -> Path:
        if override:
            return Path(override)
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return Path(env)
        return self.resolve(self.output)

    @property
    def grid(self):
        return {"n_estimators": list(self.n_estimators), "max_depth": list(self.max_depth),
                "max_features": list(self.max_features)}

    def section(self, stage):
        """Settings a stage depends on, for its manifest."""
        keys = {
            "stats": ("prices", "series"),
            "decompose": ("ensemble", "noise", "max_modes"),
            "reconstruct": ("k", "scale", "restarts", "residue_to_ltc"),
            "connect": ("mode", "window", "step", "horizon", "lags", "var_lags"),
            "network": ("edge_threshold", "network_source"),
            "drivers": ("factors", "n_estimators", "max_depth", "max_features", "min_leaf",
                        "ratio", "split", "cv", "permutation"),
        }[stage]
        d = asdict(self)
        out = {k: d[k] for k in keys}
        if "factors" in out:
            out["factors"] = [[f["path"], f["frequency"]] for f in out["factors"]]
        for k, v in out.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_SCHEMA = {
    "data": {"prices": str, "factors": None, "series": None},
    "decompose": {"ensemble": int, "noise": float, "max_modes": _opt_int},
    "reconstruct": {"k": int, "scale": str, "restarts": int, "residue_to_ltc": _bool},
    "connect": {"mode": str, "window": int, "step": int, "horizon": int, "lags": int, "var_lags": int},
    "network": {"threshold": float, "source": str},
    "forest": {"n_estimators": None, "max_depth": None, "max_features": None, "min_leaf": int,
               "ratio": float, "split": str, "cv": int, "permutation": _bool},
    "run": {"seed": int, "threads": int, "output": str},
}


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser.read(path, encoding="utf-8")
    kw = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                kw.update(_convert(section, key, raw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {exc}") from None
    return RunConfig(base_dir=str(path.parent), **kw)


def _convert(section, key, raw):
    if section == "data" and key == "factors":
        out = []
        for item in _list(raw):
            p, _, freq = item.rpartition(":")
            if not p:
                raise ValueError("factor entries are path:frequency")
            out.append(FactorFile(p.strip(), freq.strip()))
        return {"factors": tuple(out)}
    if section == "data" and key == "series":
        return {"series": tuple(_list(raw))}
    if section == "network":
        return {"edge_threshold" if key == "threshold" else "network_source": _SCHEMA[section][key](raw)}
    if section == "forest" and key == "n_estimators":
        return {key: tuple(_list(raw, int))}
    if section == "forest" and key == "max_depth":
        return {key: tuple(_list(raw, _opt_int))}
    if section == "forest" and key == "max_features":
        return {key: tuple(_list(raw, _max_features))}
    return {key: _SCHEMA[section][key](raw.strip())}


def stage_seed(seed, stage):
    """Stable child seed for a stage name."""
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")
