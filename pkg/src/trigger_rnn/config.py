"""Flat ``key = value`` configuration files and the run manifest."""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

LAYOUT = {
    "prepared": "prepared",
    "checkpoints": "checkpoints",
    "reports": "reports",
    "logs": "logs",
    "manifest": "manifest.json",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def _coerce(name, default, value):
    if not isinstance(value, str):
        return value
    try:
        if isinstance(default, bool):
            v = value.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(int(x) for x in value.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return value


# short flag spellings accepted in config files too
ALIASES = {
    "cell": ("cell_kind", {"lstm": "lstm", "gru": "gru"}),
    "features": ("feature_variant", {"w": "word_only", "we": "word_plus_entity"}),
    "head": ("head_variant", {"g": "g_only", "lg": "l_plus_g"}),
    "lr": ("learning_rate", None),
    "clip": ("grad_clip_norm", None),
    "dropout": ("dropout_rate", None),
}


def resolve(file_values=None, overrides=None):
    """Effective (ModelConfig, TrainConfig): overrides > file values > defaults.

    ``seed`` applies to both configs. Unknown keys are an error.
    """
    merged = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key in ALIASES:
                key, mapping = ALIASES[key]
                if mapping is not None and isinstance(value, str):
                    if value not in mapping and value not in mapping.values():
                        raise ConfigError(f"bad value for {key}: {value!r}")
                    value = mapping.get(value, value)
            merged[key] = value
    model_fields = {f.name: f for f in fields(ModelConfig)}
    train_fields = {f.name: f for f in fields(TrainConfig)}
    unknown = set(merged) - set(model_fields) - set(train_fields)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    mdef, tdef = ModelConfig(), TrainConfig()
    m = {k: _coerce(k, getattr(mdef, k), v) for k, v in merged.items() if k in model_fields}
    t = {k: _coerce(k, getattr(tdef, k), v) for k, v in merged.items() if k in train_fields}
    return ModelConfig(**m), TrainConfig(**t)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def toolkit_version():
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        res = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class RunManifest:
    command: str
    model_config: dict
    train_config: dict
    datasets: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    version: str = ""
    layout: dict = field(default_factory=lambda: dict(LAYOUT))
    artifacts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add_dataset(self, name, path):
        self.datasets[name] = {"path": str(path), "sha256": file_digest(path)}

    def to_json(self):
        return json.dumps(self.__dict__, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def write(self, root):
        path = Path(root) / LAYOUT["manifest"]
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
