"""Training configuration: JSON document <-> dataclass, with all-at-once validation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


# fields that only steer the run, not the model or the data it sees
_RUN_CONTROL = {"total_iterations", "checkpoint_every", "out_dir"}


@dataclass
class TrainConfig:
    lang1_train: str = ""
    lang2_train: str = ""
    bpe_merges: int = 500
    bpe_path: str | None = None
    vocab_path: str | None = None
    embeddings_path: str | None = None
    d: int = 64
    n_layers: int = 2
    heads: int = 4
    d_ff: int | None = None
    d_z: int = 32
    gan_heads: int = 4
    t_max: int = 35
    p_drop: float = 0.1
    k_shuffle: int = 3
    sigma_code_noise: float = 0.05
    lr_tu: float = 3e-4
    betas_tu: tuple[float, float] = (0.9, 0.999)
    lr_gan: float = 1e-4
    betas_gan: tuple[float, float] = (0.5, 0.999)
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 32
    total_iterations: int = 1000
    seed: int = 0
    checkpoint_every: int = 0
    out_dir: str = "run"
    dtype: str = "float32"

    @property
    def t_gen(self) -> int:
        return self.t_max + 2

    def validate(self, check_files: bool = True) -> None:
        problems = []
        for name in ("d", "n_layers", "heads", "d_z", "gan_heads", "batch_size", "t_max"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.d % max(self.heads, 1) or self.d % max(self.gan_heads, 1):
            problems.append("d must be divisible by heads and gan_heads")
        if self.bpe_merges < 0:
            problems.append("bpe_merges must be >= 0")
        if self.total_iterations < 0:
            problems.append("total_iterations must be >= 0")
        if self.checkpoint_every < 0:
            problems.append("checkpoint_every must be >= 0")
        if not 0.0 <= self.p_drop <= 1.0:
            problems.append("p_drop must lie in [0, 1]")
        if self.k_shuffle < 0:
            problems.append("k_shuffle must be >= 0")
        if self.sigma_code_noise < 0:
            problems.append("sigma_code_noise must be >= 0")
        if self.dtype not in ("float32", "float64"):
            problems.append("dtype must be float32 or float64")
        if (self.bpe_path is None) != (self.vocab_path is None):
            problems.append("bpe_path and vocab_path must be given together")
        if check_files:
            for name in ("lang1_train", "lang2_train", "bpe_path", "vocab_path", "embeddings_path"):
                value = getattr(self, name)
                if name.endswith("_train") and not value:
                    problems.append(f"{name} is required")
                elif value and not Path(value).is_file():
                    problems.append(f"{name}: cannot read {value}")
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas_tu"] = list(self.betas_tu)
        d["betas_gan"] = list(self.betas_gan)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> bytes:
        core = {k: v for k, v in self.to_dict().items() if k not in _RUN_CONTROL}
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode("utf-8")).digest()

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        problems = []
        for f in dataclasses.fields(cls):
            if f.name not in raw or f.default is dataclasses.MISSING:
                continue
            value, default = raw[f.name], f.default
            if isinstance(default, (int, float)) and (isinstance(value, bool)
                                                      or not isinstance(value, (int, float))):
                problems.append(f"{f.name} must be a number, got {value!r}")
            elif isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float):
                problems.append(f"{f.name} must be an integer, got {value!r}")
        if problems:
            raise ConfigError(problems)
        raw = dict(raw)
        for key in ("betas_tu", "betas_gan"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc
        if not isinstance(raw, dict):
            raise ConfigError([f"{path}: top level must be a JSON object"])
        return cls.from_dict(raw)
