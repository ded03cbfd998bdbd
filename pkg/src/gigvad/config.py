"""Key = value configuration files covering training, inference, and paths.

Format: UTF-8 lines of ``key = value``; ``#`` starts a comment; blank lines
ignored. Unknown keys are rejected, missing keys fall back to the documented
defaults, and every diagnostic names the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .inference import (DEFAULT_SIGMA, DEFAULT_STRIDE, DEFAULT_TAU,
                        DEFAULT_WINDOW)
from .training import TrainConfig


def _parse_optional_int(text: str):
    if text == "auto":
        return None
    return int(text)


@dataclass
class Config:
    """Every tunable of the pipeline plus dataset paths and output directory.

    ``top_k`` / ``top_p`` accept the literal ``auto`` (the default) to derive
    a quarter of the spatial cells / segments.
    """

    segments: int = 8
    clips_per_segment: int = 6
    clip_interval: int = 5
    batch_size: int = 8
    learning_rate: float = 0.001
    epochs: int = 100
    dropout: float = 0.5
    flip_prob: float = 0.5
    top_k: int | None = None
    top_p: int | None = None
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.1
    seed: int = 7
    rows: int = 4
    cols: int = 4
    channels: int = 32
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE
    sigma: float = DEFAULT_SIGMA
    tau: float = DEFAULT_TAU
    train_data: str = ""
    test_data: str = ""
    out_dir: str = "out"

    def validate(self) -> "Config":
        self.train_config()  # reuses TrainConfig's range checks
        if self.window < 1 or self.stride < 1:
            raise ConfigError("window and stride must be positive")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            segments=self.segments,
            clips_per_segment=self.clips_per_segment,
            clip_interval=self.clip_interval,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            dropout=self.dropout,
            flip_prob=self.flip_prob,
            top_k=self.top_k,
            top_p=self.top_p,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda3=self.lambda3,
            seed=self.seed,
            rows=self.rows,
            cols=self.cols,
            channels=self.channels,
        )

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.rows, self.cols, self.channels)


# field annotations are strings here (postponed evaluation)
_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "int | None": _parse_optional_int,
}


def _field_parsers() -> dict:
    out = {}
    for f in fields(Config):
        parser = _PARSERS.get(f.type)
        if parser is None:
            raise AssertionError(f"no parser for config field {f.name}")
        out[f.name] = parser
    return out


def parse_config(text: str) -> Config:
    """Parse config text; total: valid Config or a line-numbered diagnostic."""
    parsers = _field_parsers()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = (p.strip() for p in line.partition("="))
        if key not in parsers:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        try:
            values[key] = parsers[key](value)
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: bad value for '{key}': {value!r}") from exc
    try:
        return Config(**values).validate()
    except ConfigError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: str | Path) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: Config) -> str:
    """Render the resolved configuration, one ``key = value`` per line."""
    lines = []
    for f in fields(Config):
        value = getattr(cfg, f.name)
        if value is None:
            value = "auto"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
