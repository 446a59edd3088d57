"""Run configuration: flat ``key = value`` text grouped in sections, with
``--section.key value`` overrides from the command line."""

from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .student.train import TrainConfig
from .synthvideo import SynthConfig
from .teacher import TeacherConfig


class ConfigError(ValueError):
    pass


@dataclass
class SelectConfig:
    keep_fraction: float = 0.10

    def __post_init__(self):
        if not 0 < self.keep_fraction <= 1:
            raise ValueError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")


@dataclass
class AugmentConfig:
    n_random: int = 4

    def __post_init__(self):
        if self.n_random < 0:
            raise ValueError("n_random must be >= 0")


@dataclass
class BoxesConfig:
    theta_rel: float = 0.5
    min_area_frac: float = 0.01

    def __post_init__(self):
        if not 0 < self.theta_rel <= 1:
            raise ValueError("theta_rel must be in (0, 1]")
        if not 0 <= self.min_area_frac < 1:
            raise ValueError("min_area_frac must be in [0, 1)")


@dataclass
class RunSection:
    seed: int = 0
    workdir: str = "run"
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


SECTIONS = {
    "run": RunSection,
    "synth": SynthConfig,
    "teacher": TeacherConfig,
    "select": SelectConfig,
    "augment": AugmentConfig,
    "train": TrainConfig,
    "boxes": BoxesConfig,
}
# filled from elsewhere (paths, the run seed), not from the config file
_HIDDEN = {("synth", "seed"), ("train", "seed"), ("train", "out_dir"), ("train", "loss_log")}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    select: SelectConfig = field(default_factory=SelectConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    boxes: BoxesConfig = field(default_factory=BoxesConfig)

    @property
    def workdir(self) -> Path:
        return Path(self.run.workdir)

    def as_text(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            obj = getattr(self, name)
            for f in dataclasses.fields(obj):
                if (name, f.name) in _HIDDEN:
                    continue
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)


def keys() -> list[str]:
    """Every ``section.key`` accepted by files and flags."""
    out = []
    for name, cls in SECTIONS.items():
        out += [f"{name}.{f.name}" for f in dataclasses.fields(cls) if (name, f.name) not in _HIDDEN]
    return out


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse(text: str, hint, where: str):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if text.lower() == "none" and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
        origin = typing.get_origin(hint)
    try:
        if hint is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is tuple or origin is tuple:
            return tuple(int(x) for x in text.split(","))
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {getattr(hint, '__name__', hint)}") from None


def _build(overrides: dict[str, dict[str, str]]) -> RunConfig:
    parts = {}
    for name, cls in SECTIONS.items():
        hints = typing.get_type_hints(cls)
        values = {}
        for key, text in overrides.get(name, {}).items():
            values[key] = _parse(text, hints[key], f"{name}.{key}")
        try:
            parts[name] = cls(**values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    cfg = RunConfig(**parts)
    # one seed drives every stochastic stage
    cfg.synth.seed = cfg.run.seed
    cfg.train.seed = cfg.run.seed
    return cfg


def load(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Merge the config file (if any) with ``{"section.key": text}`` overrides; overrides win."""
    valid = set(keys())
    raw: dict[str, dict[str, str]] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(p.read_text(encoding="utf-8"), source=str(p))
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"{p}: unknown section [{section}]")
            for key, value in parser.items(section):
                if f"{section}.{key}" not in valid:
                    raise ConfigError(f"{p}: unknown key {section}.{key}")
                raw.setdefault(section, {})[key] = value
    for dotted, value in (overrides or {}).items():
        if dotted not in valid:
            raise ConfigError(f"unknown setting {dotted}")
        section, key = dotted.split(".", 1)
        raw.setdefault(section, {})[key] = value
    return _build(raw)
