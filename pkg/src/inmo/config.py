"""Run configuration: one TOML file plus ``--set section.key=value`` overrides."""
from __future__ import annotations

import copy
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .linalg import DENSE_CAP
from .templates import INDICATORS
from .training import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_override", "BUILTIN_TOY"]

BUILTIN_TOY = "builtin:toy200"
SCENARIOS = ("transductive", "new-interactions", "new-users-items")
FORMATS = ("triple-tsv", "triple-csv")


class ConfigError(ValueError):
    """Malformed or unknown configuration; the CLI maps it to exit code 2."""


@dataclass
class DataSection:
    path: str = BUILTIN_TOY
    format: str = "triple-tsv"
    rating_threshold: float = 3.0
    min_degree: int = 10


@dataclass
class SplitSection:
    seed: int = 0
    ratios: list = field(default_factory=lambda: [0.7, 0.1, 0.2])


@dataclass
class TemplateSection:
    indicator: str = "error_sort"
    user_frac: float = 1.0
    item_frac: float = 1.0


@dataclass
class ScenarioSection:
    kind: str = "transductive"
    hold_frac: float = 0.2
    entity_frac: float = 0.2
    seed: int = 0


@dataclass
class EvalSection:
    k: int = 20


@dataclass
class TheorySection:
    seeds: list = field(default_factory=lambda: list(range(10)))
    n_users: int = 60
    n_items: int = 50
    density: float = 0.15
    dims: list = field(default_factory=lambda: [2, 4, 8, 16])
    template_fracs: list = field(default_factory=lambda: [0.3, 0.5, 0.7])
    curve_d: int = 64
    curve_fractions: list = field(default_factory=lambda: [round(0.1 * k, 1) for k in range(11)])
    curve_indicators: list = field(default_factory=lambda: ["degree", "pagerank", "error_sort", "error_sort_exact"])
    dense_cap: int = DENSE_CAP


SECTIONS = {
    "data": DataSection,
    "split": SplitSection,
    "templates": TemplateSection,
    "train": TrainConfig,
    "scenario": ScenarioSection,
    "eval": EvalSection,
    "theory": TheorySection,
}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    templates: TemplateSection = field(default_factory=TemplateSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    eval: EvalSection = field(default_factory=EvalSection)
    theory: TheorySection = field(default_factory=TheorySection)
    out: str = ""
    base_dir: Path = field(default_factory=Path.cwd, repr=False, compare=False)

    def to_dict(self) -> dict:
        """Every field except the output directory, which does not change results."""
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def data_path(self) -> str:
        p = self.data.path
        if p == BUILTIN_TOY:
            return p
        return str((self.base_dir / p).resolve()) if not Path(p).is_absolute() else p

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        doc = copy.deepcopy(doc)
        out = doc.pop("out", "")
        if not isinstance(out, str):
            raise ConfigError("'out' must be a string")
        unknown = set(doc) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        built = {}
        for name, kind in SECTIONS.items():
            section = doc.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f"[{name}] must be a table")
            built[name] = _build_section(name, kind, section)
        cfg = cls(**built, out=out, base_dir=base_dir or Path.cwd())
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.data.format not in FORMATS:
            raise ConfigError(f"data.format must be one of {FORMATS}")
        if self.templates.indicator not in INDICATORS:
            raise ConfigError(f"templates.indicator must be one of {sorted(INDICATORS)}")
        if self.scenario.kind not in SCENARIOS:
            raise ConfigError(f"scenario.kind must be one of {SCENARIOS}")
        for name in self.theory.curve_indicators:
            if name not in INDICATORS:
                raise ConfigError(f"theory.curve_indicators: unknown indicator {name!r}")
        if len(self.split.ratios) != 3:
            raise ConfigError("split.ratios needs three numbers")
        if self.eval.k < 1:
            raise ConfigError("eval.k must be at least 1")


def _coerce(where: str, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")
    return value


def _build_section(name: str, kind, section: dict):
    defaults = kind()
    known = {f.name for f in fields(kind)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    values = {k: _coerce(f"{name}.{k}", getattr(defaults, k), v) for k, v in section.items()}
    try:
        return kind(**{**asdict(defaults), **values})
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def parse_override(text: str) -> tuple[list[str], object]:
    """``section.key=value``; the value is read as a TOML literal, falling
    back to a bare string (so ``data.path=ratings.tsv`` works unquoted)."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return parts, value


def load_config(path: str | None = None, overrides: list[str] | tuple = ()) -> RunConfig:
    doc: dict = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            with open(p, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = p.resolve().parent
    for text in overrides:
        parts, value = parse_override(text)
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} descends into a non-table")
        node[parts[-1]] = value
    return RunConfig.from_dict(doc, base)
