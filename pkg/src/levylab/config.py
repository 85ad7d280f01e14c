"""Experiment configuration files: ``key = value`` pairs grouped in sections.

Example::

    [experiment]
    name = williams
    seed = 0

    [model]
    family = BrownianStandard

    [params]
    n_paths = 100000
    dt = 1e-4

    [output]
    dir = results/williams
    formats = json, text, csv
    figures = false
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, LevyLabError, UnknownExperiment
from .levy_model import make_model

FORMATS = ("json", "text", "csv")


def parse_value(text: str):
    """Literal numbers, tuples, lists and booleans; anything else stays a string."""
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("inf", "+inf", "-inf"):
        return float(low)
    try:
        return ast.literal_eval(s)
    except (ValueError, SyntaxError):
        pass
    if "," in s:
        return tuple(parse_value(p) for p in s.split(",") if p.strip())
    return s


@dataclass
class ExperimentConfig:
    """Everything needed to rerun one experiment."""

    name: str
    model: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str | None = None
    formats: tuple = ("json", "text")
    figures: bool = False

    def echo(self) -> dict:
        return {"experiment": {"name": self.name, "seed": self.seed}, "model": dict(self.model),
                "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()},
                "output": {"dir": self.output_dir, "formats": list(self.formats), "figures": self.figures}}

    def to_text(self) -> str:
        """Render back to the file format (round-trips through :func:`parse_config`)."""
        lines = ["[experiment]", f"name = {self.name}", f"seed = {self.seed}", "", "[model]"]
        lines += [f"{k} = {_render(v)}" for k, v in self.model.items()]
        lines += ["", "[params]"] + [f"{k} = {_render(v)}" for k, v in self.params.items()]
        lines += ["", "[output]"]
        if self.output_dir is not None:
            lines.append(f"dir = {self.output_dir}")
        lines += [f"formats = {', '.join(self.formats)}", f"figures = {str(self.figures).lower()}"]
        return "\n".join(lines) + "\n"


def _render(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_render(x) for x in v) + ("," if len(v) == 1 else "")
    if isinstance(v, bool):
        return str(v).lower()
    return repr(v) if isinstance(v, float) else str(v)


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse config text and apply ``key=value`` overrides.

    Override keys are ``section.key``; a bare key goes to ``params``.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    data = {s: {k: parse_value(v) for k, v in cp.items(s)} for s in cp.sections()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        sec, _, k = key.strip().rpartition(".")
        data.setdefault(sec or "params", {})[k] = parse_value(val)
    unknown = set(data) - {"experiment", "model", "params", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}")
    exp = data.get("experiment", {})
    out = data.get("output", {})
    formats = out.get("formats", ("json", "text"))
    formats = (formats,) if isinstance(formats, str) else tuple(formats)
    cfg = ExperimentConfig(name=str(exp.get("name", "")), model=dict(data.get("model", {})),
                           params=dict(data.get("params", {})), seed=exp.get("seed", 0),
                           output_dir=out.get("dir"), formats=formats, figures=out.get("figures", False))
    return cfg


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def validate(cfg: ExperimentConfig, registry: dict) -> None:
    """Raise :class:`ConfigError` naming the offending field."""
    if cfg.name not in registry:
        raise UnknownExperiment(f"unknown experiment {cfg.name!r}; choose from {sorted(registry)}",
                                "experiment.name")
    spec = registry[cfg.name]
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer", "experiment.seed")
    if not isinstance(cfg.figures, bool):
        raise ConfigError("figures must be true or false", "output.figures")
    bad = [f for f in cfg.formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown format(s) {bad}", "output.formats")
    if spec.needs_model:
        if "family" not in cfg.model:
            raise ConfigError("model family is required", "model.family")
        try:
            make_model(dict(cfg.model))
        except LevyLabError as exc:
            raise ConfigError(str(exc), "model") from None
    unknown = set(cfg.params) - set(spec.defaults)
    if unknown:
        raise ConfigError(f"not a parameter of {cfg.name}: {sorted(unknown)}", f"params.{sorted(unknown)[0]}")
    missing = [k for k in spec.required if k not in cfg.params]
    if missing:
        raise ConfigError("required parameter missing", f"params.{missing[0]}")
    p = {**spec.defaults, **cfg.params}
    for key in ("dt", "cond_dt", "horizon"):
        if key in p and p[key] is not None and not (isinstance(p[key], (int, float)) and p[key] > 0):
            raise ConfigError("must be a positive number", f"params.{key}")
    for key in ("n_paths", "n_runs"):
        if key in p and not (isinstance(p[key], int) and not isinstance(p[key], bool) and p[key] >= 100):
            raise ConfigError("must be an integer >= 100", f"params.{key}")
