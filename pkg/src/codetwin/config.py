"""Runtime configuration, file format ``cfg/1`` with environment overrides.

Configuration only tunes knobs (budgets, priors, paranoia); it never changes
what counts as a fact, so two stores built with the same config and inputs
are byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .extraction import DEFAULT_LEXICON, Lexicon
from .store import BuildSettings

CFG_VERSION = "cfg/1"

ENV_PREFIX = "TWIN_"


class ConfigError(ValueError):
    pass


@dataclass
class TwinConfig:
    extractor: str = "tree"
    prior: float = 0.5
    paranoid: bool = False
    hop_bound: int = 2
    node_budget: int = 40
    seed_limit: int = 3
    token_budget: int = 2000
    lexicon: Lexicon = field(default_factory=lambda: DEFAULT_LEXICON)

    def build_settings(self) -> BuildSettings:
        return BuildSettings(extractor=self.extractor, lexicon=self.lexicon,
                             prior=self.prior, paranoid=self.paranoid)

    def to_record(self) -> dict:
        return {
            "version": CFG_VERSION,
            "extractor": self.extractor, "prior": self.prior,
            "paranoid": self.paranoid, "hop_bound": self.hop_bound,
            "node_budget": self.node_budget, "seed_limit": self.seed_limit,
            "token_budget": self.token_budget,
            "lexicon": {"causal": list(self.lexicon.causal),
                        "modal": list(self.lexicon.modal)},
        }

    def serialize(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=1) + "\n"


_INT_FIELDS = {"hop_bound", "node_budget", "seed_limit", "token_budget"}
_FLOAT_FIELDS = {"prior"}
_BOOL_FIELDS = {"paranoid"}


def _coerce(name: str, raw):
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FLOAT_FIELDS:
        return float(raw)
    if name in _BOOL_FIELDS:
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot read {raw!r} as a boolean for {name}")
    return str(raw)


def parse_config(text: str) -> TwinConfig:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config: {exc.msg}") from exc
    if rec.get("version") != CFG_VERSION:
        raise ConfigError(f"expected config version {CFG_VERSION!r}")
    config = TwinConfig()
    known = {f.name for f in fields(TwinConfig)}
    for name, value in rec.items():
        if name == "version":
            continue
        if name == "lexicon":
            config.lexicon = Lexicon(tuple(value.get("causal", ())),
                                     tuple(value.get("modal", ())))
            continue
        if name not in known:
            raise ConfigError(f"unknown config key {name!r}")
        setattr(config, name, _coerce(name, value))
    _check(config)
    return config


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] | None = None) -> TwinConfig:
    """File values first, then TWIN_* environment variables on top."""
    config = TwinConfig()
    if path is not None:
        config = parse_config(Path(path).read_text("utf-8"))
    env = env if env is not None else os.environ
    known = {f.name for f in fields(TwinConfig)} - {"lexicon"}
    for name in sorted(known):
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            setattr(config, name, _coerce(name, raw))
    _check(config)
    return config


def _check(config: TwinConfig) -> None:
    if not 0.0 <= config.prior <= 1.0:
        raise ConfigError(f"prior {config.prior} outside [0,1]")
    for name in _INT_FIELDS:
        if getattr(config, name) < 1:
            raise ConfigError(f"{name} must be positive")
