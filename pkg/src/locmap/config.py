"""Run configuration: TOML file values, overridden by command-line flags."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .gateway import DEFAULT_MODEL, PROFILES, Gateway, HttpTransport, ResponseCache
from .similarity import DistanceConfig


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    transport: str = "replay"  # "replay" or "http"
    base_url: str | None = None
    replay_dir: str | None = None
    cache_dir: str | None = None
    model: str = DEFAULT_MODEL
    alias_model: str = "gpt-4o"
    eval_model: str = "gpt-4o"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    concurrency: int = 4
    profile: str = "holocaust"
    revise: bool = True
    seed: int = 0
    d_max: float | None = None
    type_penalty: float = 0.5
    graph_cap: float = math.inf
    min_degree: int = 0
    min_docs: int = 4
    prune_proximity: bool = False

    PATH_KEYS = ("replay_dir", "cache_dir")

    @classmethod
    def load(cls, path: str | Path | None) -> Config:
        if path is None:
            return cls()
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        flat: dict[str, Any] = {}
        for key, value in data.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        for key in cls.PATH_KEYS:
            if flat.get(key):
                flat[key] = str((path.parent / flat[key]).resolve())
        return cls().updated(flat)

    def updated(self, values: dict[str, Any]) -> Config:
        known = {f.name for f in fields(self)}
        unknown = sorted(k for k in values if k not in known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.transport not in ("replay", "http"):
            raise ConfigError(f"transport must be 'replay' or 'http', not {self.transport!r}")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        try:
            self.distance()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def distance(self) -> DistanceConfig:
        return DistanceConfig(graph_cap=self.graph_cap, type_penalty=self.type_penalty, d_max=self.d_max)

    def gateway(self, model: str | None = None) -> Gateway:
        if self.transport == "replay":
            if not self.replay_dir:
                raise ConfigError("replay transport needs replay_dir")
            return Gateway(
                cache=ResponseCache(self.replay_dir),
                model_id=model or self.model,
                temperature=self.temperature,
                max_output_tokens=self.max_output_tokens,
                concurrency=self.concurrency,
            )
        if not self.base_url:
            raise ConfigError("http transport needs base_url")
        cache = ResponseCache(self.cache_dir) if self.cache_dir else None
        return Gateway(
            cache=cache,
            transport=HttpTransport(self.base_url),
            model_id=model or self.model,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            concurrency=self.concurrency,
        )
