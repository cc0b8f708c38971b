"""Settings merged from defaults, a JSON config file, the environment and flags.

Later sources win. Unknown keys anywhere in the config file are rejected.
"""

from __future__ import annotations

import copy
import json
import os
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .grounding import GroundingConfig
from .interchange import FormatVariant
from .llm import ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL, LlmConfig
from .render import CORNERS, EffectPolicy, RenderSettings

DEFAULTS: dict[str, dict[str, Any]] = {
    "grounding": {
        "temperature": 0.0,
        "model_name": "",
        "variant": "hier+style",
        "exclude_titles": False,
        "max_repair_attempts": 1,
        "rules": None,
        "theta": 0.5,
        "max_workers": 4,
    },
    "llm": {
        "endpoint": "",
        "provider": "openai",
        "timeout": 60.0,
        "max_retries": 3,
        "backoff_base": 1.0,
        "max_in_flight": 4,
    },
    "render": {
        "fps": 10.0,
        "resolution": [1280, 720],
        "avatar": "on",
        "avatar_corner": "bottom-right",
        "wpm": 150.0,
        "min_clip": 1.5,
        "rasterizer": None,
    },
}


def _merge(base: dict, override: Mapping, where: str) -> None:
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {where}{key} must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def parse_resolution(text: str | list | tuple) -> tuple[int, int]:
    if isinstance(text, str):
        parts = text.lower().replace("×", "x").split("x")
    else:
        parts = list(text)
    try:
        w, h = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"resolution must look like 1280x720, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise ConfigError(f"resolution must be positive, got {text!r}")
    return (w, h)


@dataclass(frozen=True)
class CliConfig:
    values: Mapping[str, Mapping[str, Any]]
    api_key: str = ""

    def __getitem__(self, section: str) -> Mapping[str, Any]:
        return self.values[section]

    def grounding(self) -> GroundingConfig:
        g = self["grounding"]
        return GroundingConfig(
            temperature=float(g["temperature"]),
            model_name=g["model_name"],
            variant=FormatVariant.parse(g["variant"]),
            exclude_titles=bool(g["exclude_titles"]),
            max_repair_attempts=int(g["max_repair_attempts"]),
            rules=g["rules"],
            avatar_visible=self.avatar_visible,
        )

    @property
    def avatar_visible(self) -> bool:
        return self["render"]["avatar"] == "on"

    def llm(self, audit_path: Path | None = None) -> LlmConfig:
        llm = self["llm"]
        return LlmConfig(
            endpoint=llm["endpoint"],
            api_key=self.api_key,
            model=self["grounding"]["model_name"],
            provider=llm["provider"],
            timeout=float(llm["timeout"]),
            max_retries=int(llm["max_retries"]),
            backoff_base=float(llm["backoff_base"]),
            max_in_flight=int(llm["max_in_flight"]),
            audit_path=audit_path,
        )

    def render_settings(self) -> RenderSettings:
        r = self["render"]
        return RenderSettings(
            fps=float(r["fps"]),
            resolution=parse_resolution(r["resolution"]),
            avatar_visible=self.avatar_visible,
            avatar_corner=r["avatar_corner"],
        )

    def effect_policy(self) -> EffectPolicy:
        r = self["render"]
        return EffectPolicy(float(r["wpm"]), float(r["min_clip"]), self.avatar_visible)


def _validate(values: Mapping[str, Mapping[str, Any]]) -> None:
    g, r, llm = values["grounding"], values["render"], values["llm"]
    try:
        FormatVariant.parse(g["variant"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    checks = [
        (float(g["temperature"]) >= 0, "grounding.temperature must be >= 0"),
        (0.0 <= float(g["theta"]) <= 1.0, "grounding.theta must be within [0, 1]"),
        (int(g["max_repair_attempts"]) >= 0, "grounding.max_repair_attempts must be >= 0"),
        (int(g["max_workers"]) >= 1, "grounding.max_workers must be >= 1"),
        (float(r["fps"]) > 0, "render.fps must be positive"),
        (float(r["wpm"]) > 0, "render.wpm must be positive"),
        (float(r["min_clip"]) > 0, "render.min_clip must be positive"),
        (r["avatar"] in ("on", "off"), "render.avatar must be 'on' or 'off'"),
        (r["avatar_corner"] in CORNERS, f"render.avatar_corner must be one of {CORNERS}"),
        (int(llm["max_retries"]) >= 0, "llm.max_retries must be >= 0"),
        (int(llm["max_in_flight"]) >= 1, "llm.max_in_flight must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    parse_resolution(r["resolution"])


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    flags: Mapping[str, Mapping[str, Any]] | None = None,
) -> CliConfig:
    env = os.environ if env is None else env
    values = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError(f"config file {path} must hold a JSON object")
        _merge(values, data, "")
    if env.get(ENV_ENDPOINT):
        values["llm"]["endpoint"] = env[ENV_ENDPOINT]
    if env.get(ENV_MODEL):
        values["grounding"]["model_name"] = env[ENV_MODEL]
    if flags:
        _merge(values, {s: {k: v for k, v in kv.items() if v is not None} for s, kv in flags.items()}, "")
    try:
        _validate(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from None
    return CliConfig(values, env.get(ENV_API_KEY, ""))
