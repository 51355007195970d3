"""Run configuration: defaults, TOML file, command-line overrides."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .backend import DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL, DEFAULT_INPUT_LIMIT, DEFAULT_MODEL_ID, Backend, Sampling, make_backend
from .corpus import DEFAULT_CHUNK_BUDGET, MIN_CHUNK_BUDGET
from .errors import MargError
from .group import GroupLimits
from .usage import UsageLedger


class ConfigError(MargError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    backend: str = "scripted"
    script: str | None = None
    model_id: str = DEFAULT_MODEL_ID
    base_url: str = DEFAULT_BASE_URL
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = 0.0
    max_output_tokens: int = 1024
    chunk_budget: int = DEFAULT_CHUNK_BUDGET
    max_leader_turns: int = 40
    worker_tail_limit: int = 3
    input_token_limit: int = DEFAULT_INPUT_LIMIT
    prompt_bundle_path: str | None = None
    output_dir: str = "out"
    seed: int = 0
    concurrency_limit: int = 4
    serial: bool = False
    refinement: bool = True
    include_captions: bool = True
    truncation_budget: int | None = None
    match_passes: int = 5
    vote_threshold: int = 2

    def validate(self) -> "RunConfig":
        if self.backend not in ("scripted", "live"):
            raise ConfigError(f"backend must be 'scripted' or 'live', got {self.backend!r}")
        if self.backend == "scripted" and not self.script:
            raise ConfigError("the scripted backend needs a script path (--script)")
        if self.backend == "live" and not os.environ.get(self.api_key_env):
            raise ConfigError(f"the live backend needs an API key in ${self.api_key_env}")
        if self.chunk_budget < MIN_CHUNK_BUDGET:
            raise ConfigError(f"chunk_budget must be >= {MIN_CHUNK_BUDGET}")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        try:
            self.limits
            Sampling(self.temperature, self.max_output_tokens)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @property
    def limits(self) -> GroupLimits:
        return GroupLimits(self.max_leader_turns, self.worker_tail_limit, self.input_token_limit)

    @property
    def effective_concurrency(self) -> int:
        return 1 if self.serial else self.concurrency_limit

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def make_backend(self, ledger: UsageLedger | None = None) -> Backend:
        common = dict(
            input_limit=self.input_token_limit,
            ledger=ledger,
            concurrency_limit=self.effective_concurrency,
            model_id=self.model_id,
        )
        if self.backend == "scripted":
            return make_backend("scripted", script=self.script, **common)
        return make_backend(
            "live",
            base_url=self.base_url,
            api_key_env=self.api_key_env,
            sampling=Sampling(self.temperature, self.max_output_tokens),
            **common,
        )


_FIELDS = {f.name for f in fields(RunConfig)}
# [limits] / [backend] style tables are flattened into the same key space
_TABLES = ("limits", "run", "evaluation")


def _flatten(data: Mapping[str, Any]) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if key in _TABLES and isinstance(value, Mapping):
            flat.update(value)
        else:
            flat[key] = value
    return flat


def config_from_mapping(data: Mapping[str, Any], base: RunConfig | None = None) -> RunConfig:
    flat = _flatten(data)
    flat.pop("schema_version", None)
    unknown = set(flat) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    return replace(base or RunConfig(), **flat)


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults, then the TOML file, then non-None ``overrides``."""
    config = RunConfig()
    if path is not None:
        from ._toml import loads

        path = Path(path)
        try:
            data = loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        config = config_from_mapping(data, config)
        # relative paths in a config file are relative to the file
        for key in ("script", "prompt_bundle_path"):
            value = getattr(config, key)
            if value and not Path(value).is_absolute() and key in _flatten(data):
                config = replace(config, **{key: str(path.parent / value)})
    if overrides:
        config = config_from_mapping({k: v for k, v in overrides.items() if v is not None}, config)
    return config
