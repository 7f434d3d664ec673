"""Key/value JSON configuration for providers, directories and the service.

Credentials never live in the file; a provider names the environment variable
holding its key (``api_key_env``). Example:

    {
      "model_id": "llama3-70b-8192",
      "mode": "concurrent",
      "providers": {
        "product":    {"kind": "openai", "base_url": "https://api.groq.com/openai/v1",
                       "api_key_env": "GROQ_API_KEY"},
        "multimodal": {"kind": "gemini", "base_url": "https://generativelanguage.googleapis.com/v1beta",
                       "api_key_env": "GEMINI_API_KEY"},
        "market":     {"kind": "openai", "base_url": "https://api.groq.com/openai/v1",
                       "api_key_env": "GROQ_API_KEY"}
      },
      "fixtures_dir": "fixtures",
      "profiles_dir": "profiles",
      "traces_dir": "traces",
      "reports_dir": "reports"
    }

A provider of kind "scripted" replays a script fixture file (``script_path``,
relative to the config file); scripted providers are rebuilt for every turn
so each request replays the script from the top.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .agents import TurnPipeline, default_agents
from .clock import SYSTEM_CLOCK
from .gateway import GeminiProvider, OpenAiCompatProvider, Provider, ScriptedProvider, load_script
from .profiles import ProfileStore
from .runtime import STANDARD_AGENTS
from .service import ServiceState
from .tools import FixtureStore, WebTools, default_registry


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # openai | gemini | scripted
    base_url: str = ""
    api_key_env: str = ""
    multimodal: bool = False
    timeout: float = 30.0
    script_path: str = ""

    def __post_init__(self):
        if self.kind not in ("openai", "gemini", "scripted"):
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.kind == "scripted" and not self.script_path:
            raise ConfigError("scripted provider needs script_path")
        if self.kind != "scripted" and not self.base_url:
            raise ConfigError(f"{self.kind} provider needs base_url")


@dataclass(frozen=True)
class AppConfig:
    providers: dict[str, ProviderConfig]
    model_id: str = "llama3-70b-8192"
    multimodal_model_id: str = "gemini-1.5-pro"
    mode: str = "concurrent"
    max_iterations: int = 15
    fixtures_dir: str = "fixtures"
    profiles_dir: str = "profiles"
    traces_dir: str = "traces"
    reports_dir: str = "reports"
    base_dir: Path = field(default_factory=Path)

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


def load_app_config(path: Path | str) -> AppConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e

    provider_cfgs: dict[str, ProviderConfig] = {}
    if "providers" in raw:
        for agent_id, p in raw["providers"].items():
            provider_cfgs[agent_id] = ProviderConfig(**p)
    elif "provider" in raw:
        shared = ProviderConfig(**raw["provider"])
        provider_cfgs = {aid: shared for aid in STANDARD_AGENTS}
    else:
        raise ConfigError("config needs 'provider' or 'providers'")

    return AppConfig(
        providers=provider_cfgs,
        model_id=raw.get("model_id", "llama3-70b-8192"),
        multimodal_model_id=raw.get("multimodal_model_id", "gemini-1.5-pro"),
        mode=raw.get("mode", "concurrent"),
        max_iterations=raw.get("max_iterations", 15),
        fixtures_dir=raw.get("fixtures_dir", "fixtures"),
        profiles_dir=raw.get("profiles_dir", "profiles"),
        traces_dir=raw.get("traces_dir", "traces"),
        reports_dir=raw.get("reports_dir", "reports"),
        base_dir=path.parent,
    )


def build_provider(cfg: ProviderConfig, base_dir: Path, clock=SYSTEM_CLOCK) -> Provider:
    if cfg.kind == "scripted":
        script = load_script(base_dir / cfg.script_path)
        return ScriptedProvider(script, multimodal=True)
    api_key = os.environ.get(cfg.api_key_env, "")
    if not api_key:
        raise ConfigError(f"environment variable {cfg.api_key_env!r} is not set")
    if cfg.kind == "gemini":
        return GeminiProvider(cfg.base_url, api_key, timeout=cfg.timeout, clock=clock)
    return OpenAiCompatProvider(
        cfg.base_url, api_key, multimodal=cfg.multimodal, timeout=cfg.timeout, clock=clock
    )


def build_service_state(config: AppConfig, offline: bool = True, clock=SYSTEM_CLOCK) -> ServiceState:
    """Wire the full pipeline from config. Offline mode forbids the network:
    tools read fixtures and every provider must be scripted."""
    if offline:
        for agent_id, p in config.providers.items():
            if p.kind != "scripted":
                raise ConfigError(f"offline mode requires scripted providers ({agent_id} is {p.kind})")
        webtools = WebTools(fixtures=FixtureStore(config.path(config.fixtures_dir)), clock=clock)
    else:
        from .gateway import requests_transport

        webtools = WebTools(
            fixtures=FixtureStore(config.path(config.fixtures_dir)),
            transport=requests_transport,
            clock=clock,
        )
    registry = default_registry(webtools)
    agents = default_agents(
        model_id=config.model_id,
        multimodal_model_id=config.multimodal_model_id,
        max_iterations=config.max_iterations,
    )

    def providers():
        return {
            agent_id: build_provider(p, config.base_dir, clock=clock)
            for agent_id, p in config.providers.items()
        }

    pipeline = TurnPipeline(
        agents=agents,
        providers=providers if any(p.kind == "scripted" for p in config.providers.values()) else providers(),
        registry=registry,
        profile_store=ProfileStore(config.path(config.profiles_dir), clock=clock),
        mode=config.mode,
        clock=clock,
        trace_dir=config.path(config.traces_dir),
    )
    return ServiceState(
        pipeline=pipeline,
        report_dir=config.path(config.reports_dir),
        trace_dir=config.path(config.traces_dir),
    )
