"""
Scenario configuration.

Settings load from a YAML scenario file; each section also reads
``TRUSTEXEC_<SECTION>_<FIELD>`` environment variables for values the file
leaves unset.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigError

SEED_ENV = "PIXIU_SEED"
SCENARIO_NAMES = ("ads", "dpquery", "fedavg", "survey")

FAULT_BEHAVIORS = (
    "tamper_output",
    "forge_proof",
    "wrong_function",
    "skip_dp",
    "fake_data",
    "replay_sealed",
    "eavesdrop_all",
)
STEP_BEHAVIORS = ("tamper_output", "forge_proof", "wrong_function", "replay_sealed")


class PodConfig(BaseSettings):
    """Which PODs take part and where their data comes from."""

    # 0 means every POD in the fixture
    count: int = Field(default=0, ge=0)
    data_file: Optional[str] = None
    # Inline fixture lines, same shape as data_file entries
    records: List[Dict[str, Any]] = Field(default_factory=list)
    non_member_as: Literal["alleged", "rejected"] = "rejected"

    model_config = SettingsConfigDict(env_prefix="TRUSTEXEC_PODS_")


class TaskConfig(BaseSettings):
    """The consumer's task."""

    code: Optional[str] = None
    builtin: Optional[Literal["fedavg"]] = None
    selector: str = "true"
    epsilon: float = Field(default=1.0, gt=0)
    sensitivity: Optional[float] = Field(default=None, gt=0)
    require_dp: bool = True
    pipeline_kinds: Optional[List[str]] = None
    clip_lo: Optional[float] = None
    clip_hi: Optional[float] = None
    vector_field: str = "weights"
    dim: Optional[int] = Field(default=None, ge=1)
    ad_message: Optional[str] = None
    # λ kinds placed on HighAssurance nodes first
    high_importance: List[str] = Field(default_factory=lambda: ["DP_GATE"])

    model_config = SettingsConfigDict(env_prefix="TRUSTEXEC_TASK_")

    @model_validator(mode="after")
    def _one_task_body(self) -> "TaskConfig":
        if (self.code is None) == (self.builtin is None):
            raise ValueError("set exactly one of code or builtin")
        return self


class NetworkConfig(BaseSettings):
    """Execution nodes of the simulated peer-to-peer network."""

    node_count: int = 5
    high_assurance: int = 0
    mid_level_cost: int = 1
    high_assurance_cost: int = 10
    max_behaviors_per_node: int = 1

    model_config = SettingsConfigDict(env_prefix="TRUSTEXEC_NETWORK_")


class PrivacyConfig(BaseSettings):
    initial_budget: float = Field(default=10.0, ge=0)
    noise: Literal["seeded", "zero"] = "seeded"

    model_config = SettingsConfigDict(env_prefix="TRUSTEXEC_PRIVACY_")


class FaultConfig(BaseModel):
    """One injected misbehaviour; ``node`` indexes execution nodes."""

    behavior: Literal[
        "tamper_output",
        "forge_proof",
        "wrong_function",
        "skip_dp",
        "fake_data",
        "replay_sealed",
        "eavesdrop_all",
    ]
    node: Optional[int] = Field(default=None, ge=0)
    step: Optional[int] = Field(default=None, ge=0)
    pod: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _targets(self) -> "FaultConfig":
        if self.behavior in STEP_BEHAVIORS and self.node is None and self.step is None:
            raise ValueError(f"{self.behavior} needs a node or a step")
        if self.behavior == "fake_data" and self.pod is None:
            raise ValueError("fake_data needs a pod")
        return self


class ScenarioSettings(BaseSettings):
    """Main scenario settings."""

    name: str = Field(default="custom")
    seed: int = Field(default=0)
    log_level: str = Field(default="INFO")

    pods: PodConfig = Field(default_factory=PodConfig)
    task: TaskConfig = Field(default_factory=lambda: TaskConfig(code="true"))
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    privacy: PrivacyConfig = Field(default_factory=PrivacyConfig)
    faults: List[FaultConfig] = Field(default_factory=list)

    model_config = SettingsConfigDict(
        env_prefix="TRUSTEXEC_",
        env_nested_delimiter="__",
    )

    @classmethod
    def from_yaml(cls, yaml_path: str) -> "ScenarioSettings":
        """Load settings from a YAML scenario file."""
        if not os.path.exists(yaml_path):
            raise ConfigError(str(yaml_path), "scenario file not found")

        with open(yaml_path, "r") as f:
            try:
                yaml_config = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(str(yaml_path), f"invalid YAML: {e}") from e
        if not isinstance(yaml_config, dict):
            raise ConfigError(str(yaml_path), "top level must be a mapping")

        return cls._parse_yaml_config(yaml_config, Path(yaml_path).resolve().parent)

    @classmethod
    def _parse_yaml_config(cls, config: Dict, base_dir: Optional[Path] = None) -> "ScenarioSettings":
        """Parse YAML config into settings."""
        kwargs: Dict[str, Any] = {}

        if "pods" in config:
            kwargs["pods"] = _section("pods", PodConfig, config["pods"])
            data_file = kwargs["pods"].data_file
            if data_file and base_dir is not None and not os.path.isabs(data_file):
                kwargs["pods"].data_file = str((base_dir / data_file).resolve())

        if "task" in config:
            kwargs["task"] = _section("task", TaskConfig, config["task"])

        if "network" in config:
            kwargs["network"] = _section("network", NetworkConfig, config["network"])

        if "privacy" in config:
            kwargs["privacy"] = _section("privacy", PrivacyConfig, config["privacy"])

        if "faults" in config:
            kwargs["faults"] = [
                _section(f"faults.{i}", FaultConfig, entry)
                for i, entry in enumerate(config["faults"] or [])
            ]

        for key in ["name", "seed", "log_level"]:
            if key in config:
                kwargs[key] = config[key]

        unknown = set(config) - {"pods", "task", "network", "privacy", "faults", "name", "seed", "log_level"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown setting")

        settings = _section("", cls, kwargs)
        validate_network(settings.network)
        return settings


_M = TypeVar("_M", bound=BaseModel)


def _section(path: str, model: Type[_M], data: Any) -> _M:
    """Build one config section, reporting errors by dotted field path."""
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping")
    try:
        return model(**data)
    except ValidationError as e:
        err = e.errors()[0]
        loc = ".".join(str(p) for p in (path,) + tuple(err["loc"]) if p != "")
        raise ConfigError(loc or path or "<root>", err["msg"]) from e


def validate_network(network: NetworkConfig) -> None:
    if network.node_count < 1:
        raise ConfigError("network.node_count", "at least one execution node is required")
    if not 0 <= network.high_assurance <= network.node_count:
        raise ConfigError(
            "network.high_assurance",
            f"must be between 0 and node_count ({network.node_count})",
        )
    for field in ("mid_level_cost", "high_assurance_cost", "max_behaviors_per_node"):
        if getattr(network, field) < 1:
            raise ConfigError(f"network.{field}", "must be a positive integer")


def scenario_path(name: str) -> Path:
    """Locate ``config/scenarios/<name>.yaml`` from the working tree or the install."""
    search = [
        Path("config/scenarios") / f"{name}.yaml",
        Path(__file__).resolve().parent.parent / "config" / "scenarios" / f"{name}.yaml",
    ]
    for path in search:
        if path.exists():
            return path
    raise ConfigError("scenario", f"unknown scenario {name!r}")


def load_settings(
    config_path: Optional[str] = None,
    scenario: Optional[str] = None,
) -> ScenarioSettings:
    """Load scenario settings from an explicit file or a named scenario."""
    if config_path is None and scenario is not None:
        config_path = str(scenario_path(scenario))

    if config_path:
        return ScenarioSettings.from_yaml(config_path)

    return ScenarioSettings()


def resolve_seed(cli_seed: Optional[int], settings: ScenarioSettings) -> int:
    """CLI ``--seed`` wins over ``PIXIU_SEED``, which wins over the file."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(SEED_ENV, f"not an integer: {env!r}") from None
    return settings.seed
