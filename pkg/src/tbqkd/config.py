"""Scenario configuration: one bundle for every model in the chain,
YAML round-tripping, and shipped presets.

A scenario pins the transmitter (protocol probabilities, serializer
clock, modulator imperfections), the channel, the receiver (detector,
interferometer, passive basis split), the security parameters, and the
run plan (duration, seed, fringe/servo bookkeeping). Burst scheduling is
derived from the protocol timing rather than stored twice.
"""

from __future__ import annotations

import dataclasses
import importlib.resources
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, DomainError
from .keyrate import SecurityParams
from .link import ChannelModel, DetectorModel, InterferometerModel
from .ppg import BurstPlan, BurstSchedule, ClockConfig, plan_bursts
from .protocol import ProtocolParams
from .source import SourceConfig

SCHEMA_VERSION = 1

_SECTIONS: dict[str, type] = {
    "protocol": ProtocolParams,
    "clock": ClockConfig,
    "source": SourceConfig,
    "channel": ChannelModel,
    "detector": DetectorModel,
    "interferometer": InterferometerModel,
    "security": SecurityParams,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one run."""

    params: ProtocolParams = ProtocolParams()
    clock: ClockConfig = ClockConfig()
    source: SourceConfig = SourceConfig()
    channel: ChannelModel = ChannelModel(loss_db=7.0)
    detector: DetectorModel = DetectorModel()
    interferometer: InterferometerModel = InterferometerModel()
    security: SecurityParams = SecurityParams()
    p_z_receiver: float = 0.9
    duration: float = 300.0
    seed: int = 12345
    shift: int = 0
    gap_bits: int = 1
    packed: bool = False
    fringe_block_x_symbols: int = 100_000
    servo_bursts_per_event: int = 2048
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0.0:
            raise ConfigError(f"duration must be > 0, got {self.duration}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not (0.0 < self.p_z_receiver < 1.0):
            raise ConfigError(
                f"p_z_receiver must lie in (0, 1), got {self.p_z_receiver}"
            )
        if self.fringe_block_x_symbols < 1:
            raise ConfigError("fringe_block_x_symbols must be >= 1")
        if self.servo_bursts_per_event < 0:
            raise ConfigError("servo_bursts_per_event must be >= 0")
        sep = (self.gap_bits + 1) * self.clock.bit_duration_ps
        if abs(self.interferometer.delay_ps - sep) > self.detector.tdc_resolution_ps:
            raise ConfigError(
                f"interferometer delay {self.interferometer.delay_ps} ps must "
                f"match the early/late separation {sep} ps within one TDC step"
            )

    @property
    def n_bursts(self) -> int:
        return max(1, round(self.duration / self.params.burst_period))

    @property
    def plan(self) -> BurstPlan:
        return BurstPlan(
            symbols_per_burst=self.params.symbols_per_burst,
            symbol_period=self.params.symbol_period,
            burst_period=self.params.burst_period,
            n_bursts=self.n_bursts,
        )

    def schedule(self) -> BurstSchedule:
        return plan_bursts(
            self.plan, self.clock, self.detector.dead_time, self.packed
        )

    @property
    def nominal_symbols(self) -> int:
        return self.n_bursts * self.params.symbols_per_burst

    def replace(self, **kwargs: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)

    def with_loss(self, loss_db: float) -> "ScenarioConfig":
        channel = ChannelModel(
            loss_db=loss_db, alpha_db_per_km=self.channel.alpha_db_per_km
        )
        return self.replace(channel=channel)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
        for section, cls in _SECTIONS.items():
            obj = getattr(self, _SECTION_ATTR[section])
            fields: dict[str, Any] = {}
            for f in dataclasses.fields(cls):
                v = getattr(obj, f.name)
                if v is None:
                    continue
                fields[f.name] = v
            out[section] = fields
        out["receiver"] = {"p_z_receiver": self.p_z_receiver}
        run: dict[str, Any] = {
            "duration": self.duration,
            "seed": self.seed,
            "shift": self.shift,
            "gap_bits": self.gap_bits,
            "packed": self.packed,
            "fringe_block_x_symbols": self.fringe_block_x_symbols,
            "servo_bursts_per_event": self.servo_bursts_per_event,
        }
        if self.out_dir is not None:
            run["out_dir"] = self.out_dir
        out["run"] = run
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        data = dict(raw)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {version}, expected {SCHEMA_VERSION}"
            )
        kwargs: dict[str, Any] = {}
        for section, section_cls in _SECTIONS.items():
            body = data.pop(section, {})
            kwargs[_SECTION_ATTR[section]] = _build_section(
                section, section_cls, body
            )
        receiver = data.pop("receiver", {})
        _check_keys("receiver", receiver, {"p_z_receiver"})
        run = data.pop("run", {})
        run_keys = {
            "duration",
            "seed",
            "shift",
            "gap_bits",
            "packed",
            "fringe_block_x_symbols",
            "servo_bursts_per_event",
            "out_dir",
        }
        _check_keys("run", run, run_keys)
        if data:
            raise ConfigError(f"unknown config sections: {sorted(data)}")
        try:
            return cls(**kwargs, **receiver, **run)
        except (DomainError, ConfigError):
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc


_SECTION_ATTR = {
    "protocol": "params",
    "clock": "clock",
    "source": "source",
    "channel": "channel",
    "detector": "detector",
    "interferometer": "interferometer",
    "security": "security",
}


def _check_keys(section: str, body: dict[str, Any], allowed: set[str]) -> None:
    if not isinstance(body, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    unknown = set(body) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")


def _build_section(section: str, cls: type, body: dict[str, Any]) -> Any:
    allowed = {f.name for f in dataclasses.fields(cls)}
    _check_keys(section, body, allowed)
    coerced: dict[str, Any] = {}
    for key, value in body.items():
        if isinstance(value, str) and value.lower() in ("inf", "infinity", ".inf"):
            value = math.inf
        coerced[key] = value
    try:
        return cls(**coerced)
    except DomainError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{section}': {exc}") from exc


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def load_scenario(path: str | Path) -> ScenarioConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError(f"empty config file: {path}")
    try:
        return ScenarioConfig.from_dict(raw)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _preset_root() -> Any:
    return importlib.resources.files("tbqkd") / "presets"


def preset_names() -> list[str]:
    root = _preset_root()
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir()
                  if p.name.endswith(".yaml"))


def load_preset(name: str) -> ScenarioConfig:
    """Load a shipped preset by name (see preset_names())."""
    path = _preset_root() / f"{name}.yaml"
    try:
        text = path.read_text()
    except (FileNotFoundError, OSError) as exc:
        raise ConfigError(
            f"unknown preset '{name}'; available: {', '.join(preset_names())}"
        ) from exc
    raw = yaml.safe_load(text)
    try:
        return ScenarioConfig.from_dict(raw)
    except DomainError as exc:
        raise ConfigError(f"preset '{name}': {exc}") from exc
