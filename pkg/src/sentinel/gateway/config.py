"""Gateway configuration: JSON file plus SENTINEL_ environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from sentinel.detection.cascade import DetectorConfig
from sentinel.errors import ConfigError

ENV_PREFIX = "SENTINEL_"


@dataclass
class GatewayConfig:
    node_host: str = "127.0.0.1"
    node_port: int = 7401
    monitor_host: str = "127.0.0.1"
    monitor_port: int = 7402
    registry_path: str = "registry.jsonl"
    operator_registry_path: str = "operators.jsonl"
    operator_credentials_path: str = "operator_credentials.json"
    sightings_log_path: str = "sightings.log"
    guest_threshold: float = 0.5
    embedder_path: str = ""
    embedder_seed: int = 0
    crop_size: int = 16
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    flush_tick_seconds: float = 0.5
    heartbeat_interval_seconds: float = 5.0
    heartbeat_missed_limit: int = 3
    pipeline_queue_size: int = 16
    log_level: str = "INFO"

    def __post_init__(self):
        # Port 0 asks the OS for an ephemeral port, so both may be 0.
        if self.node_port == self.monitor_port and self.node_port != 0:
            raise ConfigError(
                f"node and monitor ports must differ, both are {self.node_port}"
            )


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path: str | Path | None = None, env: dict | None = None) -> GatewayConfig:
    """Build a config from an optional JSON file and the environment.

    Every key is overridable by SENTINEL_<KEY> (upper-cased); detector
    keys use SENTINEL_DETECTOR_<KEY>. Values parse as JSON when they
    can, else as plain strings.
    """
    env = os.environ if env is None else env
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")

    top_fields = {f.name: f for f in fields(GatewayConfig) if f.name != "detector"}
    det_fields = {f.name for f in fields(DetectorConfig)}

    values: dict = {}
    det_values: dict = dict(doc.get("detector", {}))
    for key, value in doc.items():
        if key == "detector":
            continue
        if key not in top_fields:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value

    for name in top_fields:
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            values[name] = _parse_env_value(raw)
    for name in det_fields:
        raw = env.get(ENV_PREFIX + "DETECTOR_" + name.upper())
        if raw is not None:
            det_values[name] = _parse_env_value(raw)

    unknown_det = set(det_values) - det_fields
    if unknown_det:
        raise ConfigError(f"unknown detector config keys: {sorted(unknown_det)}")
    if "stage_thresholds" in det_values:
        det_values["stage_thresholds"] = tuple(det_values["stage_thresholds"])
    try:
        values["detector"] = DetectorConfig(**det_values)
        return GatewayConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
