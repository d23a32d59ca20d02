"""Gateway: socket listeners, frame pipeline, feed fan-out, alerts."""

from sentinel.gateway.config import GatewayConfig, load_config
from sentinel.gateway.service import Gateway, SightingEvent

__all__ = ["Gateway", "GatewayConfig", "SightingEvent", "load_config"]
