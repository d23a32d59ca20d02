"""Gateway entry point: ``sentinel-gateway --config <path>``."""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys

from sentinel.errors import ConfigError
from sentinel.gateway.config import load_config
from sentinel.gateway.service import Gateway


async def run(config) -> None:
    gateway = Gateway(config)
    await gateway.start()
    # Printed (not just logged) so wrappers can discover ephemeral ports.
    print(
        "listening nodes=%s:%d monitors=%s:%d"
        % (*gateway.node_address, *gateway.monitor_address),
        flush=True,
    )
    stop = asyncio.Event()
    try:
        await stop.wait()
    except asyncio.CancelledError:
        pass
    finally:
        await gateway.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sentinel-gateway", description=__doc__)
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--registry", help="override registry_path")
    parser.add_argument("--log-level", default=None, help="override log_level")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.registry:
        config.registry_path = args.registry
    if args.log_level:
        config.log_level = args.log_level

    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        asyncio.run(run(config))
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
