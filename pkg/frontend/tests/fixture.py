#!/usr/bin/env python3
"""Build gateway artifacts for the console integration tests.

Drives only the packaged command-line tools and file formats: aligns a
synthetic corpus, trains the embedder (which also emits the subject
registry), enrolls operators, and writes a gateway config. The trained
corpus holds subjects 00-05, while the node's synthetic source cycles
subjects 00-09, so the stream mixes enrolled identities with strangers
that become guests.

Usage: fixture.py <output-dir>; prints a JSON manifest on stdout.
"""

import json
import subprocess
import sys
from pathlib import Path

PASSWORD = "console-test"


def run(*argv: str) -> None:
    result = subprocess.run(argv, capture_output=True, text=True)
    if result.returncode != 0:
        sys.stderr.write(result.stdout + result.stderr)
        raise SystemExit(f"command failed: {' '.join(argv)}")


def main() -> None:
    out = Path(sys.argv[1]).resolve()
    out.mkdir(parents=True, exist_ok=True)
    aligned = out / "aligned"
    model = out / "model"

    run(
        "sentinel-trainer", "align",
        "--raw", "synthetic:5:6:6",
        "--out", str(aligned),
    )
    run(
        "sentinel-trainer", "train",
        "--corpus", str(aligned),
        "--out", str(model),
        "--epochs", "200",
    )
    run(
        "sentinel-trainer", "enroll-operators",
        "--corpus", str(aligned),
        "--network", str(model / "embedder.json"),
        "--registry", str(out / "operators.jsonl"),
        "--credentials", str(out / "credentials.json"),
        "--password", PASSWORD,
    )

    config = {
        "node_port": 0,
        "monitor_port": 0,
        "registry_path": str(model / "registry.jsonl"),
        "operator_registry_path": str(out / "operators.jsonl"),
        "operator_credentials_path": str(out / "credentials.json"),
        "sightings_log_path": str(out / "sightings.log"),
        "embedder_path": str(model / "embedder.json"),
        "log_level": "WARNING",
    }
    config_path = out / "gateway.json"
    config_path.write_text(json.dumps(config, indent=2))

    face_crop = sorted((aligned / "subject-00").glob("*.pgm"))[0]
    print(
        json.dumps(
            {
                "config": str(config_path),
                "sightings_log": config["sightings_log_path"],
                "operator_id": "subject-00",
                "password": PASSWORD,
                "face_crop": str(face_crop),
            }
        )
    )


if __name__ == "__main__":
    main()
