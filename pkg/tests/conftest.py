"""Shared fixtures: synthetic corpus, trained embedder, gateway harness.

The trained-model fixture is session-scoped because alignment and
training dominate test runtime; every consumer treats its artifacts as
read-only.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from sentinel.embedding.network import forward_batch, load_network
from sentinel.registry import Registry
from sentinel.synthetic import identity_label, make_raw_corpus
from sentinel.trainer import (
    align_corpus,
    enroll_operators,
    load_aligned_corpus,
    split_corpus,
    train_and_evaluate,
)

TOTAL_SUBJECTS = 15
KNOWN_SUBJECTS = 10  # the rest stay unenrolled and appear as strangers
IMAGES_PER_SUBJECT = 12
CORPUS_SEED = 5
TRAIN_SEED = 0
OPERATOR_PASSWORD = "let-me-in"


class ModelArtifacts:
    def __init__(self, root: Path):
        self.root = root
        self.raw_dir = root / "raw"
        self.aligned_dir = root / "aligned"
        self.model_dir = root / "model"
        self.network_path = self.model_dir / "embedder.json"
        self.operator_registry_path = root / "operators.jsonl"
        self.operator_credentials_path = root / "operator_credentials.json"

    def build(self) -> None:
        make_raw_corpus(
            self.raw_dir,
            seed=CORPUS_SEED,
            subjects=TOTAL_SUBJECTS,
            images_per_subject=IMAGES_PER_SUBJECT,
        )
        align_corpus(self.raw_dir, self.aligned_dir)
        self.report = train_and_evaluate(
            self.aligned_dir, self.model_dir, epochs=300, seed=TRAIN_SEED
        )
        self.net = load_network(self.network_path)
        self.inputs, self.labels, self.names = load_aligned_corpus(self.aligned_dir, 16)
        self.train_idx, self.hold_idx = split_corpus(self.labels, TRAIN_SEED)
        # Operators: reuse the first two subjects' aligned crops.
        enroll_operators(
            self.aligned_dir,
            self.network_path,
            self.operator_registry_path,
            self.operator_credentials_path,
            password=OPERATOR_PASSWORD,
        )

    def known_registry(self, path: Path | None = None) -> Registry:
        """Registry holding the first KNOWN_SUBJECTS subjects only."""
        registry = Registry(path=path)
        emb = forward_batch(self.net, self.inputs[self.train_idx])
        train_labels = self.labels[self.train_idx]
        for idx in range(KNOWN_SUBJECTS):
            gallery = [e for e, l in zip(emb, train_labels) if l == idx]
            registry.enroll(self.names[idx], gallery)
        return registry

    def crop_of(self, subject: int, which: int = 0) -> np.ndarray:
        idx = np.nonzero(self.labels == subject)[0][which]
        return self.inputs[idx]


@pytest.fixture(scope="session")
def model_artifacts(tmp_path_factory) -> ModelArtifacts:
    artifacts = ModelArtifacts(tmp_path_factory.mktemp("artifacts"))
    artifacts.build()
    return artifacts


@pytest.fixture()
def gateway_paths(tmp_path, model_artifacts):
    """Per-test gateway file layout wired to the session model."""
    creds = {
        "op-alice": hashlib.sha256(OPERATOR_PASSWORD.encode()).hexdigest(),
    }
    creds_path = tmp_path / "creds.json"
    creds_path.write_text(json.dumps(creds))
    return {
        "registry_path": str(tmp_path / "registry.jsonl"),
        "operator_registry_path": str(model_artifacts.operator_registry_path),
        "operator_credentials_path": str(creds_path),
        "sightings_log_path": str(tmp_path / "sightings.log"),
        "embedder_path": str(model_artifacts.network_path),
    }


def subject_name(index: int) -> str:
    return identity_label(index)
