"""Offline tooling: align a face corpus, train the embedder, build
registries, and report desk-scale recognition accuracy.

Corpus layout: one subdirectory per subject name, holding either raw
scene images (``align`` input) or aligned square crops of the
embedder's input size (``train`` input). A corpus argument of the form
``synthetic:<seed>[:<subjects>[:<per_subject>]]`` generates raw scenes
with the built-in generator first.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sentinel.detection.cascade import DetectorConfig, crop_align, detect_faces
from sentinel.detection.frame import frame_from_array
from sentinel.embedding.network import (
    EmbedderNetwork,
    forward_batch,
    save_network,
    train_embedder,
)
from sentinel.errors import ConfigError
from sentinel.pnm import read_pnm, unit_to_gray, write_pnm
from sentinel.registry import Registry
from sentinel.synthetic import make_raw_corpus, make_stage_scorers

logger = logging.getLogger(__name__)

DEFAULT_SPLIT = 0.8
DEFAULT_SYNTH_SUBJECTS = 10
DEFAULT_SYNTH_PER_SUBJECT = 12


@dataclass
class AlignReport:
    scanned: int = 0
    detected: int = 0
    skipped: int = 0

    def to_dict(self) -> dict:
        return {"scanned": self.scanned, "detected": self.detected, "skipped": self.skipped}


def resolve_corpus(corpus: str, work_dir: Path | None = None) -> Path:
    """Materialize a synthetic corpus spec, or return the directory."""
    if corpus.startswith("synthetic:"):
        parts = corpus.split(":")
        seed = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        subjects = int(parts[2]) if len(parts) > 2 and parts[2] else DEFAULT_SYNTH_SUBJECTS
        per_subject = (
            int(parts[3]) if len(parts) > 3 and parts[3] else DEFAULT_SYNTH_PER_SUBJECT
        )
        root = Path(work_dir or tempfile.mkdtemp(prefix="sentinel-corpus-")) / (
            f"synthetic-{seed}-{subjects}x{per_subject}"
        )
        if not root.exists():
            make_raw_corpus(root, seed=seed, subjects=subjects, images_per_subject=per_subject)
        return root
    return Path(corpus)


def align_corpus(
    raw_dir: str | Path,
    out_dir: str | Path,
    crop_size: int = 16,
    detector: DetectorConfig | None = None,
    scorers=None,
) -> AlignReport:
    """Detect and crop every image; mirrors the subject structure.

    Images with no detection count as skipped, not fatal. The report is
    also written to ``<out_dir>/align_report.json``.
    """
    raw_dir = Path(raw_dir)
    out_dir = Path(out_dir)
    detector = detector or DetectorConfig()
    scorers = scorers or make_stage_scorers()
    report = AlignReport()
    for subject_dir in sorted(p for p in raw_dir.iterdir() if p.is_dir()):
        target = out_dir / subject_dir.name
        target.mkdir(parents=True, exist_ok=True)
        for image_path in sorted(subject_dir.iterdir()):
            if image_path.suffix.lower() not in (".pgm", ".ppm"):
                continue
            report.scanned += 1
            try:
                pixels = read_pnm(image_path)
            except (OSError, ValueError) as exc:
                logger.warning("unreadable %s: %s", image_path, exc)
                report.skipped += 1
                continue
            frame = frame_from_array("align", report.scanned, 0, pixels)
            detections = detect_faces(frame, scorers, detector)
            if not detections:
                report.skipped += 1
                continue
            crop = crop_align(frame, detections[0], crop_size)
            write_pnm(
                target / f"{image_path.stem}_crop.pgm",
                unit_to_gray(crop.reshape(crop_size, crop_size)),
            )
            report.detected += 1
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "align_report.json").write_text(json.dumps(report.to_dict(), sort_keys=True))
    return report


def load_aligned_corpus(corpus_dir: str | Path, crop_size: int):
    """(inputs, labels, subject names) from an aligned corpus tree."""
    corpus_dir = Path(corpus_dir)
    names = sorted(p.name for p in corpus_dir.iterdir() if p.is_dir())
    inputs, labels = [], []
    for idx, name in enumerate(names):
        for image_path in sorted((corpus_dir / name).glob("*.pgm")):
            crop = read_pnm(image_path)
            if crop.shape != (crop_size, crop_size):
                raise ConfigError(
                    f"{image_path} is {crop.shape}, expected {(crop_size, crop_size)}"
                )
            inputs.append(crop.astype(np.float64).ravel() / 255.0)
            labels.append(idx)
    if not inputs:
        raise ConfigError(f"no crops found under {corpus_dir}")
    return np.array(inputs), np.array(labels), names


def split_corpus(labels: np.ndarray, seed: int, ratio: float = DEFAULT_SPLIT):
    """Deterministic per-subject train/holdout split; disjoint by index."""
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for label in np.unique(labels):
        idx = rng.permutation(np.nonzero(labels == label)[0])
        k = max(1, int(np.ceil(ratio * len(idx))))
        train_idx.extend(int(i) for i in idx[:k])
        hold_idx.extend(int(i) for i in idx[k:])
    return sorted(train_idx), sorted(hold_idx)


def train_and_evaluate(
    corpus_dir: str | Path,
    out_dir: str | Path,
    epochs: int = 300,
    learning_rate: float = 0.5,
    margin: float = 1.4,
    seed: int = 0,
    crop_size: int = 16,
    hidden: int = 64,
) -> dict:
    """Train on the train split, enroll centroids, score the holdout.

    Writes the network file, a subject registry, per-image predictions
    (JSONL), and an accuracy report; returns the report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs, labels, names = load_aligned_corpus(corpus_dir, crop_size)
    if len(names) < 2:
        raise ConfigError(f"corpus needs at least two subjects, found {len(names)}")
    train_idx, hold_idx = split_corpus(labels, seed)

    net = EmbedderNetwork.initialize(
        d_in=crop_size**2, hidden=hidden, margin=margin, seed=seed
    )
    net, losses = train_embedder(
        net,
        inputs[train_idx],
        labels[train_idx],
        epochs=epochs,
        learning_rate=learning_rate,
        margin=margin,
        seed=seed,
    )
    save_network(net, out_dir / "embedder.json")

    registry = Registry()
    train_emb = forward_batch(net, inputs[train_idx])
    train_labels = labels[train_idx]
    for idx, name in enumerate(names):
        gallery = [e for e, l in zip(train_emb, train_labels) if l == idx]
        registry.enroll(name, gallery)
    registry.save(out_dir / "registry.jsonl")

    predictions = []
    correct = 0
    confidences = []
    if hold_idx:
        hold_emb = forward_batch(net, inputs[hold_idx])
        for row, (emb, true_label) in enumerate(zip(hold_emb, labels[hold_idx])):
            result = registry.classify(emb)
            predicted = (
                registry.get(result.identity_id).display_name
                if result.identity_id
                else ""
            )
            truth = names[true_label]
            hit = predicted == truth
            correct += hit
            confidences.append(result.confidence)
            predictions.append(
                {
                    "index": int(hold_idx[row]),
                    "truth": truth,
                    "predicted": predicted,
                    "distance": result.distance,
                    "confidence": result.confidence,
                    "correct": bool(hit),
                }
            )
    with (out_dir / "predictions.jsonl").open("w") as fh:
        for doc in predictions:
            fh.write(json.dumps(doc, sort_keys=True) + "\n")

    report = {
        "subjects": len(names),
        "images": int(len(inputs)),
        "train_images": len(train_idx),
        "holdout_images": len(hold_idx),
        "epochs": epochs,
        "learning_rate": learning_rate,
        "margin": margin,
        "seed": seed,
        "initial_loss": losses[0] if losses else 0.0,
        "final_loss": losses[-1] if losses else 0.0,
        "holdout_top1_accuracy": (correct / len(hold_idx)) if hold_idx else None,
        "mean_match_confidence": float(np.mean(confidences)) if confidences else None,
    }
    (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2))
    return report


def enroll_operators(
    corpus_dir: str | Path,
    network_path: str | Path,
    out_registry: str | Path,
    out_credentials: str | Path,
    password: str = "sentinel",
    crop_size: int = 16,
) -> list[str]:
    """Build the operator registry (face login) and credentials file."""
    import hashlib

    from sentinel.embedding.network import load_network

    net = load_network(network_path)
    inputs, labels, names = load_aligned_corpus(corpus_dir, crop_size)
    registry = Registry()
    embeddings = forward_batch(net, inputs)
    for idx, name in enumerate(names):
        gallery = [e for e, l in zip(embeddings, labels) if l == idx]
        registry.enroll(name, gallery, status="whitelist")
    registry.save(out_registry)
    digest = hashlib.sha256(password.encode("utf-8")).hexdigest()
    Path(out_credentials).write_text(
        json.dumps({name: digest for name in names}, sort_keys=True, indent=2)
    )
    return names


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sentinel-trainer", description=__doc__)
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="detect and crop a raw corpus")
    p_align.add_argument("--raw", required=True, help="raw corpus dir or synthetic:<seed>")
    p_align.add_argument("--out", required=True)
    p_align.add_argument("--crop-size", type=int, default=16)

    p_train = sub.add_parser("train", help="train the embedder and build a registry")
    p_train.add_argument("--corpus", required=True, help="aligned corpus directory")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--epochs", type=int, default=300)
    p_train.add_argument("--lr", type=float, default=0.5)
    p_train.add_argument("--margin", type=float, default=1.4)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--crop-size", type=int, default=16)

    p_ops = sub.add_parser("enroll-operators", help="build the operator registry")
    p_ops.add_argument("--corpus", required=True, help="aligned operator corpus")
    p_ops.add_argument("--network", required=True, help="trained embedder file")
    p_ops.add_argument("--registry", required=True, help="output operator registry")
    p_ops.add_argument("--credentials", required=True, help="output credentials file")
    p_ops.add_argument("--password", default="sentinel")
    p_ops.add_argument("--crop-size", type=int, default=16)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "align":
            raw = resolve_corpus(args.raw)
            report = align_corpus(raw, args.out, crop_size=args.crop_size)
            print(json.dumps(report.to_dict(), sort_keys=True))
        elif args.command == "train":
            report = train_and_evaluate(
                args.corpus,
                args.out,
                epochs=args.epochs,
                learning_rate=args.lr,
                margin=args.margin,
                seed=args.seed,
                crop_size=args.crop_size,
            )
            print(json.dumps(report, sort_keys=True))
        elif args.command == "enroll-operators":
            names = enroll_operators(
                args.corpus,
                args.network,
                args.registry,
                args.credentials,
                password=args.password,
                crop_size=args.crop_size,
            )
            print(json.dumps({"operators": names}, sort_keys=True))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
