"""Identity gallery: enrollment, nearest-centroid matching, guest ids,
status flags, and line-delimited persistence.

The match confidence maps distance on the unit sphere to [0, 1] via
confidence = 1 - d / 2 (distance 0 is a certain match, the sphere
diameter 2 is certain non-match). A query whose best confidence falls
below the guest threshold (default 0.5, i.e. distance above 1.0) is
flagged for guest enrollment under a generated "guest-<n>" id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sentinel.embedding.core import EMBEDDING_DIM
from sentinel.errors import DuplicateNameError, NotFoundError, RegistryParseError
from sentinel.pnm import unit_to_gray, write_pnm

STATUSES = ("whitelist", "blacklist", "neutral")

REGISTRY_FORMAT = "identity-registry"
REGISTRY_VERSION = 1

GUEST_REINFORCE_CONFIDENCE = 0.8
GUEST_GALLERY_CAP = 10


@dataclass
class IdentityRecord:
    id: str
    display_name: str
    gallery: list[np.ndarray]
    status: str = "neutral"
    is_guest: bool = False
    created_at: int = 0
    status_changed_at: int = 0

    def __post_init__(self):
        if not self.gallery:
            raise ValueError(f"record {self.id} needs a nonempty gallery")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.is_guest and not self.id.startswith("guest-"):
            raise ValueError(f"guest record id must start with 'guest-', got {self.id}")

    def centroid(self) -> np.ndarray:
        mean = np.mean(self.gallery, axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < 1e-12:
            return mean  # degenerate antipodal gallery; distance ~sqrt(1+|q|^2)
        return mean / norm


@dataclass(frozen=True)
class MatchResult:
    identity_id: str
    distance: float
    confidence: float
    is_guest_enrollment: bool


class Registry:
    """In-memory identity gallery.

    classify() is read-only; all mutating operations go through the
    gateway's single writer. When ``path`` is set, mutations persist
    immediately and guest crops are written to a ``guests/`` directory
    beside the registry file.
    """

    def __init__(
        self,
        guest_threshold: float = 0.5,
        classifier: str = "centroid",
        path: str | Path | None = None,
    ):
        if not 0.0 < guest_threshold < 1.0:
            raise ValueError(f"guest_threshold must lie in (0, 1), got {guest_threshold}")
        if classifier not in ("centroid", "knn"):
            raise ValueError(f"classifier must be 'centroid' or 'knn', got {classifier}")
        self.records: dict[str, IdentityRecord] = {}
        self.guest_counter = 0
        self.id_counter = 0
        self.guest_threshold = guest_threshold
        self.classifier = classifier
        self.path = Path(path) if path is not None else None

    def __len__(self) -> int:
        return len(self.records)

    def get(self, identity_id: str) -> IdentityRecord:
        if identity_id not in self.records:
            raise NotFoundError(f"unknown identity id {identity_id!r}")
        return self.records[identity_id]

    def enroll(
        self,
        display_name: str,
        gallery: list[np.ndarray],
        status: str = "neutral",
        now_ms: int = 0,
    ) -> IdentityRecord:
        if any(r.display_name == display_name for r in self.records.values()):
            raise DuplicateNameError(f"display name {display_name!r} already enrolled")
        gallery = [np.asarray(e, dtype=np.float64) for e in gallery]
        self.id_counter += 1
        record = IdentityRecord(
            id=f"id-{self.id_counter}",
            display_name=display_name,
            gallery=gallery,
            status=status,
            created_at=now_ms,
            status_changed_at=now_ms,
        )
        self.records[record.id] = record
        self._autosave()
        return record

    def classify(self, query: np.ndarray) -> MatchResult:
        """Nearest-record match; flags guest enrollment below threshold.

        Centroid rule: distance to each record is the distance to the
        unit-renormalized mean of its gallery, ties broken by smallest
        id. The knn variant (k=3) votes over the nearest individual
        gallery embeddings instead.
        """
        query = np.asarray(query, dtype=np.float64)
        if not self.records:
            return MatchResult(
                identity_id="", distance=2.0, confidence=0.0, is_guest_enrollment=True
            )
        if self.classifier == "knn":
            best_id, best_dist = self._classify_knn(query)
        else:
            best_id, best_dist = self._classify_centroid(query)
        confidence = 1.0 - best_dist / 2.0
        return MatchResult(
            identity_id=best_id,
            distance=best_dist,
            confidence=confidence,
            is_guest_enrollment=confidence < self.guest_threshold,
        )

    def _classify_centroid(self, query: np.ndarray) -> tuple[str, float]:
        best_id, best_dist = "", math.inf
        for rid in sorted(self.records):
            d = float(np.linalg.norm(query - self.records[rid].centroid()))
            if d < best_dist:
                best_id, best_dist = rid, d
        return best_id, best_dist

    def _classify_knn(self, query: np.ndarray, k: int = 3) -> tuple[str, float]:
        pairs = []
        for rid in sorted(self.records):
            for emb in self.records[rid].gallery:
                pairs.append((float(np.linalg.norm(query - emb)), rid))
        pairs.sort(key=lambda p: p[0])
        top = pairs[:k]
        votes: dict[str, int] = {}
        for _, rid in top:
            votes[rid] = votes.get(rid, 0) + 1
        winner = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        return winner, min(d for d, rid in top if rid == winner)

    def enroll_guest(
        self,
        query: np.ndarray,
        crop: np.ndarray | None = None,
        now_ms: int = 0,
    ) -> IdentityRecord:
        """Create a guest record from an unmatched query embedding."""
        self.guest_counter += 1
        guest_id = f"guest-{self.guest_counter}"
        record = IdentityRecord(
            id=guest_id,
            display_name=guest_id,
            gallery=[np.asarray(query, dtype=np.float64)],
            status="neutral",
            is_guest=True,
            created_at=now_ms,
            status_changed_at=now_ms,
        )
        self.records[guest_id] = record
        if crop is not None and self.path is not None:
            self._write_guest_crop(guest_id, np.asarray(crop, dtype=np.float64))
        self._autosave()
        return record

    def reinforce_guest(self, guest_id: str, query: np.ndarray) -> None:
        """Append a strong re-sighting to a guest gallery, capped."""
        record = self.get(guest_id)
        if not record.is_guest or len(record.gallery) >= GUEST_GALLERY_CAP:
            return
        record.gallery.append(np.asarray(query, dtype=np.float64))
        self._autosave()

    def set_status(self, identity_id: str, status: str, now_ms: int = 0) -> IdentityRecord:
        if status not in STATUSES:
            raise ValueError(f"unknown status {status!r}")
        record = self.get(identity_id)
        record.status = status
        record.status_changed_at = now_ms
        self._autosave()
        return record

    def _write_guest_crop(self, guest_id: str, crop: np.ndarray) -> None:
        side = int(round(math.sqrt(crop.size)))
        if side * side != crop.size:
            return  # not a square crop; nothing sensible to store
        guests_dir = self.path.parent / "guests"
        guests_dir.mkdir(parents=True, exist_ok=True)
        write_pnm(guests_dir / f"{guest_id}.pgm", unit_to_gray(crop.reshape(side, side)))

    def _autosave(self) -> None:
        if self.path is not None:
            self.save(self.path)

    # ------------------------------------------------------------------
    # Persistence: one JSON object per line, header first.

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            json.dumps(
                {
                    "format": REGISTRY_FORMAT,
                    "version": REGISTRY_VERSION,
                    "guest_counter": self.guest_counter,
                    "id_counter": self.id_counter,
                    "guest_threshold": self.guest_threshold,
                    "classifier": self.classifier,
                },
                sort_keys=True,
            )
        ]
        for rid in sorted(self.records):
            r = self.records[rid]
            lines.append(
                json.dumps(
                    {
                        "id": r.id,
                        "display_name": r.display_name,
                        "status": r.status,
                        "is_guest": r.is_guest,
                        "created_at": r.created_at,
                        "status_changed_at": r.status_changed_at,
                        "gallery": [e.tolist() for e in r.gallery],
                    },
                    sort_keys=True,
                )
            )
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Registry":
        path = Path(path)
        text = path.read_text()
        lines = text.splitlines()
        if not lines:
            raise RegistryParseError("empty registry file", line=1)
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise RegistryParseError(f"bad header: {exc.msg}", line=1) from exc
        if header.get("format") != REGISTRY_FORMAT:
            raise RegistryParseError("not a registry file", line=1)
        reg = cls(
            guest_threshold=header.get("guest_threshold", 0.5),
            classifier=header.get("classifier", "centroid"),
        )
        reg.guest_counter = int(header.get("guest_counter", 0))
        reg.id_counter = int(header.get("id_counter", 0))
        for lineno, raw in enumerate(lines[1:], start=2):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise RegistryParseError(f"bad record: {exc.msg}", line=lineno) from exc
            rid = doc.get("id", "<missing id>")
            gallery = []
            for emb in doc.get("gallery", []):
                if len(emb) != EMBEDDING_DIM:
                    raise RegistryParseError(
                        f"record {rid!r} has a truncated embedding "
                        f"({len(emb)} of {EMBEDDING_DIM} components)",
                        line=lineno,
                        record_id=rid,
                    )
                gallery.append(np.array(emb, dtype=np.float64))
            try:
                record = IdentityRecord(
                    id=rid,
                    display_name=doc["display_name"],
                    gallery=gallery,
                    status=doc["status"],
                    is_guest=doc["is_guest"],
                    created_at=doc["created_at"],
                    status_changed_at=doc["status_changed_at"],
                )
            except (KeyError, ValueError) as exc:
                raise RegistryParseError(
                    f"record {rid!r}: {exc}", line=lineno, record_id=rid
                ) from exc
            reg.records[record.id] = record
        reg.path = path
        return reg

    def equals(self, other: "Registry") -> bool:
        """Field-for-field structural equality (ignores path binding)."""
        if (
            self.guest_counter != other.guest_counter
            or self.id_counter != other.id_counter
            or self.guest_threshold != other.guest_threshold
            or self.classifier != other.classifier
            or set(self.records) != set(other.records)
        ):
            return False
        for rid, a in self.records.items():
            b = other.records[rid]
            if (
                a.display_name != b.display_name
                or a.status != b.status
                or a.is_guest != b.is_guest
                or a.created_at != b.created_at
                or a.status_changed_at != b.status_changed_at
                or len(a.gallery) != len(b.gallery)
            ):
                return False
            if any(
                not np.array_equal(x, y) for x, y in zip(a.gallery, b.gallery)
            ):
                return False
        return True
