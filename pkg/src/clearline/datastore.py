"""Flat-file dataset store: images, masks, annotation records, review queue.

Designed for field laptops: no database, one JSON index rewritten
atomically via temp-file rename. Image ids are content hashes so
re-ingesting the same frames across collection campaigns never creates
duplicates. Mutations to a single image or queue entry are serialized
per resource; readers never observe partial writes.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import threading
from datetime import datetime, timezone
from pathlib import Path

from PIL import Image

from .masks import FuzzyMask, mask_to_pgm, pgm_to_mask

REVIEW_REASONS = ("single-frame-detection", "operator-flag", "short-track")


def candidates_from_review_records(records, run_id: str, image_ids: dict | None = None) -> list:
    """Adapt a stabilization review-queue file into enqueue_reviews input.

    The detection reference is `<run_id>/track<id>`, which makes re-runs of
    the same stream idempotent against the queue. image_ids optionally maps
    frame_id -> ingested image id so confirmations can open an annotation
    stub on the right frame.
    """
    out = []
    for rec in records:
        first_frame = rec["frames"][0] if rec.get("frames") else None
        out.append(
            {
                "detection_ref": f"{run_id}/track{rec['track_id']}",
                "reason": rec.get("reason", "single-frame-detection"),
                "frames": rec.get("frames", []),
                "positions": rec.get("positions", []),
                "image_id": (image_ids or {}).get(first_frame),
            }
        )
    return out


class NotFoundError(KeyError):
    pass


class ConflictError(RuntimeError):
    """The operation collides with a terminal state (e.g. double-decide)."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def content_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


class Datastore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "images").mkdir(exist_ok=True)
        (self.root / "masks").mkdir(exist_ok=True)
        self._index_path = self.root / "index.json"
        self._lock = threading.RLock()
        self._resource_locks: dict = {}
        if self._index_path.exists():
            with open(self._index_path) as f:
                self._index = json.load(f)
        else:
            self._index = {"version": 1, "images": {}, "review_queue": {}}
            self._write_index()

    # -- index plumbing ----------------------------------------------------

    def _write_index(self) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".index-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as f:
                json.dump(self._index, f, indent=2, sort_keys=True)
                f.write("\n")
            os.replace(tmp, self._index_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _resource_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._resource_locks.setdefault(key, threading.Lock())

    # -- images ------------------------------------------------------------

    def ingest(self, paths, metadata: dict | None = None) -> list:
        """Register image files; corrupt files become error entries and the
        batch continues. Idempotent: re-ingesting is a no-op."""
        results = []
        for p in paths:
            p = Path(p)
            try:
                data = p.read_bytes()
                with Image.open(io.BytesIO(data)) as im:
                    im.verify()
                with Image.open(io.BytesIO(data)) as im:
                    fmt = (im.format or "PNG").lower()
                    width, height = im.size
            except Exception as e:
                results.append({"path": str(p), "status": "error", "error": str(e)})
                continue
            image_id = content_id(data)
            with self._lock:
                if image_id in self._index["images"]:
                    results.append({"path": str(p), "status": "duplicate", "id": image_id})
                    continue
                stored = self.root / "images" / f"{image_id}.{fmt}"
                stored.write_bytes(data)
                self._index["images"][image_id] = {
                    "id": image_id,
                    "path": str(stored.relative_to(self.root)),
                    "format": fmt,
                    "width": width,
                    "height": height,
                    "metadata": dict(metadata or {}),
                    "annotation_status": "unannotated",
                    "ingested_at": _now(),
                }
                self._write_index()
            results.append({"path": str(p), "status": "ingested", "id": image_id})
        return results

    def list_images(self) -> list:
        with self._lock:
            return [dict(rec) for rec in self._index["images"].values()]

    def image_record(self, image_id: str) -> dict:
        with self._lock:
            rec = self._index["images"].get(image_id)
            if rec is None:
                raise NotFoundError(f"no image {image_id}")
            return dict(rec)

    def image_bytes(self, image_id: str) -> tuple:
        rec = self.image_record(image_id)
        return (self.root / rec["path"]).read_bytes(), rec["format"]

    # -- masks and instance records -----------------------------------------

    def _mask_path(self, image_id: str) -> Path:
        return self.root / "masks" / f"{image_id}.pgm"

    def _instances_path(self, image_id: str) -> Path:
        return self.root / "masks" / f"{image_id}.instances.json"

    def save_mask(self, image_id: str, mask: FuzzyMask, instances: dict | None = None) -> None:
        rec = self.image_record(image_id)
        if (mask.width, mask.height) != (rec["width"], rec["height"]):
            raise ValueError(
                f"mask {mask.width}x{mask.height} does not match image "
                f"{rec['width']}x{rec['height']}"
            )
        with self._resource_lock(f"image:{image_id}"):
            self._mask_path(image_id).write_bytes(mask_to_pgm(mask))
            if instances is not None:
                self.save_instances(image_id, instances, _locked=True)
            with self._lock:
                self._index["images"][image_id]["annotation_status"] = "annotated"
                self._write_index()

    def load_mask(self, image_id: str) -> FuzzyMask | None:
        """None signals an image that has not been annotated yet."""
        self.image_record(image_id)
        path = self._mask_path(image_id)
        if not path.exists():
            return None
        return pgm_to_mask(path.read_bytes())

    def save_instances(self, image_id: str, record: dict, _locked: bool = False) -> None:
        rec = self.image_record(image_id)
        lock = self._resource_lock(f"image:{image_id}")
        if not _locked:
            lock.acquire()
        try:
            record = dict(record)
            record.setdefault("image_id", image_id)
            record.setdefault("timestamp", _now())
            with open(self._instances_path(image_id), "w") as f:
                json.dump(record, f, indent=2, sort_keys=True)
                f.write("\n")
        finally:
            if not _locked:
                lock.release()

    def load_instances(self, image_id: str) -> dict | None:
        self.image_record(image_id)
        path = self._instances_path(image_id)
        if not path.exists():
            return None
        with open(path) as f:
            return json.load(f)

    # -- review queue --------------------------------------------------------

    def enqueue_reviews(self, candidates) -> list:
        """Queue review candidates; dedupe on the detection reference.

        Each candidate: {detection_ref, reason, image_id?, frames?, positions?}.
        """
        created = []
        with self._lock:
            existing_refs = {
                e["detection_ref"] for e in self._index["review_queue"].values()
            }
            for cand in candidates:
                ref = cand["detection_ref"]
                if ref in existing_refs:
                    continue
                reason = cand.get("reason", "single-frame-detection")
                entry_id = content_id(ref.encode())
                entry = {
                    "id": entry_id,
                    "detection_ref": ref,
                    "reason": reason,
                    "status": "pending",
                    "created_at": _now(),
                    "image_id": cand.get("image_id"),
                    "frames": cand.get("frames", []),
                    "positions": cand.get("positions", []),
                }
                self._index["review_queue"][entry_id] = entry
                existing_refs.add(ref)
                created.append(dict(entry))
            if created:
                self._write_index()
        return created

    def review_queue(self, status: str | None = None) -> list:
        with self._lock:
            entries = [dict(e) for e in self._index["review_queue"].values()]
        if status is not None:
            entries = [e for e in entries if e["status"] == status]
        return entries

    def review(self, entry_id: str, decision: str, reviewer: str | None = None) -> dict:
        """Apply a terminal decision. Double-deciding raises ConflictError."""
        if decision not in ("confirmed", "rejected"):
            raise ValueError(f"decision must be 'confirmed' or 'rejected', got {decision!r}")
        with self._resource_lock(f"review:{entry_id}"):
            with self._lock:
                entry = self._index["review_queue"].get(entry_id)
                if entry is None:
                    raise NotFoundError(f"no review entry {entry_id}")
                if entry["status"] != "pending":
                    raise ConflictError(
                        f"entry {entry_id} already decided: {entry['status']}"
                    )
                entry["status"] = decision
                entry["decided_by"] = reviewer
                entry["decided_at"] = _now()
                if decision == "confirmed":
                    entry["annotation_stub"] = {
                        "detection_ref": entry["detection_ref"],
                        "image_id": entry.get("image_id"),
                        "created_at": _now(),
                    }
                    img = entry.get("image_id")
                    if img and img in self._index["images"]:
                        rec = self._index["images"][img]
                        if rec["annotation_status"] == "unannotated":
                            rec["annotation_status"] = "queued"
                self._write_index()
                return dict(entry)
