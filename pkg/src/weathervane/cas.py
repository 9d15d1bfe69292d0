"""Content-addressed blob store with verification on every read.

The identifier of a blob is the SHA-256 of its exact bytes, so equal content
always maps to the same id and any modification to a stored file is caught at
retrieval time. Blobs live in a flat on-disk layout ``<root>/<hh>/<full hex>``
where ``hh`` is the first two hex digits of the digest.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import IntegrityViolation, NotFound, StorageFailure

CID_PREFIX = "sha256-"
_DIGEST_LEN = 32


@dataclass(frozen=True, order=True)
class Cid:
    """Content identifier: SHA-256 digest of the addressed bytes."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != _DIGEST_LEN:
            raise ValueError(f"cid digest must be {_DIGEST_LEN} bytes, got {len(self.digest)}")

    @property
    def algorithm(self) -> str:
        return "sha256"

    @property
    def text(self) -> str:
        return CID_PREFIX + self.digest.hex()

    def __str__(self) -> str:
        return self.text

    @classmethod
    def of(cls, data: bytes) -> "Cid":
        return cls(hashlib.sha256(data).digest())

    @classmethod
    def parse(cls, text: str) -> "Cid":
        if not text.startswith(CID_PREFIX):
            raise ValueError(f"cid must start with {CID_PREFIX!r}")
        hexpart = text[len(CID_PREFIX):]
        if len(hexpart) != 2 * _DIGEST_LEN or hexpart != hexpart.lower():
            raise ValueError("cid digest must be 64 lowercase hex characters")
        return cls(bytes.fromhex(hexpart))


def verify(cid: Cid, data: bytes) -> bool:
    """True iff ``data`` hashes to ``cid``; pure, touches no storage."""
    return hashlib.sha256(data).digest() == cid.digest


class BlobStore:
    """Directory-backed store; keeps an in-memory index of known blob sizes."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot create store root {self.root}: {exc}") from exc
        self.index: dict[Cid, int] = {}
        self._load_index()

    def _load_index(self) -> None:
        for sub in self.root.iterdir():
            if not (sub.is_dir() and len(sub.name) == 2):
                continue
            for blob in sub.iterdir():
                try:
                    cid = Cid(bytes.fromhex(blob.name))
                except ValueError:
                    continue
                self.index[cid] = blob.stat().st_size

    def _path(self, cid: Cid) -> Path:
        hexdigest = cid.digest.hex()
        return self.root / hexdigest[:2] / hexdigest

    def put(self, data: bytes) -> Cid:
        """Persist ``data`` and return its Cid. Idempotent for equal bytes."""
        cid = Cid.of(data)
        path = self._path(cid)
        if not path.exists():
            try:
                path.parent.mkdir(exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(data)
                os.replace(tmp, path)
            except OSError as exc:
                raise StorageFailure(f"cannot write blob {cid.text}: {exc}") from exc
        self.index[cid] = len(data)
        return cid

    def get(self, cid: Cid) -> bytes:
        """Return the bytes for ``cid``, re-verifying the hash on every read."""
        path = self._path(cid)
        if not path.exists():
            raise NotFound(f"no blob for {cid.text}")
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise StorageFailure(f"cannot read blob {cid.text}: {exc}") from exc
        if not verify(cid, data):
            raise IntegrityViolation(f"stored bytes no longer match {cid.text}")
        return data

    def __contains__(self, cid: Cid) -> bool:
        return self._path(cid).exists()

    def __len__(self) -> int:
        return len(self.index)
