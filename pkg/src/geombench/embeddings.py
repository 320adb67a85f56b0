"""Embedding tables, their on-disk formats, and the provider protocol client.

Two formats: JSONL (one record per line, portable) and EMB1 (compact
binary: magic ``EMB1``, little-endian u32 count, u32 dim, count x dim
float32 payload, then u16 length-prefixed UTF-8 ids in payload order).
The HTTP provider protocol is ``GET /v1/models`` plus ``POST /v1/embed``
with base64 PNGs; responses preserve request order.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import GeombenchError

EMB1_MAGIC = b"EMB1"


class EmbeddingFormatError(GeombenchError):
    pass


class ProviderError(GeombenchError):
    """Provider request failed; carries the offending batch's ids."""

    def __init__(self, message: str, ids=()):
        super().__init__(message)
        self.ids = tuple(ids)


@dataclass
class EmbeddingTable:
    """Immutable-by-convention id -> float32 vector map from one model."""

    model_tag: str
    dim: int
    entries: dict  # id -> (dim,) float32 array

    def __post_init__(self):
        if self.entries and self.dim < 1:
            raise ValueError("dim must be positive for a non-empty table")
        for sid, vec in self.entries.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.dim,):
                raise ValueError(f"vector for {sid!r} has shape {arr.shape}, want ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in vector for {sid!r}")
            self.entries[sid] = arr

    def ids(self) -> list:
        return list(self.entries)

    def matrix(self, ids=None) -> np.ndarray:
        """Vectors stacked in the given (or insertion) id order."""
        use = list(self.entries) if ids is None else list(ids)
        missing = [i for i in use if i not in self.entries]
        if missing:
            raise KeyError(f"missing embeddings for {missing[:5]}{'...' if len(missing) > 5 else ''}")
        if not use:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.entries[i] for i in use])

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# File formats


def write_table(table: EmbeddingTable, fmt: str, path) -> None:
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for sid, vec in table.entries.items():
                fh.write(
                    json.dumps(
                        {
                            "id": sid,
                            "model": table.model_tag,
                            "dim": table.dim,
                            "v": [float(x) for x in vec],
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        return
    if fmt == "emb1":
        ids = list(table.entries)
        with open(path, "wb") as fh:
            fh.write(EMB1_MAGIC)
            fh.write(struct.pack("<II", len(ids), table.dim))
            for sid in ids:
                fh.write(table.entries[sid].astype("<f4").tobytes())
            for sid in ids:
                raw = sid.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise EmbeddingFormatError(f"id too long: {sid[:32]}...")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
        return
    raise ValueError(f"unknown format {fmt!r} (want jsonl or emb1)")


def _read_emb1(data: bytes, model_tag: str) -> EmbeddingTable:
    if len(data) < 12:
        raise EmbeddingFormatError("truncated EMB1 header")
    count, dim = struct.unpack("<II", data[4:12])
    payload_len = count * dim * 4
    pos = 12
    if len(data) < pos + payload_len:
        raise EmbeddingFormatError("truncated EMB1 payload")
    vectors = np.frombuffer(data[pos : pos + payload_len], dtype="<f4").reshape(
        count, dim
    )
    pos += payload_len
    ids = []
    for _ in range(count):
        if len(data) < pos + 2:
            raise EmbeddingFormatError("truncated EMB1 id table")
        (n,) = struct.unpack("<H", data[pos : pos + 2])
        pos += 2
        if len(data) < pos + n:
            raise EmbeddingFormatError("truncated EMB1 id table")
        ids.append(data[pos : pos + n].decode("utf-8"))
        pos += n
    if len(set(ids)) != len(ids):
        raise EmbeddingFormatError("duplicate ids in EMB1 file")
    if not np.all(np.isfinite(vectors)):
        raise EmbeddingFormatError("non-finite values in EMB1 payload")
    entries = {sid: vectors[i].copy() for i, sid in enumerate(ids)}
    return EmbeddingTable(model_tag=model_tag, dim=int(dim), entries=entries)


def _read_jsonl(text: str) -> EmbeddingTable:
    entries = {}
    model_tag = ""
    dim = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as err:
            raise EmbeddingFormatError(f"line {lineno}: bad JSON ({err})") from None
        sid = rec["id"]
        if sid in entries:
            raise EmbeddingFormatError(f"line {lineno}: duplicate id {sid!r}")
        vec = np.asarray(rec["v"], dtype=np.float32)
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"line {lineno}: non-finite values")
        if dim == 0:
            dim = int(rec["dim"])
            model_tag = rec.get("model", "")
        if vec.shape != (dim,) or int(rec["dim"]) != dim:
            raise EmbeddingFormatError(f"line {lineno}: dim mismatch")
        entries[sid] = vec
    return EmbeddingTable(model_tag=model_tag, dim=dim, entries=entries)


def read_table(path, model_tag: str = "") -> EmbeddingTable:
    """Load a table, sniffing the format from magic bytes.

    EMB1 files do not store a model tag; pass ``model_tag`` to restore it.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == EMB1_MAGIC:
        return _read_emb1(data, model_tag)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise EmbeddingFormatError("unrecognized embedding file format") from None
    table = _read_jsonl(text)
    if model_tag and not table.model_tag:
        table.model_tag = model_tag
    return table


# ---------------------------------------------------------------------------
# Provider protocol


@dataclass(frozen=True)
class ProviderEndpoint:
    base_url: str
    timeout: float = 60.0
    max_batch: int = 64

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


def list_models(endpoint: ProviderEndpoint) -> list:
    url = endpoint.base_url.rstrip("/") + "/v1/models"
    try:
        resp = requests.get(url, timeout=endpoint.timeout)
    except requests.RequestException as err:
        raise ProviderError(f"cannot reach provider at {url}: {err}") from None
    if resp.status_code != 200:
        raise ProviderError(f"GET /v1/models returned {resp.status_code}")
    return resp.json()["models"]


def fetch_embeddings(
    endpoint: ProviderEndpoint, model_tag: str, images: list
) -> EmbeddingTable:
    """POST image batches to the provider and assemble one table.

    ``images`` is a list of (stimulus id, PNG bytes); order is preserved and
    batches never exceed the endpoint's max batch size.  Failures carry the
    offending batch's ids.
    """
    if not images:
        return EmbeddingTable(model_tag=model_tag, dim=0, entries={})
    url = endpoint.base_url.rstrip("/") + "/v1/embed"
    entries: dict = {}
    dim = None
    for start in range(0, len(images), endpoint.max_batch):
        batch = images[start : start + endpoint.max_batch]
        ids = [sid for sid, _ in batch]
        payload = {
            "model": model_tag,
            "images": [base64.b64encode(png).decode("ascii") for _, png in batch],
        }
        try:
            resp = requests.post(url, json=payload, timeout=endpoint.timeout)
        except requests.Timeout:
            raise ProviderError(f"provider timed out on batch {ids[:3]}...", ids) from None
        except requests.RequestException as err:
            raise ProviderError(f"transport failure: {err}", ids) from None
        if resp.status_code == 404:
            raise ProviderError(f"unknown model {model_tag!r}", ids)
        if resp.status_code == 400:
            raise ProviderError(f"provider rejected an image in batch {ids[:3]}...", ids)
        if resp.status_code == 413:
            raise ProviderError(
                f"batch of {len(batch)} exceeds the provider's limit", ids
            )
        if resp.status_code != 200:
            raise ProviderError(f"provider returned {resp.status_code}", ids)
        body = resp.json()
        vectors = body["embeddings"]
        if len(vectors) != len(batch):
            raise ProviderError(
                f"provider returned {len(vectors)} vectors for {len(batch)} images", ids
            )
        if dim is None:
            dim = int(body["dim"])
        for sid, vec in zip(ids, vectors):
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (dim,):
                raise ProviderError(f"vector for {sid!r} has wrong dim", ids)
            entries[sid] = arr
    return EmbeddingTable(model_tag=model_tag, dim=int(dim), entries=entries)


# ---------------------------------------------------------------------------
# Local pixel baseline


def pixel_vector(image, side: int = 32) -> np.ndarray:
    """Box-average an image to side x side and flatten to [0, 1] floats."""
    data = image.data if hasattr(image, "data") else np.asarray(image)
    h, w = data.shape
    if h % side or w % side:
        raise ValueError(f"image {w}x{h} not divisible into {side}x{side} blocks")
    a = data.astype(np.float32).reshape(side, h // side, side, w // side)
    return (a.mean(axis=(1, 3)) / 255.0).ravel()


def pixel_table(images: dict, side: int = 32) -> EmbeddingTable:
    """Raw-pixel baseline embeddings for id -> Image mappings."""
    entries = {sid: pixel_vector(img, side) for sid, img in images.items()}
    return EmbeddingTable(model_tag=f"pixel-{side}", dim=side * side, entries=entries)
