"""Dataset ingestion and export: IDX parsing, PGM image files, CSV manifests.

IDX is the classic big-endian container for byte-valued tensor files; pixel
bytes map to [0, 1] floats on ingest and no further normalization happens
at parse time.  Datasets serialize to one CSV manifest plus one PGM file
per image, chosen for inspectability over a monolithic binary.
"""
from __future__ import annotations

import csv
import io as _io
import struct
import warnings
from pathlib import Path

import numpy as np

from .datagen import Dataset, LabeledImage
from .errors import (BadMagic, DimMismatch, EmptyDataset, InvalidParams,
                     TruncatedPayload)
from .model import DeformParams, GrayImage

_IMAGE_MAGIC = b"\x00\x00\x08\x03"
_LABEL_MAGIC = b"\x00\x00\x08\x01"


def _parse_idx_header(data: bytes, magic: bytes) -> tuple[tuple[int, ...], int]:
    if len(data) < 4:
        raise TruncatedPayload(f"file has {len(data)} bytes, no room for magic")
    if data[:4] != magic:
        raise BadMagic(f"magic {data[:4]!r}, expected {magic!r}")
    rank = data[3]
    header_len = 4 + 4 * rank
    if len(data) < header_len:
        raise TruncatedPayload("file ends inside the dimension list")
    dims = struct.unpack(f">{rank}I", data[4:header_len])
    return dims, header_len


def parse_idx_images(data: bytes) -> list[GrayImage]:
    """Decode an IDX image file into [0, 1]-valued grayscale images."""
    dims, offset = _parse_idx_header(data, _IMAGE_MAGIC)
    n, h, w = dims
    expected = n * h * w
    payload = data[offset:]
    if len(payload) != expected:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, expected {expected}")
    if h != w:
        raise DimMismatch(f"images must be square, got {h}x{w}")
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(n, h, w)
    return [GrayImage(block / 255.0) for block in raw]


def parse_idx_labels(data: bytes) -> list[int]:
    """Decode an IDX label file into a list of small ints."""
    dims, offset = _parse_idx_header(data, _LABEL_MAGIC)
    (n,) = dims
    payload = data[offset:]
    if len(payload) != n:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, expected {n}")
    return [int(b) for b in payload]


def serialize_idx_images(images: list[GrayImage]) -> bytes:
    """Inverse of parse_idx_images for byte-representable pixel values."""
    if not images:
        raise EmptyDataset("cannot serialize an empty image list")
    d = images[0].d
    if any(img.d != d for img in images):
        raise DimMismatch("all images must share one side length")
    header = _IMAGE_MAGIC + struct.pack(">3I", len(images), d, d)
    stack = np.stack([img.pixels for img in images])
    payload = np.clip(np.rint(stack * 255.0), 0, 255).astype(np.uint8)
    return header + payload.tobytes()


def serialize_idx_labels(labels: list[int]) -> bytes:
    if any(not (0 <= v <= 255) for v in labels):
        raise InvalidParams("labels must fit one unsigned byte")
    return _LABEL_MAGIC + struct.pack(">I", len(labels)) + bytes(labels)


def load_idx_pair(image_data: bytes, label_data: bytes) -> list[tuple[GrayImage, int]]:
    """Parse matching image and label files, validating count equality."""
    images = parse_idx_images(image_data)
    labels = parse_idx_labels(label_data)
    if len(images) != len(labels):
        raise DimMismatch(f"{len(images)} images but {len(labels)} labels")
    return list(zip(images, labels))


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def write_pgm(img: GrayImage, max_val_policy: str = "fixed") -> bytes:
    """Binary PGM (P5) bytes.

    Policy "fixed" maps pixel 1.0 to byte 255 (values above 1 clip);
    "image_max" rescales by the image's own maximum.  An all-zero image
    under "image_max" falls back to all-zero bytes with a warning.
    """
    if max_val_policy not in ("fixed", "image_max"):
        raise InvalidParams(f"unknown max_val policy {max_val_policy!r}")
    px = img.pixels
    if max_val_policy == "image_max":
        peak = float(px.max())
        if peak == 0.0:
            warnings.warn("all-zero image under image_max policy; writing zeros")
            scale = 1.0
        else:
            scale = peak
    else:
        scale = 1.0
    header = f"P5\n{img.d} {img.d}\n255\n".encode("ascii")
    body = np.clip(np.rint(px * (255.0 / scale)), 0, 255).astype(np.uint8)
    return header + body.tobytes()


def read_pgm(data: bytes) -> GrayImage:
    """Decode binary PGM back to a [0, 1]-valued image."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise TruncatedPayload("PGM header ended early")
        chunk = data[pos:pos + 1]
        if chunk == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif chunk.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise BadMagic(f"PGM magic {tokens[0]!r}, expected b'P5'")
    w, h, max_val = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if w != h:
        raise DimMismatch(f"image must be square, got {w}x{h}")
    body = data[pos + 1:]
    if len(body) != w * h:
        raise TruncatedPayload(f"payload has {len(body)} bytes, expected {w * h}")
    raw = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    return GrayImage(raw / max_val)


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------

_MANIFEST_COLUMNS = ("index", "label", "template_index", "eta", "xi",
                     "xi_prime", "tau", "tau_prime", "file")


def write_dataset(data: Dataset, directory: str | Path,
                  max_val_policy: str = "image_max") -> Path:
    """Write a CSV manifest plus one PGM per image; returns the manifest path.

    Parameters are stored at full precision in the manifest; the PGM pixel
    bytes are quantized, so reading back reproduces images only to PGM
    resolution.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_MANIFEST_COLUMNS)
    for i, item in enumerate(data.items):
        name = f"item_{i:05d}.pgm"
        (directory / name).write_bytes(write_pgm(item.image, max_val_policy))
        p = item.params
        writer.writerow([i, item.label, item.template_index,
                         repr(p.eta), repr(p.xi), repr(p.xi_prime),
                         repr(p.tau), repr(p.tau_prime), name])
    manifest.write_text(buf.getvalue(), encoding="utf-8")
    return manifest


def read_dataset(directory: str | Path) -> Dataset:
    """Load a manifest-directory dataset written by write_dataset."""
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.exists():
        raise EmptyDataset(f"no manifest.csv under {directory}")
    items = []
    with manifest.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _MANIFEST_COLUMNS:
            raise DimMismatch(f"manifest columns {reader.fieldnames} unexpected")
        for row in reader:
            img = read_pgm((directory / row["file"]).read_bytes())
            params = DeformParams(eta=float(row["eta"]), xi=float(row["xi"]),
                                  xi_prime=float(row["xi_prime"]),
                                  tau=float(row["tau"]),
                                  tau_prime=float(row["tau_prime"]),
                                  allow_flips=True)
            items.append(LabeledImage(image=img, label=int(row["label"]),
                                      template_index=int(row["template_index"]),
                                      params=params))
    if not items:
        raise EmptyDataset(f"manifest under {directory} lists no items")
    return Dataset(items=tuple(items), d=items[0].image.d,
                   meta={"origin": str(directory)})
