"""Domain types and file IO for embedding corpora and binary masks.

Embeddings travel in two interchangeable encodings:

* binary — magic ``EMB1``, u32-LE record count, u32-LE dimension, one u8
  split flag for the whole file (0=core, 1=finetune), then per record:
  u64-LE id, f32 measured IoU (NaN when absent), and the f32 vector.
* CSV — header ``id,split,iou,v0,...,v{D-1}``; an empty iou field means
  absent; floats written with 9 significant digits.

Masks are plain or raw netpbm files (PGM P2/P5, PBM P1/P4).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

SPLIT_CORE = "core"
SPLIT_FINETUNE = "finetune"
_SPLITS = (SPLIT_CORE, SPLIT_FINETUNE)

_EMB_MAGIC = b"EMB1"
_MAX_ID = 2**64 - 1


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class EmbeddingRecord:
    """One sample: a latent vector plus optional measured IoU and metadata.

    Vectors are stored at 32-bit precision, matching the file format, so a
    record survives a save/load cycle bit-exactly.
    """

    id: int
    split: str
    vector: np.ndarray
    measured_iou: float | None = None
    meta: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or not 0 <= self.id <= _MAX_ID:
            raise ValueError(f"record id must be a non-negative integer, got {self.id!r}")
        if self.split not in _SPLITS:
            raise ValueError(f"split must be one of {_SPLITS}, got {self.split!r}")
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(vec)):
            raise ValueError("vector contains non-finite values")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        if self.measured_iou is not None:
            iou = float(np.float32(self.measured_iou))
            if not np.isfinite(iou) or not 0.0 <= iou <= 1.0:
                raise ValueError(f"measured_iou must lie in [0,1], got {self.measured_iou!r}")
            object.__setattr__(self, "measured_iou", iou)
        if self.split == SPLIT_CORE and self.measured_iou is None:
            raise ValueError("core records require measured_iou")

    @property
    def dimension(self) -> int:
        return int(self.vector.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.split == other.split
            and self.measured_iou == other.measured_iou
            and np.array_equal(self.vector, other.vector)
        )


@dataclass(frozen=True)
class Corpus:
    """Ordered collection of records sharing one vector dimension."""

    records: tuple[EmbeddingRecord, ...]
    dimension: int = field(default=0)

    def __post_init__(self) -> None:
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if records:
            dim = records[0].dimension
            if self.dimension and self.dimension != dim:
                raise ValueError(
                    f"declared dimension {self.dimension} does not match records ({dim})"
                )
            object.__setattr__(self, "dimension", dim)
        elif self.dimension < 1:
            raise ValueError("empty corpus needs an explicit positive dimension")
        seen: set[int] = set()
        for index, rec in enumerate(records):
            if rec.dimension != self.dimension:
                raise ValueError(
                    f"record {index}: dimension {rec.dimension} != corpus dimension {self.dimension}"
                )
            if rec.id in seen:
                raise ValueError(f"record {index}: duplicate id {rec.id}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[int]:
        return [rec.id for rec in self.records]

    def vectors(self) -> np.ndarray:
        """Record vectors stacked row-wise as float64."""
        return np.stack([rec.vector for rec in self.records]).astype(np.float64)

    def measured_ious(self) -> np.ndarray:
        """Measured IoU per record; raises if any record lacks one."""
        values = []
        for index, rec in enumerate(self.records):
            if rec.measured_iou is None:
                raise ValueError(f"record {index} (id {rec.id}) has no measured_iou")
            values.append(rec.measured_iou)
        return np.asarray(values, dtype=np.float64)


def save_embeddings(corpus: Corpus, path, format: str = "binary") -> None:
    """Write a corpus to *path*; ``load_embeddings`` reproduces it exactly."""
    if len(corpus) == 0:
        raise ValueError("refusing to save an empty corpus")
    if format == "binary":
        _save_binary(corpus, path)
    elif format == "csv":
        _save_csv(corpus, path)
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def load_embeddings(path, format: str | None = None) -> Corpus:
    """Load a corpus, sniffing binary vs CSV by magic bytes when *format* is None."""
    if format is None:
        with open(path, "rb") as fh:
            format = "binary" if fh.read(4) == _EMB_MAGIC else "csv"
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown embedding format {format!r}")


def _save_binary(corpus: Corpus, path) -> None:
    splits = {rec.split for rec in corpus}
    if len(splits) != 1:
        raise ValueError("binary format stores one split per file; corpus mixes splits")
    split_flag = 0 if splits.pop() == SPLIT_CORE else 1
    with open(path, "wb") as fh:
        fh.write(_EMB_MAGIC)
        fh.write(struct.pack("<IIB", len(corpus), corpus.dimension, split_flag))
        for rec in corpus:
            iou = np.float32(np.nan if rec.measured_iou is None else rec.measured_iou)
            fh.write(struct.pack("<Q", rec.id))
            fh.write(iou.tobytes())
            fh.write(rec.vector.astype("<f4").tobytes())


def _load_binary(path) -> Corpus:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _EMB_MAGIC:
        raise DataFormatError(f"{path}: bad magic, not an embedding file")
    if len(blob) < 13:
        raise DataFormatError(f"{path}: truncated header")
    count, dim, split_flag = struct.unpack_from("<IIB", blob, 4)
    if split_flag not in (0, 1):
        raise DataFormatError(f"{path}: unknown split flag {split_flag}")
    if dim == 0:
        raise DataFormatError(f"{path}: zero dimension in header")
    split = SPLIT_CORE if split_flag == 0 else SPLIT_FINETUNE
    record_size = 8 + 4 + 4 * dim
    expected = 13 + count * record_size
    if len(blob) != expected:
        raise DataFormatError(
            f"{path}: size mismatch, expected {expected} bytes for {count} records, got {len(blob)}"
        )
    records = []
    offset = 13
    for index in range(count):
        (rec_id,) = struct.unpack_from("<Q", blob, offset)
        iou = np.frombuffer(blob, dtype="<f4", count=1, offset=offset + 8)[0]
        vector = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset + 12)
        offset += record_size
        try:
            records.append(
                EmbeddingRecord(
                    id=int(rec_id),
                    split=split,
                    vector=vector,
                    measured_iou=None if np.isnan(iou) else float(iou),
                )
            )
        except ValueError as exc:
            raise DataFormatError(f"{path}: record {index}: {exc}") from exc
    try:
        return Corpus(tuple(records), dimension=dim)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _save_csv(corpus: Corpus, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "iou"] + [f"v{i}" for i in range(corpus.dimension)])
        for rec in corpus:
            iou = "" if rec.measured_iou is None else f"{rec.measured_iou:.9g}"
            writer.writerow([rec.id, rec.split, iou] + [f"{x:.9g}" for x in rec.vector])


def _load_csv(path) -> Corpus:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    if header[:3] != ["id", "split", "iou"] or len(header) < 4:
        raise DataFormatError(f"{path}: malformed header {header!r}")
    dim = len(header) - 3
    if header[3:] != [f"v{i}" for i in range(dim)]:
        raise DataFormatError(f"{path}: malformed vector columns in header")
    records = []
    for index, row in enumerate(rows[1:]):
        if len(row) != 3 + dim:
            raise DataFormatError(f"{path}: record {index}: expected {3 + dim} fields, got {len(row)}")
        try:
            iou = None if row[2] == "" else float(row[2])
            vector = np.array([float(x) for x in row[3:]], dtype=np.float32)
            records.append(EmbeddingRecord(id=int(row[0]), split=row[1], vector=vector, measured_iou=iou))
        except ValueError as exc:
            raise DataFormatError(f"{path}: record {index}: {exc}") from exc
    try:
        return Corpus(tuple(records), dimension=dim)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class BinaryMask:
    """Boolean pixel grid; True marks the positive (building) class."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be positive")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(
                f"bits shape {bits.shape} does not match (height, width)=({self.height}, {self.width})"
            )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)


def load_mask(path) -> BinaryMask:
    """Read a PGM/PBM file; PGM pixels above 127 map to True, PBM bit 1 maps to True."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 2:
        raise DataFormatError(f"{path}: not a netpbm file")
    magic = blob[:2]
    if magic in (b"P1", b"P2"):
        return _parse_plain(path, blob, magic)
    if magic in (b"P4", b"P5"):
        return _parse_raw(path, blob, magic)
    raise DataFormatError(f"{path}: unsupported netpbm magic {magic!r}")


def _tokenize_header(blob: bytes, n_tokens: int) -> tuple[list[int], int]:
    """Read *n_tokens* whitespace-separated integers after the magic, skipping # comments.

    Returns the values and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens: list[int] = []
    pos = 2
    while len(tokens) < n_tokens:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos] == ord("#"):
            end = blob.find(b"\n", pos)
            pos = len(blob) if end == -1 else end + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError("truncated header")
        try:
            tokens.append(int(blob[start:pos]))
        except ValueError:
            raise DataFormatError(f"non-numeric header token {blob[start:pos]!r}") from None
    return tokens, pos + 1


def _parse_plain(path, blob: bytes, magic: bytes) -> BinaryMask:
    is_pbm = magic == b"P1"
    try:
        header, offset = _tokenize_header(blob, 2 if is_pbm else 3)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    width, height = header[0], header[1]
    if width < 1 or height < 1:
        raise DataFormatError(f"{path}: non-positive dimensions {width}x{height}")
    if not is_pbm and not 0 < header[2] < 65536:
        raise DataFormatError(f"{path}: invalid maxval {header[2]}")
    body = blob[offset - 1 :]
    # P1 allows digits without separating whitespace
    if is_pbm:
        values = [int(c) for c in body.decode("ascii", "replace") if c in "01"]
    else:
        try:
            values = [int(tok) for tok in body.split()]
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric pixel data") from None
    if len(values) < width * height:
        raise DataFormatError(f"{path}: truncated pixel data ({len(values)} of {width * height})")
    pixels = np.array(values[: width * height]).reshape(height, width)
    bits = pixels == 1 if is_pbm else pixels > 127
    return BinaryMask(width=width, height=height, bits=bits)


def _parse_raw(path, blob: bytes, magic: bytes) -> BinaryMask:
    is_pbm = magic == b"P4"
    try:
        header, offset = _tokenize_header(blob, 2 if is_pbm else 3)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    width, height = header[0], header[1]
    if width < 1 or height < 1:
        raise DataFormatError(f"{path}: non-positive dimensions {width}x{height}")
    body = blob[offset:]
    if is_pbm:
        row_bytes = (width + 7) // 8
        if len(body) < row_bytes * height:
            raise DataFormatError(f"{path}: truncated raster")
        rows = np.frombuffer(body[: row_bytes * height], dtype=np.uint8).reshape(height, row_bytes)
        bits = np.unpackbits(rows, axis=1)[:, :width] == 1
    else:
        maxval = header[2]
        if not 0 < maxval < 256:
            raise DataFormatError(f"{path}: unsupported maxval {maxval} (only single-byte PGM)")
        if len(body) < width * height:
            raise DataFormatError(f"{path}: truncated raster")
        pixels = np.frombuffer(body[: width * height], dtype=np.uint8).reshape(height, width)
        bits = pixels > 127
    return BinaryMask(width=width, height=height, bits=bits)
