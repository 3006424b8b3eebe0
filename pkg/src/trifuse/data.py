"""Dataset ingestion: NPY arrays, YOLO labels, normalization and padding.

Samples are pre-aligned five-channel arrays stored as NPY v1.0 files
(H x W x 5, channels 0-2 RGB, 3 thermal, 4 event) with per-image YOLO
label files (``class cx cy w h`` in normalized center coordinates) and a
JSON manifest carrying day/night flags.
"""

from __future__ import annotations

import ast
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ValidationError

log = logging.getLogger(__name__)

STD_EPS = 1e-6

# ImageNet RGB statistics for inputs in [0, 1]
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


# ---------------------------------------------------------------------------
# NPY v1.0 reader / writer

_NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_KINDS = {("f", 4), ("f", 8), ("i", 1), ("i", 2), ("i", 4), ("i", 8), ("u", 1)}


def write_npy(path, arr, byte_order="<"):
    """Write a C-order array as an NPY v1.0 file.

    ``byte_order`` selects the on-disk endianness ('<' or '>'); single-byte
    dtypes are written with the '|' marker.
    """
    arr = np.ascontiguousarray(arr)
    if (arr.dtype.kind, arr.dtype.itemsize) not in _SUPPORTED_KINDS:
        raise FormatError(f"unsupported dtype {arr.dtype} for NPY output")
    if byte_order not in ("<", ">"):
        raise FormatError(f"byte_order must be '<' or '>', got {byte_order!r}")
    order = "|" if arr.dtype.itemsize == 1 else byte_order
    descr = f"{order}{arr.dtype.kind}{arr.dtype.itemsize}"
    shape = arr.shape if len(arr.shape) != 1 else (arr.shape[0],)
    header = "{'descr': %r, 'fortran_order': False, 'shape': %s, }" % (
        descr,
        "(%s)" % (", ".join(str(d) for d in shape) + ("," if len(shape) == 1 else "")),
    )
    # pad so that data starts on a 64-byte boundary, header ends with \n
    base = len(_NPY_MAGIC) + 2 + 2 + len(header) + 1
    pad = (64 - base % 64) % 64
    header = header + " " * pad + "\n"
    out = arr.astype(arr.dtype.newbyteorder(order)) if order != "|" else arr
    with open(path, "wb") as f:
        f.write(_NPY_MAGIC)
        f.write(bytes([1, 0]))
        f.write(struct.pack("<H", len(header)))
        f.write(header.encode("latin1"))
        f.write(out.tobytes(order="C"))


def read_npy(path):
    """Read an NPY v1.x file (C-order, either endianness) to a native array."""
    with open(path, "rb") as f:
        magic = f.read(6)
        if magic != _NPY_MAGIC:
            raise FormatError(f"{path}: bad NPY magic {magic!r}")
        major, _minor = f.read(2)
        if major != 1:
            raise FormatError(f"{path}: unsupported NPY version {major}.x")
        (hlen,) = struct.unpack("<H", f.read(2))
        try:
            header = ast.literal_eval(f.read(hlen).decode("latin1"))
        except (SyntaxError, ValueError) as e:
            raise FormatError(f"{path}: unparseable NPY header") from e
        descr, fortran, shape = (
            header.get("descr"),
            header.get("fortran_order"),
            header.get("shape"),
        )
        if fortran:
            raise FormatError(f"{path}: fortran-order arrays are not supported")
        if not isinstance(descr, str) or len(descr) < 3:
            raise FormatError(f"{path}: bad descr {descr!r}")
        order, kind, size = descr[0], descr[1], int(descr[2:])
        if order not in "<>|=" or (kind, size) not in _SUPPORTED_KINDS:
            raise FormatError(f"{path}: unsupported dtype descr {descr!r}")
        dtype = np.dtype(descr)
        count = int(np.prod(shape)) if shape else 1
        buf = f.read(count * dtype.itemsize)
        if len(buf) != count * dtype.itemsize:
            raise FormatError(f"{path}: truncated data section")
        arr = np.frombuffer(buf, dtype=dtype).reshape(shape)
        return arr.astype(dtype.newbyteorder("="))


# ---------------------------------------------------------------------------
# frames and labels


@dataclass
class GroundTruthBox:
    """YOLO-style box: normalized center coordinates in [0, 1]."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def to_pixels(self, height, width):
        """Return (x1, y1, x2, y2) in pixel units."""
        return (
            (self.cx - self.w / 2) * width,
            (self.cy - self.h / 2) * height,
            (self.cx + self.w / 2) * width,
            (self.cy + self.h / 2) * height,
        )


@dataclass
class TriModalFrame:
    """One aligned five-channel sample with its ground-truth boxes."""

    pixels: np.ndarray  # (1, 5, H, W) float32
    boxes: list
    meta: dict = field(default_factory=dict)

    @property
    def height(self):
        return self.pixels.shape[2]

    @property
    def width(self):
        return self.pixels.shape[3]


def parse_labels(path):
    """Parse a YOLO label file; malformed lines are reported by number."""
    boxes = []
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise FormatError(f"{path}:{i}: expected 5 fields, got {len(parts)}")
            try:
                cls = int(parts[0])
                cx, cy, w, h = (float(v) for v in parts[1:])
            except ValueError as e:
                raise FormatError(f"{path}:{i}: non-numeric field") from e
            box = GroundTruthBox(cls, cx, cy, w, h)
            _validate_box(box, f"{path}:{i}")
            boxes.append(box)
    return boxes


def _validate_box(box, where, tol=1e-6):
    if not (0.0 < box.w <= 1.0 + tol and 0.0 < box.h <= 1.0 + tol):
        raise ValidationError(f"{where}: box size ({box.w}, {box.h}) outside (0, 1]")
    if not (0.0 - tol <= box.cx <= 1.0 + tol and 0.0 - tol <= box.cy <= 1.0 + tol):
        raise ValidationError(f"{where}: box center ({box.cx}, {box.cy}) outside [0, 1]")
    for edge, v in (
        ("left", box.cx - box.w / 2),
        ("right", box.cx + box.w / 2),
        ("top", box.cy - box.h / 2),
        ("bottom", box.cy + box.h / 2),
    ):
        if v < -tol or v > 1.0 + tol:
            raise ValidationError(f"{where}: box {edge} edge at {v:.4f} leaves the image")


def load_frame(array_path, label_path, meta=None):
    """Load a five-channel NPY sample plus its YOLO labels."""
    arr = read_npy(array_path)
    if arr.ndim != 3:
        raise FormatError(f"{array_path}: expected rank-3 H x W x 5 array, got rank {arr.ndim}")
    if arr.shape[2] != 5:
        raise FormatError(f"{array_path}: expected 5 channels, got {arr.shape[2]}")
    pixels = np.ascontiguousarray(arr.astype(np.float32).transpose(2, 0, 1)[None])
    boxes = parse_labels(label_path) if label_path is not None else []
    return TriModalFrame(pixels=pixels, boxes=boxes, meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormStats:
    """Per-channel affine normalization statistics for the 5 channels."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, np.float64).reshape(5)
        self.std = np.asarray(self.std, np.float64).reshape(5)
        if np.any(self.std <= 0):
            bad = int(np.argmax(self.std <= 0))
            raise ValidationError(f"channel {bad} std must be > 0, got {self.std[bad]}")


def default_stats(pixel_range=1.0, thermal=(0.5, 0.25), event=(0.0, 0.5)):
    """ImageNet RGB statistics scaled to the stored pixel range, plus
    caller-supplied thermal/event statistics."""
    mean = [m * pixel_range for m in IMAGENET_MEAN] + [thermal[0], event[0]]
    std = [s * pixel_range for s in IMAGENET_STD] + [thermal[1], event[1]]
    return NormStats(mean, std)


def normalize(frame, stats):
    """Apply (x - mean) / std per channel; accepts a frame or a raw tensor."""
    pixels = frame.pixels if isinstance(frame, TriModalFrame) else frame
    m = stats.mean.reshape(1, 5, 1, 1)
    s = stats.std.reshape(1, 5, 1, 1)
    return ((pixels.astype(np.float64) - m) / s).astype(np.float32)


def denormalize(tensor, stats):
    m = stats.mean.reshape(1, 5, 1, 1)
    s = stats.std.reshape(1, 5, 1, 1)
    return (tensor.astype(np.float64) * s + m).astype(np.float32)


def compute_stats(manifest, channels=(3, 4), pixel_range=1.0):
    """Streaming per-channel mean/std over a split's pixels.

    Channels not listed keep the ImageNet defaults (scaled by pixel_range).
    Constant channels get their std clamped to ``STD_EPS`` instead of failing.
    """
    if not manifest.entries:
        raise ValidationError("cannot compute statistics over an empty manifest")
    stats = default_stats(pixel_range=pixel_range)
    mean, std = stats.mean.copy(), stats.std.copy()
    n = 0
    tot = np.zeros(len(channels))
    tot2 = np.zeros(len(channels))
    for entry in manifest.entries:
        frame = load_frame(entry.image, None)
        for j, c in enumerate(channels):
            ch = frame.pixels[0, c].astype(np.float64)
            tot[j] += ch.sum()
            tot2[j] += (ch * ch).sum()
        n += frame.height * frame.width
    for j, c in enumerate(channels):
        mu = tot[j] / n
        var = max(tot2[j] / n - mu * mu, 0.0)
        mean[c] = mu
        std[c] = max(np.sqrt(var), STD_EPS)
    return NormStats(mean, std)


# ---------------------------------------------------------------------------
# padding


def pad_to_stride(x, stride=32):
    """Zero-pad bottom/right so H and W become multiples of ``stride``.

    Returns (padded, (H, W)) with the original size kept for box bookkeeping.
    """
    h, w = x.shape[2], x.shape[3]
    if h < 1 or w < 1:
        raise ValidationError(f"degenerate spatial size {h}x{w}")
    ph = (stride - h % stride) % stride
    pw = (stride - w % stride) % stride
    if ph == 0 and pw == 0:
        return x, (h, w)
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw))), (h, w)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ManifestEntry:
    image: str
    labels: str
    day_night: str  # "day" | "night"


@dataclass
class DatasetManifest:
    entries: list

    def __len__(self):
        return len(self.entries)

    def counts(self):
        day = sum(1 for e in self.entries if e.day_night == "day")
        return {"day": day, "night": len(self.entries) - day}


def load_manifest(path, check_files=True):
    """Load a JSON manifest of {image, labels, day_night} records."""
    with open(path) as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise FormatError(f"{path}: manifest must be a JSON list")
    base = Path(path).parent
    entries = []
    for i, rec in enumerate(records):
        try:
            img = str(base / rec["image"])
            lbl = str(base / rec["labels"])
            flag = rec["day_night"]
        except (TypeError, KeyError) as e:
            raise FormatError(f"{path}: record {i} missing field {e}") from e
        if flag not in ("day", "night"):
            raise ValidationError(f"{path}: record {i} day_night flag {flag!r} invalid")
        if check_files:
            for p in (img, lbl):
                if not Path(p).is_file():
                    raise ValidationError(f"{path}: record {i} references missing file {p}")
        entries.append(ManifestEntry(img, lbl, flag))
    return DatasetManifest(entries)


def save_manifest(path, manifest):
    base = Path(path).parent
    records = [
        {
            "image": str(Path(e.image).relative_to(base)) if Path(e.image).is_absolute() else e.image,
            "labels": str(Path(e.labels).relative_to(base)) if Path(e.labels).is_absolute() else e.labels,
            "day_night": e.day_night,
        }
        for e in manifest.entries
    ]
    with open(path, "w") as f:
        json.dump(records, f, indent=1)


def filter_split(manifest, selector):
    """Subset a manifest by illumination flag: all, day, or night."""
    if selector not in ("all", "day", "night"):
        raise ConfigError(f"selector must be all/day/night, got {selector!r}")
    if selector == "all":
        return DatasetManifest(list(manifest.entries))
    kept = [e for e in manifest.entries if e.day_night == selector]
    if not kept:
        log.warning("filter_split(%s) produced an empty manifest", selector)
    return DatasetManifest(kept)
