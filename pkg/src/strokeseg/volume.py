"""Volume data model and bit-exact MVOL file I/O.

A multi-modal volume stores one intensity per (modality, voxel) in a dense
array of shape (M, D, H, W), so the flat payload index is
``((m*D + k)*H + j)*W + i`` with ``i`` fastest.  Modality channels are
contiguous, which keeps featurization cache-friendly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import (
    DimsMismatch,
    IndexOutOfRange,
    IoFailure,
    MalformedHeader,
    NonFiniteValue,
    PayloadSizeMismatch,
)

MAGIC = b"MVOL1\n"

DEFAULT_MODALITIES = ("T1C", "T2", "FLAIR")

AXES = ("axial", "sagittal", "coronal")


class TissueClass(IntEnum):
    """The four tissue classes; non-enhancing includes necrosis."""

    HEALTHY = 0
    EDEMA = 1
    NON_ENHANCING = 2
    ENHANCING = 3


NUM_CLASSES = 4


class VoxelIndex(NamedTuple):
    i: int
    j: int
    k: int


@dataclass(frozen=True)
class MultiModalVolume:
    """Dense multi-modal intensity volume.

    Attributes:
        dims: (W, H, D) grid extents.
        modalities: ordered channel names, e.g. ("T1C", "T2", "FLAIR").
        data: float32 array of shape (M, D, H, W); voxel (i,j,k) of
            modality m is data[m, k, j, i].
        spacing: (sx, sy, sz) voxel size in mm, metadata only.
    """

    dims: tuple[int, int, int]
    modalities: tuple[str, ...]
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        w, h, d = self.dims
        if min(w, h, d) <= 0:
            raise MalformedHeader(f"non-positive dims {self.dims}")
        if len(self.modalities) < 1:
            raise MalformedHeader("at least one modality required")
        expected = (len(self.modalities), d, h, w)
        if self.data.shape != expected:
            raise PayloadSizeMismatch(
                f"data shape {self.data.shape} != expected {expected}"
            )
        if self.data.dtype != np.float32:
            object.__setattr__(self, "data", self.data.astype(np.float32))
        if not np.isfinite(self.data).all():
            raise NonFiniteValue("volume contains non-finite intensities")

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    def modality_index(self, modality: str | int) -> int:
        if isinstance(modality, int):
            if not 0 <= modality < self.num_modalities:
                raise IndexOutOfRange(f"modality index {modality}")
            return modality
        try:
            return self.modalities.index(modality)
        except ValueError:
            raise IndexOutOfRange(f"unknown modality {modality!r}") from None

    def value_at(self, modality: str | int, idx: VoxelIndex) -> float:
        m = self.modality_index(modality)
        return float(self.data[m, idx.k, idx.j, idx.i])


@dataclass(frozen=True)
class LabelVolume:
    """Per-voxel tissue-class codes, same grid as the source volume."""

    dims: tuple[int, int, int]
    labels: np.ndarray  # uint8, shape (D, H, W)

    def __post_init__(self):
        w, h, d = self.dims
        if self.labels.shape != (d, h, w):
            raise DimsMismatch(
                f"labels shape {self.labels.shape} != dims {(d, h, w)}"
            )
        if self.labels.dtype != np.uint8:
            object.__setattr__(self, "labels", self.labels.astype(np.uint8))
        if self.labels.size and self.labels.max() >= NUM_CLASSES:
            raise NonFiniteValue(
                f"label code {int(self.labels.max())} outside 0..{NUM_CLASSES - 1}"
            )


@dataclass(frozen=True)
class BrainMask:
    """Boolean in-brain mask; voxels outside are treated as healthy."""

    dims: tuple[int, int, int]
    inside: np.ndarray = field(repr=False)  # bool, shape (D, H, W)

    def __post_init__(self):
        w, h, d = self.dims
        if self.inside.shape != (d, h, w):
            raise DimsMismatch(
                f"mask shape {self.inside.shape} != dims {(d, h, w)}"
            )
        if self.inside.dtype != np.bool_:
            object.__setattr__(self, "inside", self.inside.astype(np.bool_))

    @property
    def count(self) -> int:
        return int(self.inside.sum())


def _encode_header(dims, modalities, dtype, spacing) -> bytes:
    header = {
        "dims": [int(x) for x in dims],
        "modalities": list(modalities),
        "dtype": dtype,
        "spacing": [float(x) for x in spacing],
    }
    return json.dumps(header, separators=(",", ":")).encode("utf-8")


def _write_mvol(path, header_bytes: bytes, payload: np.ndarray) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(header_bytes).to_bytes(8, "little"))
            fh.write(header_bytes)
            fh.write(payload.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save_volume(vol: MultiModalVolume, path) -> None:
    """Write a volume in MVOL format (little-endian float32 payload)."""
    header = _encode_header(vol.dims, vol.modalities, "f32", vol.spacing)
    _write_mvol(path, header, vol.data.astype("<f4", copy=False))


def save_labels(lv: LabelVolume, path) -> None:
    """Write a label volume as a one-byte-per-voxel MVOL file."""
    header = _encode_header(lv.dims, ["labels"], "u8", (1.0, 1.0, 1.0))
    _write_mvol(path, header, lv.labels.astype(np.uint8, copy=False))


def _read_mvol(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if raw[: len(MAGIC)] != MAGIC:
        raise MalformedHeader(f"{path}: bad magic bytes")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise MalformedHeader(f"{path}: truncated header length")
    hlen = int.from_bytes(raw[off : off + 8], "little")
    off += 8
    if len(raw) < off + hlen:
        raise MalformedHeader(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"{path}: invalid header JSON: {exc}") from exc
    off += hlen

    for key in ("dims", "modalities", "dtype", "spacing"):
        if key not in header:
            raise MalformedHeader(f"{path}: header missing {key!r}")
    dims = header["dims"]
    if len(dims) != 3 or any(not isinstance(x, int) or x <= 0 for x in dims):
        raise MalformedHeader(f"{path}: invalid dims {dims}")
    if header["dtype"] not in ("f32", "u8"):
        raise MalformedHeader(f"{path}: unsupported dtype {header['dtype']}")
    return header, raw[off:]


def load_volume(path) -> MultiModalVolume:
    """Load a float32 MVOL volume; round-trips byte-identically via save_volume."""
    header, payload = _read_mvol(path)
    if header["dtype"] != "f32":
        raise MalformedHeader(f"{path}: expected dtype f32, got {header['dtype']}")
    w, h, d = header["dims"]
    m = len(header["modalities"])
    expected = m * w * h * d * 4
    if len(payload) != expected:
        raise PayloadSizeMismatch(
            f"{path}: payload {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(m, d, h, w)
    return MultiModalVolume(
        dims=(w, h, d),
        modalities=tuple(header["modalities"]),
        data=data.copy(),
        spacing=tuple(float(x) for x in header["spacing"]),
    )


def load_labels(path) -> LabelVolume:
    """Load a one-byte label MVOL file."""
    header, payload = _read_mvol(path)
    if header["dtype"] != "u8":
        raise MalformedHeader(f"{path}: expected dtype u8, got {header['dtype']}")
    w, h, d = header["dims"]
    expected = len(header["modalities"]) * w * h * d
    if len(header["modalities"]) != 1:
        raise MalformedHeader(f"{path}: label file must have one channel")
    if len(payload) != expected:
        raise PayloadSizeMismatch(
            f"{path}: payload {len(payload)} bytes, expected {expected}"
        )
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(d, h, w)
    return LabelVolume(dims=(w, h, d), labels=labels.copy())


def compute_brain_mask(vol: MultiModalVolume, threshold: float = 0.0) -> BrainMask:
    """In-brain = max intensity across modalities strictly above threshold.

    The zero-threshold default matches volumes whose background is exactly
    zero in every modality.
    """
    inside = vol.data.max(axis=0) > threshold
    return BrainMask(dims=vol.dims, inside=inside)


def extract_slice(
    vol: MultiModalVolume, axis: str, index: int, modality: str | int
) -> np.ndarray:
    """Extract one 2-D plane of a modality channel.

    Plane layouts: axial (fixed k) -> (H, W); coronal (fixed j) -> (D, W);
    sagittal (fixed i) -> (D, H).  Returned arrays are copies.
    """
    m = vol.modality_index(modality)
    w, h, d = vol.dims
    chan = vol.data[m]
    if axis == "axial":
        if not 0 <= index < d:
            raise IndexOutOfRange(f"axial index {index} outside 0..{d - 1}")
        return chan[index].copy()
    if axis == "coronal":
        if not 0 <= index < h:
            raise IndexOutOfRange(f"coronal index {index} outside 0..{h - 1}")
        return chan[:, index, :].copy()
    if axis == "sagittal":
        if not 0 <= index < w:
            raise IndexOutOfRange(f"sagittal index {index} outside 0..{w - 1}")
        return chan[:, :, index].copy()
    raise IndexOutOfRange(f"unknown axis {axis!r}")


def extract_label_slice(lv: LabelVolume, axis: str, index: int) -> np.ndarray:
    """Extract one 2-D plane of label codes (same layouts as extract_slice)."""
    w, h, d = lv.dims
    if axis == "axial":
        if not 0 <= index < d:
            raise IndexOutOfRange(f"axial index {index} outside 0..{d - 1}")
        return lv.labels[index].copy()
    if axis == "coronal":
        if not 0 <= index < h:
            raise IndexOutOfRange(f"coronal index {index} outside 0..{h - 1}")
        return lv.labels[:, index, :].copy()
    if axis == "sagittal":
        if not 0 <= index < w:
            raise IndexOutOfRange(f"sagittal index {index} outside 0..{w - 1}")
        return lv.labels[:, :, index].copy()
    raise IndexOutOfRange(f"unknown axis {axis!r}")


def axis_extent(dims: tuple[int, int, int], axis: str) -> int:
    """Number of slices along a view axis."""
    w, h, d = dims
    if axis == "axial":
        return d
    if axis == "coronal":
        return h
    if axis == "sagittal":
        return w
    raise IndexOutOfRange(f"unknown axis {axis!r}")
