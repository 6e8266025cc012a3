"""Per-frame visual feature providers.

The convolutional feature extractor is frozen, so it is treated as a fixed
function behind a small interface: a deterministic mock for tests, a
precomputed-feature lookup, or an ONNX model file executed at load time.
Also owns the binary feature-file format used to shard precomputed features.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BackboneNotLoaded,
    BadMagic,
    DimensionMismatch,
    TruncatedFile,
    VersionMismatch,
)

FEATURE_MAGIC = b"EGFT"
FEATURE_VERSION = 1
DEFAULT_DIM = 2048
MOCK_GRID = 16


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    frame_index: int
    video_id: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise DimensionMismatch(f"feature vector must be 1-d, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DimensionMismatch("non-finite feature component")
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")


@dataclass(frozen=True)
class BackboneDescriptor:
    kind: str  # precomputed | model_file | mock
    source: str | int = 0  # path for precomputed/model_file, seed for mock
    output_dim: int = DEFAULT_DIM

    def __post_init__(self):
        if self.kind not in ("precomputed", "model_file", "mock"):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")


def _mock_pool_grid(frame: np.ndarray) -> np.ndarray:
    """Block-mean pool an HxWx3 frame to a MOCK_GRID x MOCK_GRID x 3 grid."""
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionMismatch(f"expected HxWx3 frame, got {frame.shape}")
    h, w, _ = frame.shape
    if h % MOCK_GRID or w % MOCK_GRID:
        raise DimensionMismatch(f"frame size {h}x{w} not divisible by {MOCK_GRID}")
    bh, bw = h // MOCK_GRID, w // MOCK_GRID
    grid = frame.reshape(MOCK_GRID, bh, MOCK_GRID, bw, 3).mean(axis=(1, 3))
    return grid.astype(np.float64)


def mock_features(frame: np.ndarray, seed: int, dim: int) -> np.ndarray:
    """Deterministic stand-in features: a seeded hash of the pooled grid
    expanded to `dim` values in [-1, 1]."""
    grid = _mock_pool_grid(np.asarray(frame, dtype=np.float64))
    digest = hashlib.blake2b(
        struct.pack("<q", seed) + grid.astype("<f8").tobytes(), digest_size=16
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.uniform(-1.0, 1.0, dim)


class Backbone:
    """A loaded feature provider; immutable after construction."""

    def __init__(self, descriptor: BackboneDescriptor):
        self.descriptor = descriptor
        self._table: dict[tuple[str, int], np.ndarray] | None = None
        self._session = None
        if descriptor.kind == "precomputed":
            self._table = {}
            src = str(descriptor.source)
            paths = []
            if os.path.isdir(src):
                paths = [
                    os.path.join(src, f) for f in sorted(os.listdir(src)) if f.endswith(".egft")
                ]
            elif os.path.isfile(src):
                paths = [src]
            else:
                raise BackboneNotLoaded(f"no feature source at {src}")
            for p in paths:
                vid = os.path.splitext(os.path.basename(p))[0]
                for fv in read_feature_file(p):
                    key = (fv.video_id or vid, fv.frame_index)
                    self._table[key] = fv.values
        elif descriptor.kind == "model_file":
            try:
                import onnxruntime  # noqa: F401
            except ImportError as e:
                raise BackboneNotLoaded(
                    "model_file backbone requires the onnxruntime package"
                ) from e
            path = os.environ.get("ENGAGE_BACKBONE", str(descriptor.source))
            if not os.path.isfile(path):
                raise BackboneNotLoaded(f"no model file at {path}")
            self._session = onnxruntime.InferenceSession(
                path, providers=["CPUExecutionProvider"]
            )

    def features_for_frame(
        self,
        frame: np.ndarray | None = None,
        *,
        video_id: str = "",
        frame_index: int = 0,
    ) -> FeatureVector:
        d = self.descriptor
        if d.kind == "mock":
            if frame is None:
                raise BackboneNotLoaded("mock backbone needs a frame")
            vals = mock_features(frame, int(d.source), d.output_dim)
        elif d.kind == "precomputed":
            key = (video_id, frame_index)
            if key not in self._table:
                raise BackboneNotLoaded(f"no precomputed features for {key}")
            vals = self._table[key]
        else:  # model_file
            if self._session is None:
                raise BackboneNotLoaded("model not loaded")
            if frame is None:
                raise BackboneNotLoaded("model_file backbone needs a frame")
            x = np.transpose(frame.astype(np.float32), (2, 0, 1))[None]
            (out,) = self._session.run(None, {self._session.get_inputs()[0].name: x})
            vals = np.asarray(out).reshape(-1)
        if len(vals) != d.output_dim:
            raise DimensionMismatch(f"expected dim {d.output_dim}, got {len(vals)}")
        return FeatureVector(values=vals, frame_index=frame_index, video_id=video_id)


def load_backbone(descriptor: BackboneDescriptor) -> Backbone:
    return Backbone(descriptor)


# ---------------------------------------------------------------- file format
#
# Little-endian: magic "EGFT", version u32, dim u32, count u64,
# count*dim float32 values, then count u64 frame indices.

_HEADER = struct.Struct("<4sIIQ")


def write_feature_file(vectors: list[FeatureVector], path: str, dim: int | None = None) -> None:
    if dim is None:
        dim = len(vectors[0].values) if vectors else DEFAULT_DIM
    for fv in vectors:
        if len(fv.values) != dim:
            raise DimensionMismatch(f"vector dim {len(fv.values)} != {dim}")
    values = np.stack([fv.values for fv in vectors]).astype("<f4") if vectors else np.empty((0, dim), "<f4")
    indices = np.array([fv.frame_index for fv in vectors], dtype="<u8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, dim, len(vectors)))
        f.write(values.tobytes())
        f.write(indices.tobytes())


def read_feature_file(path: str, video_id: str = "") -> list[FeatureVector]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise TruncatedFile(path)
    magic, version, dim, count = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise VersionMismatch(f"{path}: version {version}")
    need = _HEADER.size + count * dim * 4 + count * 8
    if len(data) < need:
        raise TruncatedFile(f"{path}: need {need} bytes, have {len(data)}")
    off = _HEADER.size
    values = np.frombuffer(data, "<f4", count * dim, off).reshape(count, dim)
    indices = np.frombuffer(data, "<u8", count, off + count * dim * 4)
    if not video_id:
        video_id = os.path.splitext(os.path.basename(path))[0]
    return [
        FeatureVector(values=values[i].copy(), frame_index=int(indices[i]), video_id=video_id)
        for i in range(count)
    ]
