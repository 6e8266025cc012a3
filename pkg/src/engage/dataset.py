"""Window dataset construction: video-level splitting, sliding-window
extraction with end-of-window labels, and frame preprocessing."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import cv2
import numpy as np

from .annotation import AnnotationTrack
from .backbone import FeatureVector
from .errors import BadChannelCount, DuplicateId

SPLIT_PROBS = (0.5, 0.3, 0.2)
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])
TARGET_SIZE = 224


@dataclass(frozen=True)
class VideoRecord:
    """One video's frame source plus its aligned per-frame label track."""

    video_id: str
    rate_hz: float
    frames: list[FeatureVector]
    labels: AnnotationTrack

    def __post_init__(self):
        if len(self.labels.values) != len(self.frames):
            raise ValueError(
                f"{self.video_id}: {len(self.frames)} frames vs "
                f"{len(self.labels.values)} labels"
            )

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class WindowSample:
    """w consecutive frame features labeled by the value at the final frame."""

    video_id: str
    start_index: int
    features: np.ndarray  # (w, dim)
    label: float

    def __post_init__(self):
        if not (0.0 <= self.label <= 1.0):
            raise ValueError(f"label {self.label} outside [0,1]")

    @property
    def w(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class DatasetSplit:
    train: list[str]
    test: list[str]
    validation: list[str]
    seed: int
    probabilities: tuple[float, float, float] = SPLIT_PROBS

    def partition_of(self, video_id: str) -> str:
        if video_id in set(self.train):
            return "train"
        if video_id in set(self.test):
            return "test"
        if video_id in set(self.validation):
            return "validation"
        raise KeyError(video_id)


def _split_draw(seed: int, video_id: str) -> float:
    """Uniform [0,1) draw depending only on (seed, video_id)."""
    digest = hashlib.blake2b(
        struct.pack("<q", seed) + video_id.encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") / 2.0**64


def split_videos(video_ids: list[str], seed: int) -> DatasetSplit:
    """Assign each video independently to train/test/validation with
    probabilities 50/30/20, determined only by (seed, video_id)."""
    if len(set(video_ids)) != len(video_ids):
        dupes = sorted({v for v in video_ids if video_ids.count(v) > 1})
        raise DuplicateId(f"duplicate video ids: {dupes}")
    train, test, validation = [], [], []
    for vid in sorted(video_ids):
        u = _split_draw(seed, vid)
        if u < SPLIT_PROBS[0]:
            train.append(vid)
        elif u < SPLIT_PROBS[0] + SPLIT_PROBS[1]:
            test.append(vid)
        else:
            validation.append(vid)
    return DatasetSplit(train=train, test=test, validation=validation, seed=seed)


def extract_windows(video: VideoRecord, w: int) -> list[WindowSample]:
    """All max(0, frame_count - w + 1) windows of w consecutive frames.

    Window i covers frames [i, i+w-1] and carries the annotation of its last
    frame; consecutive windows overlap by w-1 frames. Videos shorter than w
    yield no samples.
    """
    if w < 1:
        raise ValueError("w must be >= 1")
    n = video.frame_count
    if n < w:
        return []
    feats = np.stack([fv.values for fv in video.frames])
    labels = video.labels.values
    return [
        WindowSample(
            video_id=video.video_id,
            start_index=i,
            features=feats[i : i + w],
            label=float(labels[i + w - 1]),
        )
        for i in range(n - w + 1)
    ]


def preprocess_frame(raw: np.ndarray, letterbox: bool = False) -> np.ndarray:
    """Resize an HxWx3 8-bit frame to 224x224 and normalize.

    Bilinear resize (optionally letterboxed to preserve aspect ratio), then
    per-channel (pixel/255 - mean) / std with the ImageNet constants.
    """
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise BadChannelCount(f"expected HxWx3, got {raw.shape}")
    img = raw.astype(np.float64) / 255.0
    h, w, _ = img.shape
    if letterbox and h != w:
        side = max(h, w)
        pad = np.zeros((side, side, 3))
        y0 = (side - h) // 2
        x0 = (side - w) // 2
        pad[y0 : y0 + h, x0 : x0 + w] = img
        img = pad
    if img.shape[:2] != (TARGET_SIZE, TARGET_SIZE):
        img = cv2.resize(img, (TARGET_SIZE, TARGET_SIZE), interpolation=cv2.INTER_LINEAR)
    return (img - IMAGENET_MEAN) / IMAGENET_STD


# ---------------------------------------------------------------- manifest

@dataclass
class DatasetManifest:
    """Reproducibility record for a built dataset."""

    seed: int
    w: int
    rate_hz: float
    split: DatasetSplit
    coder_per_video: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "w": self.w,
                "rate_hz": self.rate_hz,
                "split": {
                    "train": self.split.train,
                    "test": self.split.test,
                    "validation": self.split.validation,
                    "seed": self.split.seed,
                    "probabilities": list(self.split.probabilities),
                },
                "coder_per_video": self.coder_per_video,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        obj = json.loads(text)
        split = DatasetSplit(
            train=obj["split"]["train"],
            test=obj["split"]["test"],
            validation=obj["split"]["validation"],
            seed=obj["split"]["seed"],
            probabilities=tuple(obj["split"]["probabilities"]),
        )
        return cls(
            seed=obj["seed"],
            w=obj["w"],
            rate_hz=obj["rate_hz"],
            split=split,
            coder_per_video=obj.get("coder_per_video", {}),
        )


def choose_coder_per_video(
    tracks_by_video: dict[str, list[str]], seed: int
) -> dict[str, str]:
    """Seeded pick of one coder per video when several annotated it."""
    rng = np.random.default_rng(seed)
    chosen = {}
    for vid in sorted(tracks_by_video):
        coders = sorted(tracks_by_video[vid])
        chosen[vid] = coders[int(rng.integers(len(coders)))]
    return chosen


def write_label_sidecar(samples: list[WindowSample], path: str) -> None:
    rows = ["video_id,start_index,label"]
    rows += [f"{s.video_id},{s.start_index},{s.label:.6f}" for s in samples]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
