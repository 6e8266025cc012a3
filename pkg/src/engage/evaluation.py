"""Offline evaluation: test MSE, threshold binarization, interaction-coded
ground truth, ROC sweep and AUC."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptySet, MalformedRow, MissingFile, SingleClass
from .model import ModelParams, forward_batch

INTERACTION_TAGS = ("Mono", "Multi", "BD", "TD", "SED", "EBD")
ENGAGED_TAGS = ("Mono", "Multi")
BREAKDOWN_TAGS = ("BD", "TD")


@dataclass(frozen=True)
class InteractionLabelTrack:
    """Interval-coded interaction annotations for one video."""

    video_id: str
    intervals: list[tuple[float, float, str]]

    def __post_init__(self):
        for start, end, tag in self.intervals:
            if start >= end:
                raise ValueError(f"empty interval [{start}, {end}]")
            if tag not in INTERACTION_TAGS:
                raise ValueError(f"unknown tag {tag!r}")


@dataclass(frozen=True)
class RocResult:
    points: list[tuple[float, float, float]]  # (thr, fpr, tpr) sorted by thr
    auc: float


def test_mse(params: ModelParams, samples: list) -> float:
    """Mean squared error of the model over a sample set."""
    if not samples:
        raise EmptySet("no test samples")
    X = np.stack([np.asarray(s.features) for s in samples])
    labels = np.array([s.label for s in samples])
    total = 0.0
    for lo in range(0, len(samples), 256):
        y, _ = forward_batch(params, X[lo : lo + 256])
        r = y - labels[lo : lo + 256]
        total += float(r @ r)
    return total / len(samples)


def load_interaction_track(path: str, video_id: str = "") -> InteractionLabelTrack:
    """CSV `start_s,end_s,tag`, one interval per row."""
    if not os.path.isfile(path):
        raise MissingFile(path)
    intervals = []
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().split("\n") if ln.strip()]
    if not lines or lines[0].strip() != "start_s,end_s,tag":
        raise MalformedRow(1, "expected header 'start_s,end_s,tag'")
    for lineno, row in enumerate(lines[1:], start=2):
        parts = row.split(",")
        if len(parts) != 3:
            raise MalformedRow(lineno, row)
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedRow(lineno, row) from None
        intervals.append((start, end, parts[2].strip()))
    if not video_id:
        video_id = os.path.splitext(os.path.basename(path))[0]
    return InteractionLabelTrack(video_id=video_id, intervals=intervals)


def derive_ground_truth(track: InteractionLabelTrack, times) -> np.ndarray:
    """Engaged-interaction truth per timestamp.

    True iff the time falls in a Mono/Multi interval and in no BD/TD
    interval; SED/EBD intervals are parsed but do not affect the truth.
    """
    times = np.asarray(times, dtype=np.float64)
    engaged = np.zeros(len(times), dtype=bool)
    broken = np.zeros(len(times), dtype=bool)
    for start, end, tag in track.intervals:
        inside = (times >= start) & (times <= end)
        if tag in ENGAGED_TAGS:
            engaged |= inside
        elif tag in BREAKDOWN_TAGS:
            broken |= inside
    return engaged & ~broken


def binarize(predictions, thr: float) -> np.ndarray:
    """True iff prediction >= thr."""
    return np.asarray(predictions, dtype=np.float64) >= thr


def roc_auc(predictions, truths) -> RocResult:
    """Threshold sweep over the unique prediction values plus {0, 1}.

    AUC is the trapezoidal integral of the (FPR, TPR) curve, which equals the
    Mann-Whitney probability that a positive outranks a negative (ties count
    half).
    """
    preds = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truths, dtype=bool)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise ValueError(f"shape mismatch: {preds.shape} vs {truth.shape}")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need both positive and negative truths")

    thresholds = sorted(set(preds.tolist()) | {0.0, 1.0})
    points = []
    for thr in thresholds:
        called = preds >= thr
        tpr = float((called & truth).sum()) / n_pos
        fpr = float((called & ~truth).sum()) / n_neg
        points.append((thr, fpr, tpr))
    if points[-1][1:] != (0.0, 0.0):
        # a prediction sits at the top of the range: anchor the curve
        points.append((float("inf"), 0.0, 0.0))
    if points[0][1:] != (1.0, 1.0):
        points.insert(0, (float("-inf"), 1.0, 1.0))

    # integrate from (0,0) to (1,1): points in decreasing-threshold order
    curve = [(fpr, tpr) for _, fpr, tpr in reversed(points)]
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(curve, curve[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocResult(points=points, auc=auc)


def write_roc_csv(result: RocResult, path: str, plot_path: str | None = None) -> None:
    """CSV `thr,fpr,tpr` rows, then a summary line `auc=<value>`; optionally
    a two-column fpr/tpr file for plotting."""
    rows = ["thr,fpr,tpr"]
    rows += [f"{thr:.6g},{fpr:.6f},{tpr:.6f}" for thr, fpr, tpr in result.points]
    rows.append(f"auc={result.auc:.6f}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    if plot_path:
        curve = sorted((fpr, tpr) for _, fpr, tpr in result.points)
        with open(plot_path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(f"{fpr:.6f} {tpr:.6f}" for fpr, tpr in curve) + "\n")
