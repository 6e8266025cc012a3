"""Continuous per-frame engagement annotations.

Loading and writing of annotation tracks, causal smoothing, Spearman rank
correlation, and pairwise inter-rater agreement with overlap-weighted
averaging across coder pairs.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as _signal
from scipy import stats as _sstats

from .errors import (
    EmptyTrack,
    LengthMismatch,
    MalformedRow,
    MissingFile,
    NoOverlap,
    NonPositiveS,
    TooShort,
    ValueOutOfRange,
    ZeroVariance,
)

DEFAULT_RATE_HZ = 10.0


@dataclass(frozen=True)
class AnnotationTrack:
    """One coder's per-frame engagement values for one video."""

    video_id: str
    coder_id: str
    rate_hz: float
    values: np.ndarray  # float64, each in [0,1]
    start_offset_s: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.size == 0:
            raise EmptyTrack(f"{self.video_id}/{self.coder_id}: no values")
        if self.rate_hz <= 0 or not math.isfinite(self.rate_hz):
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.start_offset_s < 0:
            raise ValueError("start_offset_s must be non-negative")
        bad = np.where((vals < 0.0) | (vals > 1.0) | ~np.isfinite(vals))[0]
        if bad.size:
            i = int(bad[0])
            raise ValueOutOfRange(i, float(vals[i]))

    @property
    def duration_s(self) -> float:
        return len(self.values) / self.rate_hz

    @property
    def end_s(self) -> float:
        return self.start_offset_s + self.duration_s

    def timestamps(self) -> np.ndarray:
        return self.start_offset_s + np.arange(len(self.values)) / self.rate_hz


@dataclass(frozen=True)
class AgreementReport:
    coder_pair: tuple[str, str]
    smoothing_constant_s: float
    rho: float
    p_value: float
    n: int
    overlap_s: float
    n_videos: int = 0


def _format_value(v: float) -> str:
    # up to 6 decimal places, no trailing zeros
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return s if s else "0"


def _ids_from_filename(path: str) -> tuple[str, str]:
    stem = os.path.splitext(os.path.basename(path))[0]
    if "__" in stem:
        video_id, coder_id = stem.split("__", 1)
        return video_id, coder_id
    return stem, ""


def load_annotation_track(path: str, format: str = "csv") -> AnnotationTrack:
    """Load a track from `csv` (header t_s,value) or `jsonl` (metadata line first)."""
    if not os.path.isfile(path):
        raise MissingFile(path)
    if format == "csv":
        return _load_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise ValueError(f"unknown format {format!r}")


def _load_csv(path: str) -> AnnotationTrack:
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != "t_s,value":
        raise MalformedRow(1, "expected header 't_s,value'")
    times, values = [], []
    for lineno, row in enumerate(lines[1:], start=2):
        parts = row.split(",")
        if len(parts) != 2:
            raise MalformedRow(lineno, row)
        try:
            t = float(parts[0])
            v = float(parts[1])
        except ValueError:
            raise MalformedRow(lineno, row) from None
        if not (0.0 <= v <= 1.0):
            raise ValueOutOfRange(lineno, v)
        times.append(t)
        values.append(v)
    if not values:
        raise EmptyTrack(path)
    if len(times) >= 2:
        rate = (len(times) - 1) / (times[-1] - times[0])
    else:
        rate = DEFAULT_RATE_HZ
    video_id, coder_id = _ids_from_filename(path)
    return AnnotationTrack(
        video_id=video_id,
        coder_id=coder_id,
        rate_hz=rate,
        values=np.array(values),
        start_offset_s=times[0],
    )


def _load_jsonl(path: str) -> AnnotationTrack:
    with open(path, "r", encoding="utf-8") as f:
        return parse_annotation_jsonl(f.read(), origin=path)


def parse_annotation_jsonl(text: str, origin: str = "<body>") -> AnnotationTrack:
    """Parse the JSONL wire format: metadata line, then one {"t","v"} per frame."""
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise EmptyTrack(origin)
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError:
        raise MalformedRow(1, "bad metadata line") from None
    for key in ("video_id", "coder_id", "rate_hz"):
        if key not in meta:
            raise MalformedRow(1, f"metadata missing {key!r}")
    times, values = [], []
    for lineno, row in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(row)
            t, v = float(obj["t"]), float(obj["v"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise MalformedRow(lineno, row) from None
        if not (0.0 <= v <= 1.0):
            raise ValueOutOfRange(lineno, v)
        times.append(t)
        values.append(v)
    if not values:
        raise EmptyTrack(origin)
    return AnnotationTrack(
        video_id=str(meta["video_id"]),
        coder_id=str(meta["coder_id"]),
        rate_hz=float(meta["rate_hz"]),
        values=np.array(values),
        start_offset_s=times[0] if times else 0.0,
    )


def write_annotation_track(track: AnnotationTrack, path: str, format: str = "csv") -> None:
    ts = track.timestamps()
    if format == "csv":
        rows = ["t_s,value"]
        rows += [f"{_format_value(t)},{_format_value(v)}" for t, v in zip(ts, track.values)]
        body = "\n".join(rows) + "\n"
    elif format == "jsonl":
        meta = {
            "video_id": track.video_id,
            "coder_id": track.coder_id,
            "rate_hz": track.rate_hz,
        }
        rows = [json.dumps(meta, sort_keys=True)]
        rows += [
            json.dumps({"t": round(float(t), 6), "v": round(float(v), 6)})
            for t, v in zip(ts, track.values)
        ]
        body = "\n".join(rows) + "\n"
    else:
        raise ValueError(f"unknown format {format!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(body)


def smooth_track(track: AnnotationTrack, S: float, method: str = "ema") -> AnnotationTrack:
    """Smooth a track with time constant S seconds.

    Default is the causal first-order exponential moving average
    z_i = a*y_i + (1-a)*z_{i-1} with a = 1 - exp(-1/(S*rate_hz)) and z_0 = y_0.
    `method="boxcar"` applies a causal moving average over round(S*rate) frames
    instead, for sensitivity analysis.
    """
    if S <= 0 or not math.isfinite(S):
        raise NonPositiveS(f"S must be positive, got {S}")
    y = track.values
    if method == "ema":
        alpha = 1.0 - math.exp(-1.0 / (S * track.rate_hz))
        zi = np.array([(1.0 - alpha) * y[0]])
        z, _ = _signal.lfilter([alpha], [1.0, -(1.0 - alpha)], y, zi=zi)
    elif method == "boxcar":
        k = max(1, round(S * track.rate_hz))
        csum = np.concatenate(([0.0], np.cumsum(y)))
        i = np.arange(len(y))
        lo = np.maximum(0, i - k + 1)
        z = (csum[i + 1] - csum[lo]) / (i - lo + 1)
    else:
        raise ValueError(f"unknown smoothing method {method!r}")
    return replace(track, values=z)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n, ties replaced by the mean of the ranks they span."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(a, b) -> tuple[float, float, int]:
    """Spearman rank correlation with average-rank ties.

    Returns (rho, two-sided p-value, n). The p-value uses the t-distribution
    approximation with n-2 degrees of freedom; rho = +-1 yields p = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"{a.shape} vs {b.shape}")
    n = len(a)
    if n < 2:
        raise TooShort(f"need n >= 2, got {n}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite values")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        raise ZeroVariance("constant sequence has no rank correlation")
    rho = float(da @ db) / math.sqrt(va * vb)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0 or n == 2:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(2.0 * _sstats.t.sf(abs(t), n - 2))
    return rho, p, n


def _align_pair(ta: AnnotationTrack, tb: AnnotationTrack) -> tuple[np.ndarray, np.ndarray, float]:
    """Aligned overlapping samples of two (already smoothed) tracks.

    The higher-rate track is resampled to the lower rate by nearest-timestamp
    selection; samples count as aligned when timestamps differ by less than
    half the coarser frame period. Returns (a, b, overlap_s).
    """
    lo, hi = (ta, tb) if ta.rate_hz <= tb.rate_hz else (tb, ta)
    t0 = max(ta.start_offset_s, tb.start_offset_s)
    t1 = min(ta.end_s, tb.end_s)
    overlap_s = max(0.0, t1 - t0)
    if overlap_s == 0.0:
        return np.empty(0), np.empty(0), 0.0
    ts = lo.timestamps()
    in_window = (ts >= t0 - 1e-9) & (ts < t1 - 1e-9)
    ts = ts[in_window]
    lo_vals = lo.values[in_window]
    # nearest sample of the higher-rate track for each coarse timestamp
    idx = np.rint((ts - hi.start_offset_s) * hi.rate_hz).astype(int)
    valid = (idx >= 0) & (idx < len(hi.values))
    hi_ts = hi.start_offset_s + idx / hi.rate_hz
    tol = 0.5 / lo.rate_hz + 1e-9
    valid &= np.abs(hi_ts - ts) <= tol
    lo_vals = lo_vals[valid]
    hi_vals = hi.values[np.clip(idx, 0, len(hi.values) - 1)][valid]
    if lo is ta:
        return lo_vals, hi_vals, overlap_s
    return hi_vals, lo_vals, overlap_s


def pairwise_agreement(
    tracks: list[AnnotationTrack],
    S_values: list[float],
    method: str = "ema",
) -> tuple[list[AgreementReport], dict[float, float]]:
    """Agreement per coder pair and smoothing constant, plus weighted averages.

    For each pair sharing at least one video: smooth both tracks of every
    shared video, concatenate aligned overlapping samples, and correlate.
    The per-S cross-pair average weights each pair's rho by its share of the
    total pairwise overlap duration.
    """
    by_coder: dict[str, dict[str, AnnotationTrack]] = {}
    for t in tracks:
        by_coder.setdefault(t.coder_id, {}).setdefault(t.video_id, t)
    coders = sorted(by_coder)
    if len(coders) < 2:
        raise NoOverlap(tuple(coders))

    reports: list[AgreementReport] = []
    per_s: dict[float, list[tuple[float, float]]] = {S: [] for S in S_values}
    any_pair = False
    for ca, cb in itertools.combinations(coders, 2):
        shared = sorted(set(by_coder[ca]) & set(by_coder[cb]))
        if not shared:
            continue
        for S in S_values:
            xs, ys, total_overlap = [], [], 0.0
            for vid in shared:
                sa = smooth_track(by_coder[ca][vid], S, method=method)
                sb = smooth_track(by_coder[cb][vid], S, method=method)
                a, b, ov = _align_pair(sa, sb)
                xs.append(a)
                ys.append(b)
                total_overlap += ov
            a = np.concatenate(xs)
            b = np.concatenate(ys)
            if len(a) < 2:
                raise NoOverlap((ca, cb))
            rho, p, n = spearman_rho(a, b)
            reports.append(
                AgreementReport(
                    coder_pair=(ca, cb),
                    smoothing_constant_s=S,
                    rho=rho,
                    p_value=p,
                    n=n,
                    overlap_s=total_overlap,
                    n_videos=len(shared),
                )
            )
            per_s[S].append((rho, total_overlap))
            any_pair = True
    if not any_pair:
        raise NoOverlap(tuple(coders))

    averages: dict[float, float] = {}
    for S, entries in per_s.items():
        w_total = sum(w for _, w in entries)
        averages[S] = sum(r * w for r, w in entries) / w_total
    return reports, averages


def write_agreement_csv(
    reports: list[AgreementReport], averages: dict[float, float], path: str
) -> None:
    """CSV `pair,S_s,rho,p,n,overlap_s` with one AVERAGE summary row per S."""
    rows = ["pair,S_s,rho,p,n,overlap_s"]
    for r in reports:
        pair = f"{r.coder_pair[0]}|{r.coder_pair[1]}"
        rows.append(
            f"{pair},{_format_value(r.smoothing_constant_s)},{r.rho:.6f},"
            f"{r.p_value:.6g},{r.n},{_format_value(r.overlap_s)}"
        )
    for S in sorted(averages):
        rows.append(f"AVERAGE,{_format_value(S)},{averages[S]:.6f},,,")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
