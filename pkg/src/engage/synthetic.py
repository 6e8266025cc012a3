"""Seeded synthetic data generators for desk-scale experiments.

The real museum recordings are not distributable, so quantitative checks run
on synthetic stand-ins: noisy coders sharing a slow latent signal, and
feature-vector "videos" whose engagement label is a smoothed linear readout
of the features.
"""

from __future__ import annotations

import math

import numpy as np

from .annotation import AnnotationTrack
from .backbone import FeatureVector
from .dataset import VideoRecord


def synthetic_coder_tracks(
    seed: int,
    n_videos: int = 4,
    n_frames: int = 24_000,
    rate_hz: float = 10.0,
    coders: tuple[str, ...] = ("a", "b", "c"),
    noise_sigma: float = 0.15,
) -> list[AnnotationTrack]:
    """Coders observing a shared slow latent signal through independent noise.

    The latent mixes sinusoids with periods of several minutes, so smoothing
    constants up to tens of seconds suppress coder noise without touching the
    signal; agreement therefore rises with the smoothing constant.
    """
    rng = np.random.default_rng(seed)
    tracks = []
    for v in range(n_videos):
        t = np.arange(n_frames) / rate_hz
        latent = np.full(n_frames, 0.5)
        for period_s in (900.0, 420.0, 260.0):
            amp = rng.uniform(0.015, 0.03)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            latent = latent + amp * np.sin(2.0 * math.pi * t / period_s + phase)
        latent = np.clip(latent, 0.0, 1.0)
        for coder in coders:
            noisy = np.clip(latent + rng.normal(0.0, noise_sigma, n_frames), 0.0, 1.0)
            tracks.append(
                AnnotationTrack(
                    video_id=f"synthvid{v}",
                    coder_id=coder,
                    rate_hz=rate_hz,
                    values=noisy,
                )
            )
    return tracks


def synthetic_feature_videos(
    seed: int,
    n_videos: int = 200,
    dim: int = 16,
    min_frames: int = 100,
    max_frames: int = 300,
    rate_hz: float = 10.0,
    smoothing_s: float = 1.0,
) -> list[VideoRecord]:
    """Feature-vector videos with a learnable engagement signal.

    Per-frame features are standard normal; the label track is the causal
    exponential moving average (time constant `smoothing_s`) of a fixed linear
    functional of the features, offset to 0.5 and clipped to [0,1]. One shared
    readout vector is drawn from the seed so the mapping is identical across
    videos.
    """
    rng = np.random.default_rng(seed)
    readout = rng.normal(0.0, 1.0, dim)
    # scale so the smoothed signal has std ~0.15 around the 0.5 offset
    alpha = 1.0 - math.exp(-1.0 / (smoothing_s * rate_hz))
    ema_gain = math.sqrt(alpha / (2.0 - alpha))
    readout *= 0.15 / (np.linalg.norm(readout) * ema_gain)

    videos = []
    for v in range(n_videos):
        n = int(rng.integers(min_frames, max_frames + 1))
        feats = rng.normal(0.0, 1.0, (n, dim))
        raw = feats @ readout
        ema = np.empty(n)
        acc = 0.0
        for i in range(n):
            acc = alpha * raw[i] + (1.0 - alpha) * acc
            ema[i] = acc
        labels = np.clip(0.5 + ema, 0.0, 1.0)
        vid = f"synthvid{v}"
        fvs = [FeatureVector(values=feats[i], frame_index=i, video_id=vid) for i in range(n)]
        track = AnnotationTrack(video_id=vid, coder_id="latent", rate_hz=rate_hz, values=labels)
        videos.append(VideoRecord(video_id=vid, rate_hz=rate_hz, frames=fvs, labels=track))
    return videos
