"""Command-line front door for the engagement pipeline."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import annotation as ann
from . import dataset as ds
from . import evaluation as ev
from . import model as mdl
from .backbone import Backbone, BackboneDescriptor, read_feature_file, write_feature_file
from .errors import ConfigError, EngageError
from .stream import StreamState


@dataclass
class PipelineConfig:
    """Paths and defaults for every subcommand; JSON on disk."""

    videos: str = "data/videos"
    annotations: str = "data/annotations"
    features: str = "data/features"
    checkpoints: str = "data/checkpoints"
    reports: str = "data/reports"
    w: int = 10
    split_seed: int = 0
    backbone: BackboneDescriptor = field(
        default_factory=lambda: BackboneDescriptor(kind="mock", source=0, output_dim=2048)
    )
    train: mdl.TrainConfig = field(default_factory=mdl.TrainConfig)
    stream_policy: str = "drop-oldest"
    stream_capacity: int = 8


def load_config(path: str | None, overrides: list[str]) -> PipelineConfig:
    obj: dict = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(path, "file not found")
        try:
            with open(path, "r", encoding="utf-8") as f:
                obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(path, e.msg, line=e.lineno) from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(path or "<cli>", f"--set needs key=value, got {item!r}")
        key, value = item.split("=", 1)
        target = obj
        parts = key.split(".")
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        try:
            target[parts[-1]] = json.loads(value)
        except json.JSONDecodeError:
            target[parts[-1]] = value

    cfg = PipelineConfig()
    paths = obj.get("paths", {})
    for name in ("videos", "annotations", "features", "checkpoints", "reports"):
        if name in paths:
            setattr(cfg, name, paths[name])
    for name in ("w", "split_seed", "stream_policy", "stream_capacity"):
        if name in obj:
            setattr(cfg, name, obj[name])
    if "backbone" in obj:
        b = obj["backbone"]
        try:
            cfg.backbone = BackboneDescriptor(
                kind=b.get("kind", "mock"),
                source=b.get("source", 0),
                output_dim=b.get("output_dim", 2048),
            )
        except (ValueError, AttributeError) as e:
            raise ConfigError(path or "<cli>", f"backbone: {e}") from None
    if "train" in obj:
        try:
            cfg.train = mdl.TrainConfig(**{**mdl.TrainConfig().to_dict(), **obj["train"]})
        except (TypeError, ValueError) as e:
            raise ConfigError(path or "<cli>", f"train: {e}") from None
    if cfg.w < 1:
        raise ConfigError(path or "<cli>", f"w must be >= 1, got {cfg.w}")
    return cfg


def _load_tracks_dir(tracks_dir: str) -> list[ann.AnnotationTrack]:
    tracks = []
    for p in sorted(glob.glob(os.path.join(tracks_dir, "*"))):
        if p.endswith(".csv"):
            tracks.append(ann.load_annotation_track(p, "csv"))
        elif p.endswith(".jsonl"):
            tracks.append(ann.load_annotation_track(p, "jsonl"))
    return tracks


def _find_annotation(cfg: PipelineConfig, video_id: str, coder_id: str) -> ann.AnnotationTrack:
    for ext, fmt in ((".jsonl", "jsonl"), (".csv", "csv")):
        p = os.path.join(cfg.annotations, f"{video_id}__{coder_id}{ext}")
        if os.path.isfile(p):
            return ann.load_annotation_track(p, fmt)
    raise ConfigError(cfg.annotations, f"no annotation for {video_id}__{coder_id}")


def _video_record(cfg: PipelineConfig, video_id: str, coder_id: str) -> ds.VideoRecord:
    shard = os.path.join(cfg.features, f"{video_id}.egft")
    vectors = read_feature_file(shard, video_id=video_id)
    track = _find_annotation(cfg, video_id, coder_id)
    n = min(len(vectors), len(track.values))
    track = ann.AnnotationTrack(
        video_id=video_id,
        coder_id=coder_id,
        rate_hz=track.rate_hz,
        values=track.values[:n],
        start_offset_s=track.start_offset_s,
    )
    return ds.VideoRecord(
        video_id=video_id, rate_hz=track.rate_hz, frames=vectors[:n], labels=track
    )


def _split_samples(cfg: PipelineConfig, manifest: ds.DatasetManifest, part: str):
    ids = getattr(manifest.split, part)
    samples = []
    for vid in ids:
        rec = _video_record(cfg, vid, manifest.coder_per_video[vid])
        samples.extend(ds.extract_windows(rec, manifest.w))
    return samples


def _manifest_path(cfg: PipelineConfig) -> str:
    return os.path.join(cfg.reports, "manifest.json")


# ---------------------------------------------------------------- commands

def cmd_agreement(args) -> int:
    cfg = load_config(args.config, args.set or [])
    tracks = _load_tracks_dir(args.tracks)
    S_values = [float(s) for s in args.S.split(",")]
    reports, averages = ann.pairwise_agreement(tracks, S_values, method=args.method)
    out = args.out or os.path.join(cfg.reports, "agreement.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    ann.write_agreement_csv(reports, averages, out)
    for S in sorted(averages):
        print(f"S={S:g}s weighted_rho={averages[S]:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_build_dataset(args) -> int:
    cfg = load_config(args.config, args.set or [])
    seed = args.seed if args.seed is not None else cfg.split_seed
    tracks = _load_tracks_dir(cfg.annotations)
    coders_by_video: dict[str, list[str]] = {}
    for t in tracks:
        coders_by_video.setdefault(t.video_id, []).append(t.coder_id)
    video_ids = sorted(coders_by_video)
    if not video_ids:
        raise ConfigError(cfg.annotations, "no annotation tracks found")
    split = ds.split_videos(video_ids, seed)
    chosen = ds.choose_coder_per_video(coders_by_video, seed)
    manifest = ds.DatasetManifest(
        seed=seed, w=cfg.w, rate_hz=ann.DEFAULT_RATE_HZ, split=split, coder_per_video=chosen
    )
    os.makedirs(cfg.reports, exist_ok=True)
    with open(_manifest_path(cfg), "w", encoding="utf-8", newline="\n") as f:
        f.write(manifest.to_json() + "\n")
    for part in ("train", "test", "validation"):
        samples = _split_samples(cfg, manifest, part)
        ds.write_label_sidecar(samples, os.path.join(cfg.reports, f"labels_{part}.csv"))
        print(f"{part}: {len(getattr(split, part))} videos, {len(samples)} samples")
    print(f"wrote {_manifest_path(cfg)}")
    return 0


def cmd_extract_features(args) -> int:
    import cv2

    cfg = load_config(args.config, args.set or [])
    backbone = Backbone(cfg.backbone)
    os.makedirs(cfg.features, exist_ok=True)
    frames_root = args.frames or cfg.videos
    for video_dir in sorted(glob.glob(os.path.join(frames_root, "*"))):
        if not os.path.isdir(video_dir):
            continue
        vid = os.path.basename(video_dir)
        vectors = []
        for i, img_path in enumerate(sorted(glob.glob(os.path.join(video_dir, "*")))):
            raw = cv2.imread(img_path, cv2.IMREAD_COLOR)
            if raw is None:
                continue
            prepped = ds.preprocess_frame(raw[:, :, ::-1])  # BGR -> RGB
            vectors.append(
                backbone.features_for_frame(prepped, video_id=vid, frame_index=i)
            )
        out = os.path.join(cfg.features, f"{vid}.egft")
        write_feature_file(vectors, out, dim=cfg.backbone.output_dim)
        print(f"{vid}: {len(vectors)} frames -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or [])
    train_cfg = cfg.train
    if args.seed is not None:
        train_cfg = mdl.TrainConfig(**{**train_cfg.to_dict(), "seed": args.seed})
    with open(_manifest_path(cfg), "r", encoding="utf-8") as f:
        manifest = ds.DatasetManifest.from_json(f.read())
    train_cfg = mdl.TrainConfig(**{**train_cfg.to_dict(), "w": manifest.w})
    train_set = _split_samples(cfg, manifest, "train")
    val_set = _split_samples(cfg, manifest, "validation")
    resume = None
    if args.resume:
        resume = mdl.load_checkpoint(args.resume)
    ck = mdl.train(
        train_set,
        val_set,
        train_cfg,
        resume=resume,
        log=lambda e, h: print(f"epoch {e}: train_mse={h[0]:.5f} val_mse={h[1]:.5f}"),
    )
    out = args.out or os.path.join(cfg.checkpoints, "model.egck")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    mdl.save_checkpoint(ck, out)
    print(f"best epoch {ck.best_epoch}, val_mse={ck.history[ck.best_epoch][1]:.5f}")
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    ck = mdl.load_checkpoint(args.checkpoint)
    with open(_manifest_path(cfg), "r", encoding="utf-8") as f:
        manifest = ds.DatasetManifest.from_json(f.read())
    samples = _split_samples(cfg, manifest, args.split)
    mse = ev.test_mse(ck.best_params, samples)
    print(f"{args.split}_mse={mse:.6f} over {len(samples)} samples")
    return 0


def cmd_roc(args) -> int:
    pred_track = ann.load_annotation_track(args.pred, "csv")
    label_track = ev.load_interaction_track(args.labels)
    truths = ev.derive_ground_truth(label_track, pred_track.timestamps())
    result = ev.roc_auc(pred_track.values, truths)
    out = args.out or "roc.csv"
    plot = os.path.splitext(out)[0] + ".dat"
    ev.write_roc_csv(result, out, plot)
    print(f"auc={result.auc:.6f}")
    print(f"wrote {out} and {plot}")
    return 0


def cmd_stream(args) -> int:
    import cv2

    cfg = load_config(args.config, args.set or [])
    ck = mdl.load_checkpoint(args.checkpoint)
    backbone = Backbone(cfg.backbone)
    state = StreamState(ck.best_params, backbone, w=ck.config.w)

    def emit(score):
        if score is not None:
            print(
                json.dumps(
                    {
                        "frame": score.frame_index,
                        "engagement": round(score.value, 6),
                        "latency_ms": round(score.wall_latency_ms, 3),
                    }
                ),
                flush=True,
            )

    if args.frames:
        for p in sorted(glob.glob(args.frames)):
            raw = cv2.imread(p, cv2.IMREAD_COLOR)
            if raw is None:
                continue
            emit(state.push_frame(raw[:, :, ::-1]))
    elif args.video:
        cap = cv2.VideoCapture(args.video)
        while True:
            ok, raw = cap.read()
            if not ok:
                break
            emit(state.push_frame(raw[:, :, ::-1]))
        cap.release()
    else:
        raise ConfigError("<cli>", "stream needs --frames or --video")
    rep = state.latency_report()
    print(
        f"# p50={rep.p50_ms:.2f}ms p95={rep.p95_ms:.2f}ms max={rep.max_ms:.2f}ms "
        f"fps={rep.throughput_fps:.1f}",
        file=sys.stderr,
    )
    return 0


def cmd_plot(args) -> int:
    """Emit overlay plot data: one CSV with series,t_s,value rows."""
    rows = ["series,t_s,value"]
    for series_arg in args.series:
        name, path = series_arg.split("=", 1) if "=" in series_arg else (
            os.path.splitext(os.path.basename(series_arg))[0],
            series_arg,
        )
        fmt = "jsonl" if path.endswith(".jsonl") else "csv"
        track = ann.load_annotation_track(path, fmt)
        for t, v in zip(track.timestamps(), track.values):
            rows.append(f"{name},{t:.3f},{v:.6f}")
    out = args.out or "overlay.csv"
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_serve_annotator(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config, args.set or [])
    app = create_app(
        data_dir=args.data or os.path.dirname(cfg.annotations) or ".",
        checkpoint_path=args.checkpoint,
        w=cfg.w,
        static_dir=args.static,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as e:
        raise EngageError(f"port {args.port} unavailable: {e}") from None
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="engage", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
        p.add_argument("--seed", type=int, help="seed override")

    p = sub.add_parser("agreement", help="inter-rater agreement analysis")
    common(p)
    p.add_argument("--tracks", required=True, help="directory of annotation tracks")
    p.add_argument("--S", default="1,5,10,26", help="comma-separated smoothing constants (s)")
    p.add_argument("--method", default="ema", choices=["ema", "boxcar"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("build-dataset", help="manifest + window label sidecars")
    common(p)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("extract-features", help="frames -> feature shards")
    common(p)
    p.add_argument("--frames", help="root directory with one subdirectory per video")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("train", help="train the recurrent regressor")
    common(p)
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MSE on a dataset split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "validation"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roc", help="threshold sweep ROC/AUC")
    common(p)
    p.add_argument("--pred", required=True, help="prediction CSV (t_s,value)")
    p.add_argument("--labels", required=True, help="interaction CSV (start_s,end_s,tag)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("stream", help="streaming inference, NDJSON on stdout")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", help="glob of frame images")
    p.add_argument("--video", help="video file")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("plot", help="emit overlay plot data CSV")
    common(p)
    p.add_argument("series", nargs="+", metavar="NAME=TRACK", help="track files to overlay")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("serve-annotator", help="annotation UI + ingestion service")
    common(p)
    p.add_argument("--data", help="data directory (videos/, annotations/, features/)")
    p.add_argument("--checkpoint", help="checkpoint for prediction overlays")
    p.add_argument("--static", help="built UI assets directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    p.set_defaults(func=cmd_serve_annotator)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
