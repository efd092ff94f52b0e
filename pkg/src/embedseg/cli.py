"""Command-line entry points.

Subcommands: synth, train, eval, replay, serve. Report paths write a figure
next to every delimited output file. All commands are deterministic given
their seed flags.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .core import load_sequence, save_sequence
from .embed import EmbedConfig, load_head, save_head
from .loss import TrainConfig, load_train_config, save_train_config, train, write_loss_curve
from .metrics import evaluate_sequence
from .retrieval import SegmentConfig, segment_video_semisupervised
from .session import InteractiveSession, SessionConfig, load_click_log, replay_clicks, run_robot
from .synthdata import PRESETS, generate_sequence, preset_scene, with_noise


def _add_embed_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stride", type=int, default=EmbedConfig.stride)
    parser.add_argument("--embed-dim", type=int, default=EmbedConfig.embed_dim)
    parser.add_argument("--hidden-dim", type=int, default=EmbedConfig.hidden_dim)
    parser.add_argument("--lambda-space", type=float, default=EmbedConfig.lambda_space)
    parser.add_argument("--lambda-time", type=float, default=EmbedConfig.lambda_time)


def _embed_config(args: argparse.Namespace) -> EmbedConfig:
    return EmbedConfig(
        stride=args.stride,
        embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim,
        lambda_space=args.lambda_space,
        lambda_time=args.lambda_time,
    )


def _load_labeled(data_dir: str):
    path = Path(data_dir)
    if not path.is_dir():
        raise FileNotFoundError(f"data directory not found: {path}")
    video, masks, k = load_sequence(path)
    if masks is None:
        raise FileNotFoundError(f"no ground-truth masks in {path}")
    return video, masks, k


def cmd_synth(args: argparse.Namespace) -> int:
    scene = preset_scene(args.preset, args.seed)
    if args.noise > 0:
        scene = with_noise(scene, args.noise)
    video, masks = generate_sequence(scene)
    out = save_sequence(args.out, video, masks, num_objects=scene.num_objects)
    print(f"wrote {video.frame_count} frames to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    sequences = []
    for data_dir in args.data:
        video, masks, _ = _load_labeled(data_dir)
        sequences.append((video, masks))
    if args.config:
        config = load_train_config(args.config)
    else:
        config = TrainConfig(
            alpha=args.alpha,
            learning_rate=args.learning_rate,
            iterations=args.iterations,
            anchor_count=args.anchor_count,
            seed=args.seed,
            embed=_embed_config(args),
        )
    params, curve = train(sequences, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_head(out, params)
    save_train_config(out.with_suffix(".config"), config)
    write_loss_curve(out.parent / "loss.csv", curve)
    report.save_loss_figure(out.parent / "loss.png", curve)
    print(f"trained {config.iterations} iterations; model at {out}")
    print(f"loss curve: {out.parent / 'loss.csv'} (figure {out.parent / 'loss.png'})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    video, gt_masks, k = _load_labeled(args.data)
    params = load_head(args.model)
    embed_config = _embed_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.data).name

    if args.mode == "semisup":
        config = SegmentConfig(k=args.k, adapt=args.adapt, seed=args.seed, embed=embed_config)
        predictions = segment_video_semisupervised(video, gt_masks[0], params, config)
        save_sequence(out / "predictions", video, predictions, num_objects=k)
        score = evaluate_sequence(
            list(predictions), list(gt_masks), k, exclude_first_frame=True
        )
        report.write_metrics_csv(out / "metrics.csv", {name: score})
        report.save_score_figure(out / "scores.png", {name: score})
        print(f"mean J = {score.mean_j:.4f}  mean F = {score.mean_f:.4f}")
        print(f"report: {out / 'metrics.csv'} (figure {out / 'scores.png'})")
        return 0

    # robot mode
    if args.clicks < k + 1:
        print(f"error: budget below K+1 = {k + 1}", file=sys.stderr)
        return 1
    session = InteractiveSession(
        video, params, SessionConfig(k=args.k, embed=embed_config), num_objects=k
    )
    per_seed, mean_curve = run_robot(session, gt_masks, args.clicks, args.seeds)
    report.write_click_curve_csv(out / "click_curve.csv", per_seed, mean_curve)
    report.save_click_curve_figure(out / "click_curve.png", per_seed, mean_curve)
    print(f"final mean J = {mean_curve[-1].mean_j:.4f} after {args.clicks} clicks")
    print(f"report: {out / 'click_curve.csv'} (figure {out / 'click_curve.png'})")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    video, gt_masks, k = _load_labeled(args.data)
    params = load_head(args.model)
    session = InteractiveSession(
        video, params, SessionConfig(k=args.k, embed=_embed_config(args)), num_objects=k
    )
    clicks = load_click_log(args.clicks)
    replay_clicks(session, clicks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    predictions = session.masks()
    save_sequence(out / "predictions", video, predictions, num_objects=k)
    score = evaluate_sequence(list(predictions), list(gt_masks), k)
    report.write_metrics_csv(out / "metrics.csv", {Path(args.data).name: score})
    report.save_score_figure(out / "scores.png", {Path(args.data).name: score})
    print(f"replayed {len(clicks)} clicks; mean J = {score.mean_j:.4f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        data_dir=Path(args.data),
        model_path=Path(args.model),
        max_sessions=args.max_sessions,
        max_video_pixels=args.max_pixels,
        k=args.k,
        embed=_embed_config(args),
    )
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedseg",
        description="Video object segmentation by pixel-wise retrieval in a learned embedding space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled sequence")
    p_synth.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--noise", type=float, default=0.0, help="background noise amplitude")
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train the embedding head")
    p_train.add_argument("--data", nargs="+", required=True, help="sequence directories")
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--config", help="key=value training config file")
    p_train.add_argument("--alpha", type=float, default=TrainConfig.alpha)
    p_train.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p_train.add_argument("--iterations", type=int, default=TrainConfig.iterations)
    p_train.add_argument("--anchor-count", type=int, default=TrainConfig.anchor_count)
    p_train.add_argument("--seed", type=int, default=0)
    _add_embed_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a model on a labeled sequence")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--mode", choices=["semisup", "robot"], default="semisup")
    p_eval.add_argument("--k", type=int, default=None)
    p_eval.add_argument("--adapt", action=argparse.BooleanOptionalAction, default=True)
    p_eval.add_argument("--clicks", type=int, default=20, help="robot click budget")
    p_eval.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)
    _add_embed_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="replay a click log against a sequence")
    p_replay.add_argument("--data", required=True)
    p_replay.add_argument("--model", required=True)
    p_replay.add_argument("--clicks", required=True, help="click log file")
    p_replay.add_argument("--k", type=int, default=1)
    p_replay.add_argument("--out", required=True)
    _add_embed_flags(p_replay)
    p_replay.set_defaults(func=cmd_replay)

    p_serve = sub.add_parser("serve", help="run the interactive session service")
    p_serve.add_argument("--data", required=True, help="directory of sequence directories")
    p_serve.add_argument("--model", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8077)
    p_serve.add_argument("--k", type=int, default=1)
    p_serve.add_argument("--max-sessions", type=int, default=16)
    p_serve.add_argument("--max-pixels", type=int, default=1_000_000)
    _add_embed_flags(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "eval" and args.k is None:
        args.k = 5 if args.mode == "semisup" else 1
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
