"""Command-line entry point.

Subcommands: train, eval, traverse, export-directions, serve.
Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from .checkpoint import load_checkpoint
from .exceptions import ConfigError, LatentShiftError
from .metrics import compute_metric_report
from .seeding import derive_seed, new_generator
from .shifts import export_directions_document
from .training import TrainConfig, train_loop
from .viz import compose_grid, save_png, traversal_row

USAGE_EXIT = 2
FAILURE_EXIT = 1


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    config_path = Path(path)
    if not config_path.exists():
        raise UsageError(f"config file not found: {config_path}")
    try:
        values = json.loads(config_path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {config_path} is not valid JSON: {exc}") from exc
    return TrainConfig.from_dict(values)


def _open_checkpoint(path: str):
    checkpoint_path = Path(path)
    if not checkpoint_path.exists():
        raise UsageError(f"checkpoint file not found: {checkpoint_path}")
    return load_checkpoint(checkpoint_path)


def _parse_eps_range(text: str) -> list[float]:
    try:
        lo_s, hi_s, n_s = text.split(":")
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError as exc:
        raise UsageError(f"--eps-range must look like lo:hi:n; got {text!r}") from exc
    if n < 1:
        raise UsageError(f"--eps-range needs at least one step; got n={n}")
    if n == 1:
        return [lo]
    return [lo + i * (hi - lo) / (n - 1) for i in range(n)]


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    overrides = {}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")

    result = train_loop(cfg, out_dir=out_dir, log=lambda msg: print(msg, flush=True))
    print(f"wrote {out_dir / 'checkpoint.pt'} ({len(result.history)} history rows)")
    return 0


def cmd_eval(args) -> int:
    loaded = _open_checkpoint(args.checkpoint)
    cfg = loaded.config
    generator = cfg.make_generator()
    report = compute_metric_report(
        loaded.deformator,
        loaded.reconstructor,
        generator,
        n_samples=args.samples,
        delta=args.delta,
        eps_low=cfg.eps_low,
        eps_high=cfg.eps_high,
        eps_deadzone=cfg.eps_deadzone,
        seed=args.seed,
        embedding_seed=derive_seed(cfg.seed, "embedding"),
    )
    text = report.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_traverse(args) -> int:
    loaded = _open_checkpoint(args.checkpoint)
    cfg = loaded.config
    if not 0 <= args.direction < cfg.num_directions:
        raise UsageError(
            f"--direction {args.direction} out of range for {cfg.num_directions} directions"
        )
    if args.second_direction is not None and not 0 <= args.second_direction < cfg.num_directions:
        raise UsageError(
            f"--second-direction {args.second_direction} out of range for "
            f"{cfg.num_directions} directions"
        )
    magnitudes = _parse_eps_range(args.eps_range)
    generator = cfg.make_generator()

    rows = []
    for row_index in range(args.rows):
        rng = new_generator(derive_seed(args.seed, f"traverse-row-{row_index}"))
        z = torch.randn(cfg.latent_dim, generator=rng)
        rows.append(
            traversal_row(
                loaded.deformator,
                generator,
                z,
                args.direction,
                magnitudes,
                second_direction=args.second_direction,
            )
        )
    save_png(args.out, compose_grid(rows))
    print(f"wrote {args.out}")
    return 0


def cmd_export_directions(args) -> int:
    loaded = _open_checkpoint(args.checkpoint)
    doc = export_directions_document(loaded.deformator, loaded.bank)
    text = json.dumps(doc, indent=2)
    Path(args.out).write_text(text + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        args.checkpoint, eval_samples=args.eval_samples, report_path=args.report
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentshift",
        description="Discover, evaluate and explore interpretable latent-space edits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a deformator/reconstructor pair")
    p_train.add_argument("--config", help="JSON config file (defaults to the blob experiment)")
    p_train.add_argument("--steps", type=int, help="override the configured step count")
    p_train.add_argument("--seed", type=int, help="override the configured seed")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="compute the metric report for a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--samples", type=int, default=10000)
    p_eval.add_argument("--delta", type=float, default=0.1)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="also write the JSON report to this file")
    p_eval.set_defaults(func=cmd_eval)

    p_trav = sub.add_parser("traverse", help="render a traversal grid to PNG")
    p_trav.add_argument("checkpoint")
    p_trav.add_argument("--direction", type=int, required=True)
    p_trav.add_argument("--eps-range", default="-6:6:7", help="sweep as lo:hi:n")
    p_trav.add_argument("--second-direction", type=int)
    p_trav.add_argument("--seed", type=int, default=0)
    p_trav.add_argument("--rows", type=int, default=3, help="number of latent codes (grid rows)")
    p_trav.add_argument("--out", required=True, help="output PNG path")
    p_trav.set_defaults(func=cmd_traverse)

    p_export = sub.add_parser(
        "export-directions", help="write learned directions and centroids as JSON"
    )
    p_export.add_argument("checkpoint")
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=cmd_export_directions)

    p_serve = sub.add_parser("serve", help="serve a checkpoint for interactive editing")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--eval-samples", type=int, default=1024)
    p_serve.add_argument("--report", help="reuse a metric report instead of evaluating at startup")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except LatentShiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
