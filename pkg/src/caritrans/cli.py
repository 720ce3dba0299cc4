"""Command line entry point: ``caritrans {train,translate,grid,eval-style}``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import apply_preset, load_config, load_defaults
from .data import load_corpus, preprocess, read_image
from .exceptions import CaritransError, StageMismatch
from .inference import emit_grid, eval_style_gap, save_png, translate
from .trainer import Checkpoint, Stage1Trainer, Stage2Trainer


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="caritrans", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--config", type=Path, help="JSON file mirroring TrainConfig fields")
    p.add_argument("--preset", choices=("desk",))
    p.add_argument("--data", help="corpus root with photos/ and caricatures/")
    p.add_argument("--holdout", type=int, help="images per domain kept out of training")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--steps", type=int, help="override the stage's step count")
    p.add_argument("--stage1-ckpt", type=Path, help="stage-1 checkpoint (default: <checkpoint-dir>/stage1.pt)")

    p = sub.add_parser("translate", help="translate one image")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--direction", choices=("p2c", "c2p"), default="p2c")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--noise-seed", type=int)
    p.add_argument("--warp-c2p", action="store_true", help="also warp caricature->photo output")

    p = sub.add_parser("grid", help="montage over exaggeration factors or noise seeds")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--in", dest="inp", type=Path, nargs="+", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alphas", type=_floats, default=[])
    group.add_argument("--seeds", type=_ints, default=[])
    p.add_argument("--alpha", type=float, default=1.0, help="exaggeration for --seeds columns")
    p.add_argument("--direction", choices=("p2c", "c2p"), default="p2c")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval-style", help="style distances of renders to each domain")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _train_config(args):
    cfg = load_config(args.config) if args.config else load_defaults()
    if args.preset:
        cfg = apply_preset(cfg, args.preset)
    overrides = {}
    if args.data:
        overrides["data_root"] = args.data
    if args.holdout is not None:
        overrides["holdout"] = args.holdout
    if args.checkpoint_dir:
        overrides["checkpoint_dir"] = args.checkpoint_dir
    if args.steps is not None:
        overrides["hp"] = {f"steps_stage{args.stage}": args.steps}
    return cfg.replace(**overrides)


def cmd_train(args):
    cfg = _train_config(args)
    if args.stage == 1:
        ckpt = Stage1Trainer(cfg).run()
    else:
        path = args.stage1_ckpt or Path(cfg.checkpoint_dir) / "stage1.pt"
        stage1 = Checkpoint.load(path, cfg.device)
        for key in ("image_size", "latent_channels", "disc_base"):
            if getattr(stage1.config, key) != getattr(cfg, key):
                raise StageMismatch(f"{key} differs between config and stage-1 checkpoint")
        ckpt = Stage2Trainer(cfg, stage1).run()
    print(Path(cfg.checkpoint_dir) / f"stage{ckpt.stage}.pt")


def _load_input(path, size):
    return preprocess(read_image(path), size)


def cmd_translate(args):
    ckpt = Checkpoint.load(args.ckpt)
    x = _load_input(args.inp, ckpt.config.image_size)
    warp = True if args.warp_c2p else None
    out = translate(ckpt, x, args.direction, alpha=args.alpha, noise_seed=args.noise_seed, warp=warp)
    save_png(out, args.out)


def cmd_grid(args):
    ckpt = Checkpoint.load(args.ckpt)
    inputs = [_load_input(p, ckpt.config.image_size) for p in args.inp]
    emit_grid(ckpt, inputs, alphas=args.alphas, seeds=args.seeds, out=args.out,
              direction=args.direction, alpha=args.alpha)


def cmd_eval_style(args):
    ckpt = Checkpoint.load(args.ckpt)
    report = eval_style_gap(ckpt, load_corpus(args.data), args.n, seed=args.seed)
    print(json.dumps(report))


COMMANDS = {
    "train": cmd_train,
    "translate": cmd_translate,
    "grid": cmd_grid,
    "eval-style": cmd_eval_style,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (CaritransError, OSError, ValueError) as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
