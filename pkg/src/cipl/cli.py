"""Command-line entry point: gen-data, train, eval, localize, explain."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig

log = logging.getLogger("cipl")


def _common(p):
    p.add_argument("--config", type=Path, help="flat JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.add_argument("--ablate-cross", action="store_true")
    p.add_argument("--ablate-inte", action="store_true")
    p.add_argument("--ablate-pred", action="store_true")
    p.add_argument("--pred-kl", action="store_true", help="sample-level KL prediction alignment")
    p.add_argument("--single-label", action="store_true")
    p.add_argument("--keep-ema", action="store_true", help="store the EMA model in model.ckpt")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="cipl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic glyph dataset")
    _common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, help="number of samples (overrides n_samples)")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", action="store_true", help="continue from out/state.ckpt")

    p = sub.add_parser("eval", help="classification (and localisation) metrics report")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--val", type=Path, help="dataset used to choose F1 thresholds")
    p.add_argument("--report", type=Path, help="write JSON here instead of stdout")

    p = sub.add_parser("localize", help="thresholded-IoU localisation report")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--t", type=float, nargs="+", help="IoU thresholds (default from config)")
    p.add_argument("--report", type=Path)

    p = sub.add_parser("explain", help="export similarity maps and provenance for one image")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    return parser


def resolve_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg = cfg.override(key.strip(), raw)
    flags = {"seed": args.seed} if args.seed is not None else {}
    if args.ablate_cross:
        flags["use_cross"] = False
    if args.ablate_inte:
        flags["use_inte"] = False
    if args.ablate_pred:
        flags["use_pred"] = False
    if args.pred_kl:
        flags["pred_kl"] = True
    if args.single_label:
        flags["single_label"] = True
    if args.keep_ema:
        flags["keep_ema"] = True
    for k, v in flags.items():
        cfg = cfg.override(k, json.dumps(v))
    return cfg


def _emit(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _need(path, what):
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")


def cmd_gen_data(args, cfg):
    from .data import default_glyphs, generate_dataset, write_dataset

    n = args.n if args.n is not None else cfg.n_samples
    if n <= 0:
        raise ConfigError("--n must be positive")
    glyphs = default_glyphs(cfg.n_classes, cfg.glyph_size)
    ds = generate_dataset(cfg.seed, n, cfg.n_classes, cfg.label_probs, glyphs=glyphs, size=cfg.image_size,
                          channels=cfg.image_channels, single_label=cfg.single_label)
    write_dataset(ds, args.out, force=args.force)
    log.info("wrote %d samples to %s", n, args.out)


def cmd_train(args, cfg):
    from .data import read_dataset
    from .training import fit

    _need(args.data, "dataset directory")
    ds = read_dataset(args.data)
    out = args.out
    if out.exists() and any(out.iterdir()) and not (args.force or args.resume):
        raise FileExistsError(f"output directory {out} is not empty (use --force or --resume)")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    bb = cfg.backbone()
    if ds.images.shape[1:] != (bb.input_size, bb.input_size, bb.in_channels):
        raise ConfigError(f"dataset images {ds.images.shape[1:]} do not match image_size/image_channels")
    fit(ds, cfg.train(), bb, per_class=cfg.per_class, out_dir=out, resume=args.resume,
        keep_ema=cfg.keep_ema)
    log.info("checkpoint written to %s", out / "model.ckpt")


def _load(args):
    from .data import read_dataset
    from .training import load_model

    _need(args.checkpoint, "checkpoint")
    _need(args.data, "dataset directory")
    return load_model(args.checkpoint), read_dataset(args.data)


def cmd_eval(args, cfg):
    from .data import read_dataset
    from .evaluation import full_report

    model, ds = _load(args)
    val = None
    if args.val:
        _need(args.val, "validation dataset")
        val = read_dataset(args.val)
    top_k = cfg.top_k or None
    _emit(full_report(model, ds, val, cfg.iou_thresholds, top_k), args.report)


def cmd_localize(args, cfg):
    from .evaluation import localization_report

    model, ds = _load(args)
    ts = args.t or cfg.iou_thresholds
    if any(not 0 < t < 1 for t in ts):
        raise ConfigError("IoU thresholds must lie in (0, 1)")
    _emit(localization_report(model, ds, ts, cfg.top_k or None), args.report)


def cmd_explain(args, cfg):
    from .data.io import read_pnm
    from .evaluation import export_explanation
    from .training import load_model

    if args.k < 1:
        raise ConfigError("--k must be at least 1")
    _need(args.checkpoint, "checkpoint")
    _need(args.image, "image")
    model = load_model(args.checkpoint)
    img = read_pnm(args.image)
    if img.ndim == 2:
        img = img[..., None]
    x = img.astype(np.float32) / np.float32(255.0)
    path = export_explanation(model, x, args.out, k=args.k, name=args.image.stem)
    print(path)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "localize": cmd_localize, "explain": cmd_explain}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    threads = os.environ.get("CIPL_THREADS")
    try:
        if threads:
            from .numerics import set_threads
            set_threads(int(threads))
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"cipl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
