"""Command-line entry point.

Subcommands cover the whole workflow: ``dataset`` builds the paired corpus,
``train-ae`` / ``train-stage1`` / ``train-stage2`` fit the three model
groups, ``sample`` synthesizes an image from a sketch PNG, ``eval`` runs the
abstraction-level metric sweep, and ``serve`` starts the HTTP service.

Conventions:

* JSON config files are schema-validated; command-line flags override config
  values.
* every stochastic command takes ``--seed``; leaving it out picks a seed and
  logs it, so any run can be reproduced afterwards.
* relative checkpoint paths resolve under ``$SKETCHDIFF_CKPT_DIR`` when that
  variable is set.
* exit codes: 0 success, 2 usage, 3 bad config, 4 missing artifact,
  5 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    DatasetConfig,
    load_config_file,
    train_config_from_dict,
)
from .data import build_dataset, load_manifest, load_sketch_png, save_image_png
from .evaluation import (
    RandomProjectionEmbedder,
    TorchScriptEmbedder,
    eval_sweep,
    write_report,
)
from .pipeline import SAMPLERS, SynthesisPipeline
from .regions import REGION_NAMES
from .training import SKETCH_SOURCES, train_codec, train_stage1, train_stage2

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_RUNTIME = 5

CKPT_DIR_ENV = "SKETCHDIFF_CKPT_DIR"

_TRAIN_OVERRIDES = ("epochs", "batch_size", "lr", "seed", "checkpoint_every")


def resolve_ckpt(path: str | Path) -> Path:
    """Relative checkpoint paths live under $SKETCHDIFF_CKPT_DIR if set."""
    path = Path(path)
    base = os.environ.get(CKPT_DIR_ENV)
    if path.is_absolute() or not base:
        return path
    return Path(base) / path


def _choose_seed(given: int | None, label: str) -> int:
    if given is not None:
        return given
    seed = int.from_bytes(os.urandom(4), "little")
    logger.info("no --seed given for %s; picked seed %d", label, seed)
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchdiff",
        description="sketch-conditioned latent diffusion: data, training, "
        "sampling, evaluation, serving",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build images/sketches/manifest from raw photos")
    p.add_argument("--images", required=True, help="directory of input PNGs")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--config", help="JSON dataset config")
    p.add_argument("--matte", help="directory of background mattes (optional)")
    p.add_argument("--canvas", type=int, help="square canvas size override")
    p.add_argument("--sra-variants", type=int, help="recombined sketches per image")
    p.add_argument("--seed", type=int, help="master seed (logged when omitted)")

    for name, stage in (("train-ae", 0), ("train-stage1", 1), ("train-stage2", 2)):
        p = sub.add_parser(name, help=f"run stage-{stage} training")
        p.set_defaults(stage=stage)
        p.add_argument("--config", required=True, help="JSON train config")
        p.add_argument("--dataset", required=True, help="dataset directory")
        p.add_argument("--out", required=True, help="checkpoint output path")
        p.add_argument("--log", help="JSONL metrics log path")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int, help="master seed (logged when omitted)")
        p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
        if stage in (1, 2):
            p.add_argument("--resume", help="checkpoint to continue from")
            p.add_argument(
                "--sources",
                choices=SKETCH_SOURCES,
                default="all",
                help="which sketch variants to train on",
            )
        if stage == 2:
            p.add_argument("--stage1", required=True, help="stage-1 checkpoint")
            p.add_argument("--image-ae", required=True, dest="image_ae",
                           help="image codec checkpoint")

    p = sub.add_parser("sample", help="synthesize an image from a sketch PNG")
    p.add_argument("--sketch", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--sampler", choices=SAMPLERS, default="ddim")
    p.add_argument("--seed", type=int, help="sampling seed (logged when omitted)")
    p.add_argument(
        "--mask",
        action="append",
        choices=REGION_NAMES,
        default=None,
        help="drop this region from conditioning (repeatable)",
    )

    p = sub.add_parser("eval", help="run the abstraction-level metric sweep")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="metric report JSON path")
    p.add_argument("--levels", nargs="+", default=["low", "mid", "high"])
    p.add_argument("--split", default="test")
    p.add_argument("--steps", type=int)
    p.add_argument("--sampler", choices=SAMPLERS, default="ddim")
    p.add_argument("--seed", type=int, help="evaluation seed (logged when omitted)")
    p.add_argument("--tolerance-px", type=int, default=2, dest="tolerance_px")
    p.add_argument("--embedder-dim", type=int, default=64, dest="embedder_dim")
    p.add_argument("--embedder-weights", dest="embedder_weights",
                   help="TorchScript feature extractor (default: random projection)")
    p.add_argument("--perceptual-weights", dest="perceptual_weights",
                   help="TorchScript pairwise perceptual net (else LPIPS is null)")

    p = sub.add_parser("serve", help="start the HTTP synthesis service")
    p.add_argument("--ckpt", help="stage-2 checkpoint (omit to serve modelless)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-steps", type=int, default=1000, dest="max_steps")
    p.add_argument("--queue-len", type=int, default=32, dest="queue_len")
    p.add_argument("--cache-size", type=int, default=64, dest="cache_size")

    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def _cmd_dataset(args: argparse.Namespace) -> int:
    doc = load_config_file(args.config, "dataset") if args.config else {}
    for field in ("canvas", "sra_variants", "seed"):
        value = getattr(args, field)
        if value is not None:
            doc[field] = value
    doc["seed"] = _choose_seed(doc.get("seed"), "dataset")
    if "split_ratio" in doc:
        doc["split_ratio"] = tuple(doc["split_ratio"])
    try:
        config = DatasetConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad dataset config: {exc}") from exc
    manifest = build_dataset(args.images, args.out, config, matte_dir=args.matte)
    print(
        f"dataset written to {args.out}: {len(manifest['records'])} records "
        f"(train {len(manifest['split']['train'])}, "
        f"val {len(manifest['split']['val'])}, "
        f"test {len(manifest['split']['test'])})"
    )
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    doc = load_config_file(args.config, "train")
    for field in _TRAIN_OVERRIDES:
        value = getattr(args, field)
        if value is not None:
            doc[field] = value
    doc["seed"] = _choose_seed(doc.get("seed"), args.command)
    try:
        train, arch, diffusion = train_config_from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    if train.stage != args.stage:
        raise ConfigError(
            f"config declares stage {train.stage} but {args.command} runs "
            f"stage {args.stage}"
        )
    manifest = load_manifest(Path(args.dataset) / "manifest.json")
    # stages 0/1 take their arch from the config (stage 2 inherits the
    # stage-1 checkpoint's); catch a profile/dataset mismatch here so it
    # exits as a config error instead of a shape error mid-training
    if args.stage in (0, 1) and arch.canvas != int(manifest["canvas"]):
        raise ConfigError(
            f"config arch.canvas {arch.canvas} does not match dataset canvas "
            f"{manifest['canvas']}; add an \"arch\" block sized for this dataset"
        )
    out = resolve_ckpt(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.stage == 0:
        ckpt = train_codec(args.dataset, manifest, train, arch, log_path=args.log)
        save_checkpoint(ckpt, out)
    elif args.stage == 1:
        resume = load_checkpoint(resolve_ckpt(args.resume)) if args.resume else None
        ckpt = train_stage1(
            args.dataset, manifest, train, arch,
            sources=args.sources, log_path=args.log, out_path=out,
            resume_from=resume,
        )
    else:
        resume = load_checkpoint(resolve_ckpt(args.resume)) if args.resume else None
        ckpt = train_stage2(
            args.dataset, manifest,
            load_checkpoint(resolve_ckpt(args.stage1)),
            load_checkpoint(resolve_ckpt(args.image_ae)),
            train, diffusion,
            sources=args.sources, log_path=args.log, out_path=out,
            resume_from=resume,
        )
    metrics = ckpt.meta.get("metrics") or []
    last = f", final loss {metrics[-1]['loss']:.6g}" if metrics else ""
    print(f"stage-{args.stage} checkpoint written to {out}{last}")
    return EXIT_OK


def _cmd_sample(args: argparse.Namespace) -> int:
    pipeline = SynthesisPipeline.from_file(resolve_ckpt(args.ckpt))
    if not Path(args.sketch).is_file():
        raise FileNotFoundError(f"sketch not found: {args.sketch}")
    sketch = load_sketch_png(args.sketch)
    seed = _choose_seed(args.seed, "sample")
    image = pipeline.synthesize(
        sketch,
        steps=args.steps,
        sampler=args.sampler,
        seed=seed,
        masked_regions=tuple(args.mask or ()),
    )
    save_image_png(args.out, image)
    print(f"sample written to {args.out} (sampler {args.sampler}, seed {seed})")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    pipeline = SynthesisPipeline.from_file(resolve_ckpt(args.ckpt))
    manifest = load_manifest(Path(args.dataset) / "manifest.json")
    if args.embedder_weights:
        embedder = TorchScriptEmbedder(args.embedder_weights)
    else:
        embedder = RandomProjectionEmbedder(dim=args.embedder_dim, seed=0)
    report = eval_sweep(
        pipeline,
        args.dataset,
        manifest,
        levels=tuple(args.levels),
        split=args.split,
        tolerance_px=args.tolerance_px,
        embedder=embedder,
        steps=args.steps,
        sampler=args.sampler,
        seed=_choose_seed(args.seed, "eval"),
        perceptual_weights=args.perceptual_weights,
    )
    write_report(report, args.out)
    failed = [lv for lv, e in report["levels"].items() if "error" in e]
    print(f"report written to {args.out}" + (f" (failed levels: {failed})" if failed else ""))
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    ckpt_path = resolve_ckpt(args.ckpt) if args.ckpt else None
    if ckpt_path is not None and not ckpt_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    app = create_app(
        checkpoint_path=ckpt_path,
        max_steps=args.max_steps,
        queue_len=args.queue_len,
        cache_size=args.cache_size,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_HANDLERS = {
    "dataset": _cmd_dataset,
    "train-ae": _cmd_train,
    "train-stage1": _cmd_train,
    "train-stage2": _cmd_train,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def run(args: argparse.Namespace) -> int:
    """Dispatch a parsed command, mapping failures to distinct exit codes."""
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse exits: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
