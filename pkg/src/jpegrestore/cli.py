"""Command line entry point: ``jpegrestore <subcommand> ...``."""
import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import codec, dataset, losses, metrics, samples, trainer

log = logging.getLogger("jpegrestore")

# Narrow and short, but at the full 512 input so the 8x8 bottleneck and its 4x4
# hourglass dip keep their real geometry. --paper-scale drops these.
DESK_SCALE = {"width": 8, "disc_width": 8, "image_size": 512, "epochs": 20, "batch_size": 2,
              "d_stop_epoch": 7, "lr": 1e-3, "eval_each_epoch": False}
LAMBDA_LF_GRID = (5.0, 10.0, 20.0)
ARCH_GRID = ((False, False), (True, False), (True, True))


class UsageError(Exception):
    pass


def _quality(text):
    try:
        q = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"quality must be an integer, got {text!r}") from None
    if not 1 <= q <= 100:
        raise argparse.ArgumentTypeError(f"quality must lie in [1, 100], got {q}")
    return q


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _stop_epoch(text):
    if text.lower() in ("never", "none"):
        return "never"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an epoch number or 'never', got {text!r}") from None


def _existing_dir(path, what="input directory"):
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


def _prepare_out(path, no_clobber):
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        if no_clobber:
            raise UsageError(f"output directory {out} is not empty (--no-clobber)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pngs(in_dir):
    files = sorted(_existing_dir(in_dir).glob("*.png"))
    if not files:
        raise UsageError(f"no .png files in {in_dir}")
    return files


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- config

_FLAG_TO_FIELD = {"epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
                  "lambda_adv": "lambda_adv", "lambda_lf": "lambda_lf", "lambda_hf": "lambda_hf",
                  "d_stop_epoch": "d_stop_epoch", "adv_loss": "adv_loss_variant", "seed": "seed",
                  "quality": "quality", "width": "width", "disc_width": "disc_width",
                  "image_size": "image_size", "dropout": "dropout_rate"}


def build_config(args, base=None):
    """TrainConfig from (defaults <- base <- --config file <- explicit flags)."""
    values = dict(base or {})
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    for flag, name in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    if values.get("d_stop_epoch") == "never":
        values["d_stop_epoch"] = None
    if getattr(args, "no_hourglass", False):
        values["use_hourglass"] = False
    if getattr(args, "no_hf_loss", False):
        values["use_hf_loss"] = False
    epochs = values.get("epochs", trainer.TrainConfig.epochs)
    stop = values.get("d_stop_epoch", trainer.TrainConfig.d_stop_epoch)
    if stop is not None and stop > epochs:
        log.info("d_stop_epoch %d exceeds %d epochs; the discriminator trains throughout", stop, epochs)
        values["d_stop_epoch"] = epochs
    return trainer.TrainConfig.from_dict(values)


# ---------------------------------------------------------------- commands

def cmd_compress(args):
    files = _pngs(args.inp)
    out = _prepare_out(args.out, args.no_clobber)
    rows = []
    for f in files:
        img = dataset.read_png(f)
        bs = codec.compress(img, args.quality)
        bs.save(out / (f.stem + ".jpg"))
        png_bytes = f.stat().st_size
        rows.append({"file": f.name, "png_bytes": png_bytes, "jpeg_bytes": bs.encoded_size,
                     "reduction": 1 - bs.encoded_size / png_bytes})
    agg = {"files": len(rows), "quality": args.quality,
           "mean_reduction": float(np.mean([r["reduction"] for r in rows])),
           "total_png_bytes": sum(r["png_bytes"] for r in rows),
           "total_jpeg_bytes": sum(r["jpeg_bytes"] for r in rows)}
    _write_json(out / "size_report.json", {"files": rows, "aggregate": agg})
    log.info("compressed %d files, mean reduction %.4f", len(rows), agg["mean_reduction"])
    return 0


def cmd_sample_corpus(args):
    out = _prepare_out(args.out, args.no_clobber)
    paths = samples.write_corpus(out, args.n, args.seed)
    log.info("wrote %d crops to %s", len(paths), out)
    return 0


def cmd_build_dataset(args):
    _existing_dir(args.inp)
    out = _prepare_out(args.out, args.no_clobber)
    pairs = dataset.build_pairs(args.inp, args.quality)
    if not pairs:
        raise UsageError(f"no usable 128x128 PNGs in {args.inp}")
    ds = dataset.split(pairs, args.ratio, args.seed)
    digest = dataset.save_dataset(ds, out, args.quality)
    log.info("%d train / %d test pairs, mean reduction %.4f, manifest sha256 %s",
             len(ds.train), len(ds.test), dataset.reduction(pairs), digest)
    return 0


def _load_split(path):
    return dataset.load_dataset(_existing_dir(path, "dataset directory"))


def cmd_train(args):
    ds = _load_split(args.inp)
    cfg = build_config(args)
    out = Path(args.out)
    if args.no_clobber and out.exists() and any(out.glob("epoch_*.pt")) and not args.resume:
        raise UsageError(f"{out} already holds checkpoints (--no-clobber)")
    out.mkdir(parents=True, exist_ok=True)
    if not args.resume:
        for old in list(out.glob("epoch_*.pt")) + list(out.glob("best.pt")):
            old.unlink()
    log_path = out / "train_log.jsonl"
    mode = "a" if args.resume and log_path.exists() else "w"
    with open(log_path, mode) as fh:
        def on_step(step):
            trainer.log_step(step)
            fh.write(json.dumps(step, sort_keys=True) + "\n")
        state = trainer.train(ds, cfg, out, resume=args.resume, on_step=on_step)
    _write_json(out / "config.json", asdict(cfg))
    log.info("finished %d epochs, %d iterations", state.epoch, state.iteration)
    return 0


def cmd_restore(args):
    gen = trainer.load_generator(args.checkpoint)
    files = _pngs(args.inp)
    out = _prepare_out(args.out, args.no_clobber)
    for f in files:
        dataset.write_png(out / f.name, trainer.restore(gen, dataset.read_png(f)))
    log.info("restored %d images into %s", len(files), out)
    return 0


def _pairs_for(ds, which):
    return ds.train if which == "train" else ds.test if which == "test" else ds.train + ds.test


def cmd_evaluate(args):
    root = _existing_dir(args.inp, "dataset directory")
    ds = dataset.load_dataset(root)
    pairs = _pairs_for(ds, args.split)
    if not pairs:
        raise UsageError(f"split {args.split!r} of {root} is empty")
    ids = [p.source_id for p in pairs]
    comp = metrics.evaluate([(p.original, p.compressed) for p in pairs], ids, "Lossy Compress.")
    if args.restored:
        rdir = _existing_dir(args.restored, "restored directory")
        restored = [dataset.read_png(rdir / f"{i}.png") for i in ids]
    elif args.checkpoint:
        gen = trainer.load_generator(args.checkpoint)
        restored = [trainer.restore(gen, p.compressed) for p in pairs]
    else:
        raise UsageError("evaluate needs --checkpoint or --restored")
    rest = metrics.evaluate([(p.original, r) for p, r in zip(pairs, restored)], ids, "Ours")
    table = metrics.format_table([(comp.label, comp.aggregate), (rest.label, rest.aggregate)])
    if args.out:
        out = _prepare_out(args.out, args.no_clobber)
        (out / "compressed.jsonl").write_text(comp.to_jsonl())
        (out / "restored.jsonl").write_text(rest.to_jsonl())
        (out / "table.txt").write_text(table + "\n")
    print(table)
    return 0


# ---------------------------------------------------------------- ablation

@dataclass
class AblationGrid:
    base: dict
    lambda_lf: tuple = LAMBDA_LF_GRID
    stop_epoch: int = 10
    arch: tuple = ARCH_GRID
    cells: list = field(init=False)

    def __post_init__(self):
        self.cells = []
        for lam in self.lambda_lf:
            for stop in (None, self.stop_epoch):
                name = f"lf{lam:g}-{'nonstop' if stop is None else 'stop'}"
                self.cells.append(("table2", name, dict(self.base, lambda_lf=lam, d_stop_epoch=stop)))
        for hourglass, hf in self.arch:
            name = f"hourglass-{'on' if hourglass else 'off'}_vgg-{'on' if hf else 'off'}"
            self.cells.append(("table3", name, dict(self.base, use_hourglass=hourglass, use_hf_loss=hf)))
        for _, _, cfg in self.cells:
            trainer.TrainConfig.from_dict(cfg)


def ablation_tables(grid, results, missing="failed"):
    """Render the lambda_LF x nonstop/stop table and the hourglass/VGG table."""
    t2 = [(name, results.get(name)) for tab, name, _ in grid.cells if tab == "table2"]
    t3 = [(name, results.get(name)) for tab, name, _ in grid.cells if tab == "table3"]
    t2_head = [("Metrics", [f"lambda_LF={lam:g}" for lam in grid.lambda_lf for _ in (0, 1)]),
               ("", ["nonstop", "stop"] * len(grid.lambda_lf))]
    t3_head = [("Hourglass Block", ["O" if h else "X" for h, _ in grid.arch]),
               ("VGG-16", ["O" if v else "X" for _, v in grid.arch])]
    return (metrics.format_table(t2, header_rows=t2_head, missing=missing),
            metrics.format_table(t3, header_rows=t3_head, missing=missing))


def run_ablation(grid, ds, eval_split="train", on_cell=None):
    """Train and evaluate every cell. Returns {cell name: aggregate or None if it failed}."""
    results = {}
    pairs = _pairs_for(ds, eval_split)
    for tab, name, cfg_dict in grid.cells:
        try:
            cfg = trainer.TrainConfig.from_dict(dict(cfg_dict, eval_each_epoch=False))
            state = trainer.train(ds, cfg, None, on_step=None)
            report, _ = trainer.evaluate_pairs(state.generator, pairs, label=name)
            results[name] = report.aggregate
        except Exception as exc:  # one broken cell must not sink the others
            log.error("ablation cell %s failed: %s", name, exc)
            results[name] = None
        if on_cell is not None:
            on_cell(name, results[name])
    return results


def cmd_ablate(args):
    base = {} if args.paper_scale else dict(DESK_SCALE)
    cfg = build_config(args, base)
    stop = cfg.d_stop_epoch if cfg.d_stop_epoch is not None else 10
    grid = AblationGrid(asdict(cfg), stop_epoch=min(stop, cfg.epochs))
    if args.dry_run:
        for tab, name, c in grid.cells:
            changed = {k: c[k] for k in ("lambda_lf", "d_stop_epoch", "use_hourglass", "use_hf_loss")}
            print(f"{tab}  {name:<28} {json.dumps(changed)}")
        t2, t3 = ablation_tables(grid, {}, missing="-")
        print(t2 + "\n\n" + t3)
        return 0
    ds = _load_split(args.inp)
    out = _prepare_out(args.out, args.no_clobber) if args.out else None
    records = []

    def on_cell(name, agg):
        records.append({"cell": name, "aggregate": agg})
        log.info("cell %s: %s", name, json.dumps(agg))

    results = run_ablation(grid, ds, args.split, on_cell)
    t2, t3 = ablation_tables(grid, results)
    if out is not None:
        (out / "table2.txt").write_text(t2 + "\n")
        (out / "table3.txt").write_text(t3 + "\n")
        (out / "cells.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    print(t2 + "\n\n" + t3)
    failed = [n for n, a in results.items() if a is None]
    if failed:
        log.error("%d ablation cell(s) failed: %s", len(failed), ", ".join(failed))
        return 1
    return 0


# ---------------------------------------------------------------- parser

def _add_train_flags(p):
    p.add_argument("--config", help="JSON file with TrainConfig defaults")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda-adv", type=float)
    p.add_argument("--lambda-lf", type=float)
    p.add_argument("--lambda-hf", type=float)
    p.add_argument("--d-stop-epoch", type=_stop_epoch, help="epoch after which D freezes, or 'never'")
    p.add_argument("--no-hourglass", action="store_true")
    p.add_argument("--no-hf-loss", action="store_true")
    p.add_argument("--adv-loss", choices=("log", "logless"))
    p.add_argument("--width", type=_positive_int, help="base channel width of G")
    p.add_argument("--disc-width", type=_positive_int)
    p.add_argument("--image-size", type=_positive_int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="jpegrestore", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, io=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        if io:
            p.add_argument("--in", dest="inp", required=True)
            p.add_argument("--out", required=True)
        p.add_argument("--no-clobber", action="store_true", help="refuse to write into a non-empty --out")
        return p

    p = command("compress", cmd_compress, "JPEG-encode every PNG in a directory")
    p.add_argument("--quality", type=_quality, default=codec.DEFAULT_QUALITY)

    p = command("sample-corpus", cmd_sample_corpus, "write 128x128 natural-image crops", io=False)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = command("build-dataset", cmd_build_dataset, "pair PNGs with their compressed versions")
    p.add_argument("--quality", type=_quality, default=codec.DEFAULT_QUALITY)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8, help="train fraction")

    p = command("train", cmd_train, "train the restoration GAN on a built dataset")
    _add_train_flags(p)
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint in --out")

    p = command("restore", cmd_restore, "restore every PNG in a directory with a trained generator")
    p.add_argument("--checkpoint", required=True)

    p = command("evaluate", cmd_evaluate, "PSNR/SSIM/VIF of compressed and restored images", io=False)
    p.add_argument("--in", dest="inp", required=True, help="dataset directory")
    p.add_argument("--out")
    p.add_argument("--checkpoint")
    p.add_argument("--restored", help="directory of restored PNGs named <source_id>.png")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")

    p = command("ablate", cmd_ablate, "lambda_LF/stop and hourglass/VGG ablation grids", io=False)
    p.add_argument("--in", dest="inp", help="dataset directory")
    p.add_argument("--out")
    _add_train_flags(p)
    p.add_argument("--dry-run", action="store_true", help="print the planned grid only")
    p.add_argument("--paper-scale", action="store_true", help="use paper hyperparameters instead of desk scale")
    p.add_argument("--split", choices=("train", "test", "all"), default="train")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    logging.getLogger("jpegrestore").setLevel(logging.DEBUG if args.verbose else logging.INFO)
    if args.command == "ablate" and not args.dry_run and not args.inp:
        parser.error("ablate needs --in unless --dry-run is given")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, codec.CodecError, trainer.CheckpointError,
            losses.FeatureExtractorError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
