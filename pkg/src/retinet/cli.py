"""Command-line entry point: ``python -m retinet <command>``.

Exit codes: 0 success, 1 I/O or runtime failure, 2 usage error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, metrics, synth
from .autodiff.checkpoint import load_checkpoint, restore_module
from .autodiff.optim import LrSchedule
from .errors import ConfigurationError, UsageError
from .imaging import IntrinsicSet, compose_diffuse
from .networks.config import PAPER_CONFIG, IntrinsicNetConfig, RetiNetConfig
from .networks.models import IntrinsicNet, RetiNet
from .networks.train import (STREAM_INIT, GradientTask, IntrinsicTask, ReintegrationTask,
                             TrainingData, TrainingLog, decompose, stream, train)
from .retinex import RetinexParams, retinex_decompose

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3
OUT_ROOT_ENV = "RETINET_OUT"
CHECKPOINT = "checkpoint.ckpt"
TRAIN_LOG = "train.log"
MODEL_CONFIG = "config.json"
RUN_CONFIG = "run_config.json"

log = logging.getLogger("retinet")


class VerificationFailed(Exception):
    pass


def _canvas(text: str) -> tuple[int, int]:
    parts = text.lower().replace(",", "x").split("x")
    try:
        h, w = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"canvas must look like 32x32, got {text!r}") from None
    if h < 2 or w < 2:
        raise argparse.ArgumentTypeError("canvas sides must be >= 2")
    return h, w


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"widths must be comma-separated integers, got {text!r}") from None


def default_out(command: str) -> Path:
    return Path(os.environ.get(OUT_ROOT_ENV, "runs")) / command


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def resolved_config(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return {k: (list(v) if isinstance(v, tuple) else str(v) if isinstance(v, Path) else v)
            for k, v in d.items()}


# -- dataset ---------------------------------------------------------------

def cmd_dataset(args) -> int:
    out = Path(args.out) if args.out else default_out("dataset")
    m = synth.dataset_gen(args.n, args.seed, out, args.formation, args.canvas)
    _write_json(out / RUN_CONFIG, resolved_config(args) | {"out": str(out)})
    print(f"dataset: {m.count} samples, formation={m.formation}, manifest sha256={m.checksum()}")
    return EXIT_OK


# -- train -----------------------------------------------------------------

def _model_config(args):
    widths = args.widths or (PAPER_CONFIG.block_widths if args.paper_scale else None)
    base = IntrinsicNetConfig() if widths is None else IntrinsicNetConfig(block_widths=tuple(widths))
    if args.model == "intrinsicnet":
        return IntrinsicNetConfig.from_dict(base.to_dict() | {"use_imf_loss": args.imf == "on"})
    if args.model == "retinet-s1":
        return IntrinsicNetConfig.from_dict(base.to_dict() | {"input_channels": 6, "use_imf_loss": False})
    s1 = IntrinsicNetConfig.from_dict(base.to_dict() | {"input_channels": 6, "use_imf_loss": False})
    return RetiNetConfig(stage1=s1)


def save_model_config(out: Path, model: str, config) -> None:
    _write_json(out / MODEL_CONFIG, {"model": model, "config": config.to_dict()})


def load_model(checkpoint) -> tuple[str, object]:
    """Rebuild a model from a checkpoint and the ``config.json`` beside it."""
    path = Path(checkpoint)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    cfg_path = path.parent / MODEL_CONFIG
    if not cfg_path.exists():
        raise FileNotFoundError(f"model config not found: {cfg_path}")
    d = json.loads(cfg_path.read_text())
    kind = d["model"]
    if kind == "retinet-s2":
        model = RetiNet(RetiNetConfig.from_dict(d["config"]))
    else:
        model = IntrinsicNet(IntrinsicNetConfig.from_dict(d["config"]))
    restore_module(model, load_checkpoint(path))
    return kind, model


def cmd_train(args) -> int:
    out = Path(args.out) if args.out else default_out("train")
    if args.model == "retinet-s2" and not args.gt_gradients and not args.stage1:
        raise UsageError("retinet-s2 needs --stage1 CHECKPOINT unless --gt-gradients is given")
    if args.model != "retinet-s2" and (args.stage1 or args.gt_gradients):
        raise UsageError("--stage1 and --gt-gradients apply to retinet-s2 only")
    data = TrainingData.from_samples(synth.load_samples(args.data))
    cfg = _model_config(args)
    init = stream(args.seed, STREAM_INIT)
    if args.model == "retinet-s2":
        if args.stage1:
            kind, s1 = load_model(args.stage1)
            if kind != "retinet-s1":
                raise UsageError(f"--stage1 must be a retinet-s1 checkpoint, got {kind}")
            cfg = RetiNetConfig(stage1=s1.config)
        model = RetiNet(cfg, init)
        if args.stage1:
            restore_module(model.stage1, load_checkpoint(args.stage1))
        task = ReintegrationTask(model, use_gt_gradients=args.gt_gradients)
    elif args.model == "retinet-s1":
        model = IntrinsicNet(cfg, init)
        task = GradientTask(model, "magnitude")
    else:
        model = IntrinsicNet(cfg, init)
        task = IntrinsicTask(model)
    if data.image.shape[2] % model_multiple(model) or data.image.shape[3] % model_multiple(model):
        raise ConfigurationError(f"training images {data.image.shape[2]}x{data.image.shape[3]} are not "
                                 f"multiples of {model_multiple(model)}")

    out.mkdir(parents=True, exist_ok=True)
    ckpt_path, log_path = out / CHECKPOINT, out / TRAIN_LOG
    steps_per_epoch = -(-len(data) // args.batch_size)
    lr0, lr_end = (1e-5, 1e-7) if args.lr is None else tuple(args.lr)
    schedule = LrSchedule(lr0, lr_end, max(1, args.epochs * steps_per_epoch))
    train_log, start = TrainingLog(), 0
    if args.resume:
        if not ckpt_path.exists():
            raise FileNotFoundError(f"nothing to resume: {ckpt_path} does not exist")
        ck = load_checkpoint(ckpt_path)
        restore_module(task.checkpoint_module(), ck)
        start = ck.step
        if log_path.exists():
            train_log = TrainingLog.read(log_path)
            train_log.records = [r for r in train_log.records if r["step"] <= start]
    save_model_config(out, args.model, model.config)
    _write_json(out / RUN_CONFIG, resolved_config(args) | {"out": str(out)})
    progress = log.info if args.verbose else None
    train(task, data, args.epochs, schedule, args.seed, augment=not args.no_augment,
          batch_size=args.batch_size, log=train_log, checkpoint_path=ckpt_path,
          log_path=log_path, start_step=start, progress=progress)
    last = train_log.records[-1] if train_log.records else None
    tail = f", final loss_cl={last['loss_cl']:.6g}" if last else ""
    print(f"train: {args.model}, {len(train_log.records)} steps logged{tail}, checkpoint {ckpt_path}")
    return EXIT_OK


def model_multiple(model) -> int:
    return (model.stage1 if isinstance(model, RetiNet) else model).multiple


# -- decompose -------------------------------------------------------------

def _stem(path: Path) -> str:
    stem = path.stem
    return stem[:-len("_image")] if stem.endswith("_image") else stem


def cmd_decompose(args) -> int:
    out = Path(args.out) if args.out else default_out("decompose")
    if bool(args.model) == bool(args.retinex):
        raise UsageError("give exactly one of --model CHECKPOINT or --retinex")
    model = None
    if args.model:
        kind, model = load_model(args.model)
        if kind == "retinet-s1":
            raise UsageError("a retinet-s1 checkpoint predicts gradients; use intrinsicnet or retinet-s2")
    out.mkdir(parents=True, exist_ok=True)
    params = RetinexParams(threshold=args.threshold)
    for p in map(Path, args.input):
        try:
            img = io.read_image(p, args.gamma)[:, :, :3]
        except (OSError, ValueError) as e:
            raise OSError(f"cannot read input {p}: {e}") from e
        res = retinex_decompose(img, params) if model is None else decompose(model, img)
        name = _stem(p)
        recon = compose_diffuse(res.reflectance, res.shading)
        io.write_pfm(out / f"{name}_reflectance.pfm", res.reflectance.astype(np.float32))
        io.write_pfm(out / f"{name}_shading.pfm", res.shading.astype(np.float32))
        io.write_png(out / f"{name}_reflectance.png", res.reflectance)
        io.write_png(out / f"{name}_shading.png", res.shading)
        io.write_png(out / f"{name}_reconstruction.png", recon)
        err = float(np.mean((recon - img) ** 2))
        print(f"decompose: {p} -> {out}/{name}_*, reconstruction mse={err:.6g}")
    _write_json(out / RUN_CONFIG, resolved_config(args) | {"out": str(out)})
    return EXIT_OK


# -- eval ------------------------------------------------------------------

def load_predictions(directory) -> tuple[dict[str, IntrinsicSet], list[str]]:
    """Read ``<name>_reflectance.pfm`` / ``<name>_shading.pfm`` pairs.

    Returns the complete pairs and the names whose shading file is missing.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {root}")
    preds, incomplete = {}, []
    for p in sorted(root.glob("*_reflectance.pfm")):
        name = p.name[:-len("_reflectance.pfm")]
        s = root / f"{name}_shading.pfm"
        if s.exists():
            preds[name] = IntrinsicSet(io.read_pfm(p), io.read_pfm(s))
        else:
            incomplete.append(name)
    return preds, incomplete


def cmd_eval(args) -> int:
    gt_items = synth.load_benchmark(args.gt, args.gamma)
    preds, incomplete = load_predictions(args.pred)
    gts = {it.name: it for it in gt_items}
    missing_pred = sorted(set(gts) - set(preds) - set(incomplete))
    missing_gt = sorted(set(preds) - set(gts))
    if missing_pred or missing_gt or incomplete:
        lines = [f"  no prediction for ground truth {n}" for n in missing_pred]
        lines += [f"  no ground truth for prediction {n}" for n in missing_gt]
        lines += [f"  prediction {n} lacks a shading file" for n in incomplete]
        raise OSError("unmatched prediction/ground-truth pairs:\n" + "\n".join(lines))
    names = sorted(gts)
    report = metrics.evaluate_set([preds[n] for n in names], [gts[n].intrinsics for n in names],
                                  metrics.WindowSpec(args.k), names, [gts[n].mask for n in names])
    out = Path(args.out) if args.out else Path(args.pred)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    _write_json(out / "eval_config.json", resolved_config(args) | {"out": str(out)})
    print(report.table())
    print(f"eval: report written to {out / 'report.csv'}")
    return EXIT_OK


# -- verify ----------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import verify
    report = verify.run_verify(args.seed, args.trials, progress=print)
    for line in report.summary():
        print(line)
    print(f"verify: {len(report.results)} checks in {report.seconds:.1f} s")
    if not report.passed:
        worst = max(report.failures(), key=lambda r: r.error)
        raise VerificationFailed(f"{worst.name} failed at seed {worst.seed}: "
                                 f"max relative error {worst.error:.3e} (tol {worst.tol:.0e})")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_nonneg_int, default=0)
    common.add_argument("--out", default=None,
                        help=f"output directory (default ${OUT_ROOT_ENV}/<command> or runs/<command>)")
    common.add_argument("--threads", type=_nonneg_int, default=0,
                        help="BLAS thread cap; 0 leaves the library default")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--config", default=None, help="JSON file of flag values; explicit flags win")

    parser = argparse.ArgumentParser(prog="retinet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"retinet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("dataset", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--n", type=_nonneg_int, default=8)
    p.add_argument("--formation", choices=synth.FORMATIONS, default="diffuse")
    p.add_argument("--canvas", type=_canvas, default=(32, 32))
    p.set_defaults(func=cmd_dataset)
    subs["dataset"] = p

    p = sub.add_parser("train", parents=[common], help="train IntrinsicNet or a RetiNet stage")
    p.add_argument("--model", choices=("intrinsicnet", "retinet-s1", "retinet-s2"), default="intrinsicnet")
    p.add_argument("--data", required=True, help="dataset directory or manifest.json")
    p.add_argument("--epochs", type=_nonneg_int, default=1)
    p.add_argument("--imf", choices=("on", "off"), default="on")
    p.add_argument("--gt-gradients", action="store_true", help="stage 2: train on ground-truth gradients")
    p.add_argument("--stage1", default=None, help="stage 2: retinet-s1 checkpoint")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--paper-scale", action="store_true", help="VGG16-like widths (64,128,256,512)")
    p.add_argument("--widths", type=_widths, default=None, help="encoder widths, e.g. 16,32,64")
    p.add_argument("--lr", type=float, nargs=2, metavar=("LR0", "LR_END"), default=None,
                   help="polynomial decay endpoints (default 1e-5 1e-7)")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(func=cmd_train)
    subs["train"] = p

    p = sub.add_parser("decompose", parents=[common], help="split images into reflectance and shading")
    p.add_argument("--model", default=None, help="checkpoint (config.json must sit beside it)")
    p.add_argument("--retinex", action="store_true", help="use the classical Retinex baseline")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--gamma", type=float, default=None, help="undo this gamma on PNG inputs")
    p.add_argument("--threshold", type=float, default=RetinexParams.threshold)
    p.set_defaults(func=cmd_decompose)
    subs["decompose"] = p

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True, help="dataset directory or benchmark directory")
    p.add_argument("--k", type=int, default=20, help="LMSE window size")
    p.add_argument("--gamma", type=float, default=None)
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("verify", parents=[common], help="gradient checks and invariant oracles")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_verify)
    subs["verify"] = p
    return parser, subs


def parse_args(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read --config {args.config}: {e}") from e
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(unknown)}")
        # config values become defaults, so flags given on the command line still win
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
        for k in ("canvas", "widths"):
            if isinstance(getattr(args, k, None), list):
                setattr(args, k, tuple(getattr(args, k)))
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as e:  # argparse: --help exits 0, bad flags exit 2
        return int(e.code or 0)
    except UsageError as e:
        print(f"retinet: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as e:
        print(f"retinet: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationFailed as e:
        print(f"retinet: verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (OSError, ValueError, RuntimeError, FloatingPointError, KeyError) as e:
        print(f"retinet: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
