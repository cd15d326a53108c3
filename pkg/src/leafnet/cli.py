"""Command-line entry point: ``leafnet {train,eval,predict,embed,synth}``.

Exit codes: 0 ok, 2 usage or dataset/image problem, 3 model file or numeric
failure, 4 I/O failure writing outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .analytics import (TsneConfig, confusion_matrix, extract_features, perplexity_affinities,
                        predictions_for, tsne_embed, write_confusion_csv, write_embeddings_csv,
                        write_metrics_csv)
from .data import FileDataset, read_image, resize_bilinear, scan_directory, split_train_val
from .errors import ConfigError, DatasetError, DecodeError, ModelFileError, NumericError
from .model import default_model
from .serialize import load_model, model_id, save_model
from .synth import gen_synthetic
from .train import TrainingConfig, evaluate, fit, format_epoch, predict_proba
from .treatments import load_treatments, recommend

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("leafnet")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {v}")
    return v


def _fail(code: int, msg: str) -> int:
    print(f"leafnet: error: {msg}", file=sys.stderr)
    return code


def _load(path) -> tuple:
    try:
        return load_model(path)
    except (ModelFileError, OSError) as exc:
        raise _CommandError(EXIT_MODEL, f"cannot load model {path}: {exc}") from exc


class _CommandError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _check_classes(scan_names, model_names, data_dir):
    if list(scan_names) != list(model_names):
        raise _CommandError(EXIT_USAGE, f"class directories in {data_dir} do not match the model's classes "
                                        f"{model_names}")


# --------------------------------------------------------------------------- commands

def cmd_train(args) -> int:
    scan = scan_directory(args.data)
    split = split_train_val(scan.items, args.val_split, args.seed, scan.class_names)
    cfg = TrainingConfig(epochs=args.epochs, batch_size=args.batch, val_split=args.val_split,
                         image_size=args.img_size, seed=args.seed, augment=args.augment, lr=args.lr,
                         record_time=not args.deterministic)
    model = default_model(args.img_size, len(scan.class_names), seed=args.seed)
    train_ds = FileDataset(split.train, args.img_size)
    val_ds = FileDataset(split.val, args.img_size)
    _, records = fit(model, train_ds, val_ds, cfg,
                     log=lambda r: print(format_epoch(r, cfg.epochs), flush=True))
    try:
        mid = save_model(model, scan.class_names, args.out)
        write_metrics_csv(records, args.metrics)
        if args.confusion:
            preds = predictions_for(model, val_ds)
            write_confusion_csv(confusion_matrix(preds, val_ds.labels, len(scan.class_names),
                                                 scan.class_names), args.confusion)
    except OSError as exc:
        raise _CommandError(EXIT_IO, f"cannot write outputs: {exc}") from exc
    log.info("saved model %s (id %s)", args.out, mid)
    return EXIT_OK


def cmd_eval(args) -> int:
    model, names = _load(args.model)
    scan = scan_directory(args.data)
    _check_classes(scan.class_names, names, args.data)
    if args.all:
        items = scan.items
    else:
        items = split_train_val(scan.items, args.val_split, args.seed, scan.class_names).val
    ds = FileDataset(items, model.input_shape[0])
    loss, acc = evaluate(model, ds, args.batch)
    cm = confusion_matrix(predictions_for(model, ds, args.batch), ds.labels, len(names), names)
    try:
        write_confusion_csv(cm, args.out)
    except OSError as exc:
        raise _CommandError(EXIT_IO, f"cannot write {args.out}: {exc}") from exc
    print(f"accuracy={acc:.4f} loss={loss:.4f}")
    return EXIT_OK


def prediction_report(probs: np.ndarray, names, top_k: int, rules, mid: str) -> dict:
    order = sorted(range(len(probs)), key=lambda i: (-float(probs[i]), i))[:top_k]
    top = [{"class": names[i], "p": float(probs[i])} for i in order]
    rule = recommend(top[0]["class"], rules) if rules is not None else None
    return {
        "class": top[0]["class"],
        "confidence": top[0]["p"],
        "top_k": top,
        "treatment": rule.to_json() if rule is not None else None,
        "model_id": mid,
    }


def cmd_predict(args) -> int:
    model, names = _load(args.model)
    rules = None
    if args.treatments:
        try:
            rules = load_treatments(args.treatments)
        except (ConfigError, OSError) as exc:
            raise _CommandError(EXIT_USAGE, f"cannot load treatments: {exc}") from exc
    h, w, _ = model.input_shape
    img = resize_bilinear(read_image(args.image), h, w)
    probs = predict_proba(model, img[None])[0].astype(np.float64)
    report = prediction_report(probs, names, args.top_k, rules, model_id(args.model))
    print(json.dumps(report))
    return EXIT_OK


def cmd_embed(args) -> int:
    model, names = _load(args.model)
    scan = scan_directory(args.data)
    _check_classes(scan.class_names, names, args.data)
    n = len(scan.items)
    if n < 3 * args.perplexity:
        raise _CommandError(EXIT_USAGE, f"{n} samples is too few for perplexity {args.perplexity:g}; "
                                        f"use --perplexity {max(2.0, (n - 1) / 3):.1f} or lower")
    ds = FileDataset(scan.items, model.input_shape[0])
    feats, labels = extract_features(model, ds, args.batch)
    cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iters, seed=args.seed)
    p = perplexity_affinities(feats.astype(np.float64), cfg.effective_perplexity(n))
    emb = tsne_embed(p, cfg, labels)
    try:
        write_embeddings_csv(emb.points, labels, names, args.out)
    except OSError as exc:
        raise _CommandError(EXIT_IO, f"cannot write {args.out}: {exc}") from exc
    log.info("final KL divergence %.4f", emb.kl_trace[-1])
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        files = gen_synthetic(args.out, args.per_class, args.size, args.seed)
    except OSError as exc:
        raise _CommandError(EXIT_IO, f"cannot write synthetic dataset: {exc}") from exc
    log.info("wrote %d images under %s", len(files), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leafnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the CNN on a directory-per-class dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--batch", type=_positive_int, default=32)
    p.add_argument("--img-size", type=_positive_int, default=180)
    p.add_argument("--val-split", type=_fraction, default=0.2)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", default="model.leaf")
    p.add_argument("--metrics", default="metrics.csv")
    p.add_argument("--confusion", default=None, help="also write the validation confusion CSV here")
    p.add_argument("--deterministic", action="store_true",
                   help="write 0 for epoch durations so repeated runs are byte-identical")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="confusion matrix and accuracy on the validation split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="confusion.csv")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--val-split", type=_fraction, default=0.2)
    p.add_argument("--all", action="store_true", help="evaluate every file instead of the validation split")
    p.add_argument("--batch", type=_positive_int, default=32)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one image and look up a treatment")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--treatments", default=None)
    p.add_argument("--top-k", type=_positive_int, default=3)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("embed", help="t-SNE projection of penultimate-layer features")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="embeddings.csv")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--batch", type=_positive_int, default=32)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("synth", help="write the procedural eight-class dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=_positive_int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth" and args.size < 16:
        parser.error("--size must be >= 16")
    if args.command == "embed" and (args.perplexity < 2 or args.iters < 250):
        parser.error("--perplexity must be >= 2 and --iters >= 250")
    try:
        return args.func(args)
    except _CommandError as exc:
        return _fail(exc.code, str(exc))
    except (DecodeError, DatasetError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except NumericError as exc:
        return _fail(EXIT_MODEL, f"numeric failure: {exc}")
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
