"""Command line entry points.

Subcommands: ``make-fixture`` (synthetic scenes), ``collect`` (triplet proxy
extraction), ``pretrain`` (contrastive training), ``classify`` (zero-shot
prediction, optionally ensembled with external logit files) and ``evaluate``
(recognition and localization reports).

Exit codes: 0 success, 2 configuration/input-validity errors, 3 I/O or file
format errors, 4 numerical aborts. Logs go to stderr; data products only to
the declared output paths, so identical inputs and seeds reproduce
byte-identical outputs.
"""

import argparse
import glob
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import collect, io, metrics, training, zero_shot
from .embeddings import FileEmbeddingProvider, ProviderMissError
from .encoder import DegenerateEmbeddingError
from .fixtures import make_fixture
from .geometry import CalibrationError, aabb_center
from .training import NonFiniteLossError, encode_clouds

log = logging.getLogger("pointalign")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _add_make_fixture(sub):
    p = sub.add_parser("make-fixture", help="generate a synthetic scene fixture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=20, help="train objects per class")
    p.add_argument("--test-per-class", type=int, default=5, help="held-out objects per class")
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--scene-type", choices=["outdoor", "indoor"], default="outdoor")
    p.add_argument("--points-per-object", type=int, default=260)
    p.add_argument("--seed", type=int, default=0)
    return p


def _add_collect(sub):
    p = sub.add_parser("collect", help="extract triplet proxies from scenes")
    p.add_argument("--scenes", required=True, help="directory of .pcf/.dpt + .calib files")
    p.add_argument("--detections", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="output triplet file")
    p.add_argument("--scene-type", choices=["outdoor", "indoor"], default="outdoor")
    p.add_argument("--score-threshold", type=float, default=collect.DEFAULT_SCORE_THRESHOLD)
    p.add_argument("--near", type=float, default=0.5)
    p.add_argument("--far", type=float, default=80.0)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--min-samples", type=int, default=5)
    p.add_argument("--min-cluster-size", type=int, default=20)
    p.add_argument("--band-halfwidth", type=float, default=0.5)
    p.add_argument("--min-points", type=int, default=32)
    p.add_argument("--workers", type=int, default=1)
    return p


def _add_pretrain(sub):
    p = sub.add_parser("pretrain", help="contrastive pretraining of the point encoder")
    p.add_argument("--triplets", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument(
        "--config",
        help="key = value file of pretrain options; explicit flags take precedence",
    )
    p.add_argument("--report", help="step log path (step, lr, loss)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--template", default=zero_shot.DEFAULT_TEMPLATE)
    p.add_argument("--hidden1", type=int, default=64)
    p.add_argument("--hidden2", type=int, default=128)
    p.add_argument("--hidden3", type=int, default=128)
    p.add_argument("--n-points", type=int, default=2048)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--lambda-text", type=float, default=0.5)
    p.add_argument("--lambda-image", type=float, default=0.5)
    p.add_argument("--learning-rate", type=float, default=0.006)
    p.add_argument("--weight-decay", type=float, default=0.03)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--warmup-iters", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--repeat-threshold", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    return p


def _add_classify(sub):
    p = sub.add_parser("classify", help="zero-shot classification of triplet proxies")
    p.add_argument("--triplets", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--classes", required=True, help="class name list, one per line")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="predictions path (top-5 per instance)")
    p.add_argument("--logits-out", help="optional full probability file for ensembling")
    p.add_argument("--ensemble-logits", nargs="*", default=[], help="external logit files to sum in")
    p.add_argument("--template", default=zero_shot.DEFAULT_TEMPLATE)
    p.add_argument("--n-points", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    return p


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="recognition (and optional localization) report")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--out", required=True, help="report path (TSV)")
    p.add_argument("--localization", action="store_true")
    p.add_argument("--distance-threshold", type=float, default=2.0)
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pointalign",
        description="Triplet proxy collection, contrastive pretraining and zero-shot evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_make_fixture(sub)
    _add_collect(sub)
    _add_pretrain(sub)
    _add_classify(sub)
    _add_evaluate(sub)
    return parser


def _require_paths(*paths):
    for path in paths:
        if path and not os.path.exists(path):
            raise FileNotFoundError(f"input path does not exist: {path}")


def _read_config_flags(path):
    """Turn a ``key = value`` config file into an argv fragment."""
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            flags += ["--" + key.strip().replace("_", "-"), value.strip()]
    return flags


def _inject_config(argv):
    """Splice config-file options in right after the subcommand so that
    explicit command-line flags override them."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        return argv
    flags = _read_config_flags(argv[at + 1])
    return argv[:1] + flags + argv[1:]


def cmd_make_fixture(args):
    summary = make_fixture(
        args.out,
        n_classes=args.classes,
        per_class=args.per_class,
        test_per_class=args.test_per_class,
        embed_dim=args.embed_dim,
        seed=args.seed,
        scene_type=args.scene_type,
        points_per_object=args.points_per_object,
    )
    for split, stats in summary["splits"].items():
        log.info("%s: %d scenes, %d instances", split, stats["scenes"], stats["instances"])
    return EXIT_OK


def _collect_scene(args, vocabulary, provider, detections, scene_path):
    scene_id = os.path.splitext(os.path.basename(scene_path))[0]
    calib_path = os.path.splitext(scene_path)[0] + ".calib"
    _require_paths(calib_path)
    calib = io.read_calibration(calib_path)
    boxes = detections.get(scene_id, [])
    if args.scene_type == "outdoor":
        points, _ = io.read_point_cloud(scene_path)
        records, skips = collect.collect_outdoor(
            points,
            calib,
            boxes,
            provider,
            vocabulary,
            scene_id,
            near=args.near,
            far=args.far,
            eps=args.eps,
            min_samples=args.min_samples,
            min_cluster_size=args.min_cluster_size,
        )
    else:
        depth = io.read_depth_image(scene_path)
        records, skips = collect.collect_indoor(
            depth,
            calib,
            boxes,
            provider,
            vocabulary,
            scene_id,
            band_halfwidth=args.band_halfwidth,
            min_points=args.min_points,
        )
    return scene_id, records, skips


def cmd_collect(args):
    _require_paths(args.scenes, args.detections, args.vocab, args.embeddings)
    vocabulary = io.read_vocabulary(args.vocab)
    provider = FileEmbeddingProvider(args.embeddings)
    detections = io.read_detections(args.detections, score_threshold=args.score_threshold)
    pattern = "*.pcf" if args.scene_type == "outdoor" else "*.dpt"
    scene_paths = sorted(glob.glob(os.path.join(args.scenes, pattern)))
    if not scene_paths:
        log.warning("no %s scenes under %s", args.scene_type, args.scenes)

    def worker(path):
        return _collect_scene(args, vocabulary, provider, detections, path)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(worker, scene_paths))
    else:
        results = [worker(path) for path in scene_paths]
    results.sort(key=lambda item: item[0])
    all_records = []
    for scene_id, records, skips in results:
        reasons = {}
        for _, reason in skips:
            reasons[reason] = reasons.get(reason, 0) + 1
        skip_text = " ".join(f"{k}={v}" for k, v in sorted(reasons.items())) or "-"
        log.info("scene=%s records=%d skips: %s", scene_id, len(records), skip_text)
        all_records.extend(records)
    io.write_triplets(args.out, all_records, provider.dim)
    log.info("wrote %d records to %s", len(all_records), args.out)
    return EXIT_OK


def cmd_pretrain(args):
    _require_paths(args.triplets, args.vocab, args.embeddings, args.resume)
    vocabulary = io.read_vocabulary(args.vocab)
    provider = FileEmbeddingProvider(args.embeddings)
    report = training.train(
        args.triplets,
        vocabulary,
        provider,
        args.out,
        template=args.template,
        report_path=args.report,
        resume_from=args.resume,
        hidden1=args.hidden1,
        hidden2=args.hidden2,
        hidden3=args.hidden3,
        n_points=args.n_points,
        batch_size=args.batch_size,
        temperature=args.temperature,
        lambda_text=args.lambda_text,
        lambda_image=args.lambda_image,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        beta1=args.beta1,
        beta2=args.beta2,
        warmup_iters=args.warmup_iters,
        epochs=args.epochs,
        max_steps=args.max_steps,
        repeat_threshold=args.repeat_threshold,
        seed=args.seed,
    )
    for epoch, loss in enumerate(report.epoch_losses):
        log.info("epoch=%d mean_loss=%.6f", epoch, loss)
    log.info(
        "trained %d steps; checkpoint %s (sha256 %s)",
        report.total_steps,
        args.out,
        report.checkpoint_digest,
    )
    return EXIT_OK


def _read_class_list(path):
    with open(path, encoding="utf-8") as fh:
        names = [line.strip() for line in fh if line.strip()]
    if not names:
        raise ValueError(f"class list {path} is empty")
    return names


def cmd_classify(args):
    _require_paths(args.triplets, args.checkpoint, args.classes, args.embeddings)
    _require_paths(*args.ensemble_logits)
    params = io.load_encoder(args.checkpoint)
    class_names = _read_class_list(args.classes)
    provider = FileEmbeddingProvider(args.embeddings)
    bank = zero_shot.build_class_bank(class_names, provider, template=args.template)
    if bank.vectors.shape[1] != params.embed_dim:
        raise ValueError(
            f"class bank dimension {bank.vectors.shape[1]} does not match "
            f"checkpoint embedding dimension {params.embed_dim}"
        )
    _, records = io.read_triplets(args.triplets)
    feats = encode_clouds(params, [r.points for r in records], args.n_points, seed=args.seed)
    ids = [r.instance_id for r in records]
    probs = np.stack([zero_shot.classify_proba(f, bank) for f in feats]) if records else np.empty((0, bank.size))
    external = []
    for path in args.ensemble_logits:
        ext_ids, ext_probs = io.read_logits(path)
        if ext_probs.shape[1] != bank.size:
            raise ValueError(f"{path}: {ext_probs.shape[1]} classes, expected {bank.size}")
        external.append(dict(zip(ext_ids, ext_probs)))
    rows = []
    final = []
    for i, rec in enumerate(records):
        row = probs[i]
        if external:
            extra = []
            for table in external:
                if rec.instance_id not in table:
                    raise ValueError(f"ensemble logits missing instance {rec.instance_id}")
                extra.append(table[rec.instance_id])
            row = zero_shot.ensemble_proba([row] + extra)
        final.append(row)
        order = zero_shot.top_k(row, 5)
        ranked = [(class_names[k], float(row[k])) for k in order]
        rows.append((rec.instance_id, aabb_center(rec.points.astype(np.float64)), ranked))
    io.write_predictions(args.out, rows)
    if args.logits_out:
        io.write_logits(args.logits_out, ids, np.stack(final) if final else np.empty((0, bank.size)))
    log.info("classified %d instances into %d classes", len(records), bank.size)
    return EXIT_OK


def cmd_evaluate(args):
    _require_paths(args.predictions, args.labels, args.classes)
    class_names = _read_class_list(args.classes)
    index_of = {name: i for i, name in enumerate(class_names)}
    predictions = io.read_predictions(args.predictions)
    labels = io.read_labels(args.labels)
    topk, true_idx, centers, pred_top1 = [], [], [], []
    for inst, center, ranked in predictions:
        if inst not in labels:
            raise ValueError(f"prediction {inst} has no label")
        true_name, _ = labels[inst]
        if true_name not in index_of:
            raise ValueError(f"label class {true_name!r} not in the class list")
        for name, _ in ranked:
            if name not in index_of:
                raise ValueError(f"predicted class {name!r} not in the class list")
        topk.append([index_of[name] for name, _ in ranked])
        true_idx.append(index_of[true_name])
        centers.append(center)
        pred_top1.append(index_of[ranked[0][0]])
    report = metrics.recognition_report(topk, true_idx, class_names=class_names)
    if args.localization:
        gt_centers = [center for _, center in labels.values()]
        gt_classes = [index_of[name] for name, _ in labels.values()]
        report.localization = metrics.localization_pr(
            np.array(centers).reshape(-1, 3),
            pred_top1,
            np.array(gt_centers).reshape(-1, 3),
            gt_classes,
            threshold=args.distance_threshold,
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_tsv())
    log.info("avg top1 %.4f, avg top5 %.4f over %d instances",
             report.avg_top1, report.avg_top5, report.total_instances)
    if report.localization is not None:
        loc = report.localization
        log.info("localization: tp=%d fp=%d fn=%d", loc.tp, loc.fp, loc.fn)
    return EXIT_OK


_COMMANDS = {
    "make-fixture": cmd_make_fixture,
    "collect": cmd_collect,
    "pretrain": cmd_pretrain,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
}


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
    except FileNotFoundError as exc:
        log.error("i/o failure: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("invalid configuration or input: %s", exc)
        return EXIT_CONFIG
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (NonFiniteLossError, DegenerateEmbeddingError) as exc:
        log.error("numerical abort: %s", exc)
        return EXIT_NUMERIC
    except io.FormatError as exc:
        log.error("bad file: %s", exc)
        return EXIT_IO
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        log.error("i/o failure: %s", exc)
        return EXIT_IO
    except (ProviderMissError, CalibrationError, ValueError, KeyError) as exc:
        log.error("invalid configuration or input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
