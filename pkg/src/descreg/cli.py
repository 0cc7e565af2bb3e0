"""Command-line entry point.

Commands:

* ``sim`` — export the normalized (or raw) inter-class similarity matrix.
* ``simulate`` — generate a synthetic dataset directory.
* ``split`` — propose a seen/unseen split by clustering embeddings.
* ``crop-plan`` — plan sliding-window patches for a large image.
* ``train`` — train an alignment model on labeled regions.
* ``infer`` — score regions with a trained model and emit detections.
* ``synth-train`` — fit the feature generator on seen-class regions.
* ``synth-classify`` — train a classifier on synthesized features.
* ``eval`` — score detections against ground truth (zsd or gzsd).
* ``reproduce`` — end-to-end comparison of regularizer modes over seeds.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 threshold
failure in ``reproduce --check``.  Every command is deterministic given
``--seed``: rerunning with the same inputs reproduces output files byte for
byte.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .alignment import (
    infer_detections,
    load_model,
    save_model,
    train_alignment,
)
from .catalog import load_embeddings, save_split
from .config import RunConfig, calibrated_config, default_config, load_config
from .detmetrics import (
    evaluate,
    load_detections,
    per_class_csv,
    report_text,
    save_detections,
)
from .errors import DescRegError
from .prep import PATCH_SIZE, cluster_split, crop_plan
from .regions import load_ground_truth, load_regions
from .simdata import ScenarioConfig, generate_dataset, load_catalog_dir, write_dataset
from .similarity import build_similarity, similarity_csv
from .synthesizer import (
    load_synthesizer,
    save_synthesizer,
    train_classifier_from_synth,
    train_synthesizer,
)

__all__ = ["main", "REPRODUCE_UNSEEN_FLOOR", "REPRODUCE_BASELINE_GAP"]

log = logging.getLogger(__name__)

# Thresholds for `reproduce --check`, frozen from calibration runs of the
# default scenario: 5-seed mean unseen GZSD mAP for the adaptive mode must
# clear the floor and beat every other requested mode by the gap.
# Frozen from the five-seed calibration run behind ``calibrated_config()``:
# adaptive mean unseen GZSD mAP 0.7880 against 0.7386 (direct_l2), 0.5790
# (diagonal) and 0.5190 (off).  The floor and the required lead leave room
# for numerical variation across BLAS builds, nothing more.
REPRODUCE_UNSEEN_FLOOR = 0.70
REPRODUCE_BASELINE_GAP = 0.02


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors remapped from exit code 2 to 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging(quiet: bool) -> None:
    logger = logging.getLogger("descreg")
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.propagate = False


def _run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else default_config()
    if getattr(args, "out_dir", None):
        config.set("data.out_dir", args.out_dir)
    return config


def _require(value: str, flag: str, key: str) -> str:
    """A CLI path argument with a config-key fallback."""
    if value:
        return value
    raise DescRegError(f"missing {flag} (or configuration key {key})")


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _scenario(config: RunConfig, seed_shift: int = 0) -> ScenarioConfig:
    return ScenarioConfig(
        n_seen=config["sim.n_seen"],
        n_unseen=config["sim.n_unseen"],
        feature_dim=config["sim.feature_dim"],
        regions_per_class=config["sim.regions_per_class"],
        noise_sigma=config["sim.noise_sigma"],
        background_fraction=config["sim.background_fraction"],
        box_jitter=config["sim.box_jitter"],
        images=config["sim.images"],
        seed=config["sim.seed"] + seed_shift,
    )


def _cmd_sim(args) -> int:
    config = _run_config(args)
    embeddings = load_embeddings(args.embeddings)
    tau = args.tau if args.tau is not None else config["reg.tau"]
    sim = build_similarity(embeddings.vectors, tau, list(embeddings.names))
    matrix = sim.raw if args.raw else sim.normalized
    _write_text(args.out, similarity_csv(list(embeddings.names), matrix))
    log.info("wrote %s (%d classes, tau %g)", args.out, sim.n, tau)
    return 0


def _cmd_simulate(args) -> int:
    config = _run_config(args)
    if args.seed is not None:
        config.set("sim.seed", args.seed)
    out_dir = _require(config["data.out_dir"], "--out-dir", "data.out_dir")
    ds = generate_dataset(_scenario(config))
    write_dataset(ds, out_dir)
    log.info(
        "wrote dataset to %s (%d seen, %d unseen, %d train regions, %d test regions)",
        out_dir,
        ds.scenario.n_seen,
        ds.scenario.n_unseen,
        len(ds.train_regions),
        len(ds.test_regions),
    )
    return 0


def _cmd_split(args) -> int:
    embeddings = load_embeddings(args.embeddings)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    split = cluster_split(embeddings, args.n_unseen, rng)
    save_split(split, args.out)
    log.info("wrote %s (%d seen, %d unseen)", args.out, split.n_seen, split.n_unseen)
    return 0


def _cmd_crop_plan(args) -> int:
    plan = crop_plan(args.width, args.height, args.patch)
    lines = ["x1,y1,x2,y2"]
    lines.extend(f"{x1},{y1},{x2},{y2}" for x1, y1, x2, y2 in plan.windows)
    _write_text(args.out, "\n".join(lines) + "\n")
    log.info(
        "wrote %s (%d windows, padded_x=%s, padded_y=%s)",
        args.out,
        plan.count,
        plan.padded_x,
        plan.padded_y,
    )
    return 0


def _cmd_train(args) -> int:
    config = _run_config(args)
    if args.seed is not None:
        config.set("seed", args.seed)
    catalog_dir = _require(
        args.catalog_dir or config["data.catalog_dir"], "--catalog-dir", "data.catalog_dir"
    )
    regions_path = _require(args.regions or config["data.regions"], "--regions", "data.regions")
    val_path = args.val_regions or config["data.val_regions"]

    catalog = load_catalog_dir(catalog_dir)
    regions = load_regions(regions_path)
    val_regions = load_regions(val_path) if val_path else None
    model, history = train_alignment(catalog, regions, config, val_regions=val_regions)
    save_model(model, args.out)
    if args.history:
        _write_text(args.history, history.to_csv())
    final = history.records[-1]
    log.info(
        "wrote %s (final cls_loss %.4f, trip_loss %.4f)", args.out, final.cls_loss, final.trip_loss
    )
    return 0


def _cmd_infer(args) -> int:
    model = load_model(args.model)
    regions = load_regions(args.regions)
    detections = infer_detections(model, regions, args.setting)
    save_detections(detections, args.out)
    log.info("wrote %s (%d detections from %d regions)", args.out, len(detections), len(regions))
    return 0


def _cmd_synth_train(args) -> int:
    config = _run_config(args)
    if args.seed is not None:
        config.set("seed", args.seed)
    catalog_dir = _require(
        args.catalog_dir or config["data.catalog_dir"], "--catalog-dir", "data.catalog_dir"
    )
    regions_path = _require(args.regions or config["data.regions"], "--regions", "data.regions")
    catalog = load_catalog_dir(catalog_dir)
    regions = load_regions(regions_path)
    if config["reg.mode"] == "off":
        config = config.copy()
        config.set("reg.lambda", 0.0)
    if config["reg.mode"] == "diagonal":
        from .similarity import diagonal_matrix

        sim = diagonal_matrix(catalog.n_classes)
    else:
        sim = build_similarity(
            catalog.descriptions.vectors, config["reg.tau"], list(catalog.class_names)
        )
    synth = train_synthesizer(catalog, regions, sim, config)
    save_synthesizer(synth, args.out)
    log.info("wrote %s (feature dim %d)", args.out, synth.feature_dim)
    return 0


def _cmd_synth_classify(args) -> int:
    config = _run_config(args)
    if args.seed is not None:
        config.set("seed", args.seed)
    catalog_dir = _require(
        args.catalog_dir or config["data.catalog_dir"], "--catalog-dir", "data.catalog_dir"
    )
    catalog = load_catalog_dir(catalog_dir)
    synth = load_synthesizer(args.synth)
    background = None
    if args.regions:
        background_rows = [r.feature for r in load_regions(args.regions) if r.is_background]
        if background_rows:
            background = np.vstack(background_rows)
    model = train_classifier_from_synth(
        synth, catalog, config, background_features=background
    )
    save_model(model, args.out)
    log.info("wrote %s (%d classes)", args.out, catalog.n_classes)
    return 0


def _cmd_eval(args) -> int:
    detections = load_detections(args.dets)
    ground_truth = load_ground_truth(args.gt)
    from .catalog import load_split

    split = load_split(args.split)
    report = evaluate(detections, ground_truth, split, args.setting, ap_iou=args.iou)
    text = report_text(report)
    sys.stdout.write(text)
    if args.report:
        _write_text(args.report, text)
    if args.per_class:
        _write_text(args.per_class, per_class_csv(report))
    return 0


def _reproduce_run(
    config: RunConfig, mode: str, data_dir: str, run_dir: str
) -> tuple[float, float, float, float]:
    """Train one (seed, mode) run; returns zsd mAP and gzsd seen/unseen/hm."""
    catalog = load_catalog_dir(data_dir)
    train_regions = load_regions(os.path.join(data_dir, "train_regions.tsv"))
    test_regions = load_regions(os.path.join(data_dir, "test_regions.tsv"))
    test_gt = load_ground_truth(os.path.join(data_dir, "test_gt.tsv"))

    run_config = config.copy()
    run_config.set("reg.mode", mode)
    model, history = train_alignment(catalog, train_regions, run_config, val_regions=test_regions)
    os.makedirs(run_dir, exist_ok=True)
    save_model(model, os.path.join(run_dir, "model.txt"))
    _write_text(os.path.join(run_dir, "history.csv"), history.to_csv())

    results = []
    for setting in ("zsd", "gzsd"):
        detections = infer_detections(model, test_regions, setting)
        save_detections(detections, os.path.join(run_dir, f"dets_{setting}.tsv"))
        report = evaluate(detections, test_gt, catalog.split, setting)
        _write_text(os.path.join(run_dir, f"report_{setting}.txt"), report_text(report))
        results.append(report)
    zsd, gzsd = results
    return zsd.unseen_map, gzsd.seen_map, gzsd.unseen_map, gzsd.hm_map


def _cmd_reproduce(args) -> int:
    # Without an explicit --config, reproduce runs the frozen calibration
    # settings rather than the bare defaults, so its checks match the
    # thresholds above.
    config = load_config(args.config) if args.config else calibrated_config()
    if getattr(args, "out_dir", None):
        config.set("data.out_dir", args.out_dir)
    if args.seed is not None:
        config.set("seed", args.seed)
    out_dir = _require(config["data.out_dir"], "--out-dir", "data.out_dir")
    modes = config.reproduce_modes()
    n_seeds = config["repro.seeds"]

    rows: list[tuple[str, int, float, float, float, float]] = []
    means: dict[str, np.ndarray] = {}
    for seed_index in range(n_seeds):
        seed_dir = os.path.join(out_dir, f"seed_{seed_index:02d}")
        data_dir = os.path.join(seed_dir, "data")
        ds = generate_dataset(_scenario(config, seed_shift=seed_index))
        write_dataset(ds, data_dir)
        seed_config = config.copy()
        seed_config.set("seed", config["seed"] + seed_index)
        seed_config.set("reg.seed", config["reg.seed"] + seed_index)
        for mode in modes:
            log.info("seed %d, reg.mode %s ...", seed_index, mode)
            metrics = _reproduce_run(
                seed_config, mode, data_dir, os.path.join(seed_dir, mode)
            )
            rows.append((mode, seed_index, *metrics))
    for mode in modes:
        mode_rows = np.array([row[2:] for row in rows if row[0] == mode])
        means[mode] = mode_rows.mean(axis=0)

    csv_lines = ["mode,seed,zsd_map,gzsd_seen_map,gzsd_unseen_map,gzsd_hm"]
    for mode, seed_index, *metrics in rows:
        csv_lines.append(
            f"{mode},{seed_index}," + ",".join(f"{100.0 * m:.4f}" for m in metrics)
        )
    _write_text(os.path.join(out_dir, "summary.csv"), "\n".join(csv_lines) + "\n")

    width = max(len(m) for m in modes)
    table = [
        f"{'mode':<{width}}  {'zsd_map':>8}  {'gzsd_seen':>9}  {'gzsd_unseen':>11}  {'gzsd_hm':>8}"
    ]
    for mode in modes:
        zsd, seen, unseen, hm = means[mode]
        table.append(
            f"{mode:<{width}}  {100 * zsd:8.2f}  {100 * seen:9.2f}  {100 * unseen:11.2f}  {100 * hm:8.2f}"
        )
    summary = "\n".join(table) + "\n"
    _write_text(os.path.join(out_dir, "summary.txt"), summary)
    sys.stdout.write(summary)

    if args.check:
        if "adaptive" not in means:
            raise DescRegError("reproduce --check needs 'adaptive' in repro.modes")
        adaptive_unseen = means["adaptive"][2]
        failures = []
        if adaptive_unseen < REPRODUCE_UNSEEN_FLOOR:
            failures.append(
                f"adaptive mean unseen GZSD mAP {100 * adaptive_unseen:.2f} is below "
                f"the floor {100 * REPRODUCE_UNSEEN_FLOOR:.2f}"
            )
        for mode in modes:
            if mode == "adaptive":
                continue
            gap = adaptive_unseen - means[mode][2]
            if gap < REPRODUCE_BASELINE_GAP:
                failures.append(
                    f"adaptive lead over {mode} is {100 * gap:.2f}, "
                    f"needs {100 * REPRODUCE_BASELINE_GAP:.2f}"
                )
        if failures:
            for failure in failures:
                log.warning("check failed: %s", failure)
            return 3
        log.info("all reproduce checks passed")
    return 0


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="descreg", description=__doc__.split("\n\n")[0])
    common = _ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the command's seed")
    common.add_argument("--config", default=None, help="configuration file (key = value lines)")
    common.add_argument("--out-dir", default=None, help="override data.out_dir")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("sim", parents=[common], help="export the inter-class similarity matrix")
    p.add_argument("--embeddings", required=True, help="description embeddings file")
    p.add_argument("--tau", type=float, default=None, help="softmax temperature (default reg.tau)")
    p.add_argument("--raw", action="store_true", help="export raw cosines instead")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(handler=_cmd_sim)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("split", parents=[common], help="propose a seen/unseen split")
    p.add_argument("--embeddings", required=True, help="semantic embeddings file")
    p.add_argument("--n-unseen", type=int, required=True, help="unseen classes to sample")
    p.add_argument("--out", required=True, help="output split file")
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser("crop-plan", parents=[common], help="plan sliding-window patches")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--patch", type=int, default=PATCH_SIZE)
    p.add_argument("--out", required=True, help="output CSV of windows")
    p.set_defaults(handler=_cmd_crop_plan)

    p = sub.add_parser("train", parents=[common], help="train an alignment model")
    p.add_argument("--catalog-dir", default=None, help="directory with embeddings and split")
    p.add_argument("--regions", default=None, help="training regions file")
    p.add_argument("--val-regions", default=None, help="held-out regions for history")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--history", default=None, help="optional epoch-history CSV")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("infer", parents=[common], help="emit detections for regions")
    p.add_argument("--model", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--setting", choices=("zsd", "gzsd"), required=True)
    p.add_argument("--out", required=True, help="output detections file")
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser("synth-train", parents=[common], help="fit the feature generator")
    p.add_argument("--catalog-dir", default=None)
    p.add_argument("--regions", default=None, help="seen-class regions file")
    p.add_argument("--out", required=True, help="output generator file")
    p.set_defaults(handler=_cmd_synth_train)

    p = sub.add_parser(
        "synth-classify", parents=[common], help="train a classifier on synthesized features"
    )
    p.add_argument("--synth", required=True, help="generator file")
    p.add_argument("--catalog-dir", default=None)
    p.add_argument("--regions", default=None, help="regions supplying background features")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(handler=_cmd_synth_classify)

    p = sub.add_parser("eval", parents=[common], help="score detections against ground truth")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--setting", choices=("zsd", "gzsd"), required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--report", default=None, help="also write the report here")
    p.add_argument("--per-class", default=None, help="write per-class AP CSV here")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("reproduce", parents=[common], help="compare regularizer modes over seeds")
    p.add_argument("--check", action="store_true", help="apply frozen thresholds (exit 3 on failure)")
    p.set_defaults(handler=_cmd_reproduce)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.quiet)
    try:
        return args.handler(args)
    except DescRegError as exc:
        print(f"descreg: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"descreg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
