"""Command-line entry point.

Subcommands: synth, corrupt, build, train, eval, experiment. Every
subcommand takes ``--config PATH`` (required) plus optional ``--out``,
``--seed`` and ``--workers`` overrides, reads inputs from the configured
``data_dir`` and writes outputs (and the resolved config) under the
output directory. Diagnostics go to stderr; the log level comes from
RGP_LOG (error, info, debug). Exit code is 0 only if all outputs were
written.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, denoiser_config, load_config, train_config
from .corruption import (
    CorruptionSpec,
    ImagePatch,
    ManifestEntry,
    apply_corruption,
    choose_corrupted_ids,
    corruption_for_item,
)
from .dataset import (
    LABELS_FILE,
    generate_synthetic_dataset,
    load_dataset,
    load_image,
    read_labels,
    save_image,
)
from .fileio import write_csv_atomic
from .graphbuild import build_patch_graph, load_graph, save_graph
from .numcore import load_checkpoint, save_checkpoint
from .seeding import derive_seed
from .trainer import evaluate, experiment_matrix, init_model, stratified_split, train

log = logging.getLogger("rgp")


def _configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("RGP_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgp",
        description="Artifact-robust graph classification pipeline for tiled images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate the synthetic labeled image dataset"),
        ("corrupt", "corrupt a seeded fraction of a dataset"),
        ("build", "tile, featurize and build patch graphs"),
        ("train", "train the classifier on the train split"),
        ("eval", "evaluate a checkpoint on a graph directory"),
        ("experiment", "run the perturbation x denoiser grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", default=None, help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=1, help="parallel workers")
    return parser


# Worker functions are module-level so ProcessPoolExecutor can pickle
# them; per-item seeds make results independent of scheduling order.


def _corrupt_worker(task: tuple[str, str, str | None, int, int]) -> None:
    src, dst, kind, severity, seed = task
    image = load_image(src)
    if kind is not None:
        patch = apply_corruption(ImagePatch(image), CorruptionSpec(kind, severity, seed))
        image = patch.pixels
    save_image(dst, image)


def _build_worker(task: tuple[str, str, int, int, int]) -> None:
    src, dst, label, patch_side, knn_k = task
    graph = build_patch_graph(load_image(src), label, Path(dst).stem, patch_side, knn_k)
    save_graph(dst, graph)


def _run_parallel(worker, tasks, workers: int) -> None:
    if workers <= 1:
        for task in tasks:
            worker(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        list(pool.map(worker, tasks))


def cmd_synth(cfg: RunConfig, workers: int) -> None:
    out_dir = Path(cfg["out_dir"])
    generate_synthetic_dataset(
        out_dir,
        per_class=cfg["synth.per_class"],
        image_size=cfg["synth.image_size"],
        n_classes=cfg["classes"],
        seed=cfg["seed"],
        noise_sigma=cfg["synth.noise_sigma"],
    )
    cfg.write_resolved(out_dir)
    log.info("wrote %d images to %s", cfg["synth.per_class"] * cfg["classes"], out_dir)


def cmd_corrupt(cfg: RunConfig, workers: int) -> None:
    data_dir = Path(cfg["data_dir"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = read_labels(data_dir)
    kinds = cfg["corrupt.kinds"]
    severity_range = (cfg["corrupt.severity_min"], cfg["corrupt.severity_max"])
    seed = cfg["seed"]

    ids = [item_id for item_id, _ in labels]
    chosen = choose_corrupted_ids(ids, cfg["corrupt.fraction"], seed)
    specs = {iid: corruption_for_item(iid, kinds, severity_range, seed) for iid in chosen}

    tasks = []
    for item_id, _ in labels:
        spec = specs.get(item_id)
        tasks.append(
            (
                str(data_dir / f"{item_id}.png"),
                str(out_dir / f"{item_id}.png"),
                spec.kind if spec else None,
                spec.severity if spec else 0,
                spec.seed if spec else 0,
            )
        )
    _run_parallel(_corrupt_worker, tasks, workers)

    manifest = sorted(
        (ManifestEntry(iid, s.kind, s.severity, s.seed) for iid, s in specs.items()),
        key=lambda m: m.item_id,
    )
    write_csv_atomic(
        out_dir / "manifest.csv",
        ("item_id", "kind", "severity", "seed"),
        [(m.item_id, m.kind, m.severity, m.seed) for m in manifest],
    )
    write_csv_atomic(out_dir / LABELS_FILE, ("item_id", "label"), labels)
    cfg.write_resolved(out_dir)
    log.info("corrupted %d of %d items into %s", len(manifest), len(labels), out_dir)


def cmd_build(cfg: RunConfig, workers: int) -> None:
    data_dir = Path(cfg["data_dir"])
    out_dir = Path(cfg["out_dir"])
    graphs_dir = out_dir / "graphs"
    graphs_dir.mkdir(parents=True, exist_ok=True)
    labels = read_labels(data_dir)
    tasks = [
        (
            str(data_dir / f"{item_id}.png"),
            str(graphs_dir / f"{item_id}.pgr1"),
            label,
            cfg["patch_side"],
            cfg["knn_k"],
        )
        for item_id, label in labels
    ]
    _run_parallel(_build_worker, tasks, workers)
    write_csv_atomic(out_dir / LABELS_FILE, ("item_id", "label"), labels)
    cfg.write_resolved(out_dir)
    log.info("built %d graphs in %s", len(tasks), graphs_dir)


def _load_graphs(graphs_dir: Path):
    if not graphs_dir.is_dir():
        raise FileNotFoundError(f"missing graph directory {graphs_dir}")
    paths = sorted(graphs_dir.glob("*.pgr1"))
    if not paths:
        raise FileNotFoundError(f"no .pgr1 graphs in {graphs_dir}")
    return [load_graph(p) for p in paths]


def _metrics_rows(report) -> list[tuple]:
    return [(f"{report.accuracy:.6f}", f"{report.kappa_quadratic:.6f}", int(report.confusion.sum()))]


def cmd_train(cfg: RunConfig, workers: int) -> None:
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs = _load_graphs(Path(cfg["data_dir"]) / "graphs")
    tconf = train_config(cfg)
    train_idx, test_idx = stratified_split(
        [g.label for g in graphs], tconf.split_train, derive_seed(tconf.seed, "split")
    )
    model, report = train([graphs[i] for i in train_idx], tconf)
    save_checkpoint(out_dir / "model.rgp1", model.named())
    write_csv_atomic(
        out_dir / "split.csv",
        ("item_id", "role"),
        sorted(
            [(graphs[i].id, "train") for i in train_idx]
            + [(graphs[i].id, "test") for i in test_idx]
        ),
    )
    write_csv_atomic(out_dir / "train_metrics.csv", ("accuracy", "kappa", "n_graphs"), _metrics_rows(report))
    write_csv_atomic(
        out_dir / "loss_history.csv",
        ("epoch", "mean_loss"),
        [(e, f"{v:.6f}") for e, v in enumerate(report.loss_history)],
    )
    cfg.write_resolved(out_dir)
    log.info("train accuracy %.4f kappa %.4f", report.accuracy, report.kappa_quadratic)


def cmd_eval(cfg: RunConfig, workers: int) -> None:
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs = _load_graphs(Path(cfg["data_dir"]) / "graphs")
    tconf = train_config(cfg)
    model = init_model(tconf)
    model.load_state(load_checkpoint(cfg["checkpoint"]))
    dump_dir = out_dir if cfg["denoiser.dump_loss"] else None
    report = evaluate(
        model, graphs, cfg["denoiser.enabled"], tconf, denoise_dump_dir=dump_dir
    )
    write_csv_atomic(out_dir / "eval_metrics.csv", ("accuracy", "kappa", "n_graphs"), _metrics_rows(report))
    write_csv_atomic(
        out_dir / "confusion.csv",
        [f"pred_{c}" for c in range(tconf.n_classes)],
        report.confusion.tolist(),
    )
    cfg.write_resolved(out_dir)
    log.info("eval accuracy %.4f kappa %.4f", report.accuracy, report.kappa_quadratic)


def cmd_experiment(cfg: RunConfig, workers: int) -> None:
    out_dir = Path(cfg["out_dir"])
    dataset = load_dataset(Path(cfg["data_dir"]))
    rows = experiment_matrix(
        dataset,
        train_config(cfg),
        fractions=cfg["experiment.fractions"],
        kinds=cfg["corrupt.kinds"],
        seeds=cfg["experiment.seeds"],
        kind_fractions=cfg["experiment.kind_fractions"],
        severity_range=(cfg["corrupt.severity_min"], cfg["corrupt.severity_max"]),
        patch_side=cfg["patch_side"],
        knn_k=cfg["knn_k"],
        apply_to=cfg["corrupt.apply_to"],
        out_dir=out_dir,
    )
    cfg.write_resolved(out_dir)
    log.info("experiment wrote %d rows to %s", len(rows), out_dir / "results.csv")


_COMMANDS = {
    "synth": cmd_synth,
    "corrupt": cmd_corrupt,
    "build": cmd_build,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_arg_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.override("out_dir", args.out)
        if args.seed is not None:
            cfg.override("seed", str(args.seed))
        _COMMANDS[args.command](cfg, max(1, args.workers))
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
