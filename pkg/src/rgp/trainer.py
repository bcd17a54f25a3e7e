"""Training loop, metrics, and the perturbation/denoiser experiment grid.

Training processes one graph per optimizer step in a seeded per-epoch
shuffle. With the denoiser enabled, embeddings pass through a per-graph
untrained-prior fit whose output is a constant: downstream parameters
train normally, the graph-convolution weights receive no gradient.

Everything here is deterministic given (dataset, config, seed); the
experiment grid exploits that by training once per (seed, flag) and
reusing the checkpoint across perturbation cells, which yields results
identical to retraining per cell.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .corruption import DEFAULT_EXPERIMENT_KINDS, ImagePatch, corrupt_dataset
from .denoiser import DenoiserConfig, fit_denoise
from .fileio import write_csv_atomic
from .gcn import GcnParams, gcn_embed, init_gcn_params
from .graphbuild import PatchGraph, build_patch_graph
from .numcore import (
    Tensor,
    adam_state,
    adam_step,
    backward,
    cross_entropy,
    save_checkpoint,
)
from .pooltrans import (
    PoolParams,
    TransformerParams,
    classify,
    init_pool_params,
    init_transformer_params,
    topk_pool,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 60
    learning_rate: float = 1e-3
    weight_decay: float = 5e-5
    seed: int = 0
    denoiser_enabled: bool = False
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    split_train: float = 0.8
    n_classes: int = 5
    gcn_dims: tuple[int, ...] = (64, 128, 128)
    n_keep: int = 100
    tf_layers: int = 2
    n_heads: int = 4
    # Optional early exit: every accuracy_check_every epochs compute the
    # train accuracy and stop once it reaches target_accuracy. Purely an
    # epoch-budget cutoff; None trains for the full epoch count.
    target_accuracy: float | None = None
    accuracy_check_every: int = 10


@dataclass(frozen=True)
class ExperimentCell:
    fraction: float
    kinds: str
    denoiser: bool
    seed: int


@dataclass
class MetricsReport:
    accuracy: float
    kappa_quadratic: float
    confusion: np.ndarray
    loss_history: list[float] = field(default_factory=list)
    cell: ExperimentCell | None = None


class ModelParams:
    """All learnable weights with named access (checkpoint order)."""

    def __init__(self, gcn: GcnParams, pool: PoolParams, transformer: TransformerParams):
        self.gcn = gcn
        self.pool = pool
        self.transformer = transformer

    def named(self) -> dict[str, Tensor]:
        out = dict(self.gcn.named())
        out.update(self.pool.named())
        out.update(self.transformer.named())
        return out

    def zero_grad(self) -> None:
        for t in self.named().values():
            t.grad = np.zeros_like(t.data)

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        named = self.named()
        missing = sorted(set(named) - set(state))
        extra = sorted(set(state) - set(named))
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
        for name, t in named.items():
            if state[name].shape != t.data.shape:
                raise ValueError(
                    f"{name}: checkpoint shape {state[name].shape} vs model {t.data.shape}"
                )
            t.data = np.ascontiguousarray(state[name], dtype=np.float64)


def init_model(config: TrainConfig) -> ModelParams:
    rng = np.random.default_rng(derive_seed(config.seed, "init"))
    gcn = init_gcn_params(rng, config.gcn_dims)
    width = config.gcn_dims[-1]
    pool = init_pool_params(rng, width, config.n_keep)
    transformer = init_transformer_params(
        rng,
        n_layers=config.tf_layers,
        n_heads=config.n_heads,
        model_dim=width,
        n_classes=config.n_classes,
    )
    return ModelParams(gcn, pool, transformer)


def forward_logits(
    model: ModelParams,
    graph: PatchGraph,
    config: TrainConfig,
    denoiser_flag: bool,
    denoise_dump_dir: str | Path | None = None,
) -> Tensor:
    h = gcn_embed(Tensor(graph.features), Tensor(graph.adjacency_norm), model.gcn)
    if denoiser_flag:
        dcfg = replace(config.denoiser, seed=derive_seed(config.denoiser.seed, graph.id))
        result = fit_denoise(h.data, graph.adjacency_norm, dcfg)
        if denoise_dump_dir is not None:
            write_csv_atomic(
                Path(denoise_dump_dir) / f"denoise_loss_{graph.id}.csv",
                ("iteration", "loss"),
                [(i, repr(v)) for i, v in enumerate(result.loss_history)],
            )
        h = result.x_denoised
    pooled, mask = topk_pool(h, model.pool)
    return classify(pooled, mask, model.transformer)


def _validate_graphs(graphs: Sequence[PatchGraph], config: TrainConfig) -> None:
    if not graphs:
        raise ValueError("empty dataset")
    widths = {g.features.shape[1] for g in graphs}
    if widths != {config.gcn_dims[0]}:
        raise ValueError(f"feature widths {sorted(widths)} != input dim {config.gcn_dims[0]}")
    for g in graphs:
        if not 0 <= g.label < config.n_classes:
            raise ValueError(f"graph {g.id}: label {g.label} out of range")


def train(graphs: Sequence[PatchGraph], config: TrainConfig) -> tuple[ModelParams, MetricsReport]:
    """Train on the given graphs; returns params and train-set metrics."""
    _validate_graphs(graphs, config)
    if len(graphs) > 1 and len({g.label for g in graphs}) < 2:
        # A single graph is allowed as a pure capacity check.
        raise ValueError("need at least 2 classes present to train")

    model = init_model(config)
    named = model.named()
    state = adam_state(config.learning_rate, config.weight_decay)
    loss_history: list[float] = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(derive_seed(config.seed, "epoch", epoch)).permutation(
            len(graphs)
        )
        total = 0.0
        for gi in order:
            graph = graphs[gi]
            model.zero_grad()
            loss = cross_entropy(
                forward_logits(model, graph, config, config.denoiser_enabled), graph.label
            )
            backward(loss)
            adam_step(named, state)
            total += loss.item()
        loss_history.append(total / len(graphs))
        log.debug("epoch %d mean loss %.6f", epoch, loss_history[-1])
        if (
            config.target_accuracy is not None
            and (epoch + 1) % config.accuracy_check_every == 0
            and evaluate(model, graphs, config.denoiser_enabled, config).accuracy
            >= config.target_accuracy
        ):
            log.info("target train accuracy reached after %d epochs", epoch + 1)
            break

    report = evaluate(model, graphs, config.denoiser_enabled, config)
    report.loss_history = loss_history
    return model, report


def evaluate(
    model: ModelParams,
    graphs: Sequence[PatchGraph],
    denoiser_flag: bool,
    config: TrainConfig,
    cell: ExperimentCell | None = None,
    denoise_dump_dir: str | Path | None = None,
) -> MetricsReport:
    """Argmax predictions (ties to the smaller class index) and metrics."""
    _validate_graphs(graphs, config)
    c = config.n_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    for graph in graphs:
        logits = forward_logits(model, graph, config, denoiser_flag, denoise_dump_dir)
        confusion[graph.label, int(np.argmax(logits.data[0]))] += 1
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    return MetricsReport(
        accuracy=accuracy,
        kappa_quadratic=quadratic_kappa(confusion),
        confusion=confusion,
        cell=cell,
    )


def quadratic_kappa(confusion: np.ndarray) -> float:
    """Cohen's kappa with quadratic weights w_ij = (i-j)^2 / (C-1)^2.

    kappa = 1 - sum(w * O) / sum(w * E) with E the outer product of the
    marginals over the total. A degenerate denominator (all mass on one
    agreeing class) is defined as perfect agreement.
    """
    o = np.asarray(confusion, dtype=np.float64)
    if o.ndim != 2 or o.shape[0] != o.shape[1] or o.shape[0] < 2:
        raise ValueError(f"confusion must be CxC with C >= 2, got {o.shape}")
    total = o.sum()
    if total <= 0:
        raise ValueError("confusion matrix has zero total count")
    c = o.shape[0]
    idx = np.arange(c, dtype=np.float64)
    w = (idx[:, None] - idx[None, :]) ** 2 / (c - 1) ** 2
    expected = np.outer(o.sum(axis=1), o.sum(axis=0)) / total
    denom = float((w * expected).sum())
    if denom == 0.0:
        if np.all(o == np.diag(np.diag(o))):
            return 1.0
        raise ValueError("degenerate expected agreement with off-diagonal counts")
    return 1.0 - float((w * o).sum()) / denom


def stratified_split(
    labels: Sequence[int], train_fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Per-class seeded shuffle, first round(frac * n_c) of each to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        n_train = int(round(train_fraction * len(members)))
        train_idx.extend(int(i) for i in members[:n_train])
        test_idx.extend(int(i) for i in members[n_train:])
    return sorted(train_idx), sorted(test_idx)


class DataItem(NamedTuple):
    item_id: str
    image: np.ndarray  # (H, W, 3) uint8
    label: int


@dataclass(frozen=True)
class ExperimentRow:
    fraction: float
    kind: str  # "mix" for the multi-kind sweep, else a single kind
    denoiser: bool
    seed: int
    accuracy: float
    kappa: float
    epochs: int
    runtime_s: float


RESULTS_HEADER = ("fraction", "kind", "denoiser", "seed", "accuracy", "kappa", "epochs", "runtime_s")


def _format_row(r: ExperimentRow) -> tuple:
    return (
        f"{r.fraction:g}",
        r.kind,
        int(r.denoiser),
        r.seed,
        f"{r.accuracy:.6f}",
        f"{r.kappa:.6f}",
        r.epochs,
        f"{r.runtime_s:.3f}",
    )


def write_results_csv(path: str | Path, rows: Sequence[ExperimentRow]) -> None:
    ordered = sorted(rows, key=lambda r: (r.fraction, r.kind, r.denoiser, r.seed))
    write_csv_atomic(path, RESULTS_HEADER, [_format_row(r) for r in ordered])


def _graphs_for_items(
    items: Sequence[DataItem],
    clean_cache: dict[str, PatchGraph],
    corrupted_images: dict[str, ImagePatch],
    labels: dict[str, int],
    patch_side: int,
    knn_k: int,
) -> list[PatchGraph]:
    graphs = []
    for item in items:
        if item.item_id in corrupted_images:
            graphs.append(
                build_patch_graph(
                    corrupted_images[item.item_id].pixels,
                    labels[item.item_id],
                    item.item_id,
                    patch_side,
                    knn_k,
                )
            )
        else:
            graphs.append(clean_cache[item.item_id])
    return graphs


def experiment_matrix(
    dataset: Sequence[DataItem],
    config: TrainConfig,
    *,
    fractions: Sequence[float] = (0.0, 0.10, 0.25, 0.50),
    kinds: Sequence[str] = DEFAULT_EXPERIMENT_KINDS,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    kind_fractions: Sequence[float] = (0.10, 0.50),
    severity_range: tuple[int, int] = (1, 5),
    patch_side: int = 256,
    knn_k: int = 8,
    apply_to: str = "test",
    out_dir: str | Path | None = None,
) -> list[ExperimentRow]:
    """Run the perturbation-fraction x denoiser grid plus a per-kind sweep.

    For every seed the dataset is split (stratified), one model per
    denoiser flag is trained on the clean train split, and each
    corruption cell is evaluated on the (partially) corrupted test
    split. ``apply_to="both"`` additionally corrupts the train split,
    which forces a retrain per fraction. A row's runtime covers the cell
    evaluation (corruption, graph rebuild, prediction); training time is
    shared across cells and logged separately.
    """
    if apply_to not in ("test", "both"):
        raise ValueError(f"apply_to must be 'test' or 'both', got {apply_to!r}")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    labels = {item.item_id: item.label for item in dataset}
    clean_cache = {
        item.item_id: build_patch_graph(item.image, item.label, item.item_id, patch_side, knn_k)
        for item in dataset
    }

    rows: list[ExperimentRow] = []
    for seed in seeds:
        tr_idx, te_idx = stratified_split(
            [item.label for item in dataset], config.split_train, derive_seed(seed, "split")
        )
        train_items = [dataset[i] for i in tr_idx]
        test_items = [dataset[i] for i in te_idx]

        def corrupt_split(
            items: Sequence[DataItem], fraction: float, kind_set: Sequence[str], tag: str
        ) -> dict[str, ImagePatch]:
            """Corrupted images keyed by id; untouched items are omitted."""
            wrapped = [(item.item_id, ImagePatch(item.image)) for item in items]
            corrupted, manifest = corrupt_dataset(
                wrapped, fraction, kind_set, severity_range, derive_seed(seed, tag)
            )
            corrupted_ids = {m.item_id for m in manifest}
            return {iid: img for iid, img in corrupted if iid in corrupted_ids}

        def train_model(flag: bool, fraction: float, kind_set: Sequence[str], cell_tag: str) -> ModelParams:
            cfg = replace(
                config,
                seed=derive_seed(seed, "train"),
                denoiser_enabled=flag,
                denoiser=replace(config.denoiser, seed=derive_seed(seed, "denoiser")),
            )
            if apply_to == "both" and fraction > 0.0:
                corrupted_images = corrupt_split(
                    train_items, fraction, kind_set, f"corrupt-train{cell_tag}"
                )
                graphs = _graphs_for_items(
                    train_items, clean_cache, corrupted_images, labels, patch_side, knn_k
                )
            else:
                graphs = [clean_cache[item.item_id] for item in train_items]
            t0 = time.perf_counter()
            model, train_report = train(graphs, cfg)
            log.info(
                "seed %d denoiser=%s trained %d graphs in %.1fs (train acc %.3f)",
                seed,
                flag,
                len(graphs),
                time.perf_counter() - t0,
                train_report.accuracy,
            )
            if out_path is not None:
                tag = f"seed{seed}_den{int(flag)}{cell_tag}"
                save_checkpoint(out_path / f"ckpt_{tag}.rgp1", model.named())
                write_csv_atomic(
                    out_path / f"loss_{tag}.csv",
                    ("epoch", "mean_loss"),
                    [(e, f"{v:.6f}") for e, v in enumerate(train_report.loss_history)],
                )
            return model

        # Training does not depend on the corruption cell when only the
        # test split is corrupted, so each flag is trained exactly once.
        models: dict[bool, ModelParams] = {}
        if apply_to == "test":
            for flag in (False, True):
                models[flag] = train_model(flag, 0.0, kinds, "")

        def eval_cell(fraction: float, kind_set: Sequence[str], kind_name: str) -> None:
            cell_tag = f"_{kind_name}_{fraction:g}"
            t0 = time.perf_counter()
            corrupted_images = corrupt_split(
                test_items, fraction, kind_set, f"corrupt_{kind_name}_{fraction:g}"
            )
            test_graphs = _graphs_for_items(
                test_items, clean_cache, corrupted_images, labels, patch_side, knn_k
            )
            setup_s = time.perf_counter() - t0
            for flag in (False, True):
                if flag in models:
                    model = models[flag]
                else:
                    model = train_model(flag, fraction, kind_set, cell_tag)
                cfg = replace(
                    config,
                    denoiser_enabled=flag,
                    denoiser=replace(config.denoiser, seed=derive_seed(seed, "denoiser")),
                )
                t1 = time.perf_counter()
                cell = ExperimentCell(fraction, kind_name, flag, seed)
                report = evaluate(model, test_graphs, flag, cfg, cell)
                rows.append(
                    ExperimentRow(
                        fraction=fraction,
                        kind=kind_name,
                        denoiser=flag,
                        seed=seed,
                        accuracy=report.accuracy,
                        kappa=report.kappa_quadratic,
                        epochs=config.epochs,
                        runtime_s=setup_s + (time.perf_counter() - t1),
                    )
                )

        for fraction in fractions:
            eval_cell(fraction, kinds, "mix")
        for kind in kinds:
            for fraction in kind_fractions:
                eval_cell(fraction, (kind,), kind)

    if out_path is not None:
        write_results_csv(out_path / "results.csv", rows)
    return sorted(rows, key=lambda r: (r.fraction, r.kind, r.denoiser, r.seed))
