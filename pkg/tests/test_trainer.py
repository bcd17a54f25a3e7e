import numpy as np
import pytest

from rgp.corruption import ImagePatch
from rgp.denoiser import DenoiserConfig
from rgp.graphbuild import PatchGraph, knn_graph, normalized_adjacency
from rgp.numcore import save_checkpoint
from rgp.trainer import (
    DataItem,
    TrainConfig,
    evaluate,
    experiment_matrix,
    init_model,
    quadratic_kappa,
    stratified_split,
    train,
    write_results_csv,
)

from conftest import random_image
from oracles import quadratic_kappa_ref


def small_config(**kw):
    defaults = dict(
        epochs=5,
        seed=0,
        n_classes=3,
        gcn_dims=(6, 12, 12),
        n_keep=8,
        tf_layers=1,
        n_heads=2,
        denoiser=DenoiserConfig(hidden_width=16, max_iters=10),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def synthetic_graph(rng, label, n_classes, d=6, n=6):
    means = np.eye(n_classes, d) * 2.0
    feats = means[label] + rng.normal(0, 0.3, (n, d))
    coords = np.array([(i % 3, i // 3) for i in range(n)], dtype=np.int32)
    edges = knn_graph(coords, 3)
    return PatchGraph(
        features=feats,
        coords=coords,
        edges=edges,
        adjacency_norm=normalized_adjacency(edges, n),
        label=label,
        id=f"g{label}_{rng.integers(1 << 20)}",
    )


def synthetic_dataset(rng, per_class, n_classes=3):
    graphs = []
    for label in range(n_classes):
        for _ in range(per_class):
            graphs.append(synthetic_graph(rng, label, n_classes))
    return graphs


class TestQuadraticKappa:
    def test_diagonal_is_exactly_one(self, rng):
        for c in (2, 3, 5):
            confusion = np.diag(rng.integers(1, 20, c))
            assert quadratic_kappa(confusion) == 1.0

    def test_degenerate_single_cell_diagonal(self):
        assert quadratic_kappa(np.array([[1, 0], [0, 0]])) == 1.0

    def test_two_by_two_against_definition_oracle(self):
        confusion = np.array([[2, 1], [1, 2]])
        assert quadratic_kappa(confusion) == pytest.approx(
            quadratic_kappa_ref(confusion), abs=1e-12
        )

    def test_random_matrices_match_oracle(self, rng):
        for _ in range(200):
            c = int(rng.integers(2, 6))
            confusion = rng.integers(0, 12, (c, c))
            if confusion.sum() == 0:
                confusion[0, 0] = 1
            got = quadratic_kappa(confusion)
            assert got == pytest.approx(quadratic_kappa_ref(confusion), abs=1e-12)
            assert -1.0 - 1e-12 <= got <= 1.0 + 1e-12

    def test_constant_predictor_on_balanced_truth_nonpositive(self):
        # every item predicted as class 0
        confusion = np.array([[10, 0, 0], [10, 0, 0], [10, 0, 0]])
        assert quadratic_kappa(confusion) <= 0.0
        assert quadratic_kappa_ref(confusion) <= 0.0

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero total"):
            quadratic_kappa(np.zeros((3, 3)))

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="C >= 2"):
            quadratic_kappa(np.array([[4]]))


class TestStratifiedSplit:
    def test_proportions_and_cover(self):
        labels = [0] * 10 + [1] * 20 + [2] * 10
        train_idx, test_idx = stratified_split(labels, 0.8, seed=0)
        assert len(train_idx) == 32 and len(test_idx) == 8
        assert sorted(train_idx + test_idx) == list(range(40))
        for cls, count in ((0, 8), (1, 16), (2, 8)):
            assert sum(1 for i in train_idx if labels[i] == cls) == count

    def test_deterministic(self):
        labels = [0, 1] * 15
        assert stratified_split(labels, 0.8, 7) == stratified_split(labels, 0.8, 7)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError, match="fraction"):
            stratified_split([0, 1], 1.0, 0)


class TestTrainEvaluate:
    def test_single_graph_memorization(self, rng):
        graph = synthetic_graph(rng, 1, 3)
        config = small_config(epochs=60)
        _, report = train([graph], config)
        assert report.loss_history[-1] < 0.01

    def test_two_graphs_same_class_rejected(self, rng):
        graphs = [synthetic_graph(rng, 0, 3), synthetic_graph(rng, 0, 3)]
        with pytest.raises(ValueError, match="2 classes"):
            train(graphs, small_config())

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train([], small_config())

    def test_inconsistent_widths_rejected(self, rng):
        g1 = synthetic_graph(rng, 0, 3, d=6)
        g2 = synthetic_graph(rng, 1, 3, d=5)
        with pytest.raises(ValueError, match="width"):
            train([g1, g2], small_config())

    def test_determinism_bit_identical_checkpoints(self, rng, tmp_path):
        graphs = synthetic_dataset(np.random.default_rng(4), per_class=3)
        config = small_config(epochs=3)
        for run in ("a", "b"):
            model, _ = train(graphs, config)
            save_checkpoint(tmp_path / f"{run}.rgp1", model.named())
        assert (tmp_path / "a.rgp1").read_bytes() == (tmp_path / "b.rgp1").read_bytes()

    def test_memorizes_class_separated_features(self):
        rng = np.random.default_rng(11)
        graphs = synthetic_dataset(rng, per_class=8, n_classes=5)
        config = small_config(
            epochs=300, n_classes=5, target_accuracy=0.95, accuracy_check_every=10
        )
        model, report = train(graphs, config)
        assert report.accuracy >= 0.95
        assert len(report.loss_history) <= 300

    def test_perfect_predictor_metrics(self):
        rng = np.random.default_rng(11)
        graphs = synthetic_dataset(rng, per_class=4)
        config = small_config(epochs=300, target_accuracy=1.0, accuracy_check_every=10)
        model, report = train(graphs, config)
        assert report.accuracy == 1.0
        assert report.kappa_quadratic == 1.0
        repeat = evaluate(model, graphs, False, config)
        assert repeat.accuracy == report.accuracy
        np.testing.assert_array_equal(repeat.confusion, report.confusion)

    def test_confusion_row_sums_match_truth_counts(self, rng):
        graphs = synthetic_dataset(np.random.default_rng(5), per_class=3)
        config = small_config(epochs=1)
        model, _ = train(graphs, config)
        report = evaluate(model, graphs, False, config)
        np.testing.assert_array_equal(report.confusion.sum(axis=1), [3, 3, 3])
        assert report.accuracy == np.trace(report.confusion) / report.confusion.sum()

    def test_denoiser_flag_keeps_parameter_set(self):
        config_off = small_config()
        config_on = small_config(denoiser_enabled=True)
        named_off = init_model(config_off).named()
        named_on = init_model(config_on).named()
        assert sorted(named_off) == sorted(named_on)
        for name in named_off:
            assert named_off[name].shape == named_on[name].shape

    def test_denoiser_training_runs_and_evaluates(self):
        rng = np.random.default_rng(6)
        graphs = synthetic_dataset(rng, per_class=2)
        config = small_config(epochs=2, denoiser_enabled=True)
        model, report = train(graphs, config)
        assert len(report.loss_history) == 2
        assert np.isfinite(report.accuracy)


def tiny_items(rng, per_class=2, n_classes=3, size=128):
    items = []
    idx = 0
    for label in range(n_classes):
        for _ in range(per_class):
            base = np.full((size, size, 3), 40 + 60 * label, dtype=np.uint8)
            noise = rng.integers(0, 30, (size, size, 3), dtype=np.uint8)
            items.append(DataItem(f"it{idx:03d}", base + noise, label))
            idx += 1
    return items


class TestExperimentMatrix:
    def exp_config(self):
        return small_config(
            epochs=2,
            split_train=0.5,
            gcn_dims=(64, 12, 12),
            denoiser=DenoiserConfig(hidden_width=12, max_iters=5),
        )

    def test_row_count_and_sorting(self, rng):
        items = tiny_items(rng)
        rows = experiment_matrix(
            items,
            self.exp_config(),
            fractions=(0.0, 0.5),
            kinds=("bright", "hue"),
            seeds=(0,),
            kind_fractions=(0.5,),
            patch_side=64,
            knn_k=3,
        )
        assert len(rows) == 2 * 2 * 1 + 2 * 1 * 2 * 1
        keys = [(r.fraction, r.kind, r.denoiser, r.seed) for r in rows]
        assert keys == sorted(keys)
        kinds_seen = {r.kind for r in rows}
        assert kinds_seen == {"mix", "bright", "hue"}

    def test_fraction_zero_independent_of_corruption_settings(self, rng):
        items = tiny_items(rng)
        config = self.exp_config()
        rows_a = experiment_matrix(
            items, config, fractions=(0.0,), kinds=("bright",), seeds=(0,),
            kind_fractions=(), severity_range=(1, 1), patch_side=64, knn_k=3,
        )
        rows_b = experiment_matrix(
            items, config, fractions=(0.0,), kinds=("defocus", "hue"), seeds=(0,),
            kind_fractions=(), severity_range=(5, 5), patch_side=64, knn_k=3,
        )
        for a, b in zip(rows_a, rows_b):
            assert (a.accuracy, a.kappa, a.denoiser, a.seed) == (b.accuracy, b.kappa, b.denoiser, b.seed)

    def test_deterministic_metrics(self, rng):
        items = tiny_items(rng)
        config = self.exp_config()
        kw = dict(
            fractions=(0.0, 0.5), kinds=("bright",), seeds=(1,), kind_fractions=(),
            patch_side=64, knn_k=3,
        )
        rows_a = experiment_matrix(items, config, **kw)
        rows_b = experiment_matrix(items, config, **kw)
        for a, b in zip(rows_a, rows_b):
            assert a.accuracy == b.accuracy and a.kappa == b.kappa

    def test_apply_to_both_retrains(self, rng):
        items = tiny_items(rng)
        rows = experiment_matrix(
            items, self.exp_config(), fractions=(0.5,), kinds=("bright",), seeds=(0,),
            kind_fractions=(), patch_side=64, knn_k=3, apply_to="both",
        )
        assert len(rows) == 2

    def test_bad_apply_to_rejected(self, rng):
        with pytest.raises(ValueError, match="apply_to"):
            experiment_matrix(tiny_items(rng), self.exp_config(), apply_to="train")

    def test_results_csv_written_sorted(self, rng, tmp_path):
        items = tiny_items(rng)
        rows = experiment_matrix(
            items, self.exp_config(), fractions=(0.0,), kinds=("bright",), seeds=(0,),
            kind_fractions=(), patch_side=64, knn_k=3, out_dir=tmp_path,
        )
        content = (tmp_path / "results.csv").read_text().splitlines()
        assert content[0] == "fraction,kind,denoiser,seed,accuracy,kappa,epochs,runtime_s"
        assert len(content) == 1 + len(rows)
        assert (tmp_path / "ckpt_seed0_den0.rgp1").exists()
        assert (tmp_path / "loss_seed0_den1.csv").exists()


def test_write_results_csv_is_sorted_and_atomic(tmp_path):
    from rgp.trainer import ExperimentRow

    rows = [
        ExperimentRow(0.5, "mix", True, 1, 0.5, 0.4, 10, 1.0),
        ExperimentRow(0.0, "mix", False, 0, 0.9, 0.8, 10, 1.0),
    ]
    write_results_csv(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[1].startswith("0,mix,0,0")
    assert not list(tmp_path.glob("*.tmp"))
