import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, h=8, w=8):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


@pytest.fixture(scope="session")
def synth_dataset_dir(tmp_path_factory):
    """The default 200-image synthetic dataset, generated once per session."""
    from rgp.cli import main

    data_dir = tmp_path_factory.mktemp("synth-default")
    config = tmp_path_factory.mktemp("synth-cfg") / "config.txt"
    config.write_text(f"out_dir = {data_dir}\n")
    assert main(["synth", "--config", str(config)]) == 0
    return data_dir


@pytest.fixture(scope="session")
def synth_graphs(synth_dataset_dir, tmp_path_factory):
    """Graphs built from the session dataset (label-keyed, sorted by id)."""
    from rgp.cli import main
    from rgp.graphbuild import load_graph

    out_dir = tmp_path_factory.mktemp("synth-graphs")
    config = tmp_path_factory.mktemp("build-cfg") / "config.txt"
    config.write_text(f"data_dir = {synth_dataset_dir}\nout_dir = {out_dir}\n")
    assert main(["build", "--config", str(config)]) == 0
    return [load_graph(p) for p in sorted((out_dir / "graphs").glob("*.pgr1"))]
