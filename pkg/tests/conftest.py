import pytest

from contactgraph.synth import BenchmarkSpec, write_benchmark

# small model settings so end-to-end tests stay quick
FAST = {"train.gcn_hidden": "16", "train.embed_dim": "12", "train.lstm_hidden": "12",
        "train.max_epochs": "4", "train.learning_rate": "0.01", "train.fusion_epochs": "5"}


@pytest.fixture(scope="session")
def tiny_bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    write_benchmark(out, BenchmarkSpec(n_train=30, n_val=6, n_test=10, steps_per_video=120, embedding_dim=8))
    return out
