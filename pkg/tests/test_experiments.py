from dataclasses import replace

from vec2vec.data_io import WorldConfig
from vec2vec.experiments import (
    TRAIN_DEFAULTS,
    SuiteConfig,
    Suite,
    brute_force_assignment,
    compare_outputs,
    run_assignment_criterion,
    run_metric_criterion,
)

import numpy as np

TINY_TRAIN = replace(TRAIN_DEFAULTS, steps=4, batch_size=8, latent_dim=4, adapter_width=6, backbone_blocks=1,
                     disc_depth=1, disc_width=5)
TINY = SuiteConfig(
    world=WorldConfig(latent_dim=3, d1=6, d2=6, n_train_1=40, n_train_2=40, n_eval=10),
    attr_world=WorldConfig(latent_dim=3, d1=6, d2=6, n_train_1=40, n_train_2=40, n_eval=10, n_clusters=3),
    train=TINY_TRAIN, attr_train=TINY_TRAIN, seeds=(0, 1), small_n=10,
)


def test_brute_force_assignment_small():
    cost = np.array([[4.0, 1.0], [2.0, 5.0]])
    assert brute_force_assignment(cost) == 3.0


def test_fast_criteria_write_csvs(tmp_path):
    assert run_assignment_criterion(tmp_path, trials=5).passed
    assert run_metric_criterion(tmp_path).passed
    assert (tmp_path / "c2_assignment.csv").exists()


def test_suite_memoizes_and_is_deterministic(tmp_path):
    results = {}
    for name in ("a", "b"):
        suite = Suite(TINY, tmp_path / name)
        results[name] = [suite.reproduction(), suite.ablation(), suite.data_scaling(), suite.attributes()]
        assert len(suite._runs) == 4 * len(TINY.seeds)  # full, no_cc, no_vsp, small; full reused
    same, diff = compare_outputs(tmp_path / "a", tmp_path / "b")
    assert not diff and "c6_reproduction.csv" in same and "history_full_seed0.csv" in same
    assert [r.summary for r in results["a"]] == [r.summary for r in results["b"]]
    (tmp_path / "b" / "c6_reproduction.csv").write_text("changed\n")
    assert compare_outputs(tmp_path / "a", tmp_path / "b")[1] == ["c6_reproduction.csv"]
