import csv

import numpy as np
import pytest

from qvae_ann import bench
from qvae_ann.data import generate_synthetic
from qvae_ann.errors import ContractViolation
from qvae_ann.index import QueryConfig, build_index
from qvae_ann.model import QvaeConfig, hash_codes, train


def test_recall_examples():
    a = np.arange(100)
    assert bench.recall(a, a, 100) == 1.0
    assert bench.recall(a, a + 100, 100) == 0.0
    assert bench.recall(a, np.arange(50, 150), 100) == 0.5
    b = np.arange(30, 130)
    assert bench.recall(a, b, 100) == bench.recall(b, a, 100)
    with pytest.raises(ContractViolation):
        bench.recall(np.arange(5), np.arange(5), 4)


def test_budget_grid():
    grid = bench.budget_grid(100_000, 100)
    assert grid.min() * 100_000 >= 100
    assert 0.01 in grid
    assert len(bench.DOUBLING_BUDGETS) == 9 and bench.DOUBLING_BUDGETS[-1] == pytest.approx(0.0256)


@pytest.fixture(scope="module")
def setup():
    X, _ = generate_synthetic(2000, 8, 10, 0.1, seed=0)
    cfg = QvaeConfig(d_data=8, d_latent=16, hidden=(32, 16), decoder_hidden=32, epochs=3,
                     cd_chains=16)
    model = train(X, cfg, np.random.default_rng(0))
    index = build_index(np.arange(len(X)), hash_codes(model, X), 16)
    return X, model, index


def test_full_budget_recall_one(setup):
    X, model, index = setup
    res = bench.measure_speedup(X, index, model, np.arange(10), QueryConfig(10, len(X)), 1)
    assert np.all(res.recalls == 1.0)


def test_recall_curves_monotone_and_consistent(setup):
    X, model, index = setup
    qids = np.arange(0, 2000, 200)
    curves = bench.recall_curves(X, index, model, qids, 10)
    assert np.all(np.diff(curves, axis=1) >= 0)
    assert np.all(curves[:, -1] == 1.0)
    for c_max in (10, 57, 300):
        res = bench.measure_speedup(X, index, model, qids, QueryConfig(10, c_max), 1)
        np.testing.assert_allclose(res.recalls[:, 0], curves[:, c_max - 1])


def test_sweep_and_csv(setup, tmp_path):
    X, model, index = setup
    res = bench.run_recall_sweep(X, model, [0.05, 0.2, 1.0], k=10, n_queries=8, repeats=1)
    assert res.recalls.shape == (8, 3)
    assert np.all(res.recalls[:, -1] == 1.0)
    assert np.all(res.random_recalls[:, -1] == 1.0)
    summary = res.summary()
    assert summary[0]["budget_fraction"] == 0.05 and "random_mean" in summary[0]
    bench.write_csv(tmp_path / "r.csv", res)
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == bench.CSV_COLUMNS
    assert len(rows) == 1 + 3 * 8
    with pytest.raises(ContractViolation):
        bench.run_recall_sweep(X, model, [0.0], k=10)


def test_speedup_at_recall_reaches_target(setup):
    X, model, index = setup
    res, c_max = bench.speedup_at_recall(X, index, model, np.arange(20), 0.9, k=10, repeats=1)
    assert res.recalls.mean() >= 0.9
    if c_max > 10:
        assert res.recalls.mean() <= 0.9 + 0.02
        smaller = bench.measure_speedup(X, index, model, np.arange(20),
                                        QueryConfig(10, c_max - 1), 1)
        assert smaller.recalls.mean() < 0.9


def test_transverse_sweep_runs(tmp_path):
    X, _ = generate_synthetic(500, 6, 5, 0.1, seed=1)
    base = QvaeConfig(d_data=6, d_latent=8, hidden=(16, 8), decoder_hidden=16, epochs=1,
                      cd_chains=8, trotter_slices=8)
    rows = bench.run_transverse_sweep(X, [0.0, 1.0], 0.8, seeds=[0], base_config=base,
                                      k=10, n_queries=5, repeats=1)
    assert [r.gamma for r in rows] == [0.0, 1.0]
    assert all(r.recall >= 0.8 for r in rows)
    again = bench.run_transverse_sweep(X, [1.0], 0.8, seeds=[0], base_config=base,
                                       k=10, n_queries=5, repeats=1)
    assert again[0].m == rows[1].m and again[0].c_max == rows[1].c_max
    bench.write_transverse_csv(tmp_path / "t.csv", rows)
    assert (tmp_path / "t.csv").read_text().startswith("gamma,seed,m")
