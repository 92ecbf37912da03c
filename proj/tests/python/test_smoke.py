"""Smoke tests for the python bindings: end-to-end sample/report/evaluate
plus the two standalone estimators."""

import json
import math

import numpy as np
import pytest

import pglab

CONFIG = """
network.input_dim = 1
network.widths = 3
network.output_dim = 1
network.activation = relu
network.bias = true
prior.tau = 1.0
likelihood.sigma2 = 0.25
data.source = synthetic
data.n = 20
data.split = 0.5, 0.25, 0.25
sampler.kind = mala
sampler.chains = 2
sampler.warmup = 40
sampler.samples = 40
sampler.step_size = 0.05
diagnostics.sections = covariance, marginals
run.seed = 11
"""


@pytest.fixture(scope="module")
def cfg():
    return pglab.Config.parse(CONFIG)


@pytest.fixture(scope="module")
def store(cfg):
    return pglab.sample(cfg, n_threads=1)


def test_config_round_trip(cfg):
    again = pglab.Config.parse(cfg.serialize())
    assert again.run_id == cfg.run_id
    assert len(cfg.run_id) == 12
    assert cfg.dim == 10


def test_config_rejects_bad_widths():
    with pytest.raises(pglab.ConfigError):
        pglab.Config.parse("network.widths = 0\n")


def test_sample_shape(store):
    arr = store.samples()
    assert arr.shape == (2, 40, 10)
    assert np.isfinite(arr).all()


def test_store_round_trip(store, tmp_path):
    path = str(tmp_path / "samples.bnns")
    store.save(path)
    again = pglab.Store.load(path)
    assert again.n_chains == store.n_chains
    assert np.array_equal(again.samples(), store.samples())


def test_report_parses(cfg, store):
    report = json.loads(pglab.report(cfg, store))
    assert report["meta"]["n_chains"] == 2
    assert "covariance" in report and "marginals" in report


def test_evaluate(cfg, store):
    out = pglab.evaluate(cfg, store)
    assert math.isfinite(out["lppd"])
    assert out["rmse"] is not None
    assert out["accuracy"] is None
    assert list(out["curve_k"]) == [1, 2]


def test_sample_rho_lives_on_the_simplex():
    blocks = pglab.sample_rho(2, 8, 500, seed=4)
    assert len(blocks) == 2
    for block in blocks:
        assert block.shape == (500, 4)
        assert np.all(block >= 0.0)
        np.testing.assert_allclose(block.sum(axis=1), 1.0, atol=1e-12)


def test_trap_probability_matches_sign_flip_law():
    out = pglab.trap_probability(2, 3, 1.0, np.ones(3), n_draws=20000, seed=9)
    assert abs(out["estimate"] - 0.25) < 0.05
    assert out["se"] < 0.01
    assert out["n_draws"] == 20000
