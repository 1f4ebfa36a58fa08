"""Smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import ampe


def make_gm_dataset(spec, xs):
    n = len(xs)
    x = np.zeros((n, 1))
    x[:, 0] = xs
    return ampe.Dataset(spec, x, obs_mask=[1] * n, feat_mask=[1])


def test_theta_dim_and_layout():
    gm = ampe.ModelSpec("gm", d_max=2)
    assert gm.theta_dim() == 2
    lr = ampe.ModelSpec("lr", d_max=100)
    assert lr.theta_dim() == 101
    nlr = ampe.ModelSpec("nlr", d_max=1, hidden_layers=1, hidden_units=32)
    assert nlr.theta_dim() == 97
    layout = ampe.theta_layout(lr)
    assert [e["name"] for e in layout] == ["w", "b"]
    assert sum(e["shape"][0] * e["shape"][1] for e in layout) == 101


def test_log_densities():
    gm = ampe.ModelSpec("gm", d_max=1)
    data = make_gm_dataset(gm, [0.0])
    assert ampe.log_prior(gm, np.zeros(1)) == pytest.approx(
        -0.5 * math.log(2 * math.pi)
    )
    assert ampe.log_likelihood(gm, np.zeros(1), data) == pytest.approx(
        -0.5 * math.log(2 * math.pi)
    )
    assert ampe.log_joint(gm, np.zeros(1), data) == pytest.approx(
        -math.log(2 * math.pi)
    )


def test_analytic_posterior_and_evidence():
    gm = ampe.ModelSpec("gm", d_max=1)
    data = make_gm_dataset(gm, [1.0, 3.0])
    mean, cov = ampe.analytic_posterior(gm, data)
    assert mean[0] == pytest.approx(4.0 / 3.0)
    assert cov[0, 0] == pytest.approx(1.0 / 3.0)
    single = make_gm_dataset(gm, [0.0])
    assert ampe.log_evidence(gm, single) == pytest.approx(
        -0.5 * math.log(4 * math.pi)
    )


def test_sampling_is_deterministic():
    gm = ampe.ModelSpec("gm", d_max=3)
    a = ampe.sample_theta(gm, seed=42)
    b = ampe.sample_theta(gm, seed=42)
    np.testing.assert_array_equal(a, b)
    data = ampe.sample_dataset(gm, a, n=16, seed=7, n_max=16)
    assert data.n_active == 16


def test_w2_and_symmetric_kl():
    a = np.zeros((1, 1))
    b = np.ones((1, 1))
    assert ampe.w2_squared(a, b) == pytest.approx(1.0)
    eye = np.eye(1)
    assert ampe.symmetric_kl_gaussian(
        np.zeros(1), eye, np.ones(1), eye
    ) == pytest.approx(0.5)


def test_langevin_recovers_the_posterior_mean():
    gm = ampe.ModelSpec("gm", d_max=1)
    data = make_gm_dataset(gm, [1.0] * 32)
    samples = ampe.langevin_sample(
        gm, data, step_size=5e-3, total_steps=3000, burn_in=500,
        thin_interval=10, chains=2, seed=3,
    )
    mean, cov = ampe.analytic_posterior(gm, data)
    assert abs(samples.mean() - mean[0]) < 0.1


def test_presets_exist():
    names = ampe.preset_names()
    assert "gm_2d" in names
    assert "lr_100d" in names
    cfg = json.loads(ampe.preset_config("gm_2d"))
    assert cfg["model"]["family"] == "gm"


def test_validation_errors_surface():
    with pytest.raises(ampe.ValidationError):
        ampe.ModelSpec("not_a_family")


def test_train_eval_round_trip(tmp_path):
    config = {
        "name": "py_smoke",
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "model": {"family": "gm", "d_max": 1},
        "generator": {"n_lo": 8, "n_hi": 16, "n_max": 16, "batch_size": 4},
        "encoder": {
            "kind": "transformer",
            "summary_dim": 8,
            "transformer": {"layers": 1, "model_dim": 8, "ff_dim": 16, "heads": 2},
        },
        "head": {"kind": "diag_gaussian", "gaussian": {"hidden": 8}},
        "train": {"objective": "reverse_kl", "iterations": 3, "warmup_iters": 1,
                  "lr": 1e-3},
        "eval": {"posterior_samples": 2, "test_datasets": 2,
                 "metrics": ["gm_l2"], "w2_samples": 16},
    }
    out = ampe.train(json.dumps(config))
    result = ampe.evaluate(json.dumps(config), out["checkpoint"])
    lines = [json.loads(l) for l in open(result["results"]) if l.strip()]
    assert len(lines) == 1
    assert lines[0]["metric"] == "gm_l2"
    assert math.isfinite(lines[0]["mean"])

    base = ampe.baseline(json.dumps(config), "random")
    base_lines = [json.loads(l) for l in open(base["results"]) if l.strip()]
    assert base_lines[0]["method"] == "random"
