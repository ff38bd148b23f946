# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import suitein


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    manifests = []
    for i, mode in enumerate(["STW", "PVW", "MVW", "DLW", "DRW"]):
        manifests.append(suitein.simulate(mode, seed=20 + i, duration=20.0, out_dir=root / f"{i:03d}-{mode}"))
    return root, manifests


def test_simulate_and_ingest_shapes(dataset):
    _, manifests = dataset
    w = suitein.ingest(manifests[0])
    n = w["X"].shape[0]
    assert w["X"].shape == (n, 3, 100, 6)
    assert w["y"].shape == (n, 2)
    assert np.all(np.diff(w["t_start"]) > 0)
    assert np.all(np.isfinite(w["X"])) and np.all(np.isfinite(w["y"]))
    assert w["mode"] == "STW"


def test_simulate_is_deterministic(tmp_path):
    a = suitein.simulate("PVW", seed=5, duration=20.0, out_dir=tmp_path / "a")
    b = suitein.simulate("PVW", seed=5, duration=20.0, out_dir=tmp_path / "b")
    for name in ["truth.csv", "phone.csv", "watch.csv", "earbuds.csv"]:
        assert (a.parent / name).read_bytes() == (b.parent / name).read_bytes()


def test_bad_mode_raises(tmp_path):
    with pytest.raises(suitein.ConfigError):
        suitein.simulate("XYZ", seed=1, out_dir=tmp_path)


def test_metrics():
    t = np.linspace(0.0, 10.0, 101)
    truth = np.stack([t, np.zeros_like(t)], axis=1)
    shifted = truth + np.array([0.3, -0.4])
    assert suitein.ate(t, truth, t, truth) == 0.0
    assert math.isclose(suitein.ate(t, shifted, t, truth), 0.5, abs_tol=1e-12)
    r = suitein.rte(t, shifted, t, truth, interval=5.0)
    assert abs(r["value"]) < 1e-12 and not r["truncated"]
    cdf = suitein.error_cdf(t, shifted, t, truth)
    assert cdf[-1][1] == 1.0


def test_integrate_constant_velocity():
    starts = np.arange(10, dtype=float)
    v = np.tile([1.0, 0.0], (10, 1))
    t, p = suitein.integrate_trajectory(v, starts, 10.0, np.zeros(2))
    assert t[-1] == 10.0
    assert np.allclose(p[-1], [10.0, 0.0], atol=0, rtol=0)


def test_gradcheck():
    rows = suitein.gradcheck()
    assert all(r["passed"] for r in rows)
    faulty = suitein.gradcheck(inject_fault=True)
    assert any(not r["passed"] for r in faulty)


def test_train_and_predict(dataset, tmp_path):
    root, manifests = dataset
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "seed: 1\n"
        f"data: {{dir: '{root}'}}\n"
        "train: {learning_rate: 0.001, batch_size: 16, max_steps: 4}\n"
        "model: {channels: [4, 4, 6, 6, 8, 8], gru_hidden: 6, attention_dim: 8, attention_heads: 2, local_hidden: 6}\n"
    )
    report = suitein.train(cfg, ["ablation.attentive_la=false"], tmp_path / "run")
    assert report["variant"] == "v5[fe+gf]"
    assert report["total_steps"] == 4
    model = suitein.Model(report["checkpoint"])
    assert model.variant == "v5[fe+gf]"
    assert model.config_digest == report["config_digest"]
    w = suitein.ingest(manifests[1])
    v = model.predict(w["X"][:7])
    assert v.shape == (7, 2) and np.all(np.isfinite(v))
    t, p = suitein.predict_trajectory(model, w)
    assert len(t) == w["X"].shape[0] + 1
    assert math.isfinite(suitein.ate(t, p, t, p))


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    with pytest.raises(suitein.CheckpointError):
        suitein.Model(bad)
