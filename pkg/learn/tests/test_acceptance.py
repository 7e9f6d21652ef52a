"""Secondary acceptance: deep D-bar toy run and FC-UNet lift initialization.

The deep D-bar criterion needs 550 D-bar reconstructions from the solver
CLI (about two hours on two cores). Set EITLEARN_ACCEPT_DIR to a writable
path to cache the dataset and reconstructions across runs; without it a
temporary directory is used and everything is rebuilt.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import eitbench
from eitlearn.data import (Manifest, disk_mask, load_truth,
                           load_voltage_diffs, read_f64)
from eitlearn.model import least_squares_map
from eitlearn.train import TrainConfig, build_model, predict, train
from eitlearn.model import init_lift_least_squares

N_TRAIN = 500
N_VAL = 50


def ok(n, msg):
    print(f"\n[PASS] Criterion {n}: {msg}")


@pytest.fixture(scope="module")
def accept_root(tmp_path_factory):
    """550-sample noiseless dataset plus D-bar reconstructions of it."""
    env = os.environ.get("EITLEARN_ACCEPT_DIR")
    root = Path(env) if env else tmp_path_factory.mktemp("accept")
    root.mkdir(parents=True, exist_ok=True)
    ds = root / "ds"
    dbar = root / "dbar"
    if not (ds / "manifest.json").exists():
        eitbench("generate", "--out", ds, "--n", str(N_TRAIN + N_VAL),
                 "--seed", "31", "--noise", "0", "--threads", "2")
    if not (dbar / "run.json").exists():
        eitbench("reconstruct", "--data", ds, "--method", "dbar",
                 "--delta", "0", "--out", dbar, "--threads", "2")
    return ds, dbar


def test_criterion_10_deep_dbar_toy_run(accept_root, tmp_path):
    ds, dbar = accept_root
    man = Manifest.load(ds)
    assert man.n_samples == N_TRAIN + N_VAL

    cfg = TrainConfig(dataset=str(ds), variant="deep-dbar", epochs=30,
                      batch_size=5, learning_rate=1e-3, seed=17, width=32,
                      train_range=f"0:{N_TRAIN}",
                      val_range=f"{N_TRAIN}:{N_TRAIN + N_VAL}",
                      dbar_dir=str(dbar), out=str(tmp_path / "deep_dbar.pt"))
    t0 = time.time()
    history = train(cfg)
    wall = time.time() - t0
    assert wall <= 1800.0, f"training took {wall:.0f}s"

    predict(tmp_path / "deep_dbar.pt",
            f"{N_TRAIN}:{N_TRAIN + N_VAL}", tmp_path / "preds")

    mask = disk_mask()
    truth = load_truth(ds, range(N_TRAIN, N_TRAIN + N_VAL), man)
    raw_rles, net_rles = [], []
    for j, i in enumerate(range(N_TRAIN, N_TRAIN + N_VAL)):
        raw = read_f64(Path(dbar) / f"pred_{i:06d}.f64", (64, 64))
        net = read_f64(tmp_path / "preds" / f"pred_{i:06d}.f64", (64, 64))
        t = truth[j][mask]
        raw_rles.append(np.linalg.norm(raw[mask] - t) / np.linalg.norm(t))
        net_rles.append(np.linalg.norm(net[mask] - t) / np.linalg.norm(t))
    raw_mean, net_mean = float(np.mean(raw_rles)), float(np.mean(net_rles))
    improvement = (raw_mean - net_mean) / raw_mean
    print(f"  raw D-bar mean RLE {raw_mean:.4f}, learned {net_mean:.4f}, "
          f"improvement {100 * improvement:.1f}%, "
          f"train {wall:.0f}s, final val loss {history['val_loss'][-1]:.5f}")
    assert improvement >= 0.20, \
        f"improvement {100 * improvement:.1f}% < 20%"
    ok(10, f"deep D-bar improves mean RLE {raw_mean:.4f} -> {net_mean:.4f} "
           f"({100 * improvement:.0f}%) in {wall:.0f}s")


def test_criterion_11_fc_unet_lift_initialization(accept_root):
    ds, _ = accept_root
    man = Manifest.load(ds)
    idx = range(200)  # enough pairs to make the normal equations well-fed
    V = load_voltage_diffs(ds, idx, man)
    S = load_truth(ds, idx, man)
    cfg = TrainConfig(dataset=str(ds), variant="fc-unet",
                      train_range="0:200", val_range="200:220",
                      dtype="float64")
    model = build_model(cfg, n_inputs=V.shape[1])
    init_lift_least_squares(model, V, S, reg=cfg.lift_reg)
    W, b = least_squares_map(V, S, reg=cfg.lift_reg)
    with torch.no_grad():
        got = model.lifted(torch.from_numpy(V)).numpy().reshape(len(V), -1)
    dev = np.abs(got - (V @ W.T + b)).max()
    assert dev <= 1e-6, f"max deviation {dev:.2e}"
    ok(11, f"FC-UNet lift equals the regularized least-squares solution "
           f"(max abs deviation {dev:.2e})")
