"""Training and prediction for the two learned post-processing variants.

deep-dbar: refine D-bar reconstructions (produced by the solver CLI) into
ground-truth images. fc-unet: map difference voltages to images through a
least-squares-initialized linear lift followed by the same U-Net. Both
minimize the mean squared error over on-disk pixels with Adam, training on
noiseless data only.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from .data import (Manifest, disk_mask, load_dbar_inputs, load_truth,
                   load_voltage_diffs, parse_range, write_predictions)
from .model import FCUNet, ResidualUNet, count_parameters, init_lift_least_squares

VARIANTS = ("deep-dbar", "fc-unet")


@dataclass
class TrainConfig:
    dataset: str
    variant: str = "deep-dbar"
    epochs: int = 30
    batch_size: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    width: int = 32
    train_range: str = "0:500"
    val_range: str = "500:550"
    dbar_dir: str = ""            # deep-dbar: directory of D-bar predictions
    lift_reg: float = 1e-3        # fc-unet: Tikhonov weight of the lift init
    dtype: str = "float32"        # float64 preserves the lift init exactly
    out: str = "model.pt"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls(**json.load(fh))


class TrainingDiverged(RuntimeError):
    pass


def _load_inputs(config: TrainConfig, manifest: Manifest, indices):
    if config.variant == "deep-dbar":
        if not config.dbar_dir:
            raise ValueError("deep-dbar needs dbar_dir (solver CLI output)")
        x = load_dbar_inputs(config.dbar_dir, indices, manifest)
        return x[:, None, :, :]
    return load_voltage_diffs(config.dataset, indices, manifest, delta=0.0)


def _masked_mse(pred, target, mask):
    d = (pred - target) ** 2
    return (d * mask).sum() / (mask.sum() * pred.shape[0])


def build_model(config: TrainConfig, n_inputs: int | None = None):
    torch.manual_seed(config.seed)
    if config.variant == "deep-dbar":
        model = ResidualUNet(config.width)
    else:
        model = FCUNet(n_inputs, grid=64, width=config.width)
    return model.to(getattr(torch, config.dtype))


def train(config: TrainConfig) -> dict:
    """Train per config; saves the model and returns the history dict."""
    t0 = time.time()
    manifest = Manifest.load(config.dataset)
    train_idx = list(parse_range(config.train_range))
    val_idx = list(parse_range(config.val_range))

    x_train = _load_inputs(config, manifest, train_idx)
    x_val = _load_inputs(config, manifest, val_idx)
    y_train = load_truth(config.dataset, train_idx, manifest)[:, None, :, :]
    y_val = load_truth(config.dataset, val_idx, manifest)[:, None, :, :]

    model = build_model(config, n_inputs=x_train.shape[-1])
    if config.variant == "fc-unet":
        init_lift_least_squares(model, x_train, y_train[:, 0],
                                reg=config.lift_reg)

    dt = getattr(torch, config.dtype)
    xt = torch.from_numpy(np.ascontiguousarray(x_train)).to(dt)
    yt = torch.from_numpy(np.ascontiguousarray(y_train)).to(dt)
    xv = torch.from_numpy(np.ascontiguousarray(x_val)).to(dt)
    yv = torch.from_numpy(np.ascontiguousarray(y_val)).to(dt)
    mask = torch.from_numpy(disk_mask(manifest.grid_nx)).to(dt)

    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)
    history = {"train_loss": [], "val_loss": []}

    for epoch in range(config.epochs):
        model.train()
        perm = torch.randperm(len(xt), generator=gen)
        total = 0.0
        for start in range(0, len(xt), config.batch_size):
            sel = perm[start:start + config.batch_size]
            opt.zero_grad()
            loss = _masked_mse(model(xt[sel]), yt[sel], mask)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(sel)
        train_loss = total / len(xt)
        model.eval()
        with torch.no_grad():
            val_loss = 0.0
            for start in range(0, len(xv), config.batch_size):
                pred = model(xv[start:start + config.batch_size])
                val_loss += float(_masked_mse(
                    pred, yv[start:start + config.batch_size], mask)) \
                    * len(pred)
            val_loss /= len(xv)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDiverged(
                f"non-finite loss at epoch {epoch}: "
                f"train {train_loss}, val {val_loss}")
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)

    history["wall_seconds"] = time.time() - t0
    history["n_parameters"] = count_parameters(model)
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"config": asdict(config), "state": model.state_dict(),
                "history": history}, out)
    return history


def load_model(path):
    bundle = torch.load(path, weights_only=False)
    config = TrainConfig(**bundle["config"])
    manifest = Manifest.load(config.dataset)
    n_inputs = 2 * manifest.n_max_frequency * manifest.n_boundary
    model = build_model(config, n_inputs=n_inputs)
    model.load_state_dict(bundle["state"])
    model.eval()
    return model, config


def predict(model_path, sample_range: str, out_dir,
            dataset: str | None = None, dbar_dir: str | None = None) -> None:
    """Write predictions for a sample range in the solver's output format."""
    model, config = load_model(model_path)
    if dataset:
        config.dataset = dataset
    if dbar_dir:
        config.dbar_dir = dbar_dir
    manifest = Manifest.load(config.dataset)
    indices = list(parse_range(sample_range))
    x = _load_inputs(config, manifest, indices)
    xt = torch.from_numpy(np.ascontiguousarray(x))
    outs = []
    with torch.no_grad():
        for start in range(0, len(xt), config.batch_size):
            outs.append(model(xt[start:start + config.batch_size])
                        .numpy()[:, 0])
    grids = np.concatenate(outs, axis=0)
    write_predictions(out_dir, indices, grids,
                      method=f"learned-{config.variant}", delta=0.0)
