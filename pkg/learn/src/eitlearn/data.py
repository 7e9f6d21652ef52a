"""Reader/writer for the eitbench dataset format (see ../docs/FORMAT.md).

This package talks to the solver toolkit only through its on-disk format:
manifest.json plus raw little-endian float64 arrays. Nothing here imports
eitbench.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(RuntimeError):
    """A dataset file violates the declared format."""


@dataclass(frozen=True)
class Manifest:
    n_samples: int
    grid_nx: int
    grid_ny: int
    n_boundary: int
    n_max_frequency: int
    noise_levels: tuple
    mesh_h: float

    @classmethod
    def load(cls, root) -> "Manifest":
        with open(Path(root) / "manifest.json") as fh:
            d = json.load(fh)
        return cls(n_samples=d["nSamples"], grid_nx=d["gridNx"],
                   grid_ny=d["gridNy"], n_boundary=d["nBoundary"],
                   n_max_frequency=d["nMaxFrequency"],
                   noise_levels=tuple(d["noiseLevels"]), mesh_h=d["meshH"])


def noise_token(delta: float) -> str:
    return f"{delta:g}"


def read_f64(path, shape) -> np.ndarray:
    path = Path(path)
    expected = int(np.prod(shape)) * 8
    if not path.exists():
        raise FileNotFoundError(path)
    if path.stat().st_size != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {shape}")
    arr = np.fromfile(path, dtype="<f8").reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite values")
    return arr


def write_f64(path, array: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    np.ascontiguousarray(array, dtype="<f8").tofile(tmp)
    os.replace(tmp, path)


def sample_dir(root, index: int) -> Path:
    return Path(root) / "samples" / f"{index:06d}"


def disk_mask(n: int = 64) -> np.ndarray:
    """On-disk pixel mask per the grid convention of the format."""
    c = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    X, Y = np.meshgrid(c, c, indexing="xy")
    return X ** 2 + Y ** 2 <= 1.0


def load_truth(root, indices, manifest: Manifest) -> np.ndarray:
    """Ground-truth grids, shape (len(indices), ny, nx)."""
    return np.stack([read_f64(sample_dir(root, i) / "sigma.f64",
                              (manifest.grid_ny, manifest.grid_nx))
                     for i in indices])


def load_dbar_inputs(pred_dir, indices, manifest: Manifest) -> np.ndarray:
    """D-bar reconstructions written by the solver CLI, one per sample."""
    return np.stack([read_f64(Path(pred_dir) / f"pred_{i:06d}.f64",
                              (manifest.grid_ny, manifest.grid_nx))
                     for i in indices])


def load_voltage_diffs(root, indices, manifest: Manifest,
                       delta: float = 0.0) -> np.ndarray:
    """Flattened difference voltages (measured minus homogeneous background).

    Shape (len(indices), 32 * n_boundary).
    """
    p = 2 * manifest.n_max_frequency
    bg = read_f64(Path(root) / "background_volt.f64", (p, manifest.n_boundary))
    tok = noise_token(delta)
    out = []
    for i in indices:
        volt = read_f64(sample_dir(root, i) / f"volt_{tok}.f64",
                        (p, manifest.n_boundary))
        out.append((volt - bg).ravel())
    return np.stack(out)


def write_predictions(out_dir, indices, grids: np.ndarray,
                      method: str, delta: float = 0.0) -> None:
    """Emit predictions in the solver CLI's output layout.

    Off-mask pixels are forced to the background value 1.0; a run.json is
    written so `eitbench evaluate` accepts the directory.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask = disk_mask(grids.shape[-1])
    samples = {}
    for i, grid in zip(indices, grids):
        g = grid.copy()
        g[~mask] = 1.0
        write_f64(out_dir / f"pred_{i:06d}.f64", g)
        samples[f"{i:06d}"] = {}
    tmp = out_dir / "run.json.tmp"
    with open(tmp, "w") as fh:
        json.dump({"method": method, "delta": delta, "params": {},
                   "samples": samples, "errors": {}}, fh, indent=1)
    os.replace(tmp, out_dir / "run.json")


def parse_range(spec: str) -> range:
    a, _, b = spec.partition(":")
    return range(int(a), int(b))
