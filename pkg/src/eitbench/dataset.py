"""Bit-exact on-disk dataset format shared by all reconstruction methods.

Layout (see docs/FORMAT.md for byte-level detail):

    <root>/manifest.json            dataset description, written last
    <root>/background_volt.f64      32 x B voltages of sigma = 1 (noiseless)
    <root>/samples/000000/
        phantom.json                inclusion records
        sigma.f64                   64*64 ground-truth grid
        ntd_<d>.f64                 32*32 NtD matrix per noise level d
        volt_<d>.f64                32*B voltage rows per noise level d

All .f64 files are raw little-endian IEEE-754 binary64, row-major,
headerless; every shape is recoverable from the manifest alone. Files are
written to a .tmp path and renamed into place, so a sample is valid exactly
when all of its files exist under their final names.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import multiprocessing
import numpy as np

from .forward import ConductivityField, CurrentBasis, \
    add_noise, compute_ntd, ntd_from_noisy_voltages
from .mesh import build_disk_mesh
from .phantom import GRID_N, Phantom, phantom_from_records, phantom_to_records, \
    phantom_to_mesh, rasterize, sample_phantom

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
FORWARD_H = 0.03
MAX_FAILURE_FRACTION = 0.01

_MASK64 = (1 << 64) - 1


class DatasetFormatError(RuntimeError):
    """A dataset file violates the declared format."""


def splitmix64(x: int) -> int:
    """One step of the splitmix64 generator (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit stream seed via iterated splitmix64.

    derive_seed(global_seed, sample_index[, noise_index]) gives every
    phantom and every noise draw its own reproducible stream, independent
    of generation order or worker count.
    """
    state = 0
    for p in parts:
        state = splitmix64((state ^ (int(p) & _MASK64)) & _MASK64)
    return state


@dataclass(frozen=True)
class DatasetManifest:
    n_samples: int
    noise_levels: tuple = (0.0, 0.01, 0.05)
    textured: bool = False
    global_seed: int = 0
    max_inclusions: int = 4
    mesh_h: float = FORWARD_H
    grid_nx: int = GRID_N
    grid_ny: int = GRID_N
    n_boundary: int = 64
    n_max_frequency: int = 16
    extent: tuple = (-1.0, 1.0)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.n_samples <= 0 or self.n_boundary <= 0 or self.n_max_frequency <= 0:
            raise ValueError("all manifest counts must be positive")
        levels = tuple(float(d) for d in self.noise_levels)
        if not levels or levels[0] != 0.0 or list(levels) != sorted(levels):
            raise ValueError("noise levels must be ascending and start at 0")
        object.__setattr__(self, "noise_levels", levels)

    def to_json(self) -> dict:
        return {
            "formatVersion": self.format_version,
            "nSamples": self.n_samples,
            "gridNx": self.grid_nx,
            "gridNy": self.grid_ny,
            "extent": list(self.extent),
            "nBoundary": self.n_boundary,
            "nMaxFrequency": self.n_max_frequency,
            "noiseLevels": list(self.noise_levels),
            "textured": self.textured,
            "globalSeed": self.global_seed,
            "meshH": self.mesh_h,
            "maxInclusions": self.max_inclusions,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetManifest":
        return cls(
            n_samples=d["nSamples"],
            noise_levels=tuple(d["noiseLevels"]),
            textured=d["textured"],
            global_seed=d["globalSeed"],
            max_inclusions=d.get("maxInclusions", 4),
            mesh_h=d["meshH"],
            grid_nx=d["gridNx"],
            grid_ny=d["gridNy"],
            n_boundary=d["nBoundary"],
            n_max_frequency=d["nMaxFrequency"],
            extent=tuple(d["extent"]),
            format_version=d["formatVersion"],
        )


def noise_token(delta: float) -> str:
    """Filename token for a noise level: 0 -> "0", 0.01 -> "0.01"."""
    return f"{delta:g}"


def sample_dir(root, index: int) -> Path:
    return Path(root) / "samples" / f"{index:06d}"


def write_f64(path, array: np.ndarray) -> None:
    """Atomically write a float64 array as raw little-endian bytes."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    np.ascontiguousarray(array, dtype="<f8").tofile(tmp)
    os.replace(tmp, path)


def read_f64(path, shape) -> np.ndarray:
    """Read a raw float64 file, validating byte length and finiteness."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    expected = int(np.prod(shape)) * 8
    actual = path.stat().st_size
    if actual != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes for shape {shape}, found {actual}")
    arr = np.fromfile(path, dtype="<f8").reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise DatasetFormatError(f"{path}: non-finite values")
    return arr


def write_json_atomic(path, obj) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_sample(directory, phantom: Phantom, truth_grid: np.ndarray,
                 ntd_per_noise: dict, volt_per_noise: dict) -> None:
    """Write one sample directory; every file lands atomically."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_json_atomic(directory / "phantom.json", phantom_to_records(phantom))
    write_f64(directory / "sigma.f64", truth_grid)
    for delta, ntd in ntd_per_noise.items():
        write_f64(directory / f"ntd_{noise_token(delta)}.f64", ntd)
    for delta, volt in volt_per_noise.items():
        write_f64(directory / f"volt_{noise_token(delta)}.f64", volt)


@dataclass
class SampleBundle:
    phantom: Phantom
    sigma: np.ndarray            # (grid_ny, grid_nx)
    ntd: dict                    # delta -> (32, 32)
    volt: dict                   # delta -> (32, B)


def read_sample(directory, manifest: DatasetManifest) -> SampleBundle:
    """Load one sample directory; validates shapes and finiteness."""
    directory = Path(directory)
    ph_path = directory / "phantom.json"
    if not ph_path.exists():
        raise FileNotFoundError(ph_path)
    with open(ph_path) as fh:
        phantom = phantom_from_records(json.load(fh))
    p = 2 * manifest.n_max_frequency
    sigma = read_f64(directory / "sigma.f64", (manifest.grid_ny, manifest.grid_nx))
    ntd = {}
    volt = {}
    for d in manifest.noise_levels:
        tok = noise_token(d)
        ntd[d] = read_f64(directory / f"ntd_{tok}.f64", (p, p))
        volt[d] = read_f64(directory / f"volt_{tok}.f64", (p, manifest.n_boundary))
    return SampleBundle(phantom=phantom, sigma=sigma, ntd=ntd, volt=volt)


def read_manifest(root) -> DatasetManifest:
    with open(Path(root) / "manifest.json") as fh:
        return DatasetManifest.from_json(json.load(fh))


# --- generation ---------------------------------------------------------------

_GEN_STATE: dict = {}


def _init_generator(manifest: DatasetManifest):
    mesh = build_disk_mesh(manifest.mesh_h)
    basis = CurrentBasis(manifest.n_max_frequency)
    _GEN_STATE.update(manifest=manifest, mesh=mesh, basis=basis)


def _generate_one(args):
    index, root = args
    man: DatasetManifest = _GEN_STATE["manifest"]
    mesh = _GEN_STATE["mesh"]
    basis = _GEN_STATE["basis"]
    try:
        seed = derive_seed(man.global_seed, index)
        phantom = sample_phantom(seed, man.max_inclusions, man.textured)
        sigma = phantom_to_mesh(phantom, mesh)
        _, volts = compute_ntd(sigma, basis, n_samples=man.n_boundary)
        ntd_per, volt_per = {}, {}
        for j, delta in enumerate(man.noise_levels):
            noisy = add_noise(volts, delta, derive_seed(man.global_seed, index, j + 1))
            ntd_per[delta] = ntd_from_noisy_voltages(noisy, basis).entries
            volt_per[delta] = noisy.samples
        truth = rasterize(phantom, man.grid_nx)
        write_sample(sample_dir(root, index), phantom, truth.grid, ntd_per, volt_per)
        return index, None
    except Exception as exc:  # recorded per sample; generation continues
        return index, f"{type(exc).__name__}: {exc}"


def generate_dataset(manifest: DatasetManifest, root, workers: int = 1) -> dict:
    """Generate the full dataset under ``root``; returns a summary dict.

    Deterministic for a given manifest regardless of worker count. Aborts
    when more than 1% of the samples fail.
    """
    root = Path(root)
    (root / "samples").mkdir(parents=True, exist_ok=True)

    mesh = build_disk_mesh(manifest.mesh_h)
    basis = CurrentBasis(manifest.n_max_frequency)
    _, bg_volts = compute_ntd(ConductivityField.constant(mesh, 1.0), basis,
                              n_samples=manifest.n_boundary)
    write_f64(root / "background_volt.f64", bg_volts.samples)

    tasks = [(i, root) for i in range(manifest.n_samples)]
    failures = {}
    if workers <= 1:
        _init_generator(manifest)
        results = map(_generate_one, tasks)
        for idx, err in results:
            if err is not None:
                failures[idx] = err
                log.error("sample %06d failed: %s", idx, err)
            elif (idx + 1) % 50 == 0:
                log.info("generated %d/%d samples", idx + 1, manifest.n_samples)
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx,
                                 initializer=_init_generator,
                                 initargs=(manifest,)) as ex:
            for idx, err in ex.map(_generate_one, tasks, chunksize=4):
                if err is not None:
                    failures[idx] = err
                    log.error("sample %06d failed: %s", idx, err)
                elif (idx + 1) % 50 == 0:
                    log.info("generated %d/%d samples", idx + 1, manifest.n_samples)

    if len(failures) > MAX_FAILURE_FRACTION * manifest.n_samples:
        raise RuntimeError(
            f"{len(failures)}/{manifest.n_samples} samples failed; aborting")
    write_json_atomic(root / "manifest.json", manifest.to_json())
    return {"n_samples": manifest.n_samples, "failures": failures}
