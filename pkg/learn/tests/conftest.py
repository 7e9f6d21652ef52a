import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest


def eitbench(*args):
    """Drive the solver toolkit through its CLI (the external interface)."""
    proc = subprocess.run([sys.executable, "-m", "eitbench.cli",
                           *[str(a) for a in args]],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"eitbench {' '.join(map(str, args))} failed "
                           f"rc={proc.returncode}:\n{proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Six-sample noiseless dataset in the shared format."""
    root = tmp_path_factory.mktemp("tiny_ds")
    eitbench("generate", "--out", root, "--n", "6", "--seed", "21",
             "--mesh-h", "0.06", "--noise", "0", "--threads", "2")
    return root


@pytest.fixture(scope="session")
def truth_as_dbar(tiny_dataset, tmp_path_factory):
    """A fake D-bar prediction directory containing the ground truth.

    Feeding the truth as network input turns training into the identity
    task, which the residual architecture must solve quickly.
    """
    out = tmp_path_factory.mktemp("truth_preds")
    samples = {}
    for i in range(6):
        src = Path(tiny_dataset) / "samples" / f"{i:06d}" / "sigma.f64"
        (out / f"pred_{i:06d}.f64").write_bytes(src.read_bytes())
        samples[f"{i:06d}"] = {}
    (out / "run.json").write_text(json.dumps(
        {"method": "oracle", "delta": 0.0, "samples": samples}))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(7)
