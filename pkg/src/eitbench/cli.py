"""Command-line entry point: dataset generation, reconstruction, evaluation.

Exit codes: 0 success, 1 configuration error, 2 partial failure (some
samples failed but the run completed).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import multiprocessing
import numpy as np

from . import dataset as ds
from .dbar import GRID_EXPONENT, reconstruct_dbar
from .dsm import DEFAULT_GAMMA, cauchy_difference, export_phi_stack, index_field
from .forward import (BoundaryVoltages, ConductivityField, CurrentBasis,
                      NeumannSolver, ntd_to_dtn)
from .forward import NtDMatrix
from .mesh import build_disk_mesh
from .metrics import csv_row, evaluate, write_report_csv
from .phantom import PixelImage, disk_mask
from .sparsity import INVERSION_H, SparsitySettings, reconstruct_sparsity

log = logging.getLogger("eitbench")

METHODS = ("sparsity", "dbar", "dsm-index")


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_params(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        out[key.strip()] = parsed
    return out


def _parse_range(spec: str | None, n: int):
    if not spec:
        return range(n)
    a, _, b = spec.partition(":")
    lo = int(a) if a else 0
    hi = int(b) if b else n
    if not (0 <= lo < hi <= n):
        raise ValueError(f"sample range {spec!r} outside 0:{n}")
    return range(lo, hi)


# --- generate -----------------------------------------------------------------

def cmd_generate(args) -> int:
    try:
        noise = tuple(float(x) for x in args.noise.split(","))
        manifest = ds.DatasetManifest(
            n_samples=args.n, noise_levels=noise, textured=args.textured,
            global_seed=args.seed, max_inclusions=args.max_inclusions,
            mesh_h=args.mesh_h)
        if not (1 <= args.max_inclusions <= 6):
            raise ValueError("--max-inclusions must be in 1..6")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = ds.generate_dataset(manifest, args.out, workers=args.threads)
    if summary["failures"]:
        print(f"{len(summary['failures'])} samples failed", file=sys.stderr)
        return 2
    print(f"wrote {manifest.n_samples} samples to {args.out}")
    return 0


# --- reconstruct ---------------------------------------------------------------

_RECON_STATE: dict = {}


def _init_recon(root, method, delta, params, manifest_json):
    manifest = ds.DatasetManifest.from_json(manifest_json)
    state = {"root": Path(root), "method": method, "delta": delta,
             "params": params, "manifest": manifest,
             "basis": CurrentBasis(manifest.n_max_frequency)}
    if method == "sparsity":
        allowed = {"alpha", "max_iters", "memory", "tau", "backtrack",
                   "s_stop", "s_init", "mesh_h"}
        bad = set(params) - allowed
        if bad:
            raise ValueError(f"unknown sparsity params: {sorted(bad)}")
        kw = {k: v for k, v in params.items() if k != "mesh_h"}
        kw.update({k: int(v) for k, v in kw.items()
                   if k in ("max_iters", "memory")})
        state["settings"] = SparsitySettings(**kw)
        state["mesh"] = build_disk_mesh(float(params.get("mesh_h", INVERSION_H)))
    elif method == "dbar":
        state["m"] = int(params.get("m", GRID_EXPONENT))
    elif method == "dsm-index":
        state["gamma"] = float(params.get("gamma", DEFAULT_GAMMA))
        state["phi_stack"] = bool(params.get("phi_stack", False))
        state["mesh"] = build_disk_mesh(float(params.get("mesh_h", INVERSION_H)))
        state["solver"] = NeumannSolver(
            ConductivityField.constant(state["mesh"], 1.0))
        bg_path = Path(root) / "background_volt.f64"
        p = 2 * manifest.n_max_frequency
        if bg_path.exists():
            bg = ds.read_f64(bg_path, (p, manifest.n_boundary))
        else:
            log.warning("background_volt.f64 missing; recomputing")
            from .forward import compute_ntd
            mesh_f = build_disk_mesh(manifest.mesh_h)
            _, bgv = compute_ntd(ConductivityField.constant(mesh_f, 1.0),
                                 state["basis"], n_samples=manifest.n_boundary)
            bg = bgv.samples
        state["background"] = bg
    _RECON_STATE.update(state)


def _reconstruct_one(task):
    index, out_dir = task
    st = _RECON_STATE
    manifest: ds.DatasetManifest = st["manifest"]
    tok = ds.noise_token(st["delta"])
    sdir = ds.sample_dir(st["root"], index)
    t0 = time.time()
    meta = {}
    try:
        p = 2 * manifest.n_max_frequency
        if st["method"] == "sparsity":
            volt = ds.read_f64(sdir / f"volt_{tok}.f64", (p, manifest.n_boundary))
            result = reconstruct_sparsity(BoundaryVoltages(volt),
                                          st["settings"], mesh=st["mesh"],
                                          basis=st["basis"])
            grid = result.image.grid
            meta = {"iterations": result.iterations,
                    "stop_reason": result.stop_reason,
                    "psi_final": result.psi_history[-1],
                    "monotonicity_ok": result.monotonicity_ok}
        elif st["method"] == "dbar":
            ntd = ds.read_f64(sdir / f"ntd_{tok}.f64", (p, p))
            img, info = reconstruct_dbar(ntd_to_dtn(NtDMatrix(ntd)),
                                         st["delta"], basis=st["basis"],
                                         m=st["m"], workers=1)
            grid = img.grid
            meta = {"R": info.R, "failed_pixels": info.n_failed,
                    "grid_exponent": info.grid_exponent}
        else:  # dsm-index
            volt = ds.read_f64(sdir / f"volt_{tok}.f64", (p, manifest.n_boundary))
            data = BoundaryVoltages(volt)
            ref = BoundaryVoltages(st["background"])
            phis = [cauchy_difference(data, ref, ell, gamma=st["gamma"],
                                      mesh=st["mesh"], solver=st["solver"])
                    for ell in range(p)]
            diffs = [volt[ell] - st["background"][ell] for ell in range(p)]
            idx = index_field(phis, diffs, gamma=st["gamma"])
            grid = idx.values
            meta = {"gamma": st["gamma"], "degenerate": idx.degenerate}
            if st["phi_stack"]:
                ds.write_f64(Path(out_dir) / f"phi_{index:06d}.f64",
                             export_phi_stack(phis))
        ds.write_f64(Path(out_dir) / f"pred_{index:06d}.f64", grid)
        meta["wall_seconds"] = time.time() - t0
        return index, meta, None
    except Exception as exc:
        return index, meta, f"{type(exc).__name__}: {exc}"


def cmd_reconstruct(args) -> int:
    if args.method not in METHODS:
        print(f"error: unknown method {args.method!r}; choose from {METHODS}",
              file=sys.stderr)
        return 1
    try:
        params = _parse_params(args.param)
        manifest = ds.read_manifest(args.data)
        if args.delta not in manifest.noise_levels:
            raise ValueError(
                f"delta {args.delta} not in dataset noise levels {manifest.noise_levels}")
        indices = list(_parse_range(args.samples, manifest.n_samples))
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(i, str(out)) for i in indices]
    per_sample = {}
    errors = {}
    init_args = (args.data, args.method, args.delta, params, manifest.to_json())
    if args.threads <= 1:
        _init_recon(*init_args)
        results = map(_reconstruct_one, tasks)
    else:
        ctx = multiprocessing.get_context("fork")
        pool = ProcessPoolExecutor(max_workers=args.threads, mp_context=ctx,
                                   initializer=_init_recon, initargs=init_args)
        results = pool.map(_reconstruct_one, tasks)
    for index, meta, err in results:
        if err is None:
            per_sample[f"{index:06d}"] = meta
            log.info("sample %06d done (%.1fs)", index, meta["wall_seconds"])
        else:
            errors[f"{index:06d}"] = err
            log.error("sample %06d failed: %s", index, err)
    if args.threads > 1:
        pool.shutdown()

    run_meta = {
        "method": args.method,
        "delta": args.delta,
        "params": params,
        "data": str(args.data),
        "samples": per_sample,
        "errors": errors,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    ds.write_json_atomic(out / "run.json", run_meta)
    if errors:
        print(f"{len(errors)} samples failed", file=sys.stderr)
        return 2
    print(f"reconstructed {len(per_sample)} samples into {out}")
    return 0


# --- evaluate -------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    try:
        manifest = ds.read_manifest(args.data)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    mask = disk_mask(manifest.grid_nx)
    rows = []
    any_failed = False
    for pred_dir in args.pred:
        pred_dir = Path(pred_dir)
        try:
            with open(pred_dir / "run.json") as fh:
                run = json.load(fh)
        except FileNotFoundError:
            print(f"error: {pred_dir}/run.json missing", file=sys.stderr)
            return 1
        method, delta = run["method"], float(run["delta"])
        acc = []
        for index in sorted(run.get("samples", {})):
            sdir = ds.sample_dir(args.data, int(index))
            pred_path = pred_dir / f"pred_{index}.f64"
            try:
                truth = ds.read_f64(sdir / "sigma.f64",
                                    (manifest.grid_ny, manifest.grid_nx))
                pred = ds.read_f64(pred_path,
                                   (manifest.grid_ny, manifest.grid_nx))
                rep = evaluate(PixelImage(pred, mask), PixelImage(truth, mask))
            except (FileNotFoundError, ds.DatasetFormatError, ValueError) as exc:
                log.error("sample %s not evaluated: %s", index, exc)
                any_failed = True
                continue
            rows.append(csv_row(index, method, delta, rep.as_dict()))
            acc.append(rep.as_dict())
        if acc:
            mean = {k: float(np.mean([a[k] for a in acc])) for k in acc[0]}
            rows.append(csv_row("mean", method, delta, mean))
    write_report_csv(args.out, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 2 if any_failed else 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eitbench",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a phantom dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--max-inclusions", type=int, default=4)
    g.add_argument("--textured", type=_parse_bool, default=False)
    g.add_argument("--noise", default="0,0.01,0.05")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mesh-h", type=float, default=ds.FORWARD_H)
    g.add_argument("--threads", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reconstruct", help="reconstruct a dataset slice")
    r.add_argument("--data", required=True)
    r.add_argument("--method", required=True)
    r.add_argument("--delta", type=float, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--param", action="append", default=[],
                   metavar="KEY=VALUE")
    r.add_argument("--samples", default=None, metavar="LO:HI")
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="evaluate predictions against truth")
    e.add_argument("--data", required=True)
    e.add_argument("--pred", action="append", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EITBENCH_LOGLEVEL", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
