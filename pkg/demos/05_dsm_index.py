"""Direct sampling: Cauchy difference functions and the index field.

Computes the 32 Cauchy difference functions for a two-inclusion phantom
and aggregates them into the probe-normalized index field, which lights up
near the inclusions.
"""

import numpy as np

from eitbench.dsm import cauchy_difference, export_phi_stack, index_field
from eitbench.forward import ConductivityField, CurrentBasis, NeumannSolver, compute_ntd
from eitbench.mesh import build_disk_mesh
from eitbench.phantom import (Constant, Ellipse, Inclusion, Phantom,
                              phantom_to_mesh, rasterize)

phantom = Phantom((
    Inclusion(Ellipse(0.4, 0.2, 0.2, 0.14, 0.3), Constant(2.0)),
    Inclusion(Ellipse(-0.3, -0.35, 0.18, 0.12, 1.2), Constant(0.3)),
))
truth = rasterize(phantom)

mesh_fwd = build_disk_mesh(0.03)
basis = CurrentBasis()
_, volts = compute_ntd(phantom_to_mesh(phantom, mesh_fwd), basis)
_, volts_ref = compute_ntd(ConductivityField.constant(mesh_fwd, 1.0), basis)

mesh_inv = build_disk_mesh(0.06)
solver = NeumannSolver(ConductivityField.constant(mesh_inv, 1.0))
phis = [cauchy_difference(volts, volts_ref, ell, mesh=mesh_inv, solver=solver)
        for ell in range(basis.n_patterns)]
diffs = [volts.samples[ell] - volts_ref.samples[ell]
         for ell in range(basis.n_patterns)]
index = index_field(phis, diffs)
stack = export_phi_stack(phis)
print(f"{len(phis)} Cauchy differences, phi stack shape {stack.shape}")
iy, ix = np.unravel_index(np.argmax(index.values), index.values.shape)
print(f"index max {index.values.max():.3f} at pixel center "
      f"({(ix + 0.5) / 32 - 1:.3f}, {(iy + 0.5) / 32 - 1:.3f}); "
      f"true inclusion centers (0.40, 0.20) and (-0.30, -0.35)")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    axes[0].imshow(truth.grid, origin="lower", extent=[-1, 1, -1, 1],
                   cmap="viridis", vmin=0.2, vmax=2.0)
    axes[0].set_title("ground truth")
    axes[1].imshow(stack[0], origin="lower", extent=[-1, 1, -1, 1],
                   cmap="RdBu")
    axes[1].set_title("Cauchy difference, pattern 0")
    axes[2].imshow(index.values, origin="lower", extent=[-1, 1, -1, 1],
                   cmap="magma")
    axes[2].set_title("index field")
    fig.tight_layout()
    fig.savefig(__file__.replace(".py", ".png"), dpi=120)
    print(f"figure saved to {__file__.replace('.py', '.png')}")
except ImportError:
    print("matplotlib not installed; skipping figure")
