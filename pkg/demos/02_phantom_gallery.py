"""Phantom sampler gallery: constant and textured inclusions.

Draws a few random phantoms, prints their inclusion records, and renders
the 64 x 64 ground-truth grids.
"""

import numpy as np

from eitbench.phantom import phantom_to_records, rasterize, sample_phantom

images = []
for seed, textured in ((3, False), (11, False), (3, True), (11, True)):
    ph = sample_phantom(seed, max_inclusions=4, textured=textured)
    img = rasterize(ph)
    images.append((seed, textured, img))
    kind = "textured" if textured else "constant"
    print(f"seed {seed} ({kind}): {len(ph.inclusions)} inclusion(s)")
    for rec in phantom_to_records(ph):
        print(f"  {rec}")
    on = img.grid[img.mask]
    print(f"  on-disk values in [{on.min():.3f}, {on.max():.3f}]")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 4, figsize=(14, 3.6))
    for ax, (seed, textured, img) in zip(axes, images):
        im = ax.imshow(img.grid, origin="lower", extent=[-1, 1, -1, 1],
                       cmap="viridis", vmin=0.2, vmax=2.0)
        ax.set_title(f"seed {seed}" + (" textured" if textured else ""))
    fig.colorbar(im, ax=axes, shrink=0.85)
    fig.savefig(__file__.replace(".py", ".png"), dpi=120)
    print(f"figure saved to {__file__.replace('.py', '.png')}")
except ImportError:
    print("matplotlib not installed; skipping figure")
