"""Random phantoms of non-overlapping elliptical inclusions on background 1.

Inclusions are either constant-valued, with values drawn from
U(0.2, 0.8) or U(1.2, 2.0) (fair coin between the two bands), or textured,
modulated by f(x, y) = (sin(kx x) + sin(ky y))/2 in the ellipse frame and
affinely rescaled into one of the same two bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import LAMBDA, ConductivityField
from .mesh import DiskMesh

GRID_N = 64
CONTAINMENT_RADIUS = 0.9
OVERLAP_MARGIN = 0.05
MAX_REJECTIONS = 10_000

LO_BAND = (0.2, 0.8)
HI_BAND = (1.2, 2.0)


class PhantomSamplingError(RuntimeError):
    """Rejection sampling failed to place the requested inclusions."""


@dataclass(frozen=True)
class Ellipse:
    """Rotated ellipse; center (cx, cy), semi-axes a >= b, rotation alpha."""

    cx: float
    cy: float
    a: float
    b: float
    alpha: float

    def __post_init__(self):
        if not (0 < self.b <= self.a):
            raise ValueError("ellipse semi-axes must satisfy 0 < b <= a")
        if np.hypot(self.cx, self.cy) + self.a > CONTAINMENT_RADIUS + 1e-12:
            raise ValueError(
                f"ellipse escapes the containment circle of radius {CONTAINMENT_RADIUS}")

    def contains(self, x, y):
        """Membership via the rotated-translated implicit form (vectorized)."""
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        ca, sa = np.cos(self.alpha), np.sin(self.alpha)
        xp = ca * dx + sa * dy
        yp = -sa * dx + ca * dy
        return (xp / self.a) ** 2 + (yp / self.b) ** 2 <= 1.0


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        lo, hi = LO_BAND, HI_BAND
        if not (lo[0] <= self.value <= lo[1] or hi[0] <= self.value <= hi[1]):
            raise ValueError(f"constant payload {self.value} outside "
                             f"{lo} and {hi}")


@dataclass(frozen=True)
class Textured:
    kx: float
    ky: float
    lo: float
    hi: float

    def __post_init__(self):
        if (self.lo, self.hi) not in (LO_BAND, HI_BAND):
            raise ValueError("textured range must be one of the two payload bands")


@dataclass(frozen=True)
class Inclusion:
    ellipse: Ellipse
    payload: Constant | Textured

    def value_at(self, x, y):
        """Conductivity contributed inside the ellipse (vectorized)."""
        if isinstance(self.payload, Constant):
            return np.broadcast_to(self.payload.value, np.shape(x)).copy() \
                if np.ndim(x) else self.payload.value
        e = self.ellipse
        dx = np.asarray(x, dtype=float) - e.cx
        dy = np.asarray(y, dtype=float) - e.cy
        ca, sa = np.cos(e.alpha), np.sin(e.alpha)
        xp = ca * dx + sa * dy
        yp = -sa * dx + ca * dy
        f = 0.5 * (np.sin(self.payload.kx * xp) + np.sin(self.payload.ky * yp))
        lo, hi = self.payload.lo, self.payload.hi
        return lo + 0.5 * (f + 1.0) * (hi - lo)


@dataclass(frozen=True)
class Phantom:
    inclusions: tuple[Inclusion, ...]
    background: float = 1.0

    def __post_init__(self):
        if not self.inclusions:
            raise ValueError("phantom needs at least one inclusion")
        es = [inc.ellipse for inc in self.inclusions]
        for i in range(len(es)):
            for j in range(i + 1, len(es)):
                if ellipses_overlap(es[i], es[j]):
                    raise ValueError("phantom inclusions overlap")


@dataclass(frozen=True)
class PixelImage:
    """64x64 image on [-1, 1]^2; off-mask pixels carry the background 1.0.

    Row-major with grid[iy, ix]; pixel centers at
    x = -1 + (ix + 1/2) * 2/64, y = -1 + (iy + 1/2) * 2/64.
    """

    grid: np.ndarray
    mask: np.ndarray


def pixel_centers(n: int = GRID_N):
    """Pixel-center coordinate arrays (X, Y), each (n, n), grid[iy, ix]."""
    c = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    X, Y = np.meshgrid(c, c, indexing="xy")
    return X, Y


def disk_mask(n: int = GRID_N) -> np.ndarray:
    X, Y = pixel_centers(n)
    return X ** 2 + Y ** 2 <= 1.0


def ellipses_overlap(e1: Ellipse, e2: Ellipse) -> bool:
    """Conservative overlap test via circumscribed circles plus a margin.

    Returns False (certified disjoint) only when the centers are at least
    a1 + a2 + margin apart; never accepts a truly overlapping pair.
    """
    dist = np.hypot(e1.cx - e2.cx, e1.cy - e2.cy)
    return dist < e1.a + e2.a + OVERLAP_MARGIN


def sample_phantom(seed: int, max_inclusions: int, textured: bool = False) -> Phantom:
    """Draw a phantom with n ~ U{1..max_inclusions} rejection-sampled ellipses.

    Deterministic for a given seed. Raises PhantomSamplingError after 10,000
    rejected candidates (infeasible geometry request).
    """
    if not (1 <= max_inclusions <= 6):
        raise ValueError("max_inclusions must be in 1..6")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_inclusions + 1))
    ellipses: list[Ellipse] = []
    rejections = 0
    while len(ellipses) < n:
        r = 0.8 * np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        a = rng.uniform(0.1, 0.35)
        b = rng.uniform(0.08, a)
        alpha = rng.uniform(0.0, np.pi)
        cx, cy = r * np.cos(ang), r * np.sin(ang)
        ok = np.hypot(cx, cy) + a <= CONTAINMENT_RADIUS
        if ok:
            cand = Ellipse(cx, cy, a, b, alpha)
            ok = not any(ellipses_overlap(cand, e) for e in ellipses)
        if ok:
            ellipses.append(cand)
        else:
            rejections += 1
            if rejections >= MAX_REJECTIONS:
                raise PhantomSamplingError(
                    f"gave up after {MAX_REJECTIONS} rejections "
                    f"(max_inclusions={max_inclusions})")
    inclusions = []
    for e in ellipses:
        band = LO_BAND if rng.uniform() < 0.5 else HI_BAND
        if textured:
            kx = rng.uniform(4.0, 10.0)
            ky = rng.uniform(4.0, 10.0)
            inclusions.append(Inclusion(e, Textured(kx, ky, band[0], band[1])))
        else:
            inclusions.append(Inclusion(e, Constant(rng.uniform(band[0], band[1]))))
    return Phantom(tuple(inclusions))


def eval_sigma(p: Phantom, point) -> float:
    """Conductivity of the phantom at one point of the closed unit disk."""
    x, y = float(point[0]), float(point[1])
    for inc in p.inclusions:
        if inc.ellipse.contains(x, y):
            return float(inc.value_at(x, y))
    return p.background


def eval_sigma_many(p: Phantom, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized eval_sigma over coordinate arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(x.shape, p.background)
    claimed = np.zeros(x.shape, dtype=bool)
    for inc in p.inclusions:
        inside = inc.ellipse.contains(x, y) & ~claimed
        if np.any(inside):
            vals = inc.value_at(x[inside], y[inside])
            out[inside] = vals
            claimed |= inside
    return out


def rasterize(p: Phantom, n: int = GRID_N) -> PixelImage:
    """Ground-truth pixel image: eval_sigma at on-mask centers, 1.0 elsewhere."""
    X, Y = pixel_centers(n)
    mask = disk_mask(n)
    grid = np.ones((n, n))
    grid[mask] = eval_sigma_many(p, X[mask], Y[mask])
    return PixelImage(grid=grid, mask=mask)


def phantom_to_mesh(p: Phantom, mesh: DiskMesh) -> ConductivityField:
    """Nodal conductivity: eval_sigma at node coordinates, clamped to admissibility."""
    vals = eval_sigma_many(p, mesh.nodes[:, 0], mesh.nodes[:, 1])
    return ConductivityField(mesh, np.clip(vals, LAMBDA, 1.0 / LAMBDA))


def phantom_to_records(p: Phantom) -> list[dict]:
    """JSON-ready inclusion records (see docs/FORMAT.md)."""
    recs = []
    for inc in p.inclusions:
        e = inc.ellipse
        rec = {"h": float(e.cx), "k": float(e.cy), "a": float(e.a),
               "b": float(e.b), "alpha": float(e.alpha)}
        if isinstance(inc.payload, Constant):
            rec["kind"] = "constant"
            rec["value"] = float(inc.payload.value)
        else:
            rec["kind"] = "textured"
            rec.update(kx=float(inc.payload.kx), ky=float(inc.payload.ky),
                       lo=float(inc.payload.lo), hi=float(inc.payload.hi))
        recs.append(rec)
    return recs


def phantom_from_records(recs: list[dict]) -> Phantom:
    incs = []
    for rec in recs:
        e = Ellipse(rec["h"], rec["k"], rec["a"], rec["b"], rec["alpha"])
        if rec["kind"] == "constant":
            incs.append(Inclusion(e, Constant(rec["value"])))
        else:
            incs.append(Inclusion(e, Textured(rec["kx"], rec["ky"],
                                              rec["lo"], rec["hi"])))
    return Phantom(tuple(incs))
