"""Direct-sampling-method machinery: Cauchy difference functions and
index fields.

The Cauchy difference function is the harmonic lift of the fractionally
filtered boundary-voltage difference: -lap(phi) = 0 with
d(phi)/dn = (-lap_boundary)^gamma (u_sigma - u_1) and zero boundary mean.
The index field evaluates, per pixel, |grad phi| (the probing direction is
taken as the gradient direction, the maximizing choice), normalized by the
L2 norm of the boundary data difference and by the probe seminorm weight,
then averaged over current patterns.

The probe seminorm has a closed form on the unit disk: the dipole probing
function at x has boundary Fourier coefficients proportional to |x|^(n-1),
so |eta_x|_{H^{2 gamma}}^2 = c * sum_n n^(4 gamma) |x|^(2(n-1)). Without
this weight the index is maximal at the domain boundary for every target
(|grad phi|^2 is subharmonic), which defeats the sampling purpose; the
global constant c drops out of relative comparisons and is set to 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .forward import BoundaryVoltages, ConductivityField, NeumannSolver
from .mesh import DiskMesh, build_disk_mesh, interp_boundary
from .phantom import GRID_N, disk_mask, pixel_centers
from .sparsity import INVERSION_H

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 1.0


@dataclass(frozen=True, eq=False)
class CauchyDifference:
    """Harmonic lift phi on the inversion mesh for one current pattern."""

    mesh: DiskMesh
    phi: np.ndarray
    pattern: int


@dataclass(frozen=True, eq=False)
class IndexField:
    """Nonnegative index values on the pixel grid (off-mask pixels are 0)."""

    values: np.ndarray
    mask: np.ndarray
    degenerate: bool = False


def fractional_boundary_laplacian(trace: np.ndarray, gamma: float) -> np.ndarray:
    """Apply (-lap_boundary)^gamma to equispaced circle samples via the DFT.

    Fourier mode n is multiplied by |n|^(2*gamma); the constant mode is
    annihilated. Returns the real part.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    v = np.asarray(trace, dtype=float)
    b = len(v)
    modes = np.fft.fftfreq(b, d=1.0 / b)
    mult = np.abs(modes) ** (2.0 * gamma)
    mult[0] = 0.0
    return np.fft.ifft(np.fft.fft(v) * mult).real


def cauchy_difference(data_sigma: BoundaryVoltages, data_ref: BoundaryVoltages,
                      pattern: int, gamma: float = DEFAULT_GAMMA,
                      mesh: DiskMesh | None = None,
                      solver: NeumannSolver | None = None) -> CauchyDifference:
    """Cauchy difference function for one current pattern.

    The flux is the fractional boundary Laplacian of the voltage-row
    difference (automatically mean-free); the Laplace problem is solved with
    sigma = 1 on the inversion mesh and normalized to zero boundary mean.
    """
    if mesh is None:
        mesh = build_disk_mesh(INVERSION_H) if solver is None else solver.mesh
    if solver is None:
        solver = NeumannSolver(ConductivityField.constant(mesh, 1.0))
    diff = data_sigma.samples[pattern] - data_ref.samples[pattern]
    flux = fractional_boundary_laplacian(diff, gamma)
    th_s = data_sigma.theta
    flux_nodes = interp_boundary(th_s, flux, mesh.boundary_theta)
    w = mesh.boundary_weights
    flux_nodes = flux_nodes - np.sum(w * flux_nodes) / w.sum()
    phi = solver.solve_flux(flux_nodes)
    return CauchyDifference(mesh=mesh, phi=phi, pattern=pattern)


def probe_seminorm_weight(radii: np.ndarray, gamma: float = DEFAULT_GAMMA,
                          n_terms: int = 2000) -> np.ndarray:
    """Dipole-probe H^(2 gamma) boundary seminorm on the unit disk.

    sqrt(sum_{n>=1} n^(4 gamma) r^(2(n-1))), evaluated by Horner's scheme;
    exact up to a global constant that cancels in the index.
    """
    z = np.asarray(radii, dtype=float) ** 2
    coeff = np.arange(n_terms, 0, -1.0) ** (4.0 * gamma)
    s = np.zeros_like(z)
    for c in coeff:
        s = s * z + c
    return np.sqrt(s)


def index_field(phis: list[CauchyDifference],
                data_diffs: list[np.ndarray],
                gamma: float = DEFAULT_GAMMA) -> IndexField:
    """DSM index on the pixel grid from per-pattern Cauchy differences.

    Per pixel and pattern the numerator is |grad phi| (gradient direction is
    the maximizing probe direction); the denominator is the L2 boundary norm
    of the data difference times the probe seminorm weight. Patterns are
    aggregated by the mean. Patterns with identically zero data difference
    contribute zero and are flagged.
    """
    if not phis or len(phis) != len(data_diffs):
        raise ValueError("need equally many Cauchy differences and data rows")
    mesh = phis[0].mesh
    mask = disk_mask()
    X, Y = pixel_centers()
    pts = np.column_stack([X[mask], Y[mask]])
    simp = mesh.locate(pts)
    probe = probe_seminorm_weight(np.hypot(pts[:, 0], pts[:, 1]), gamma)
    acc = np.zeros(len(pts))
    degenerate = False
    for cd, diff in zip(phis, data_diffs):
        diff = np.asarray(diff, dtype=float)
        b = len(diff)
        norm = np.sqrt(2.0 * np.pi / b * np.sum(diff * diff))
        if norm == 0.0:
            degenerate = True
            log.warning("index_field: pattern %d has zero data difference", cd.pattern)
            continue
        g = cd.mesh.element_gradients(cd.phi)
        gmag = np.hypot(g[:, 0], g[:, 1])
        acc += gmag[simp] / (norm * probe)
    acc /= len(phis)
    values = np.zeros((GRID_N, GRID_N))
    values[mask] = acc
    return IndexField(values=values, mask=mask, degenerate=degenerate)


def export_phi_stack(phis: list[CauchyDifference], n: int = GRID_N) -> np.ndarray:
    """Interpolate Cauchy differences to the pixel grid, stacked in pattern order.

    Returns an array of shape (len(phis), n, n); off-mask pixels are 0.
    """
    if not phis:
        raise ValueError("empty phi list")
    mask = disk_mask(n)
    X, Y = pixel_centers(n)
    pts = np.column_stack([X[mask], Y[mask]])
    stack = np.zeros((len(phis), n, n))
    for i, cd in enumerate(phis):
        stack[i][mask] = cd.mesh.interpolate(cd.phi, pts)
    return stack
