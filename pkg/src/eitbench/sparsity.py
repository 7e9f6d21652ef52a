"""Sparsity-regularized EIT reconstruction (Sobolev gradient descent
with Barzilai-Borwein trial steps, soft shrinkage and a weak-monotonicity
line search).

The iteration works on the inhomogeneity delta_sigma = sigma - 1 on the
nodal basis of an inversion mesh, keeps delta_sigma = 0 on the boundary
(inclusions are interior), clamps each iterate to the admissible range,
and interpolates the final inhomogeneity onto the 64x64 pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forward import (LAMBDA, BoundaryVoltages, ConductivityField, CurrentBasis,
                      NeumannSolver, element_geometry, lumped_mass, mass_matrix,
                      stiffness_matrix)
from .mesh import DiskMesh, build_disk_mesh
from .phantom import GRID_N, PixelImage, disk_mask, pixel_centers

INVERSION_H = 0.06
S_TRIAL_MAX = 1e4


@dataclass(frozen=True)
class SparsitySettings:
    """Knobs of the reconstruction loop; defaults are CLI-overridable."""

    alpha: float = 1e-3        # l1 penalty weight
    max_iters: int = 200       # I
    memory: int = 5            # M, line-search history length
    tau: float = 1e-4          # monotonicity slack
    backtrack: float = 0.5     # q, geometric step reduction
    s_stop: float = 1e-6       # stop when the step falls below this
    s_init: float = 1.0        # first trial step (no BB history yet)
    clamp: float = LAMBDA

    def __post_init__(self):
        if self.alpha <= 0 or self.tau <= 0 or self.s_stop <= 0:
            raise ValueError("alpha, tau and s_stop must be positive")
        if self.max_iters < 1 or self.memory < 1:
            raise ValueError("max_iters and memory must be >= 1")
        if not (0 < self.backtrack < 1):
            raise ValueError("backtrack factor must lie in (0, 1)")


def _trace_to_samples_matrix(theta_nodes: np.ndarray, n_samples: int) -> sp.csr_matrix:
    """Sparse periodic linear interpolation from boundary nodes to sample angles."""
    nb = len(theta_nodes)
    th_s = 2.0 * np.pi * np.arange(n_samples) / n_samples
    ext = np.concatenate([theta_nodes, [theta_nodes[0] + 2.0 * np.pi]])
    right = np.searchsorted(ext, th_s, side="right")
    left = right - 1
    span = ext[right] - ext[left]
    frac = (th_s - ext[left]) / span
    rows = np.repeat(np.arange(n_samples), 2)
    cols = np.stack([left % nb, right % nb], axis=1).ravel()
    vals = np.stack([1.0 - frac, frac], axis=1).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(n_samples, nb)).tocsr()


def soft_shrink(v: np.ndarray, threshold: float) -> np.ndarray:
    """Componentwise soft shrinkage sign(t) * max(|t| - threshold, 0)."""
    if threshold < 0:
        raise ValueError("shrinkage threshold must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def sobolev_smooth(mesh: DiskMesh, g: np.ndarray) -> np.ndarray:
    """Solve -lap(w) + w = g with w = 0 on the boundary (P1 weak form).

    Maps the L2 gradient to the smoothed H0^1 (Sobolev) gradient.
    """
    K = stiffness_matrix(mesh)
    M = mass_matrix(mesh)
    interior = np.ones(mesh.n_nodes, dtype=bool)
    interior[mesh.boundary_nodes] = False
    A = (K + M)[interior][:, interior].tocsc()
    rhs = (M @ g)[interior]
    out = np.zeros(mesh.n_nodes)
    out[interior] = spla.spsolve(A, rhs)
    return out


def _bb_quotient(dsig_new, dsig_old, g_new, g_old, h1):
    """BB curvature estimate <d_dsig, d_grad>_H1 / <d_dsig, d_dsig>_H1.

    Returns None when the quotient is nonpositive or non-finite (degenerate
    secant information).
    """
    ds = dsig_new - dsig_old
    dg = g_new - g_old
    h1ds = h1 @ ds
    denom = float(ds @ h1ds)
    if denom <= 0:
        return None
    q = float(dg @ h1ds) / denom
    if not np.isfinite(q) or q <= 0:
        return None
    return q


def bb_step(dsig_new: np.ndarray, dsig_old: np.ndarray,
            g_new: np.ndarray, g_old: np.ndarray,
            h1: sp.spmatrix, s_init: float) -> float:
    """Barzilai-Borwein quotient <d_dsig, d_grad>_H1 / <d_dsig, d_dsig>_H1.

    Falls back to ``s_init`` when the quotient is nonpositive or non-finite.
    """
    q = _bb_quotient(dsig_new, dsig_old, g_new, g_old, h1)
    return s_init if q is None else q


class SparsityObjective:
    """Misfit, gradient and penalty machinery on a fixed inversion mesh."""

    def __init__(self, data: BoundaryVoltages, mesh: DiskMesh | None = None,
                 basis: CurrentBasis | None = None, clamp: float = LAMBDA):
        self.mesh = mesh if mesh is not None else build_disk_mesh(INVERSION_H)
        self.basis = basis if basis is not None else CurrentBasis()
        if data.samples.shape[0] != self.basis.n_patterns:
            raise ValueError("data rows do not match the current basis")
        self.clamp = clamp
        m = self.mesh
        th_b = m.boundary_theta
        # misfit lives on the measurement sample grid: traces are interpolated
        # to the B equispaced angles and compared there, so data simulated on
        # this very mesh gives an exactly zero residual
        self.targets = data.samples - data.samples.mean(axis=1, keepdims=True)
        self.w_b = 2.0 * np.pi / data.n_samples
        self._P = _trace_to_samples_matrix(th_b, data.n_samples)
        self.patterns = self.basis.evaluate(th_b)
        self.h1 = (stiffness_matrix(m) + mass_matrix(m)).tocsr()
        self.lump = lumped_mass(m)
        self.interior = np.ones(m.n_nodes, dtype=bool)
        self.interior[m.boundary_nodes] = False
        K = stiffness_matrix(m)
        M = mass_matrix(m)
        self._sob = spla.splu((K + M)[self.interior][:, self.interior].tocsc())
        self._M = M

    def sigma(self, dsig: np.ndarray) -> ConductivityField:
        vals = np.clip(1.0 + dsig, self.clamp, 1.0 / self.clamp)
        return ConductivityField(self.mesh, vals)

    def misfit(self, dsig: np.ndarray) -> float:
        solver = NeumannSolver(self.sigma(dsig))
        return self._misfit_with(solver)

    def _residual(self, ell: int, u: np.ndarray) -> np.ndarray:
        s = self._P @ u[self.mesh.boundary_nodes]
        s -= s.mean()
        return s - self.targets[ell]

    def _misfit_with(self, solver: NeumannSolver) -> float:
        J = 0.0
        for ell in range(self.basis.n_patterns):
            u = solver.solve_flux(self.patterns[ell])
            res = self._residual(ell, u)
            J += 0.5 * self.w_b * float(res @ res)
        return J

    def misfit_and_gradient(self, dsig: np.ndarray):
        """Return (J, nodal L2 gradient) at sigma = 1 + dsig.

        The gradient is the patch-area-averaged representative of
        -sum_l grad(u_l) . grad(p_l); its pairing with the lumped mass
        reproduces the exact derivative of the discrete misfit. The adjoint
        flux is the mean-subtracted residual carried back to the boundary
        nodes through the sample-interpolation transpose.
        """
        m = self.mesh
        solver = NeumannSolver(self.sigma(dsig))
        _, area, (b, c) = element_geometry(m)
        tri = m.triangles
        elem = np.zeros(len(tri))
        J = 0.0
        for ell in range(self.basis.n_patterns):
            u = solver.solve_flux(self.patterns[ell])
            res = self._residual(ell, u)
            J += 0.5 * self.w_b * float(res @ res)
            load = np.zeros(m.n_nodes)
            load[m.boundary_nodes] = self.w_b * (self._P.T @ (res - res.mean()))
            p = solver.solve_load(load)
            ux = np.sum(b * u[tri], axis=1) / (2.0 * area)
            uy = np.sum(c * u[tri], axis=1) / (2.0 * area)
            px = np.sum(b * p[tri], axis=1) / (2.0 * area)
            py = np.sum(c * p[tri], axis=1) / (2.0 * area)
            elem -= ux * px + uy * py
        dual = np.zeros(m.n_nodes)
        np.add.at(dual, tri.ravel(), np.repeat(elem * area / 3.0, 3))
        return J, dual / self.lump

    def smooth(self, g: np.ndarray) -> np.ndarray:
        """Sobolev gradient via the prefactorized interior Helmholtz solve."""
        out = np.zeros(self.mesh.n_nodes)
        out[self.interior] = self._sob.solve((self._M @ g)[self.interior])
        return out

    def l1(self, dsig: np.ndarray) -> float:
        return float(np.sum(np.abs(dsig) * self.lump))

    def h1_norm_sq(self, v: np.ndarray) -> float:
        return float(v @ (self.h1 @ v))


@dataclass
class SparsityResult:
    image: PixelImage
    dsig: np.ndarray
    psi_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    monotonicity_ok: bool = True
    iterations: int = 0
    stop_reason: str = ""


def reconstruct_sparsity(data: BoundaryVoltages,
                         settings: SparsitySettings = SparsitySettings(),
                         mesh: DiskMesh | None = None,
                         basis: CurrentBasis | None = None) -> SparsityResult:
    """Run the sparsity reconstruction from boundary voltage data.

    Each iteration computes the Sobolev gradient, takes a Barzilai-Borwein
    trial step, shrinks, clamps to the admissible set, and backtracks
    geometrically until the weak-monotonicity condition
    Psi(candidate) <= max(last M accepted Psi) - tau*(s/2)*||candidate - dsig||_H1^2
    holds. Stops when the step drops below s_stop or after max_iters.
    """
    obj = SparsityObjective(data, mesh=mesh, basis=basis, clamp=settings.clamp)
    n = obj.mesh.n_nodes
    dsig = np.zeros(n)
    lo, hi = settings.clamp - 1.0, 1.0 / settings.clamp - 1.0

    J, grad = obj.misfit_and_gradient(dsig)
    psi = J + settings.alpha * obj.l1(dsig)
    result = SparsityResult(image=None, dsig=dsig, psi_history=[psi])
    g_s = obj.smooth(grad)
    prev_dsig = None
    prev_gs = None
    stop = "max_iters"

    for it in range(settings.max_iters):
        if prev_dsig is None:
            s = settings.s_init
        else:
            # the BB quotient estimates the curvature of the smoothed misfit;
            # the trial step is its inverse (SpaRSA-style), capped defensively
            q = _bb_quotient(dsig, prev_dsig, g_s, prev_gs, obj.h1)
            s = settings.s_init if q is None else min(1.0 / q, S_TRIAL_MAX)
        psi_ref = max(result.psi_history[-settings.memory:])
        accepted = False
        while s >= settings.s_stop:
            cand = soft_shrink(dsig - s * g_s, s * settings.alpha)
            np.clip(cand, lo, hi, out=cand)
            step_sq = obj.h1_norm_sq(cand - dsig)
            J_c = obj.misfit(cand)
            psi_c = J_c + settings.alpha * obj.l1(cand)
            if psi_c <= psi_ref - settings.tau * 0.5 * s * step_sq:
                accepted = True
                break
            s *= settings.backtrack
        if not accepted:
            stop = "step_below_s_stop"
            break
        if np.array_equal(cand, dsig):
            stop = "stationary"
            break
        # monotonicity holds for the accepted candidate by construction;
        # record it so callers can audit the run
        if psi_c > psi_ref - settings.tau * 0.5 * s * step_sq:
            result.monotonicity_ok = False
        prev_dsig, prev_gs = dsig, g_s
        dsig = cand
        result.psi_history.append(psi_c)
        result.step_history.append(s)
        result.iterations = it + 1
        J, grad = obj.misfit_and_gradient(dsig)
        g_s = obj.smooth(grad)

    result.stop_reason = stop
    result.dsig = dsig
    result.image = dsig_to_image(obj.mesh, dsig)
    return result


def dsig_to_image(mesh: DiskMesh, dsig: np.ndarray, n: int = GRID_N) -> PixelImage:
    """Interpolate 1 + dsig from the inversion mesh onto the pixel grid."""
    X, Y = pixel_centers(n)
    mask = disk_mask(n)
    grid = np.ones((n, n))
    grid[mask] = 1.0 + mesh.interpolate(dsig, np.column_stack([X[mask], Y[mask]]))
    return PixelImage(grid=grid, mask=mask)
