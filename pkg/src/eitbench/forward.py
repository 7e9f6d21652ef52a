"""P1 Galerkin forward modeling for the continuum EIT Neumann problem.

Solves -div(sigma grad u) = 0 on the unit disk with boundary flux
sigma du/dn = j and the normalization of zero boundary mean, assembles
Neumann-to-Dirichlet / Dirichlet-to-Neumann matrices in the trigonometric
current basis, solves the least-squares adjoint problem, and applies the
multiplicative Gaussian measurement-noise model.

The pure-Neumann stiffness matrix is singular (constants); we solve the
shifted SPD system (A + beta w w^T) u = b, where w carries the boundary
trapezoid weights. For compatible loads this returns exactly the solution
with zero boundary mean, and scaling sigma by a constant scales the system
exactly, so constant-conductivity identities hold to the last bit.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DiskMesh, interp_boundary

log = logging.getLogger(__name__)

LAMBDA = 0.05  # admissible conductivities lie in [LAMBDA, 1/LAMBDA]

COMPAT_TOL = 1e-9
RESIDUAL_TOL = 1e-10
COND_LIMIT = 1e12


class SolverError(RuntimeError):
    """Discrete system could not be solved reliably."""


class IncompatibleCurrentError(ValueError):
    """Boundary current violates the zero-mean compatibility condition."""


class IllConditionedError(RuntimeError):
    """Matrix inversion refused: condition number above the safe limit."""


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """Nodal conductivity on a mesh, admissible range [LAMBDA, 1/LAMBDA]."""

    mesh: DiskMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError("conductivity values must be one per mesh node")
        if not np.all(np.isfinite(v)):
            raise ValueError("conductivity values must be finite")
        if v.min() < LAMBDA or v.max() > 1.0 / LAMBDA:
            raise ValueError(
                f"conductivity outside admissible range [{LAMBDA}, {1/LAMBDA}]")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: DiskMesh, value: float = 1.0) -> "ConductivityField":
        return cls(mesh, np.full(mesh.n_nodes, float(value)))


@dataclass(frozen=True)
class CurrentBasis:
    """Trig current patterns pi^(-1/2) sin(n theta) and pi^(-1/2) cos(n theta).

    n runs 1..n_max; patterns are interleaved (sin 1, cos 1, sin 2, cos 2, ...).
    """

    n_max: int = 16

    @property
    def n_patterns(self) -> int:
        return 2 * self.n_max

    @property
    def frequencies(self) -> np.ndarray:
        """Frequency n of each pattern, [1, 1, 2, 2, ...]."""
        return np.repeat(np.arange(1, self.n_max + 1), 2)

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        """Pattern values at angles theta, shape (n_patterns, len(theta))."""
        theta = np.asarray(theta, dtype=float)
        out = np.empty((self.n_patterns, len(theta)))
        scale = 1.0 / np.sqrt(np.pi)
        for i in range(self.n_max):
            out[2 * i] = scale * np.sin((i + 1) * theta)
            out[2 * i + 1] = scale * np.cos((i + 1) * theta)
        return out


@dataclass(frozen=True)
class BoundaryVoltages:
    """Boundary traces sampled at n_samples equispaced angles, one row per pattern."""

    samples: np.ndarray  # (n_patterns, n_samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def theta(self) -> np.ndarray:
        b = self.n_samples
        return 2.0 * np.pi * np.arange(b) / b


@dataclass(frozen=True)
class NtDMatrix:
    """Neumann-to-Dirichlet map restricted to the trig current basis."""

    entries: np.ndarray  # (2 n_max, 2 n_max)


@dataclass(frozen=True)
class DtNMatrix:
    """Dirichlet-to-Neumann map on the span of the trig basis."""

    entries: np.ndarray


# --- element geometry cache -------------------------------------------------

_GEOMETRY_CACHE: "weakref.WeakKeyDictionary[DiskMesh, tuple]" = weakref.WeakKeyDictionary()


def element_geometry(mesh: DiskMesh):
    """Per-triangle P1 stiffness blocks (unit conductivity), areas, and gradients.

    Returns (ke, area, grads) with ke of shape (M, 3, 3), cached per mesh.
    """
    cached = _GEOMETRY_CACHE.get(mesh)
    if cached is not None:
        return cached
    t = mesh.triangles
    x = mesh.nodes[:, 0][t]
    y = mesh.nodes[:, 1][t]
    area = mesh.triangle_areas()
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
        / (4.0 * area[:, None, None])
    grads = (b, c)
    _GEOMETRY_CACHE[mesh] = (ke, area, grads)
    return ke, area, grads


def stiffness_matrix(mesh: DiskMesh, sigma_tri: np.ndarray | None = None) -> sp.csr_matrix:
    """Assemble the P1 stiffness matrix, optionally weighted per triangle."""
    ke, _, _ = element_geometry(mesh)
    if sigma_tri is not None:
        ke = ke * sigma_tri[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(mesh: DiskMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    _, area, _ = element_geometry(mesh)
    t = mesh.triangles
    me = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (area[:, None, None] / 12.0)
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def lumped_mass(mesh: DiskMesh) -> np.ndarray:
    """Diagonal (lumped) P1 mass: one third of the adjacent-triangle area per node."""
    _, area, _ = element_geometry(mesh)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return out


class NeumannSolver:
    """Factorized Neumann solver for one conductivity field.

    The sparse LU factorization is reused across right-hand sides (all 32
    current patterns, adjoint loads); the instance is read-only after
    construction.
    """

    def __init__(self, field: ConductivityField):
        mesh = field.mesh
        self.mesh = mesh
        sig_tri = field.values[mesh.triangles].mean(axis=1)
        A = stiffness_matrix(mesh, sig_tri)
        n = mesh.n_nodes
        w = np.zeros(n)
        w[mesh.boundary_nodes] = mesh.boundary_weights
        beta = A.diagonal().mean() / (w @ w)
        w_col = sp.csr_matrix(
            (w[mesh.boundary_nodes], (mesh.boundary_nodes, np.zeros(mesh.n_boundary, int))),
            shape=(n, 1))
        A_reg = (A + beta * (w_col @ w_col.T)).tocsc()
        self._A = A
        self._w = w
        self._w_total = w.sum()
        try:
            self._lu = spla.splu(A_reg)
        except RuntimeError as exc:  # exactly singular factorization
            raise SolverError(f"Neumann system factorization failed: {exc}") from exc

    def solve_load(self, load: np.ndarray) -> np.ndarray:
        """Solve for a nodal load vector; returns the zero-boundary-mean solution."""
        u = self._lu.solve(load)
        if not np.all(np.isfinite(u)):
            raise SolverError("non-finite solution (singular or ill-conditioned system)")
        u = u - (self._w @ u) / self._w_total
        r = self._A @ u - load
        rel = np.linalg.norm(r) / max(np.linalg.norm(load), 1e-300)
        if rel > RESIDUAL_TOL:
            raise SolverError(
                f"discrete residual {rel:.2e} exceeds {RESIDUAL_TOL:.0e} "
                f"(system likely ill-conditioned)")
        return u

    def solve_flux(self, flux_bnd: np.ndarray) -> np.ndarray:
        """Solve for a boundary flux given at the ordered boundary nodes."""
        load = np.zeros(self.mesh.n_nodes)
        load[self.mesh.boundary_nodes] = self.mesh.boundary_weights * flux_bnd
        return self.solve_load(load)


def _flux_values(mesh: DiskMesh, j) -> np.ndarray:
    th = mesh.boundary_theta
    return np.asarray(j(th) if callable(j) else j, dtype=float)


def solve_neumann(sigma: ConductivityField, j) -> np.ndarray:
    """Solve the Neumann problem for one boundary current density.

    ``j`` is a callable of theta or an array at the ordered boundary nodes.
    Rejects currents whose boundary-quadrature mean exceeds the
    compatibility tolerance.
    """
    mesh = sigma.mesh
    jv = _flux_values(mesh, j)
    mean = float(np.sum(mesh.boundary_weights * jv))
    if abs(mean) > COMPAT_TOL * max(1.0, np.abs(jv).max()):
        raise IncompatibleCurrentError(
            f"boundary current has nonzero mean {mean:.3e}")
    return NeumannSolver(sigma).solve_flux(jv)


def solve_adjoint(sigma: ConductivityField, residual) -> np.ndarray:
    """Solve the adjoint Neumann problem with flux = mean-subtracted residual."""
    mesh = sigma.mesh
    rv = _flux_values(mesh, residual)
    w = mesh.boundary_weights
    rv = rv - np.sum(w * rv) / w.sum()
    return NeumannSolver(sigma).solve_flux(rv)


def compute_ntd(sigma: ConductivityField, basis: CurrentBasis,
                n_samples: int = 64,
                solver: NeumannSolver | None = None):
    """Solve all current patterns; assemble the NtD matrix and voltage samples.

    Returns (NtDMatrix, BoundaryVoltages). NtD entries are the boundary
    trapezoid pairings <g_m, u_l>; voltage rows are the traces linearly
    interpolated to ``n_samples`` equispaced angles and re-centred to zero
    mean on that grid.
    """
    mesh = sigma.mesh
    if solver is None:
        solver = NeumannSolver(sigma)
    th = mesh.boundary_theta
    w = mesh.boundary_weights
    G = basis.evaluate(th)
    th_s = 2.0 * np.pi * np.arange(n_samples) / n_samples
    L = np.empty((basis.n_patterns, basis.n_patterns))
    V = np.empty((basis.n_patterns, n_samples))
    for ell in range(basis.n_patterns):
        u = solver.solve_flux(G[ell])
        tr = u[mesh.boundary_nodes]
        L[:, ell] = G @ (w * tr)
        row = interp_boundary(th, tr, th_s)
        V[ell] = row - row.mean()
    return NtDMatrix(L), BoundaryVoltages(V)


def ntd_to_dtn(L: NtDMatrix) -> DtNMatrix:
    """Invert the measured NtD matrix, symmetrized as (A + A^T)/2."""
    M = L.entries
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(
            f"NtD condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    log.debug("ntd_to_dtn: condition number %.3e", cond)
    inv = np.linalg.inv(M)
    return DtNMatrix(0.5 * (inv + inv.T))


def add_noise(V: BoundaryVoltages, delta: float, seed: int) -> BoundaryVoltages:
    """Perturb each sample u by delta * |u| * xi with iid standard normal xi.

    Deterministic for a given seed. Rows are not re-centred; downstream
    consumers subtract means themselves.
    """
    if delta < 0:
        raise ValueError("noise level must be nonnegative")
    if delta == 0:
        return BoundaryVoltages(V.samples.copy())
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(V.samples.shape)
    return BoundaryVoltages(V.samples + delta * np.abs(V.samples) * xi)


def ntd_from_noisy_voltages(V: BoundaryVoltages, basis: CurrentBasis) -> NtDMatrix:
    """Reassemble the measured NtD matrix from (noisy) voltage rows.

    Trapezoid quadrature of g_m against the mean-subtracted rows on the
    equispaced sample grid, then symmetrization.
    """
    b = V.n_samples
    if b < 2 * basis.n_max:
        raise ValueError("sample grid too coarse for the basis (Nyquist)")
    th = V.theta
    G = basis.evaluate(th)
    rows = V.samples - V.samples.mean(axis=1, keepdims=True)
    L = (2.0 * np.pi / b) * (G @ rows.T)
    return NtDMatrix(0.5 * (L + L.T))
