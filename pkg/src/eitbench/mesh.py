"""Triangular meshes of the unit disk with an angularly ordered boundary.

The mesh is built deterministically from concentric rings of nodes (no
external mesher): the boundary ring is equispaced in theta, inner rings
shrink toward the center with their point counts halved whenever the arc
spacing gets compressed, and the point cloud is Delaunay-triangulated.
The resulting mesh carries a large discrete rotational symmetry group,
which is what keeps the trigonometric current patterns numerically
orthogonal under the discrete Neumann-to-Dirichlet map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

H_MIN = 0.005
H_MAX = 0.2


@dataclass(frozen=True, eq=False)
class DiskMesh:
    """Immutable triangulation of the unit disk.

    Attributes
    ----------
    nodes : (N, 2) float array
        Node coordinates, |p| <= 1.
    triangles : (M, 3) int array
        Node index triples, positively oriented.
    boundary_nodes : (B,) int array
        Indices of boundary nodes ordered by increasing polar angle,
        starting at theta = 0.
    h : float
        Target mesh size the mesh was built for.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    h: float
    _point_locator: Delaunay = field(repr=False, compare=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_nodes)

    @property
    def boundary_theta(self) -> np.ndarray:
        """Polar angles of the boundary nodes, increasing in [0, 2*pi)."""
        p = self.nodes[self.boundary_nodes]
        return np.mod(np.arctan2(p[:, 1], p[:, 0]), 2.0 * np.pi)

    @property
    def boundary_weights(self) -> np.ndarray:
        """Trapezoid weights along the boundary polygon (chord lengths)."""
        p = self.nodes[self.boundary_nodes]
        nxt = np.roll(p, -1, axis=0)
        chord = np.hypot(nxt[:, 0] - p[:, 0], nxt[:, 1] - p[:, 1])
        return 0.5 * (chord + np.roll(chord, 1))

    def triangle_areas(self) -> np.ndarray:
        p0 = self.nodes[self.triangles[:, 0]]
        p1 = self.nodes[self.triangles[:, 1]]
        p2 = self.nodes[self.triangles[:, 2]]
        return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                      - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Containing-triangle index for each query point.

        Points inside the unit disk but outside the inscribed boundary
        polygon are shrunk radially until they land in a triangle, so every
        on-disk query resolves to a triangle.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        simp = self._point_locator.find_simplex(points)
        missing = np.flatnonzero(simp < 0)
        for shrink in (1.0 - 1e-12, 1.0 - 1e-9, 1.0 - 1e-6, 1.0 - 1e-3, 1.0 - 1e-2):
            if len(missing) == 0:
                break
            simp[missing] = self._point_locator.find_simplex(points[missing] * shrink)
            missing = missing[simp[missing] < 0]
        return simp

    def interpolate(self, nodal: np.ndarray, points: np.ndarray) -> np.ndarray:
        """P1 interpolation of a nodal field at arbitrary points in the disk."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        simp = self.locate(points)
        if np.any(simp < 0):
            raise ValueError("interpolation point outside the unit disk")
        tri = self.triangles[simp]
        bary = self._barycentric(points, simp)
        return np.einsum("ij,ij->i", nodal[tri], bary)

    def element_gradients(self, nodal: np.ndarray) -> np.ndarray:
        """Piecewise-constant gradient of a P1 field, one 2-vector per triangle."""
        t = self.triangles
        x = self.nodes[:, 0][t]
        y = self.nodes[:, 1][t]
        area = self.triangle_areas()
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        v = nodal[t]
        gx = np.sum(b * v, axis=1) / (2.0 * area)
        gy = np.sum(c * v, axis=1) / (2.0 * area)
        return np.stack([gx, gy], axis=1)

    def _barycentric(self, points, simp):
        trans = self._point_locator.transform[simp]
        d = points - trans[:, 2]
        b = np.einsum("ijk,ik->ij", trans[:, :2], d)
        return np.concatenate([b, 1.0 - b.sum(axis=1, keepdims=True)], axis=1)


def _ring_layout(h: float):
    """Ring radii, point counts and phase offsets for the node seeding.

    The boundary count is the next multiple of 64, which aligns the
    64-angle measurement grid exactly with boundary nodes (sampling the
    trace there is then interpolation-free) and leaves powers-of-two
    headroom for halving ring counts toward the center.
    """
    nb = int(np.ceil(2.0 * np.pi / h))
    nb = max(64, ((nb + 63) // 64) * 64)
    rings = []
    r, c, j = 1.0, nb, 0
    while True:
        rings.append((r, c, (j % 2) * np.pi / c))
        arc = 2.0 * np.pi * r / c
        r_next = r - 0.9 * min(h, arc)
        if r_next < 0.55 * h:
            break
        while c > 16 and 2.0 * np.pi * r_next / c < 0.55 * h:
            c //= 2
        r = r_next
        j += 1
    return rings, nb


def build_disk_mesh(h: float) -> DiskMesh:
    """Build the deterministic disk mesh for target size ``h``.

    Raises
    ------
    ValueError
        If ``h`` is outside [0.005, 0.2] (unusable resolution).
    """
    if not (H_MIN <= h <= H_MAX):
        raise ValueError(f"mesh size h={h!r} outside [{H_MIN}, {H_MAX}]")
    rings, nb = _ring_layout(h)

    pts = [np.zeros((1, 2))]
    for r, c, phase in rings[::-1]:
        th = phase + 2.0 * np.pi * np.arange(c) / c
        pts.append(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    nodes = np.concatenate(pts, axis=0)
    # boundary ring was appended last; snap it onto the circle exactly
    bidx = np.arange(len(nodes) - nb, len(nodes))
    th_b = 2.0 * np.pi * np.arange(nb) / nb
    nodes[bidx, 0] = np.cos(th_b)
    nodes[bidx, 1] = np.sin(th_b)

    tri = Delaunay(nodes)
    triangles = tri.simplices.copy()
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    det = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
           - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    flip = det < 0
    triangles[flip, 1], triangles[flip, 2] = (triangles[flip, 2].copy(),
                                              triangles[flip, 1].copy())

    return DiskMesh(nodes=nodes, triangles=triangles, boundary_nodes=bidx,
                    h=float(h), _point_locator=tri)


def boundary_quadrature(mesh: DiskMesh, f, g) -> float:
    """Trapezoid rule for the L2(boundary) pairing of two boundary functions.

    ``f`` and ``g`` may be callables of theta or arrays of values at the
    ordered boundary nodes. Symmetric in its arguments by construction.
    """
    th = mesh.boundary_theta
    fv = np.asarray(f(th) if callable(f) else f, dtype=float)
    gv = np.asarray(g(th) if callable(g) else g, dtype=float)
    # grouping (f*g) keeps the result bitwise symmetric in f and g
    return float(np.sum(mesh.boundary_weights * (fv * gv)))


def interp_boundary(theta_src: np.ndarray, values: np.ndarray,
                    theta_dst: np.ndarray) -> np.ndarray:
    """Periodic linear interpolation of boundary samples in theta."""
    ts = np.concatenate([theta_src, [theta_src[0] + 2.0 * np.pi]])
    vs = np.concatenate([values, [values[0]]])
    return np.interp(np.mod(theta_dst, 2.0 * np.pi), ts, vs)


def export_mesh_text(mesh: DiskMesh, path) -> None:
    """Plain-text mesh dump (debugging aid).

    Header ``nodes N triangles T boundary B``, then one line per node,
    per triangle and a final line with the ordered boundary indices.
    """
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} triangles {len(mesh.triangles)} "
                 f"boundary {mesh.n_boundary}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x!r} {y!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        fh.write(" ".join(str(i) for i in mesh.boundary_nodes) + "\n")
