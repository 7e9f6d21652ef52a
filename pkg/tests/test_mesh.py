import collections

import numpy as np
import pytest

from eitbench.mesh import (boundary_quadrature, build_disk_mesh,
                           export_mesh_text, interp_boundary)


def edge_counts(mesh):
    counts = collections.Counter()
    for a, b, c in mesh.triangles:
        for e in ((a, b), (b, c), (c, a)):
            counts[tuple(sorted(e))] += 1
    return counts


@pytest.mark.parametrize("h", [0.2, 0.06, 0.03])
def test_type_invariants(h):
    m = build_disk_mesh(h)
    r2 = np.sum(m.nodes ** 2, axis=1)
    assert np.all(r2 <= 1.0 + 1e-12)
    rb = np.abs(np.sum(m.nodes[m.boundary_nodes] ** 2, axis=1) - 1.0)
    assert rb.max() <= 1e-9
    assert m.triangle_areas().min() > 0
    th = m.boundary_theta
    assert np.all(np.diff(th) > 0)
    assert th[0] >= 0 and th[-1] < 2 * np.pi
    assert m.n_boundary >= int(np.ceil(2 * np.pi / h))
    counts = edge_counts(m)
    bset = set(m.boundary_nodes.tolist())
    bedges = {tuple(sorted((m.boundary_nodes[i],
                            m.boundary_nodes[(i + 1) % m.n_boundary])))
              for i in range(m.n_boundary)}
    for e, c in counts.items():
        if e in bedges:
            assert c == 1
        else:
            assert c == 2, f"interior edge {e} shared by {c} triangles"
    # all hull edges accounted for
    assert all(counts[e] == 1 for e in bedges)
    # triangle diameters
    p = m.nodes[m.triangles]
    d01 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    d12 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    d20 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    assert np.max([d01, d12, d20]) <= 2 * h


def test_min_boundary_nodes_h02():
    m = build_disk_mesh(0.2)
    assert m.n_boundary >= 32


def test_area_within_one_percent():
    m = build_disk_mesh(0.05)
    assert abs(m.triangle_areas().sum() - np.pi) <= 0.01 * np.pi


def test_area_deficit_quarters_when_h_halves():
    d1 = np.pi - build_disk_mesh(0.05).triangle_areas().sum()
    d2 = np.pi - build_disk_mesh(0.025).triangle_areas().sum()
    ratio = d1 / d2
    assert 4 * 0.7 <= ratio <= 4 * 1.3


def test_node_count_refinement_factor():
    n1 = build_disk_mesh(0.1).n_nodes
    n2 = build_disk_mesh(0.05).n_nodes
    assert 2.0 <= n2 / n1 <= 6.0


def test_deterministic_construction():
    a = build_disk_mesh(0.06)
    b = build_disk_mesh(0.06)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.boundary_nodes, b.boundary_nodes)


@pytest.mark.parametrize("h", [0.004, 0.21, 0.0, -1.0])
def test_h_out_of_range_rejected(h):
    with pytest.raises(ValueError):
        build_disk_mesh(h)


class TestBoundaryQuadrature:
    def test_constants_give_circumference(self, mesh_coarse):
        val = boundary_quadrature(mesh_coarse, lambda t: np.ones_like(t),
                                  lambda t: np.ones_like(t))
        assert abs(val - 2 * np.pi) <= 0.01 * 2 * np.pi

    def test_orthogonality(self):
        m = build_disk_mesh(0.05)
        val = boundary_quadrature(m, np.sin, np.cos)
        assert abs(val) <= 1e-6

    def test_unit_norm_pattern(self):
        m = build_disk_mesh(0.05)
        f = lambda t: np.sin(3 * t) / np.sqrt(np.pi)
        assert abs(boundary_quadrature(m, f, f) - 1.0) <= 0.01

    def test_symmetric_bit_identical(self, mesh_coarse, rng):
        f = rng.standard_normal(mesh_coarse.n_boundary)
        g = rng.standard_normal(mesh_coarse.n_boundary)
        assert boundary_quadrature(mesh_coarse, f, g) == \
            boundary_quadrature(mesh_coarse, g, f)


def test_interpolation_reproduces_linear_fields(mesh_coarse, rng):
    a, b, c = 0.3, -0.7, 0.2
    nodal = a * mesh_coarse.nodes[:, 0] + b * mesh_coarse.nodes[:, 1] + c
    pts = rng.uniform(-0.6, 0.6, size=(50, 2))
    got = mesh_coarse.interpolate(nodal, pts)
    want = a * pts[:, 0] + b * pts[:, 1] + c
    assert np.allclose(got, want, atol=1e-12)


def test_locate_handles_points_outside_hull(mesh_coarse):
    # on-disk points hugging the circle lie outside the inscribed polygon
    th = np.linspace(0, 2 * np.pi, 17)
    pts = 0.99999 * np.column_stack([np.cos(th), np.sin(th)])
    assert np.all(mesh_coarse.locate(pts) >= 0)


def test_interp_boundary_periodic():
    th = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    out = interp_boundary(th, vals, np.array([7 * np.pi / 4]))
    assert np.isclose(out[0], 2.5)  # halfway between 4.0 and wrapped 1.0


def test_export_mesh_text(tmp_path, mesh_coarse):
    path = tmp_path / "mesh.txt"
    export_mesh_text(mesh_coarse, path)
    lines = path.read_text().splitlines()
    head = lines[0].split()
    assert head[0] == "nodes" and int(head[1]) == mesh_coarse.n_nodes
    assert int(head[3]) == len(mesh_coarse.triangles)
    assert int(head[5]) == mesh_coarse.n_boundary
    assert len(lines) == 1 + mesh_coarse.n_nodes + len(mesh_coarse.triangles) + 1
