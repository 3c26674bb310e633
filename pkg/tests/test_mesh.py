import math

import numpy as np
import pytest

from eitseries import mesh as msh


def edge_lengths(m):
    p = m.vertices[m.triangles]
    e = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
    return np.hypot(e[:, 0], e[:, 1])


def test_coarse_disk_sanity():
    m = msh.generate_disk_mesh(1.0, 0.5, 1)
    assert m.n_triangles >= 4
    assert np.all(m.triangle_areas() > 0)


def test_fine_disk_area_matches_circle():
    m = msh.generate_disk_mesh(1.0, 0.05, 1)
    area = float(m.triangle_areas().sum())
    # the mesh fills the inscribed polygon: the deficit is bounded by the
    # circle-segment area h^2/2 per boundary edge and must stay under 1%
    deficit = math.pi - area
    n_boundary = len(m.boundary_edges)
    h_bnd = float(edge_lengths(m).max())
    assert 0.0 < deficit < n_boundary * h_bnd ** 2 / 2.0
    assert deficit / math.pi < 0.01


def test_max_edge_length_bound():
    for h in (0.3, 0.1, 0.05):
        m = msh.generate_disk_mesh(1.0, h, 1)
        assert edge_lengths(m).max() <= 1.5 * h


def test_degree_two_adds_dofs_not_geometry():
    m1 = msh.generate_disk_mesh(1.0, 0.05, 1)
    m2 = msh.generate_disk_mesh(1.0, 0.05, 2)
    assert np.array_equal(m1.vertices, m2.vertices)
    assert np.array_equal(m1.triangles, m2.triangles)
    n_edges = len(m2.edges()[0])
    assert m2.n_dofs() == m2.n_vertices + n_edges
    assert m1.n_dofs() == m1.n_vertices


def test_boundary_vertices_on_circle():
    m = msh.generate_disk_mesh(2.0, 0.2, 1)
    bv = m.vertices[m.boundary_edges[:, 0]]
    assert np.abs(np.hypot(bv[:, 0], bv[:, 1]) - 2.0).max() < 1e-12


def test_boundary_loop_closes_and_thetas_increase():
    m = msh.generate_disk_mesh(1.0, 0.2, 1)
    loop = m.boundary_edges
    assert np.all(loop[1:, 0] == loop[:-1, 1])
    assert loop[-1, 1] == loop[0, 0]
    assert np.all(np.diff(m.boundary_thetas[:, 0]) > 0)


def test_generator_rejects_bad_inputs():
    with pytest.raises(msh.MeshError):
        msh.generate_disk_mesh(-1.0, 0.1, 1)
    with pytest.raises(msh.MeshError):
        msh.generate_disk_mesh(1.0, 0.0, 1)
    with pytest.raises(msh.MeshError):
        msh.generate_disk_mesh(1.0, 1.5, 1)
    with pytest.raises(msh.MeshError):
        msh.generate_disk_mesh(1.0, 0.1, 3)


def test_single_pixel_partition():
    m = msh.generate_disk_mesh(1.0, 0.2, 1)
    part = msh.build_pixel_partition(m, 0.85, 1)
    assert part.n_pixels == 1
    inside = part.pixel_of_triangle >= 0
    bc = m.barycentres()
    assert np.array_equal(inside, np.hypot(bc[:, 0], bc[:, 1]) < 0.85)


def test_target_pixel_count_window():
    m = msh.generate_disk_mesh(1.0, 0.04, 1)
    part = msh.build_pixel_partition(m, 0.85, 200)
    assert 150 <= part.n_pixels <= 250
    assert np.all(part.pixel_areas > 0)


def test_finest_partition_is_one_pixel_per_triangle():
    m = msh.generate_disk_mesh(1.0, 0.3, 1)
    part = msh.build_pixel_partition(m, 1.0, m.n_triangles)
    assert part.n_pixels == m.n_triangles
    assert np.array_equal(np.sort(part.pixel_of_triangle), np.arange(m.n_triangles))


def test_partition_rejects_bad_target():
    m = msh.generate_disk_mesh(1.0, 0.3, 1)
    with pytest.raises(msh.MeshError):
        msh.build_pixel_partition(m, 0.85, 0)


def test_area_conservation():
    m = msh.generate_disk_mesh(1.0, 0.07, 1)
    part = msh.build_pixel_partition(m, 0.85, 120)
    total = float(m.triangle_areas().sum())
    outside = float(m.triangle_areas()[part.pixel_of_triangle < 0].sum())
    assert abs(float(part.pixel_areas.sum()) + outside - total) <= 1e-12 * total


def test_concentric_partition_areas():
    m = msh.generate_disk_mesh(1.0, 0.05, 1, internal_circles=(0.3,))
    part = msh.concentric_partition(m, 0.3)
    assert part.n_pixels == 2
    assert abs(part.pixel_areas[1] - math.pi * 0.09) / (math.pi * 0.09) < 0.01


def test_concentric_partition_equal_areas_at_half_split():
    rho = 1.0 / math.sqrt(2.0)
    m = msh.generate_disk_mesh(1.0, 0.05, 1, internal_circles=(rho,))
    part = msh.concentric_partition(m, rho)
    half = math.pi / 2.0
    assert abs(part.pixel_areas[0] - half) / half < 0.01
    assert abs(part.pixel_areas[1] - half) / half < 0.01
    assert abs(part.pixel_areas[0] - part.pixel_areas[1]) / half < 0.01


def test_concentric_partition_requires_alignment():
    m = msh.generate_disk_mesh(1.0, 0.08, 1)  # rings at k/13, none at 0.3
    with pytest.raises(msh.MeshError):
        msh.concentric_partition(m, 0.3)


def test_pixel_areas_converge_with_refinement():
    target = math.pi * 0.09
    errs = []
    for h in (0.1, 0.05, 0.025):
        m = msh.generate_disk_mesh(1.0, h, 1, internal_circles=(0.3,))
        part = msh.concentric_partition(m, 0.3)
        errs.append(abs(part.pixel_areas[1] - target))
    assert errs[2] < errs[1] < errs[0]


def test_mesh_io_round_trip(tmp_path):
    m = msh.generate_disk_mesh(1.0, 0.2, 2)
    path = tmp_path / "mesh.txt"
    msh.save_mesh(m, path)
    back = msh.load_mesh(path)
    assert back.element_degree == 2
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.boundary_edges, m.boundary_edges)
    assert np.array_equal(back.boundary_thetas, m.boundary_thetas)


def test_partition_io_round_trip(tmp_path):
    m = msh.generate_disk_mesh(1.0, 0.15, 1)
    part = msh.build_pixel_partition(m, 0.85, 30)
    path = tmp_path / "part.txt"
    msh.save_partition(part, path)
    back = msh.load_partition(m, path)
    assert back.n_pixels == part.n_pixels
    assert np.array_equal(back.pixel_of_triangle, part.pixel_of_triangle)


def test_refine_preserves_structure():
    m = msh.generate_disk_mesh(1.0, 0.2, 2)
    fine, parent = msh.refine_mesh(m)
    assert fine.n_triangles == 4 * m.n_triangles
    assert np.array_equal(np.unique(parent), np.arange(m.n_triangles))
    assert fine.element_degree == 2
    assert len(fine.boundary_edges) == 2 * len(m.boundary_edges)
    # refined boundary vertices stay on the circle
    bv = fine.vertices[fine.boundary_edges[:, 0]]
    assert np.abs(np.hypot(bv[:, 0], bv[:, 1]) - 1.0).max() < 1e-12
    # interior children tile their parents
    coarse_areas = m.triangle_areas()
    acc = np.zeros(m.n_triangles)
    np.add.at(acc, parent, fine.triangle_areas())
    interior = np.ones(m.n_triangles, dtype=bool)
    bset = set(map(int, m.boundary_edges[:, 0])) | set(map(int, m.boundary_edges[:, 1]))
    for t, tri in enumerate(m.triangles):
        if any(int(v) in bset for v in tri):
            interior[t] = False
    assert np.allclose(acc[interior], coarse_areas[interior], rtol=1e-12)


def test_coefficient_field_basics():
    m = msh.generate_disk_mesh(1.0, 0.2, 1)
    part = msh.build_pixel_partition(m, 0.85, 10)
    values = np.linspace(-1, 1, part.n_pixels)
    f = msh.CoefficientField(values, part)
    tri = f.triangle_values()
    assert np.all(tri[part.pixel_of_triangle < 0] == 0.0)
    assert f.max_abs() == 1.0
    g = 2.0 * f - f
    assert np.allclose(g.values, values)
    with pytest.raises(msh.MeshError):
        msh.CoefficientField(np.zeros(part.n_pixels + 1), part)
