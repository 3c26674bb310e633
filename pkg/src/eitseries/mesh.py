"""Deterministic disk triangulations, pixel partitions, and pixel fields.

The mesh generator builds concentric-ring ("spiderweb") triangulations of a
disk: ring k carries 6k vertices, bands between consecutive rings are
triangulated sector by sector. The construction is fully deterministic and
can place a ring exactly on prescribed internal circles, which is what the
concentric two-pixel partition requires.

Pixel partitions group whole triangles into pixels; piecewise-constant
fields on a partition (extended by zero outside the reconstruction window)
are the finite-dimensional space the reversion reconstructs in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi


class MeshError(ValueError):
    """Invalid mesh generation or partition request."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of a planar domain with a closed boundary loop.

    Attributes
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.
    triangles : (nt, 3) int array
        Vertex index triples, positively oriented.
    boundary_edges : (nb, 2) int array
        Ordered boundary loop; edge e runs from ``boundary_edges[e, 0]`` to
        ``boundary_edges[e, 1]``.
    boundary_thetas : (nb, 2) float array
        Arc-length parameter in [0, 2*pi] at the two ends of each boundary
        edge (the closing edge ends at 2*pi).
    element_degree : int
        Polynomial degree of the FE space living on the mesh (1 or 2).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_thetas: np.ndarray
    element_degree: int = 1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.element_degree not in (1, 2):
            raise MeshError(f"element_degree must be 1 or 2, got {self.element_degree}")
        areas = self.triangle_areas()
        if np.any(areas <= 0.0):
            raise MeshError("mesh contains a non-positively oriented triangle")
        if np.any(self.triangles >= len(self.vertices)) or np.any(self.triangles < 0):
            raise MeshError("triangle references a vertex that does not exist")
        loop = self.boundary_edges
        if np.any(loop[1:, 0] != loop[:-1, 1]) or loop[-1, 1] != loop[0, 0]:
            raise MeshError("boundary edges do not form a single closed loop")
        starts = self.boundary_thetas[:, 0]
        if np.any(np.diff(starts) <= 0.0):
            raise MeshError("boundary arc-length parameters must strictly increase")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        """Signed areas of all triangles (cached)."""
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def barycentres(self) -> np.ndarray:
        if "bary" not in self._cache:
            self._cache["bary"] = self.vertices[self.triangles].mean(axis=1)
        return self._cache["bary"]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique mesh edges and the per-triangle edge index map.

        Returns ``(edge_vertices, tri_edges)`` where ``edge_vertices`` is
        (ne, 2) with sorted vertex pairs and ``tri_edges`` is (nt, 3) giving
        for each triangle the edge indices opposite the local pattern
        (01, 12, 20).
        """
        if "edges" not in self._cache:
            t = self.triangles
            pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            pairs = np.sort(pairs, axis=1)
            uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
            # inverse is ordered like the concatenation: blocks (01), (12), (20)
            nt = self.n_triangles
            tri_edges = np.stack([inverse[:nt], inverse[nt:2 * nt], inverse[2 * nt:]], axis=1)
            self._cache["edges"] = (uniq, tri_edges)
        return self._cache["edges"]

    def n_dofs(self) -> int:
        """Number of FE degrees of freedom for the mesh's element degree."""
        if self.element_degree == 1:
            return self.n_vertices
        return self.n_vertices + len(self.edges()[0])

    def triangle_dofs(self) -> np.ndarray:
        """(nt, 3) or (nt, 6) global dof indices per triangle.

        Degree-2 ordering per element: three vertices, then the midpoints of
        edges (01), (12), (20).
        """
        if self.element_degree == 1:
            return self.triangles
        if "tri_dofs" not in self._cache:
            _, tri_edges = self.edges()
            self._cache["tri_dofs"] = np.concatenate(
                [self.triangles, self.n_vertices + tri_edges], axis=1)
        return self._cache["tri_dofs"]

    def dof_coordinates(self) -> np.ndarray:
        """Coordinates of all dofs (vertices, then edge midpoints for degree 2)."""
        if self.element_degree == 1:
            return self.vertices
        ev, _ = self.edges()
        mids = 0.5 * (self.vertices[ev[:, 0]] + self.vertices[ev[:, 1]])
        return np.concatenate([self.vertices, mids])

    def boundary_radius(self) -> float:
        """Radius of the circumscribing circle through the boundary vertices."""
        bv = self.vertices[self.boundary_edges[:, 0]]
        return float(np.max(np.hypot(bv[:, 0], bv[:, 1])))


def generate_disk_mesh(radius: float, target_h: float, element_degree: int = 1,
                       internal_circles: tuple[float, ...] = ()) -> Mesh:
    """Triangulate the disk of given radius with concentric vertex rings.

    Parameters
    ----------
    radius : float
        Disk radius (> 0).
    target_h : float
        Requested mesh size; the maximum edge length is at most
        1.5 * target_h. Must satisfy 0 < target_h < radius.
    element_degree : int
        FE polynomial degree carried by the mesh (1 or 2). Degree elevation
        registers edge midpoints as dofs but does not change the geometry.
    internal_circles : tuple of float
        Radii in (0, radius) on which a vertex ring is forced, so that
        triangle edges align exactly with those circles.

    Returns
    -------
    Mesh
        Deterministic triangulation; boundary vertices lie on the circle.
    """
    if radius <= 0.0:
        raise MeshError(f"radius must be positive, got {radius}")
    if not 0.0 < target_h < radius:
        raise MeshError(f"target_h must lie in (0, radius), got {target_h}")
    circles = sorted(set(float(c) for c in internal_circles))
    if circles and (circles[0] <= 0.0 or circles[-1] >= radius):
        raise MeshError("internal circles must lie strictly inside the disk")

    breaks = [0.0] + circles + [radius]
    radii: list[float] = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / target_h - 1e-12))
        radii.extend(a + (b - a) * (i + 1) / n for i in range(n))
    n_rings = len(radii)

    # ring k (1-based) holds 6k vertices at angles 2*pi*t/(6k)
    offsets = [1 + 3 * k * (k - 1) for k in range(1, n_rings + 2)]
    verts = [np.zeros((1, 2))]
    for k, r in enumerate(radii, start=1):
        ang = TWO_PI * np.arange(6 * k) / (6 * k)
        verts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    vertices = np.concatenate(verts)

    tris: list[tuple[int, int, int]] = []
    for t in range(6):  # centre fan to ring 1
        tris.append((0, offsets[0] + t, offsets[0] + (t + 1) % 6))
    for k in range(1, n_rings):
        o_in, o_out = offsets[k - 1], offsets[k]
        n_in, n_out = 6 * k, 6 * (k + 1)
        for s in range(6):
            inner = [o_in + (s * k + i) % n_in for i in range(k + 1)]
            outer = [o_out + (s * (k + 1) + i) % n_out for i in range(k + 2)]
            for i in range(k):
                tris.append((inner[i], outer[i], outer[i + 1]))
                tris.append((inner[i], outer[i + 1], inner[i + 1]))
            tris.append((inner[k], outer[k], outer[k + 1]))
    triangles = np.asarray(tris, dtype=np.int64)

    nb = 6 * n_rings
    o_last = offsets[n_rings - 1]
    be = np.column_stack([o_last + np.arange(nb),
                          o_last + (np.arange(nb) + 1) % nb])
    th = TWO_PI * np.arange(nb + 1) / nb
    bt = np.column_stack([th[:-1], th[1:]])
    return Mesh(vertices, triangles, be, bt, element_degree)


def refine_mesh(mesh: Mesh) -> tuple[Mesh, np.ndarray]:
    """Regular 4-split refinement; boundary midpoints are snapped to the circle.

    Returns the refined mesh and the parent map (fine triangle -> coarse
    triangle index). Children of a coarse triangle are contained in it except
    for boundary triangles, whose new midpoint moves onto the circle.
    """
    ev, tri_edges = mesh.edges()
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[ev[:, 0]] + mesh.vertices[ev[:, 1]])

    bkey = {}
    for e in range(len(mesh.boundary_edges)):
        i, j = mesh.boundary_edges[e]
        bkey[(min(i, j), max(i, j))] = e
    edge_is_boundary = np.array([(min(a, b), max(a, b)) in bkey for a, b in ev])
    r = np.hypot(mesh.vertices[ev[:, 0], 0], mesh.vertices[ev[:, 0], 1])
    norm = np.hypot(mids[:, 0], mids[:, 1])
    snap = edge_is_boundary & (norm > 0)
    mids[snap] *= (r[snap] / norm[snap])[:, None]

    vertices = np.concatenate([mesh.vertices, mids])
    t = mesh.triangles
    m01 = nv + tri_edges[:, 0]
    m12 = nv + tri_edges[:, 1]
    m20 = nv + tri_edges[:, 2]
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([t[:, 1], m12, m01]),
        np.column_stack([t[:, 2], m20, m12]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_triangles), 4)

    edge_of = {(int(a), int(b)): e for e, (a, b) in enumerate(ev)}
    bed, bth = [], []
    for e in range(len(mesh.boundary_edges)):
        i, j = (int(v) for v in mesh.boundary_edges[e])
        ti, tj = mesh.boundary_thetas[e]
        m = nv + edge_of[(min(i, j), max(i, j))]
        tm = 0.5 * (ti + tj)
        bed.extend([(i, m), (m, j)])
        bth.extend([(ti, tm), (tm, tj)])
    refined = Mesh(vertices, children, np.asarray(bed, dtype=np.int64),
                   np.asarray(bth), mesh.element_degree)
    return refined, parent


@dataclass(frozen=True, eq=False)
class PixelPartition:
    """Grouping of whole triangles into pixels; -1 marks triangles outside
    the reconstruction window."""

    mesh: Mesh
    pixel_of_triangle: np.ndarray
    n_pixels: int
    pixel_areas: np.ndarray

    def __post_init__(self):
        if self.n_pixels < 1:
            raise MeshError("partition must contain at least one pixel")
        if len(self.pixel_of_triangle) != self.mesh.n_triangles:
            raise MeshError("pixel map length does not match triangle count")
        if np.any(self.pixel_areas <= 0.0):
            raise MeshError("every pixel must have positive area")

    @classmethod
    def from_labels(cls, mesh: Mesh, labels: np.ndarray) -> "PixelPartition":
        labels = np.asarray(labels, dtype=np.int64)
        n = int(labels.max()) + 1
        areas = np.zeros(n)
        inside = labels >= 0
        np.add.at(areas, labels[inside], mesh.triangle_areas()[inside])
        return cls(mesh, labels, n, areas)

    def triangle_values(self, values: np.ndarray, outside: float = 0.0) -> np.ndarray:
        """Expand per-pixel values to per-triangle values (0 outside)."""
        values = np.asarray(values)
        out = np.full(self.mesh.n_triangles, outside, dtype=values.dtype)
        inside = self.pixel_of_triangle >= 0
        out[inside] = values[self.pixel_of_triangle[inside]]
        return out

    def project_triangle_values(self, tri_values: np.ndarray) -> np.ndarray:
        """Area-weighted average of a per-triangle field over each pixel."""
        areas = self.mesh.triangle_areas()
        inside = self.pixel_of_triangle >= 0
        acc = np.zeros(self.n_pixels, dtype=np.result_type(tri_values.dtype, float))
        np.add.at(acc, self.pixel_of_triangle[inside],
                  tri_values[inside] * areas[inside])
        return acc / self.pixel_areas


def build_pixel_partition(mesh: Mesh, inner_radius: float,
                          target_pixels: int) -> PixelPartition:
    """Partition the triangles inside a disk window into ~target_pixels pixels.

    A regular polar grid over the window claims triangles by barycentre;
    empty cells are dropped. If target_pixels is at least the number of
    interior triangles, every interior triangle becomes its own pixel.
    """
    if target_pixels < 1:
        raise MeshError(f"target_pixels must be >= 1, got {target_pixels}")
    if inner_radius > mesh.boundary_radius() * (1 + 1e-12):
        raise MeshError("window radius exceeds the disk radius")
    bc = mesh.barycentres()
    r = np.hypot(bc[:, 0], bc[:, 1])
    inside = r < inner_radius
    n_inside = int(inside.sum())
    if n_inside == 0:
        raise MeshError("no triangle barycentre falls inside the window")

    labels = np.full(mesh.n_triangles, -1, dtype=np.int64)
    if target_pixels >= n_inside:
        labels[inside] = np.arange(n_inside)
        return PixelPartition.from_labels(mesh, labels)

    n_rad = max(1, round(math.sqrt(target_pixels / 3.0)))
    scale = target_pixels / (3.0 * n_rad * n_rad)
    counts = [max(1, round((6 * ell + 3) * scale)) for ell in range(n_rad)]
    cell_start = np.concatenate([[0], np.cumsum(counts)])

    theta = np.mod(np.arctan2(bc[:, 1], bc[:, 0]), TWO_PI)
    ell = np.minimum((r[inside] / inner_radius * n_rad).astype(np.int64), n_rad - 1)
    m = np.asarray(counts)[ell]
    a = np.minimum((theta[inside] / TWO_PI * m).astype(np.int64), m - 1)
    raw = cell_start[ell] + a

    used, packed = np.unique(raw, return_inverse=True)  # drop empty cells
    labels[inside] = packed
    return PixelPartition.from_labels(mesh, labels)


def concentric_partition(mesh: Mesh, rho: float) -> PixelPartition:
    """Two-pixel partition of the unit disk: pixel 0 = annulus, pixel 1 = the
    inner disk of radius rho.

    The mesh must have triangle edges aligned with the circle of radius rho
    (generate it with ``internal_circles=(rho,)``); misaligned meshes are
    rejected rather than silently misclassified.
    """
    if not 0.0 < rho < 1.0:
        raise MeshError(f"rho must lie in (0, 1), got {rho}")
    tol = 1e-10
    vr = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])[mesh.triangles]
    straddles = (vr.min(axis=1) < rho - tol) & (vr.max(axis=1) > rho + tol)
    if np.any(straddles):
        raise MeshError(
            f"{int(straddles.sum())} triangles straddle the circle r={rho}; "
            "generate the mesh with an internal circle at that radius")
    bc = mesh.barycentres()
    labels = np.where(np.hypot(bc[:, 0], bc[:, 1]) < rho, 1, 0).astype(np.int64)
    return PixelPartition.from_labels(mesh, labels)


@dataclass
class CoefficientField:
    """Piecewise-constant scalar field on a pixel partition, zero outside it."""

    values: np.ndarray
    partition: PixelPartition

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values))
        if len(self.values) != self.partition.n_pixels:
            raise MeshError("field length does not match pixel count")

    def triangle_values(self) -> np.ndarray:
        return self.partition.triangle_values(self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        """L2 norm over the domain (the field vanishes outside the window)."""
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2
                                      * self.partition.pixel_areas)))

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        return CoefficientField(self.values + other.values, self.partition)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        return CoefficientField(self.values - other.values, self.partition)

    def __mul__(self, scalar) -> "CoefficientField":
        return CoefficientField(self.values * scalar, self.partition)

    __rmul__ = __mul__


def save_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write the line-oriented mesh format (header, V/T/B records)."""
    lines = [f"MESH v1 degree={mesh.element_degree}"]
    lines += [f"V {float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [f"T {i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"B {i} {j} {float(ti)!r} {float(tj)!r}"
              for (i, j), (ti, tj) in zip(mesh.boundary_edges, mesh.boundary_thetas)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: str | Path) -> Mesh:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "MESH" or head[1] != "v1":
        raise MeshError(f"unrecognised mesh header: {lines[0]!r}")
    degree = int(head[2].split("=")[1])
    verts, tris, bed, bth = [], [], [], []
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "V":
            verts.append((float(parts[1]), float(parts[2])))
        elif parts[0] == "T":
            tris.append((int(parts[1]), int(parts[2]), int(parts[3])))
        elif parts[0] == "B":
            bed.append((int(parts[1]), int(parts[2])))
            bth.append((float(parts[3]), float(parts[4])))
        else:
            raise MeshError(f"unrecognised record {parts[0]!r}")
    return Mesh(np.asarray(verts), np.asarray(tris, dtype=np.int64),
                np.asarray(bed, dtype=np.int64), np.asarray(bth), degree)


def save_partition(partition: PixelPartition, path: str | Path) -> None:
    lines = [f"PART v1 N={partition.n_pixels}"]
    lines += [str(int(p)) for p in partition.pixel_of_triangle]
    Path(path).write_text("\n".join(lines) + "\n")


def load_partition(mesh: Mesh, path: str | Path) -> PixelPartition:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "PART" or head[1] != "v1":
        raise MeshError(f"unrecognised partition header: {lines[0]!r}")
    labels = np.asarray([int(x) for x in lines[1:] if x.strip()], dtype=np.int64)
    part = PixelPartition.from_labels(mesh, labels)
    n_declared = int(head[2].split("=")[1])
    if part.n_pixels != n_declared:
        raise MeshError(f"header declares N={n_declared}, data has {part.n_pixels}")
    return part
