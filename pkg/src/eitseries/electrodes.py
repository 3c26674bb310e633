"""Complete electrode model: forward solves, the current-to-voltage matrix,
the perturbation operator, and the derivative with respect to pixel values.

Electrodes are disjoint boundary arcs with a constant positive surface
admittance each (the reciprocal contact impedance). Electrode potentials are
carried as explicit unknowns coupled to the interior through boundary
integrals of the admittance-weighted trace mismatch; a Lagrange multiplier
pins their mean to zero, which both fixes the potential ground level and
keeps the block system symmetric. Mean-free current patterns are expressed
in the Helmert orthonormal basis of the zero-sum hyperplane.

The measurement/derivative interfaces mirror the continuum module so the
reversion engine can drive either model unchanged.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .continuum import FemError, assemble_stiffness
from .matrices import DerivativeMatrix, NDMatrix
from .mesh import CoefficientField, Mesh, PixelPartition

TWO_PI = 2.0 * math.pi
ELECTRODE_GAUSS_POINTS = 8


@dataclass(frozen=True)
class ElectrodeLayout:
    """Electrode arcs on the boundary circle with contact admittances.

    arcs[j] = (theta_start, theta_end) in [0, 2*pi), pairwise disjoint with
    disjoint closures; contact[j] > 0 is the surface admittance on arc j
    (the reciprocal of a constant contact impedance).
    """

    arcs: tuple[tuple[float, float], ...]
    contact: tuple[float, ...]

    def __post_init__(self):
        arcs = tuple((float(a), float(b)) for a, b in self.arcs)
        contact = tuple(float(z) for z in self.contact)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "contact", contact)
        if len(arcs) != len(contact):
            raise FemError("one contact admittance per electrode is required")
        if len(arcs) < 2:
            raise FemError("at least two electrodes are required")
        for a, b in arcs:
            if not (0.0 <= a < b <= TWO_PI):
                raise FemError(f"arc ({a}, {b}) must satisfy 0 <= start < end <= 2*pi")
        for (_, b0), (a1, _) in zip(sorted(arcs)[:-1], sorted(arcs)[1:]):
            if b0 >= a1:
                raise FemError("electrode arcs must have disjoint closures")
        if any(z <= 0.0 for z in contact):
            raise FemError("contact admittances must be strictly positive")

    @property
    def m(self) -> int:
        return len(self.arcs)

    @classmethod
    def equispaced(cls, m: int, coverage: float = 0.5,
                   impedance: float = 1.0) -> "ElectrodeLayout":
        """m equal arcs covering the given boundary fraction with equal
        contact impedance, offset by half a gap so no arc wraps past 2*pi."""
        width = coverage * TWO_PI / m
        gap = (1.0 - coverage) * TWO_PI / m
        start0 = gap / 2.0
        arcs = tuple((start0 + k * (width + gap), start0 + k * (width + gap) + width)
                     for k in range(m))
        return cls(arcs, (1.0 / impedance,) * m)

    def to_json(self) -> str:
        return json.dumps({"m": self.m,
                           "arcs": [[a, b] for a, b in self.arcs],
                           "z": [1.0 / z for z in self.contact]})

    @classmethod
    def from_json(cls, text: str) -> "ElectrodeLayout":
        data = json.loads(text)
        arcs = tuple((float(a), float(b)) for a, b in data["arcs"])
        contact = tuple(1.0 / float(z) for z in data["z"])
        if "m" in data and int(data["m"]) != len(arcs):
            raise FemError("declared electrode count does not match the arcs")
        return cls(arcs, contact)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ElectrodeLayout":
        return cls.from_json(Path(path).read_text())


def helmert_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the zero-sum hyperplane, shape (m, m-1)."""
    h = np.zeros((m, m - 1))
    for k in range(1, m):
        h[:k, k - 1] = 1.0 / math.sqrt(k * (k + 1))
        h[k, k - 1] = -k / math.sqrt(k * (k + 1))
    return h


def _electrode_quadrature(mesh: Mesh, layout: ElectrodeLayout):
    """Gauss points of the boundary restricted to the electrode arcs.

    Splits boundary edges at arc endpoints so the admittance jump never sits
    inside a quadrature interval. Returns (trace, weights, owner) with the
    sparse point-evaluation matrix, physical arc weights, and the electrode
    index of every point.
    """
    gx, gw = np.polynomial.legendre.leggauss(ELECTRODE_GAUSS_POINTS)
    tref = 0.5 * (gx + 1.0)
    gw = 0.5 * gw

    degree = mesh.element_degree
    if degree == 2:
        ev, _ = mesh.edges()
        edge_of = {(int(a), int(b)): e for e, (a, b) in enumerate(ev)}

    rows, cols, vals, weights, owner = [], [], [], [], []
    n_pts = 0
    for e in range(len(mesh.boundary_edges)):
        i, j = (int(v) for v in mesh.boundary_edges[e])
        ti, tj = mesh.boundary_thetas[e]
        length = float(np.hypot(*(mesh.vertices[j] - mesh.vertices[i])))
        for el, (a, b) in enumerate(layout.arcs):
            lo, hi = max(ti, a), min(tj, b)
            if hi - lo <= 1e-14:
                continue
            t0, t1 = (lo - ti) / (tj - ti), (hi - ti) / (tj - ti)
            t = t0 + (t1 - t0) * tref
            q = n_pts + np.arange(len(t))
            if degree == 1:
                rows += [q, q]
                cols += [np.full_like(q, i), np.full_like(q, j)]
                vals += [1 - t, t]
            else:
                mid = mesh.n_vertices + edge_of[(min(i, j), max(i, j))]
                rows += [q, q, q]
                cols += [np.full_like(q, i), np.full_like(q, j), np.full_like(q, mid)]
                vals += [(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)]
            weights.append(length * (t1 - t0) * gw)
            owner.append(np.full(len(t), el, dtype=np.int64))
            n_pts += len(t)
    if n_pts == 0:
        raise FemError("no electrode arc intersects the boundary")
    trace = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_pts, mesh.n_dofs()))
    return trace, np.concatenate(weights), np.concatenate(owner)


@dataclass(eq=False)
class ScemSystem:
    """Assembled and factorised electrode-model system for one background.

    Unknown layout: interior FE dofs, then the m electrode potentials, then
    the mean-zero multiplier. Immutable after construction; the stored
    factorisation serves every current pattern and perturbation solve.
    """

    mesh: Mesh
    layout: ElectrodeLayout
    coefficient: np.ndarray
    tables: np.ndarray
    quad_weights: np.ndarray
    quad_grads: np.ndarray
    dofmap: np.ndarray
    electrode_trace: sp.csr_matrix
    electrode_weights: np.ndarray
    electrode_owner: np.ndarray
    factorization: object = dataclass_field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs()

    @property
    def m(self) -> int:
        return self.layout.m

    def solve_constrained(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the bordered block system; accepts stacked right-hand sides
        of length n_dofs + m (columns) and strips the multiplier row."""
        one = rhs.ndim == 1
        rhs = rhs[:, None] if one else rhs
        padded = np.zeros((self.n_dofs + self.m + 1, rhs.shape[1]), dtype=rhs.dtype)
        padded[:-1] = rhs
        if np.iscomplexobj(rhs):
            x = (self.factorization.solve(np.ascontiguousarray(padded.real))
                 + 1j * self.factorization.solve(np.ascontiguousarray(padded.imag)))
        else:
            x = self.factorization.solve(padded)
        x = x[:-1]
        return x[:, 0] if one else x

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a stacked solution into (interior, electrode potentials)."""
        return x[..., :self.n_dofs], x[..., self.n_dofs:]

    def h_norm(self, x: np.ndarray) -> float:
        """Energy-style norm: H1 seminorm of the interior plus the L2 norm of
        the trace/potential mismatch over the electrodes."""
        u, cap = self.split(x)
        gu = _kernels.solution_gradients(self.quad_grads, self.dofmap,
                                         np.ascontiguousarray(u)[None])
        interior = float(np.sum(self.quad_weights * np.sum(np.abs(gu[0]) ** 2, axis=2)))
        mismatch = self.electrode_trace @ u - cap[self.electrode_owner]
        return math.sqrt(interior + float(np.sum(self.electrode_weights
                                                 * np.abs(mismatch) ** 2)))

    def weak_residual(self, x: np.ndarray, current: np.ndarray) -> float:
        """Relative residual of the gauge-free weak form for a solution pair.

        Tests the block equations without the multiplier row; for a mean-free
        current the multiplier vanishes, so this residual reaches solver
        precision at the computed solution.
        """
        rhs = np.zeros(self.n_dofs + self.m)
        rhs[self.n_dofs:] = current
        res = self._block @ x - rhs
        return float(np.linalg.norm(res) / np.linalg.norm(rhs))


def assemble_scem(mesh: Mesh, a, layout: ElectrodeLayout) -> ScemSystem:
    """Assemble and factorise the electrode-model system.

    The bilinear form couples the interior conductivity term with the
    admittance-weighted trace mismatch over every electrode; the potential
    mean is pinned by a multiplier row. Raises for non-coercive coefficients
    and for invalid layouts.
    """
    coef, stiffness, tables, w, grads, dofmap = assemble_stiffness(mesh, a)
    trace, weights, owner = _electrode_quadrature(mesh, layout)
    zeta = np.asarray(layout.contact)[owner]

    ndof = mesh.n_dofs()
    m = layout.m
    mass = trace.T @ sp.diags(weights * zeta) @ trace
    b_cols = np.zeros((ndof, m))
    areas = np.zeros(m)
    for j in range(m):
        on_j = owner == j
        b_cols[:, j] = trace.T @ (weights * zeta * on_j)
        areas[j] = float(np.sum(weights[on_j] * zeta[on_j]))
    ones = np.ones((m, 1))
    block = sp.bmat([
        [stiffness + mass, sp.csr_matrix(-b_cols)],
        [sp.csr_matrix(-b_cols.T), sp.diags(areas)],
    ], format="csr")
    gauge = sp.csr_matrix(
        (np.ones(m), (np.arange(mesh.n_dofs(), mesh.n_dofs() + m), np.zeros(m, dtype=int))),
        shape=(mesh.n_dofs() + m, 1))
    system = sp.bmat([[block, gauge], [gauge.T, None]], format="csc")
    try:
        factorization = spla.splu(system)
    except RuntimeError as exc:
        raise FemError(f"factorization failed: {exc}") from exc
    out = ScemSystem(mesh, layout, coef, tables, w, grads, dofmap,
                     trace, weights, owner, factorization)
    out._block = block
    return out


def solve_current(system: ScemSystem, current) -> tuple[np.ndarray, np.ndarray]:
    """Solve for one mean-free electrode current pattern.

    Returns (interior dof vector, electrode potentials); the potentials are
    mean free by the gauge.
    """
    current = np.asarray(current, dtype=float)
    if current.shape != (system.m,):
        raise FemError(f"expected {system.m} electrode currents")
    if abs(current.sum()) > 1e-12 * max(1.0, float(np.abs(current).max())):
        raise FemError("current pattern must be mean free")
    rhs = np.zeros(system.n_dofs + system.m)
    rhs[system.n_dofs:] = current
    x = system.solve_constrained(rhs)
    return system.split(x)


def solve_current_basis(system: ScemSystem) -> np.ndarray:
    """Stacked solutions for all Helmert basis currents, shape (m-1, ndofs+m)."""
    h = helmert_basis(system.m)
    rhs = np.zeros((system.n_dofs + system.m, system.m - 1))
    rhs[system.n_dofs:] = h
    return system.solve_constrained(rhs).T


def electrode_matrix(system: ScemSystem) -> NDMatrix:
    """Current-to-voltage matrix on the Helmert basis of mean-free patterns."""
    sols = solve_current_basis(system)
    _, caps = system.split(sols)
    return NDMatrix(helmert_basis(system.m).T @ caps.T, "helmert")


def apply_P_E(system: ScemSystem, b, x: np.ndarray) -> np.ndarray:
    """Perturbation operator of the electrode model applied to solution
    pair(s) stacked as (..., ndofs + m) arrays."""
    if isinstance(b, CoefficientField):
        if b.partition.mesh is not system.mesh:
            raise FemError("perturbation field lives on a different mesh")
        b_tri = b.triangle_values()
    else:
        b_tri = np.asarray(b)
        if b_tri.shape != (system.mesh.n_triangles,):
            raise FemError("per-triangle perturbation has wrong length")
    b_tri = np.ascontiguousarray(np.real_if_close(b_tri), dtype=float)

    single = x.ndim == 1
    xs = x[None] if single else x
    interior = xs[:, :system.n_dofs]
    rhs = np.zeros((system.n_dofs + system.m, xs.shape[0]))
    for s in range(xs.shape[0]):
        rhs[:system.n_dofs, s] = -_kernels.apply_scaled_stiffness(
            system.tables, system.dofmap, b_tri,
            np.ascontiguousarray(interior[s]), system.n_dofs)
    out = system.solve_constrained(rhs).T
    return out[0] if single else out


def dlambda_e_matrix(system: ScemSystem, partition: PixelPartition) -> DerivativeMatrix:
    """Derivative of the electrode current-to-voltage matrix with respect to
    the pixel values; column n is the vectorised (m-1)x(m-1) block of
    -int_{pixel n} grad u_J . grad u_I over the Helmert current basis."""
    if partition.mesh is not system.mesh:
        raise FemError("partition lives on a different mesh")
    sols = solve_current_basis(system)
    interior, _ = system.split(sols)
    gu = _kernels.solution_gradients(system.quad_grads, system.dofmap,
                                     np.ascontiguousarray(interior))
    pair = _kernels.pixel_pair_integrals(
        system.quad_weights, gu, partition.pixel_of_triangle, partition.n_pixels)
    entries = -pair.transpose(2, 1, 0).reshape(partition.n_pixels, -1).T
    return DerivativeMatrix(np.ascontiguousarray(entries), "helmert", partition)


class ScemBackend:
    """Reversion backend over the electrode model; solution stacks are
    (m-1, ndofs+m) arrays of (interior, potentials) pairs."""

    def __init__(self, system: ScemSystem, partition: PixelPartition):
        self.system = system
        self.partition = partition
        self._sols = solve_current_basis(system)
        self._h = helmert_basis(system.m)
        self._base = (self._h.T @ system.split(self._sols)[1].T)

    def base_matrix(self) -> np.ndarray:
        return self._base

    def basis_solutions(self) -> np.ndarray:
        return self._sols

    def apply_p(self, values, sols: np.ndarray) -> np.ndarray:
        return apply_P_E(self.system, self.partition.triangle_values(np.asarray(values)), sols)

    def trace_matrix(self, sols: np.ndarray) -> np.ndarray:
        _, caps = self.system.split(sols)
        return self._h.T @ caps.T

    def derivative_matrix(self) -> np.ndarray:
        return dlambda_e_matrix(self.system, self.partition).entries
