"""Finite-element continuum model: Neumann solves, the perturbation operator,
and measurement/derivative matrix assembly.

The boundary condition is a mean-free current density; uniqueness is fixed by
constraining the boundary mean of the trace with a single Lagrange multiplier,
which keeps the system symmetric. One sparse LU factorisation per background
coefficient serves every right-hand side: all basis solves, every application
of the perturbation operator, and the derivative assembly reuse it.

Triangle quadrature is exact for products of FE gradients (degree
2*(element_degree-1)); boundary integrals use an 8-point Gauss rule per edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .matrices import DerivativeMatrix, NDMatrix
from .mesh import CoefficientField, Mesh, PixelPartition

BOUNDARY_GAUSS_POINTS = 8


class FemError(RuntimeError):
    """Assembly or solve failure in the FE model."""


# ------------------------------------------------------------ element tables

_TRI_RULES = {
    # degree-1 elements: constant gradients, centroid rule (exact degree 1)
    1: (np.array([[1 / 3, 1 / 3]]), np.array([1.0])),
    # degree-2 elements: edge-midpoint rule (exact degree 2)
    2: (np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
        np.array([1 / 3, 1 / 3, 1 / 3])),
}


def _reference_gradients(degree: int, pts: np.ndarray) -> np.ndarray:
    """Gradients of the reference shape functions at the rule points, (nq, nd, 2)."""
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.stack([1 - xi - eta, xi, eta], axis=1)          # (nq, 3)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # (3, 2)
    if degree == 1:
        return np.broadcast_to(dlam, (len(pts), 3, 2)).copy()
    nq = len(pts)
    out = np.zeros((nq, 6, 2))
    for i in range(3):
        out[:, i] = (4 * lam[:, i] - 1)[:, None] * dlam[i]
    for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
        out[:, 3 + k] = 4 * (lam[:, a, None] * dlam[b] + lam[:, b, None] * dlam[a])
    return out


def fe_tables(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature weights, physical shape gradients, and the dof map.

    Returns ``(w, grads, dofmap)`` with shapes (nt, nq), (nt, nq, nd, 2) and
    (nt, nd); cached on the mesh.
    """
    if "fe_tables" in mesh._cache:
        return mesh._cache["fe_tables"]
    degree = mesh.element_degree
    pts, wts = _TRI_RULES[degree]
    ref = _reference_gradients(degree, pts)                  # (nq, nd, 2)

    p = mesh.vertices[mesh.triangles]                        # (nt, 3, 2)
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nt, 2, 2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)                               # inverse transpose
    inv_t[:, 0, 0] = jac[:, 1, 1]
    inv_t[:, 0, 1] = -jac[:, 1, 0]
    inv_t[:, 1, 0] = -jac[:, 0, 1]
    inv_t[:, 1, 1] = jac[:, 0, 0]
    inv_t /= det[:, None, None]

    grads = np.einsum("tde,qne->tqnd", inv_t, ref)
    w = 0.5 * np.abs(det)[:, None] * wts[None, :]
    dofmap = np.ascontiguousarray(mesh.triangle_dofs())
    tables = (np.ascontiguousarray(w), np.ascontiguousarray(grads), dofmap)
    mesh._cache["fe_tables"] = tables
    return tables


# --------------------------------------------------------- boundary handling

@dataclass(eq=False)
class BoundaryQuadrature:
    """Gauss points along the boundary loop with the FE trace operator.

    ``trace`` is the sparse (n_points, n_dofs) matrix evaluating an FE
    function at the quadrature points; ``thetas`` carries the arc-length
    parameter of each point and ``weights`` the quadrature weights (physical
    length measure).
    """

    thetas: np.ndarray
    weights: np.ndarray
    trace: sp.csr_matrix


def boundary_quadrature(mesh: Mesh) -> BoundaryQuadrature:
    if "boundary_quadrature" in mesh._cache:
        return mesh._cache["boundary_quadrature"]
    gx, gw = np.polynomial.legendre.leggauss(BOUNDARY_GAUSS_POINTS)
    t = 0.5 * (gx + 1.0)
    gw = 0.5 * gw

    degree = mesh.element_degree
    if degree == 2:
        ev, _ = mesh.edges()
        edge_of = {(int(a), int(b)): e for e, (a, b) in enumerate(ev)}

    thetas, weights, rows, cols, vals = [], [], [], [], []
    row0 = 0
    for e in range(len(mesh.boundary_edges)):
        i, j = (int(v) for v in mesh.boundary_edges[e])
        ti, tj = mesh.boundary_thetas[e]
        length = float(np.hypot(*(mesh.vertices[j] - mesh.vertices[i])))
        thetas.append(ti + (tj - ti) * t)
        weights.append(length * gw)
        q = row0 + np.arange(len(t))
        if degree == 1:
            rows += [q, q]
            cols += [np.full_like(q, i), np.full_like(q, j)]
            vals += [1 - t, t]
        else:
            m = mesh.n_vertices + edge_of[(min(i, j), max(i, j))]
            rows += [q, q, q]
            cols += [np.full_like(q, i), np.full_like(q, j), np.full_like(q, m)]
            vals += [(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)]
        row0 += len(t)
    trace = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row0, mesh.n_dofs()))
    out = BoundaryQuadrature(np.concatenate(thetas), np.concatenate(weights), trace)
    mesh._cache["boundary_quadrature"] = out
    return out


@dataclass(eq=False)
class BoundaryBasis:
    """Discretely orthonormal, mean-free basis on the boundary.

    evaluations[i, q] holds basis function i at boundary quadrature point q.
    The trigonometric construction uses cos/sin pairs of the arc-length
    fraction, ordered (cos 1, sin 1, cos 2, ...), each normalised under the
    discrete boundary quadrature.
    """

    J: int
    kind: str
    evaluations: np.ndarray
    quadrature: BoundaryQuadrature

    def __post_init__(self):
        w = self.quadrature.weights
        means = self.evaluations @ w
        if np.max(np.abs(means)) > 1e-12 * math.sqrt(float(w.sum())):
            raise FemError("boundary basis is not mean free under the quadrature")
        gram = (self.evaluations * w) @ self.evaluations.T
        if np.max(np.abs(gram - np.eye(self.J))) > 1e-10:
            raise FemError("boundary basis is not orthonormal under the quadrature")

    @classmethod
    def trigonometric(cls, mesh_or_quadrature, J: int) -> "BoundaryBasis":
        if J < 1:
            raise FemError(f"basis size must be >= 1, got {J}")
        bq = (mesh_or_quadrature if isinstance(mesh_or_quadrature, BoundaryQuadrature)
              else boundary_quadrature(mesh_or_quadrature))
        rows = []
        for i in range(J):
            freq = i // 2 + 1
            raw = np.cos(freq * bq.thetas) if i % 2 == 0 else np.sin(freq * bq.thetas)
            rows.append(raw / math.sqrt(float(np.sum(bq.weights * raw * raw))))
        return cls(J, "trigonometric", np.asarray(rows), bq)

    @classmethod
    def nodal(cls, quadrature: BoundaryQuadrature, evaluations: np.ndarray) -> "BoundaryBasis":
        evaluations = np.asarray(evaluations, dtype=float)
        return cls(evaluations.shape[0], "nodal", evaluations, quadrature)

    def frequency_of(self, i: int) -> int:
        """Angular frequency of trigonometric basis function i."""
        return i // 2 + 1


# ------------------------------------------------------------------- system

def _coefficient_to_triangles(mesh: Mesh, a) -> np.ndarray:
    if isinstance(a, CoefficientField):
        return np.real_if_close(a.triangle_values()).astype(float)
    if np.isscalar(a):
        return np.full(mesh.n_triangles, float(a))
    a = np.asarray(a, dtype=float)
    if a.shape != (mesh.n_triangles,):
        raise FemError(f"coefficient array must have shape ({mesh.n_triangles},)")
    return a


@dataclass(eq=False)
class FemSystem:
    """Assembled, factorised, gauge-constrained system for one background
    coefficient. Immutable after construction; the stored factorisation is
    reused for every solve."""

    mesh: Mesh
    coefficient: np.ndarray
    tables: np.ndarray            # per-triangle stiffness tables (nt, nd, nd)
    quad_weights: np.ndarray
    quad_grads: np.ndarray
    dofmap: np.ndarray
    boundary: BoundaryQuadrature
    stiffness: sp.csr_matrix
    mean_vector: np.ndarray
    factorization: object = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs()

    def solve_constrained(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the bordered system for one or more right-hand sides
        (columns); returns only the FE part, trace-mean free."""
        one = rhs.ndim == 1
        rhs = rhs[:, None] if one else rhs
        padded = np.zeros((self.n_dofs + 1, rhs.shape[1]), dtype=rhs.dtype)
        padded[:-1] = rhs
        if np.iscomplexobj(rhs):
            x = (self.factorization.solve(np.ascontiguousarray(padded.real))
                 + 1j * self.factorization.solve(np.ascontiguousarray(padded.imag)))
        else:
            x = self.factorization.solve(padded)
        u = x[:-1]
        return u[:, 0] if one else u

    def gradient_norm(self, u: np.ndarray) -> float:
        """H1 seminorm (the energy norm with unit coefficient)."""
        gu = _kernels.solution_gradients(self.quad_grads, self.dofmap,
                                         np.ascontiguousarray(u)[None])
        return math.sqrt(float(np.sum(self.quad_weights * np.sum(np.abs(gu[0]) ** 2, axis=2))))

    def energy_product(self, coef_tri: np.ndarray, u: np.ndarray, v: np.ndarray):
        """Weighted gradient product integral of u against v."""
        return np.vdot(v, _kernels.apply_scaled_stiffness(
            self.tables, self.dofmap, coef_tri, u, self.n_dofs))

    def trace_mean(self, u: np.ndarray):
        """Boundary mean of the trace; the gauge keeps it at zero."""
        return self.mean_vector @ u


def assemble_stiffness(mesh: Mesh, a):
    """Coercivity-checked stiffness matrix for a scalar coefficient.

    Returns ``(coef, stiffness, tables, w, grads, dofmap)`` so electrode
    models can share the interior assembly.
    """
    coef = _coefficient_to_triangles(mesh, a)
    if np.min(coef) <= 0.0:
        raise FemError("non-coercive coefficient: minimum value is "
                       f"{np.min(coef)!r}, must be positive")
    w, grads, dofmap = fe_tables(mesh)
    tables = _kernels.stiffness_tables(w, grads)

    nd = dofmap.shape[1]
    data = (coef[:, None, None] * tables).ravel()
    rows = np.repeat(dofmap, nd, axis=1).ravel()
    cols = np.tile(dofmap, (1, nd)).ravel()
    ndof = mesh.n_dofs()
    stiffness = sp.coo_matrix((data, (rows, cols)), shape=(ndof, ndof)).tocsr()
    return coef, stiffness, tables, w, grads, dofmap


def assemble_system(mesh: Mesh, a) -> FemSystem:
    """Assemble and factorise the Neumann system for background coefficient a.

    Parameters
    ----------
    mesh : Mesh
    a : scalar, per-triangle array, or CoefficientField
        Must be real with positive minimum (coercivity); a CoefficientField
        that leaves triangles outside its window gives zero there and is
        rejected.
    """
    coef, stiffness, tables, w, grads, dofmap = assemble_stiffness(mesh, a)
    bq = boundary_quadrature(mesh)
    mean_vector = np.asarray(bq.trace.T @ bq.weights)

    c = sp.csr_matrix(mean_vector[:, None])
    bordered = sp.bmat([[stiffness, c], [c.T, None]], format="csc")
    try:
        factorization = spla.splu(bordered)
    except RuntimeError as exc:
        raise FemError(f"factorization failed: {exc}") from exc
    return FemSystem(mesh, coef, tables, w, grads, dofmap, bq, stiffness,
                     mean_vector, factorization)


def solve_neumann(system: FemSystem, basis: BoundaryBasis, coefficients) -> np.ndarray:
    """Solve the Neumann problem for a current density given by basis
    coefficients; returns the FE dof vector with mean-free trace."""
    coefficients = np.atleast_1d(np.asarray(coefficients))
    if coefficients.shape != (basis.J,):
        raise FemError(f"expected {basis.J} basis coefficients, got {coefficients.shape}")
    f_vals = basis.evaluations.T @ coefficients
    rhs = system.boundary.trace.T @ (system.boundary.weights * f_vals)
    return system.solve_constrained(rhs)


def solve_for_basis(system: FemSystem, basis: BoundaryBasis) -> np.ndarray:
    """All J basis solutions at once, shape (J, n_dofs); one factorisation pass."""
    rhs = system.boundary.trace.T @ (system.boundary.weights[:, None]
                                     * basis.evaluations.T)
    return system.solve_constrained(np.asarray(rhs)).T


def apply_P(system: FemSystem, b, y: np.ndarray) -> np.ndarray:
    """Apply the perturbation operator for direction b to FE function(s) y.

    Solves <w, v>_a = -<y, v>_b with the stored factorisation; y may be a
    single dof vector or a stack (ns, n_dofs). The result carries the same
    trace gauge as every other solve.
    """
    if isinstance(b, CoefficientField):
        if b.partition.mesh is not system.mesh:
            raise FemError("perturbation field lives on a different mesh")
        b_tri = b.triangle_values()
    else:
        b_tri = np.asarray(b)
        if b_tri.shape != (system.mesh.n_triangles,):
            raise FemError("per-triangle perturbation has wrong length")
    if np.iscomplexobj(b_tri):
        if np.max(np.abs(b_tri.imag)) == 0.0:
            b_tri = b_tri.real
        else:
            rr = apply_P(system, b_tri.real, y)
            ii = apply_P(system, b_tri.imag, y)
            return rr + 1j * ii
    b_tri = np.ascontiguousarray(b_tri, dtype=float)

    single = y.ndim == 1
    ys = y[None] if single else y
    rhs = np.stack([-_kernels.apply_scaled_stiffness(
        system.tables, system.dofmap, b_tri, np.ascontiguousarray(ys[s]),
        system.n_dofs) for s in range(ys.shape[0])], axis=1)
    out = system.solve_constrained(rhs).T
    return out[0] if single else out


def trace_inner_products(system: FemSystem, basis: BoundaryBasis,
                         solutions: np.ndarray) -> np.ndarray:
    """Matrix of boundary pairings entries[i, s] = <trace(u_s), f_i>."""
    solutions = solutions[None] if solutions.ndim == 1 else solutions
    tv = system.boundary.trace @ solutions.T          # (nQ, ns)
    return basis.evaluations @ (system.boundary.weights[:, None] * tv)


def nd_matrix(system: FemSystem, basis: BoundaryBasis) -> NDMatrix:
    """Measurement matrix entries[i, j] = <trace(u_j), f_i> for all basis solves."""
    sols = solve_for_basis(system, basis)
    return NDMatrix(trace_inner_products(system, basis, sols), basis)


class CmBackend:
    """Reversion backend over the FE continuum model.

    Solution stacks are (J, n_dofs) arrays; the background basis solutions
    and the measurement matrix of the background are computed once at
    construction and reused.
    """

    def __init__(self, system: FemSystem, basis: BoundaryBasis,
                 partition: PixelPartition):
        if partition.mesh is not system.mesh:
            raise FemError("partition lives on a different mesh")
        self.system = system
        self.basis = basis
        self.partition = partition
        self._sols = solve_for_basis(system, basis)
        self._base = trace_inner_products(system, basis, self._sols)
        self._derivative = None

    def base_matrix(self) -> np.ndarray:
        return self._base

    def basis_solutions(self) -> np.ndarray:
        return self._sols

    def apply_p(self, values, sols: np.ndarray) -> np.ndarray:
        return apply_P(self.system, self.partition.triangle_values(np.asarray(values)), sols)

    def trace_matrix(self, sols: np.ndarray) -> np.ndarray:
        return trace_inner_products(self.system, self.basis, sols)

    def derivative_matrix(self) -> np.ndarray:
        if self._derivative is None:
            self._derivative = dlambda_matrix(self.system, self.basis,
                                              self.partition).entries
        return self._derivative


def dlambda_matrix(system: FemSystem, basis: BoundaryBasis,
                   partition: PixelPartition) -> DerivativeMatrix:
    """Derivative of the measurement matrix with respect to the pixel values.

    Column n holds the vectorised matrix -int_{pixel n} grad u_j . grad u_i
    (first index fastest); quadrature is exact for the FE degree.
    """
    if partition.mesh is not system.mesh:
        raise FemError("partition lives on a different mesh")
    sols = solve_for_basis(system, basis)
    gu = _kernels.solution_gradients(system.quad_grads, system.dofmap,
                                     np.ascontiguousarray(sols))
    pair = _kernels.pixel_pair_integrals(
        system.quad_weights, gu, partition.pixel_of_triangle, partition.n_pixels)
    entries = -pair.transpose(2, 1, 0).reshape(partition.n_pixels, -1).T
    return DerivativeMatrix(np.ascontiguousarray(entries), basis, partition)
