"""Hot element-level kernels: numba-compiled with a pure-numpy fallback.

Everything here operates on the flattened per-triangle quadrature tables
produced by the FE modules:

  w      (nt, nq)         quadrature weights including the Jacobian
  grads  (nt, nq, nd, 2)  local shape-function gradients at the quad points
  dofmap (nt, nd)         global dof index per local shape function

Path selection is controlled by the environment variable ``EITSERIES_NUMBA``:
"0" forces the numpy path, "1" forces numba (raising if it is unavailable),
unset picks numba when importable. Both paths are deterministic; they may
differ in the last bits because the accumulation order differs.
"""
from __future__ import annotations

import os

import numpy as np

# ---------------------------------------------------------------- numpy path


def _stiffness_tables_np(w, grads):
    return np.einsum("tq,tqad,tqbd->tab", w, grads, grads, optimize=True)


def _apply_scaled_stiffness_np(tables, dofmap, coef, y, ndof):
    yloc = y[dofmap]
    z = coef[:, None] * np.einsum("tab,tb->ta", tables, yloc)
    return np.bincount(dofmap.ravel(), weights=z.ravel(), minlength=ndof)


def _solution_gradients_np(grads, dofmap, sols):
    uloc = sols[:, dofmap]
    return np.einsum("tqad,sta->stqd", grads, uloc, optimize=True)


def _pixel_pair_integrals_np(w, gu, labels, n_pixels):
    ns = gu.shape[0]
    pair = np.einsum("tq,itqd,jtqd->ijt", w, gu, gu, optimize=True)
    out = np.zeros((n_pixels, ns * ns))
    inside = labels >= 0
    np.add.at(out, labels[inside], pair.reshape(ns * ns, -1).T[inside])
    return out.T.reshape(ns, ns, n_pixels)


# ---------------------------------------------------------------- numba path

try:
    from numba import njit

    @njit(cache=True)
    def _stiffness_tables_nb(w, grads):
        nt, nq, nd, _ = grads.shape
        out = np.zeros((nt, nd, nd))
        for t in range(nt):
            for q in range(nq):
                wq = w[t, q]
                for a in range(nd):
                    gax, gay = grads[t, q, a, 0], grads[t, q, a, 1]
                    for b in range(nd):
                        out[t, a, b] += wq * (gax * grads[t, q, b, 0]
                                              + gay * grads[t, q, b, 1])
        return out

    @njit(cache=True)
    def _apply_scaled_stiffness_nb(tables, dofmap, coef, y, ndof):
        nt, nd = dofmap.shape
        out = np.zeros(ndof)
        for t in range(nt):
            c = coef[t]
            if c == 0.0:
                continue
            for a in range(nd):
                acc = 0.0
                for b in range(nd):
                    acc += tables[t, a, b] * y[dofmap[t, b]]
                out[dofmap[t, a]] += c * acc
        return out

    @njit(cache=True)
    def _solution_gradients_nb(grads, dofmap, sols):
        ns = sols.shape[0]
        nt, nq, nd, _ = grads.shape
        out = np.zeros((ns, nt, nq, 2))
        for s in range(ns):
            for t in range(nt):
                for q in range(nq):
                    gx = 0.0
                    gy = 0.0
                    for a in range(nd):
                        u = sols[s, dofmap[t, a]]
                        gx += grads[t, q, a, 0] * u
                        gy += grads[t, q, a, 1] * u
                    out[s, t, q, 0] = gx
                    out[s, t, q, 1] = gy
        return out

    @njit(cache=True)
    def _pixel_pair_integrals_nb(w, gu, labels, n_pixels):
        ns, nt, nq, _ = gu.shape
        out = np.zeros((ns, ns, n_pixels))
        for t in range(nt):
            p = labels[t]
            if p < 0:
                continue
            for i in range(ns):
                for j in range(ns):
                    acc = 0.0
                    for q in range(nq):
                        acc += w[t, q] * (gu[i, t, q, 0] * gu[j, t, q, 0]
                                          + gu[i, t, q, 1] * gu[j, t, q, 1])
                    out[i, j, p] += acc
        return out

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

_FLAG = os.environ.get("EITSERIES_NUMBA", "").strip()
if _FLAG == "1" and not _HAVE_NUMBA:
    raise ImportError("EITSERIES_NUMBA=1 but numba is not importable")
_USE_NUMBA = _HAVE_NUMBA if _FLAG == "" else _FLAG == "1"

NUMPY_IMPL = {
    "stiffness_tables": _stiffness_tables_np,
    "apply_scaled_stiffness": _apply_scaled_stiffness_np,
    "solution_gradients": _solution_gradients_np,
    "pixel_pair_integrals": _pixel_pair_integrals_np,
}
NUMBA_IMPL = None if not _HAVE_NUMBA else {
    "stiffness_tables": _stiffness_tables_nb,
    "apply_scaled_stiffness": _apply_scaled_stiffness_nb,
    "solution_gradients": _solution_gradients_nb,
    "pixel_pair_integrals": _pixel_pair_integrals_nb,
}
_ACTIVE = NUMBA_IMPL if _USE_NUMBA else NUMPY_IMPL


def active_path() -> str:
    """Name of the kernel path in use ("numba" or "numpy")."""
    return "numba" if _ACTIVE is NUMBA_IMPL else "numpy"


def stiffness_tables(w: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Per-triangle stiffness tables K[t,a,b] = sum_q w grad_a . grad_b."""
    return _ACTIVE["stiffness_tables"](w, grads)


def apply_scaled_stiffness(tables: np.ndarray, dofmap: np.ndarray,
                           coef: np.ndarray, y: np.ndarray, ndof: int) -> np.ndarray:
    """Matrix-free product sum_t coef[t] * K[t] acting on the global vector y.

    Complex vectors are routed through the real kernel twice.
    """
    if np.iscomplexobj(y):
        re = _ACTIVE["apply_scaled_stiffness"](tables, dofmap, coef, np.ascontiguousarray(y.real), ndof)
        im = _ACTIVE["apply_scaled_stiffness"](tables, dofmap, coef, np.ascontiguousarray(y.imag), ndof)
        return re + 1j * im
    return _ACTIVE["apply_scaled_stiffness"](tables, dofmap, coef, y, ndof)


def solution_gradients(grads: np.ndarray, dofmap: np.ndarray,
                       sols: np.ndarray) -> np.ndarray:
    """Gradients of FE functions at every quadrature point, (ns, nt, nq, 2)."""
    if np.iscomplexobj(sols):
        re = _ACTIVE["solution_gradients"](grads, dofmap, np.ascontiguousarray(sols.real))
        im = _ACTIVE["solution_gradients"](grads, dofmap, np.ascontiguousarray(sols.imag))
        return re + 1j * im
    return _ACTIVE["solution_gradients"](grads, dofmap, sols)


def pixel_pair_integrals(w: np.ndarray, gu: np.ndarray, labels: np.ndarray,
                         n_pixels: int) -> np.ndarray:
    """Per-pixel gradient pair integrals out[i,j,p] = int_p grad u_i . grad u_j."""
    return _ACTIVE["pixel_pair_integrals"](w, gu, labels, n_pixels)
