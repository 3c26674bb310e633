"""Exact harmonic-mode calculus for a two-layer concentric disk.

For a unit disk with a constant-conductivity annulus/inner-disk perturbation,
the measurement map, its derivative, and the perturbation operator all act
diagonally on the complex exponential boundary basis. Each frequency j is
described by a coefficient triple (alpha, beta, gamma): alpha and beta weight
r^|j| and r^-|j| in the annulus, gamma weights r^|j| in the inner disk, and
continuity across the interface ties them together.

This module is the machine-precision oracle for the FE backends and the
cheapest host for the reversion engine; it also provides the parameter-sweep
machinery used to measure the convergence order of the reversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .reversion import (ReversionConfig, ReversionError, run_reversion,
                        truncated_pseudoinverse)

SQRT_2PI = math.sqrt(2.0 * math.pi)


class ConcentricError(ValueError):
    """Invalid concentric-geometry parameters."""


@dataclass(frozen=True)
class ConcentricPerturbation:
    """Piecewise-constant perturbation: kappa1 on the annulus, kappa2 on the
    origin-centred disk of radius rho."""

    kappa1: float
    kappa2: float
    rho: float

    def __post_init__(self):
        if not -1.0 < self.kappa1 or not -1.0 < self.kappa2:
            raise ConcentricError("kappa values must exceed -1")
        if not 0.0 < self.rho < 1.0:
            raise ConcentricError(f"rho must lie in (0, 1), got {self.rho}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.kappa1, self.kappa2])


@dataclass(frozen=True)
class ModeTriple:
    """Harmonic-mode coefficients at frequency j: (alpha, beta) in the
    annulus, gamma in the inner disk."""

    j: int
    alpha: complex
    beta: complex
    gamma: complex

    def __post_init__(self):
        if self.j == 0:
            raise ConcentricError("frequency 0 is excluded (mean-free data)")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])

    def transmission_residual(self, rho: float) -> float:
        """|alpha + rho^-2|j| beta - gamma|; zero when the trace is continuous
        across the interface."""
        return abs(self.alpha + rho ** (-2 * abs(self.j)) * self.beta - self.gamma)


@dataclass(frozen=True)
class SpanSelection:
    """Positive frequencies spanning the measurement projection."""

    frequencies: tuple[int, ...]

    def __post_init__(self):
        freqs = tuple(self.frequencies)
        if not freqs:
            raise ConcentricError("span must contain at least one frequency")
        if len(set(freqs)) != len(freqs) or any(f < 1 for f in freqs):
            raise ConcentricError("frequencies must be distinct positive integers")
        object.__setattr__(self, "frequencies", freqs)

    def __len__(self) -> int:
        return len(self.frequencies)


def nd_eigenvalue(p: ConcentricPerturbation, j: int) -> float:
    """Eigenvalue of the perturbed measurement map at frequency j."""
    if j == 0:
        raise ConcentricError("frequency 0 is excluded")
    aj = abs(j)
    s = p.kappa1 + p.kappa2 + 2.0
    d = (p.kappa2 - p.kappa1) * p.rho ** (2 * aj)
    return (s - d) / ((p.kappa1 + 1.0) * aj * (s + d))


def dlambda_eigenvalue(eta, rho: float, j: int) -> float:
    """Eigenvalue of the measurement-map derivative in direction
    eta = (annulus, inner disk) at frequency j."""
    if j == 0:
        raise ConcentricError("frequency 0 is excluded")
    aj = abs(j)
    r = rho ** (2 * aj)
    return (eta[0] * (r - 1.0) - eta[1] * r) / aj


def neumann_mode(j: int) -> ModeTriple:
    """Forward solution mode for the unit background: the harmonic extension
    of the frequency-j basis current."""
    if j == 0:
        raise ConcentricError("frequency 0 is excluded")
    a = 1.0 / (SQRT_2PI * abs(j))
    return ModeTriple(j, a, 0.0, a)


def mode_matrices(rho: float, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (A, B) such that the perturbation operator for eta acts on a
    frequency-j triple as eta[0] * A + eta[1] * B."""
    aj = abs(j)
    r = rho ** (2 * aj)
    rinv = rho ** (-2 * aj)
    a = 0.5 * np.array([
        [r - 2.0, 1.0, 0.0],
        [r, -1.0, 0.0],
        [r - 1.0, 1.0 - rinv, 0.0],
    ])
    b = -0.5 * r * np.array([
        [0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0 + rinv],
    ])
    return a, b


def apply_P_eta(eta, rho: float, triple: ModeTriple) -> ModeTriple:
    """Apply the perturbation operator for eta = (annulus, inner disk) to a
    mode triple; the output satisfies the transmission condition."""
    a, b = mode_matrices(rho, triple.j)
    out = (eta[0] * a + eta[1] * b) @ triple.as_array()
    return ModeTriple(triple.j, *out)


def trace_mode(triple: ModeTriple) -> complex:
    """Boundary trace coefficient of the mode (up to the common angular
    factor): the r^|j| and r^-|j| weights evaluated at r = 1."""
    return triple.alpha + triple.beta


class SpectralBackend:
    """Reversion backend working on the diagonal mode representation.

    Solution stacks are (n_span, 3) arrays: one coefficient triple per
    spanned frequency. The perturbation operator never mixes frequencies,
    so the projected measurement matrices are diagonal.
    """

    def __init__(self, rho: float, span: SpanSelection):
        if not 0.0 < rho < 1.0:
            raise ConcentricError(f"rho must lie in (0, 1), got {rho}")
        self.rho = rho
        self.span = span
        self.freqs = np.array(span.frequencies)
        mats = [mode_matrices(rho, j) for j in self.freqs]
        self._annulus = np.stack([m[0] for m in mats])
        self._disk = np.stack([m[1] for m in mats])
        self._u = np.stack([neumann_mode(j).as_array().real for j in self.freqs])

    @property
    def n_basis(self) -> int:
        return len(self.freqs)

    def base_matrix(self) -> np.ndarray:
        return np.diag(1.0 / self.freqs.astype(float))

    def datum_matrix(self, p: ConcentricPerturbation) -> np.ndarray:
        if abs(p.rho - self.rho) > 1e-15:
            raise ConcentricError("perturbation radius differs from the backend radius")
        return np.diag([nd_eigenvalue(p, int(j)) for j in self.freqs])

    def basis_solutions(self) -> np.ndarray:
        return self._u

    def apply_p(self, values, sols: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        mats = values[0] * self._annulus + values[1] * self._disk
        return np.einsum("nab,nb->na", mats, sols)

    def trace_matrix(self, sols: np.ndarray) -> np.ndarray:
        return np.diag(SQRT_2PI * (sols[:, 0] + sols[:, 1]))

    def derivative_matrix(self) -> np.ndarray:
        n = self.n_basis
        d = np.zeros((n * n, 2))
        diag = np.arange(n) * (n + 1)
        r = self.rho ** (2 * self.freqs)
        d[diag, 0] = (r - 1.0) / self.freqs
        d[diag, 1] = -r / self.freqs
        return d


def _restricted_pinv(backend: SpectralBackend, active: np.ndarray,
                     config: ReversionConfig):
    d = backend.derivative_matrix()[:, active]
    s = np.linalg.svd(d, compute_uv=False)
    if d.shape[0] < d.shape[1] or s[-1] <= 1e-12 * max(1.0, s[0]):
        raise ReversionError(
            "the span-restricted derivative matrix is singular; choose a "
            "span with enough distinct frequencies")
    return truncated_pseudoinverse(d, config.svd_threshold,
                                   relative=config.relative_threshold,
                                   column_indices=active, n_full=2)


def reconstruct_kappa(p: ConcentricPerturbation, span: SpanSelection,
                      K: int = 4, active: tuple[int, ...] = (0, 1),
                      config: ReversionConfig | None = None) -> dict:
    """Synthesise the datum for a known perturbation and revert it.

    Parameters
    ----------
    p : ConcentricPerturbation
        Ground truth, used only to generate the datum.
    span : SpanSelection
        Frequencies of the measurement projection.
    K : int
        Reversion order.
    active : tuple of int
        Indices (0 = annulus, 1 = inner disk) of the unknown parameters; the
        others are a-priori known to vanish.
    config : ReversionConfig, optional

    Returns
    -------
    dict with keys "truth", "estimates" (per order, shape (K, 2)), and
    "signed_errors" (per order, truth - running sum).
    """
    config = config or ReversionConfig(K=K)
    if config.K != K:
        config = ReversionConfig(K=K, svd_threshold=config.svd_threshold,
                                 contrast_cutoff=config.contrast_cutoff,
                                 relative_threshold=config.relative_threshold,
                                 experimental_general_recursion=config.experimental_general_recursion)
    active_idx = np.asarray(sorted(active), dtype=np.int64)
    truth = p.as_vector()
    inactive = np.setdiff1d(np.arange(2), active_idx)
    if np.any(truth[inactive] != 0.0):
        raise ReversionError("a-priori known parameters must be zero in this model")

    backend = SpectralBackend(p.rho, span)
    pinv = _restricted_pinv(backend, active_idx, config)
    result = run_reversion(backend, backend.datum_matrix(p), pinv, config)
    estimates = np.stack([np.real_if_close(s) for s in result.partial_sums])
    return {
        "truth": truth,
        "estimates": estimates,
        "signed_errors": truth[None, :] - estimates,
        "diagnostics": result.diagnostics,
    }


def error_sweep(rho: float, span: SpanSelection, K_max: int,
                deltas, samples_per_circle: int = 64,
                config: ReversionConfig | None = None) -> np.ndarray:
    """Worst-case reconstruction error over perturbation circles |kappa| = delta.

    For each delta, both parameters sweep the circle of that Euclidean
    radius at ``samples_per_circle`` uniform angles; the reported error is
    sqrt(pi/2) * max |kappa - running sum| per order. Returns a structured
    record array with fields (delta, K, err).
    """
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas >= 1.0) or np.any(deltas <= 0.0):
        raise ConcentricError("delta must lie in (0, 1) so every sampled "
                              "perturbation stays admissible")
    config = config or ReversionConfig(K=K_max)
    backend = SpectralBackend(rho, span)
    pinv = _restricted_pinv(backend, np.array([0, 1]), config)

    rows = []
    angles = 2.0 * np.pi * np.arange(samples_per_circle) / samples_per_circle
    for delta in deltas:
        worst = np.zeros(K_max)
        for phi in angles:
            kappa = np.array([delta * math.cos(phi), delta * math.sin(phi)])
            p = ConcentricPerturbation(kappa[0], kappa[1], rho)
            result = run_reversion(backend, backend.datum_matrix(p), pinv, config)
            for k, s in enumerate(result.partial_sums):
                worst[k] = max(worst[k], float(np.linalg.norm(kappa - s)))
        for k in range(K_max):
            rows.append((float(delta), k + 1, math.sqrt(math.pi / 2.0) * worst[k]))
    return np.array(rows, dtype=[("delta", float), ("K", int), ("err", float)])


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit requires positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def complex_pair_from_real(block: np.ndarray) -> np.ndarray:
    """Convert a 2x2 single-frequency measurement block from the real
    (cos, sin) convention to the complex exponential (f_j, f_-j) convention.

    The conventions are related by the fixed unitary U with
    cos_j = (f_j + f_-j)/sqrt(2) and sin_j = (f_j - f_-j)/(i sqrt(2));
    real-basis entries R and complex-basis entries C then satisfy
    R = conj(U) C U^T, i.e. C = U^T R conj(U).
    """
    u = np.array([[1.0, 1.0], [-1.0j, 1.0j]]) / math.sqrt(2.0)
    return u.T @ np.asarray(block) @ u.conj()
