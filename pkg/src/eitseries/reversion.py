"""Series-reversion engine: regularised pseudoinverse of the derivative
matrix and the order-by-order reconstruction terms.

The engine is backend-agnostic. A forward backend must provide:

  base_matrix()            measurement matrix of the unperturbed background
  basis_solutions()        stack of forward solutions for the basis inputs
  apply_p(values, sols)    perturbation operator for a pixel-value vector,
                           applied to a solution stack, returning a new stack
  trace_matrix(sols)       pairings of the solution traces against the basis

Solution stacks are opaque arrays; the engine only adds, subtracts, and
feeds them back into ``apply_p``/``trace_matrix``. The FE continuum model,
the electrode model, and the concentric-disk spectral calculus all satisfy
this protocol.

Three equivalent routes to the higher-order terms are implemented: the
production ladder of intermediate solution sweeps (pipeline_terms), the
literal composition formulas (theorem_terms), and the general recursion
(recursion_terms). The first two are defined up to fourth order; the
recursion extends to arbitrary order but is conjectural beyond four and
therefore gated behind an experimental flag.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .matrices import NDMatrix, format_complex
from .mesh import CoefficientField, PixelPartition


class ReversionError(RuntimeError):
    """Invalid reversion configuration or data."""


MAX_EXPLICIT_ORDER = 4


@dataclass
class ReversionConfig:
    """Controls for the reversion: order, SVD truncation, contrast cut-off.

    K > 4 relies on the conjectural general recursion and must be enabled
    explicitly with ``experimental_general_recursion``.
    """

    K: int = 4
    svd_threshold: float = 0.0
    contrast_cutoff: float = 0.0
    relative_threshold: bool = False
    experimental_general_recursion: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ReversionError(f"order K must be >= 1, got {self.K}")
        if self.svd_threshold < 0 or self.contrast_cutoff < 0:
            raise ReversionError("thresholds must be non-negative")
        if self.K > MAX_EXPLICIT_ORDER and not self.experimental_general_recursion:
            raise ReversionError(
                f"K={self.K} exceeds the explicit order {MAX_EXPLICIT_ORDER}; "
                "set experimental_general_recursion=True to use the "
                "conjectural recursion")


@dataclass(eq=False)
class TruncatedPseudoinverse:
    """Moore-Penrose inverse of the derivative matrix with singular values
    below the threshold zeroed; realises the regularised data-to-pixels map.

    When ``column_indices`` is set, the input matrix covered only those
    pixels and the output is re-embedded into a full-length vector (the
    remaining pixels are a-priori known and stay zero).
    """

    matrix: np.ndarray
    singular_values_kept: np.ndarray
    singular_values_dropped: np.ndarray
    zero_map: bool
    column_indices: np.ndarray | None = None
    n_full: int | None = None

    def __call__(self, data_vec: np.ndarray) -> np.ndarray:
        x = self.matrix @ data_vec
        if self.column_indices is None:
            return x
        out = np.zeros(self.n_full, dtype=x.dtype)
        out[self.column_indices] = x
        return out

    @property
    def n_pixels(self) -> int:
        return self.n_full if self.n_full is not None else self.matrix.shape[0]


def truncated_pseudoinverse(derivative, alpha: float, relative: bool = False,
                            column_indices=None, n_full: int | None = None
                            ) -> TruncatedPseudoinverse:
    """Truncated-SVD pseudoinverse of a derivative matrix.

    Parameters
    ----------
    derivative : DerivativeMatrix or (n_data, n_pixels) array
    alpha : float
        Truncation threshold; singular values below it are zeroed before the
        Moore-Penrose inversion. alpha = 0 gives the plain pseudoinverse.
    relative : bool
        Interpret alpha relative to the largest singular value.
    column_indices, n_full :
        Optional active-pixel embedding (see TruncatedPseudoinverse).
    """
    entries = getattr(derivative, "entries", derivative)
    entries = np.asarray(entries)
    u, s, vh = np.linalg.svd(entries, full_matrices=False)
    cut = alpha * s[0] if (relative and len(s)) else alpha
    # alpha = 0 still drops numerically-zero singular values, as the
    # Moore-Penrose inverse requires
    cut = max(cut, 1e-14 * (s[0] if len(s) else 0.0))
    keep = s > cut
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    pinv = (vh.conj().T * inv) @ u.conj().T
    ci = None if column_indices is None else np.asarray(column_indices, dtype=np.int64)
    if ci is not None and n_full is None:
        raise ReversionError("column_indices requires n_full")
    return TruncatedPseudoinverse(pinv, s[keep], s[~keep], not bool(keep.any()),
                                  ci, n_full)


def _vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stacked vector of a square matrix (first index fastest)."""
    return matrix.reshape(-1, order="F")


def compute_F1(backend, datum, pinv: TruncatedPseudoinverse) -> np.ndarray:
    """First-order term: regularised inverse applied to the relative datum."""
    datum = datum.entries if isinstance(datum, NDMatrix) else np.asarray(datum)
    base = np.asarray(backend.base_matrix())
    if datum.shape != base.shape:
        raise ReversionError(
            f"datum shape {datum.shape} does not match the backend basis {base.shape}")
    return pinv(_vec(datum - base))


def apply_contrast_cutoff(partial_sum, previous_sum, beta: float):
    """Zero pixels of the partial sum whose magnitude is below beta and
    return the adjusted increment tau_beta(partial) - previous.

    Accepts CoefficientField or plain arrays (returned type matches the
    partial sum). For complex pixel values the scalar magnitude |value| is
    the cut-off criterion.
    """
    ps = partial_sum.values if isinstance(partial_sum, CoefficientField) else np.asarray(partial_sum)
    prev = previous_sum.values if isinstance(previous_sum, CoefficientField) else np.asarray(previous_sum)
    cut = np.where(np.abs(ps) < beta, 0.0, ps)
    out = cut - prev
    if isinstance(partial_sum, CoefficientField):
        return CoefficientField(out, partial_sum.partition)
    return out


class _Ladder:
    """Shared plumbing for the per-order solution sweeps."""

    def __init__(self, backend, pinv):
        self.backend = backend
        self.pinv = pinv
        self.u = backend.basis_solutions()

    def p(self, field_values, sols):
        return self.backend.apply_p(field_values, sols)

    def invert(self, sols) -> np.ndarray:
        return self.pinv(_vec(np.asarray(self.backend.trace_matrix(sols))))


def pipeline_terms(backend, F1: np.ndarray, pinv: TruncatedPseudoinverse,
                   K: int, cutoff: float = 0.0) -> list[np.ndarray]:
    """Terms F_1..F_K (K <= 4) via the intermediate solution sweeps.

    Each order costs O(J) perturbation-operator applications against the
    shared factorisation plus one pseudoinverse application. A positive
    ``cutoff`` applies the pixelwise contrast threshold to each term before
    the next order is computed.
    """
    if not 1 <= K <= MAX_EXPLICIT_ORDER:
        raise ReversionError(f"pipeline terms are explicit only for K in 1..4, got {K}")
    lad = _Ladder(backend, pinv)
    partial = np.array(F1, copy=True)
    if cutoff > 0.0:
        F1 = apply_contrast_cutoff(partial, np.zeros_like(partial), cutoff)
        partial = np.array(F1, copy=True)
    terms = [F1]

    def settle(fk):
        nonlocal partial
        if cutoff > 0.0:
            fk = apply_contrast_cutoff(partial + fk, partial, cutoff)
        partial = partial + fk
        terms.append(fk)
        return fk

    if K >= 2:
        h = -lad.p(F1, lad.u)
        v = lad.p(F1, h)
        F2 = settle(lad.invert(v))
    if K >= 3:
        w = -lad.p(F2, lad.u)
        p = lad.p(F2, h)
        q = lad.p(F1, v + w)
        F3 = settle(lad.invert(p + q))
    if K >= 4:
        r = -lad.p(F3, lad.u)
        x = lad.p(F3, h)
        y = lad.p(F2, v + w)
        z = lad.p(F1, p + q + r)
        settle(lad.invert(x + y + z))
    return terms


def theorem_terms(backend, F1: np.ndarray, pinv: TruncatedPseudoinverse,
                  K: int) -> list[np.ndarray]:
    """Terms F_1..F_K (K <= 4) assembled literally from the composition
    formulas; a verification route, costlier than the pipeline."""
    if not 1 <= K <= MAX_EXPLICIT_ORDER:
        raise ReversionError(f"theorem terms are explicit only for K in 1..4, got {K}")
    lad = _Ladder(backend, pinv)

    def chain(*fields):
        sols = lad.u
        for f in reversed(fields):
            sols = lad.p(f, sols)
        return lad.invert(sols)

    terms = [F1]
    if K >= 2:
        G2 = chain(F1, F1)
        terms.append(-G2)
    if K >= 3:
        G3 = chain(F1, F1, F1)
        L21 = chain(F1, G2)
        R21 = chain(G2, F1)
        terms.append(-G3 + L21 + R21)
    if K >= 4:
        G4 = chain(F1, F1, F1, F1)
        G22 = chain(G2, G2)
        L31 = chain(F1, G3)
        R31 = chain(G3, F1)
        LL22 = chain(F1, L21)
        RR22 = chain(R21, F1)
        RL22 = chain(L21, F1)
        LR22 = chain(F1, R21)
        C22 = chain(F1, G2, F1)
        V22 = chain(F1, F1, G2)
        H22 = chain(G2, F1, F1)
        terms.append(-G4 - G22 + C22 + V22 + L31 - LL22 - LR22
                     + H22 + R31 - RR22 - RL22)
    return terms[:K]


class GeneralRecursion:
    """Stateful general-order recursion over the solution sweeps.

    Seeded with F_1; each step j builds the order-j sweep from the stored
    lower-order sweeps and the perturbation applications of the earlier
    terms, then inverts its trace pairings. Orders up to four reproduce the
    explicit formulas; beyond four the scheme is a conjecture and callers
    must opt in.
    """

    def __init__(self, backend, F1: np.ndarray, pinv: TruncatedPseudoinverse,
                 experimental: bool = False):
        self.lad = _Ladder(backend, pinv)
        self.experimental = experimental
        self.terms = [np.asarray(F1)]
        self.sweeps = [np.zeros_like(np.asarray(self.lad.u))]   # order-1 sweep is zero
        self.p_of_terms = [self.lad.p(F1, self.lad.u)]

    def _next_sweep(self) -> np.ndarray:
        j = len(self.terms) + 1
        if j > MAX_EXPLICIT_ORDER and not self.experimental:
            raise ReversionError(
                f"order {j} requires experimental_general_recursion: the "
                "recursion is conjectural beyond order 4")
        sweep = None
        for n in range(1, j):
            contrib = self.lad.p(self.terms[j - n - 1],
                                 self.sweeps[n - 1] - self.p_of_terms[n - 1])
            sweep = contrib if sweep is None else sweep + contrib
        return sweep

    def _push(self, term: np.ndarray, sweep: np.ndarray) -> None:
        self.terms.append(term)
        self.sweeps.append(sweep)
        self.p_of_terms.append(self.lad.p(term, self.lad.u))

    def step(self) -> np.ndarray:
        """Compute, store, and return the next term."""
        sweep = self._next_sweep()
        fj = self.lad.invert(sweep)
        self._push(fj, sweep)
        return fj

    def advance_with(self, term: np.ndarray) -> None:
        """Advance one order but adopt an externally supplied term (for
        example one adjusted by the contrast cut-off)."""
        self._push(np.asarray(term), self._next_sweep())


def recursion_terms(backend, F1: np.ndarray, pinv: TruncatedPseudoinverse,
                    K: int, experimental: bool = False) -> list[np.ndarray]:
    """Terms F_1..F_K via the general recursion (K > 4 needs the flag)."""
    rec = GeneralRecursion(backend, F1, pinv, experimental)
    for _ in range(K - 1):
        rec.step()
    return rec.terms[:K]


def general_recursion_step(backend, terms: list, pinv: TruncatedPseudoinverse,
                           experimental: bool = False) -> np.ndarray:
    """Next term after the given ones, by the general recursion.

    Replays the stored terms to rebuild the sweep state, then advances one
    order; beyond order four the recursion is conjectural and requires the
    experimental flag.
    """
    if not terms:
        raise ReversionError("the recursion needs the first-order term to start")
    rec = GeneralRecursion(backend, terms[0], pinv, experimental)
    for t in terms[1:]:
        rec.advance_with(t)
    return rec.step()


@dataclass(eq=False)
class ReversionResult:
    """Reconstruction terms, their running sums, and solver diagnostics."""

    terms: list
    partial_sums: list
    diagnostics: dict
    partition: PixelPartition | None = None

    @property
    def K(self) -> int:
        return len(self.terms)

    def fields(self) -> list[CoefficientField]:
        if self.partition is None:
            raise ReversionError("result carries no pixel partition")
        return [CoefficientField(t, self.partition) for t in self.terms]

    def save(self, directory: str | Path) -> None:
        """Write terms as per-pixel CSV columns plus a diagnostics JSON."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        header = "pixel," + ",".join(f"F{k + 1}" for k in range(self.K))
        lines = [header]
        for n in range(len(self.terms[0])):
            lines.append(str(n) + "," + ",".join(
                format_complex(t[n]) for t in self.terms))
        (directory / "terms.csv").write_text("\n".join(lines) + "\n")
        (directory / "diagnostics.json").write_text(
            json.dumps(self.diagnostics, indent=2, sort_keys=True) + "\n")


def run_reversion(backend, datum, pinv: TruncatedPseudoinverse,
                  config: ReversionConfig,
                  partition: PixelPartition | None = None) -> ReversionResult:
    """Full reversion: F_1 through F_K with diagnostics.

    Orders up to four use the explicit solution-sweep ladder; higher orders
    continue with the general recursion and are flagged as conjectural in
    the diagnostics.
    """
    datum_m = datum.entries if isinstance(datum, NDMatrix) else np.asarray(datum)
    F1 = compute_F1(backend, datum_m, pinv)
    k_explicit = min(config.K, MAX_EXPLICIT_ORDER)
    terms = pipeline_terms(backend, F1, pinv, k_explicit,
                           cutoff=config.contrast_cutoff)
    conjectural = []
    if config.K > MAX_EXPLICIT_ORDER:
        if config.contrast_cutoff > 0.0:
            raise ReversionError("contrast cut-off is not defined for the "
                                 "conjectural orders; use beta = 0 with K > 4")
        rec = GeneralRecursion(backend, terms[0], pinv, experimental=True)
        for _ in range(2, MAX_EXPLICIT_ORDER + 1):
            rec.step()
        for j in range(MAX_EXPLICIT_ORDER + 1, config.K + 1):
            terms.append(rec.step())
            conjectural.append(j)

    partial_sums = []
    acc = np.zeros_like(terms[0])
    for t in terms:
        acc = acc + t
        partial_sums.append(acc)

    base_vec = _vec(np.asarray(backend.base_matrix()))
    dvec = _vec(datum_m) - base_vec
    derivative = getattr(backend, "derivative_matrix", None)
    linear_residuals = None
    if derivative is not None:
        dmat = np.asarray(derivative())
        linear_residuals = [float(np.linalg.norm(dvec - dmat @ s))
                            for s in partial_sums]
    diagnostics = {
        "singular_values_kept": [float(s) for s in pinv.singular_values_kept],
        "singular_values_dropped": [float(s) for s in pinv.singular_values_dropped],
        "zero_map_warning": bool(pinv.zero_map),
        "term_sup_norms": [float(np.max(np.abs(t))) for t in terms],
        "data_increment_norm": float(np.linalg.norm(dvec)),
        "linear_residuals": linear_residuals,
        "conjectural_orders": conjectural,
        "config": {
            "K": config.K,
            "svd_threshold": config.svd_threshold,
            "contrast_cutoff": config.contrast_cutoff,
            "relative_threshold": config.relative_threshold,
            "experimental_general_recursion": config.experimental_general_recursion,
        },
    }
    return ReversionResult(terms, partial_sums, diagnostics, partition)
