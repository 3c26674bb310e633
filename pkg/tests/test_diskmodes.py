import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eitseries import diskmodes as dk
from eitseries.reversion import ReversionError

SQRT_2PI = math.sqrt(2.0 * math.pi)


# ------------------------------------------------------------- closed forms

def test_nd_eigenvalue_unit_background():
    p = dk.ConcentricPerturbation(0.0, 0.0, 0.4)
    for j in (1, -1, 2, 5):
        assert dk.nd_eigenvalue(p, j) == pytest.approx(1.0 / abs(j), abs=0)


def test_nd_eigenvalue_uniform_scaling_rho_independent():
    for rho in (0.2, 0.5, 0.8):
        p = dk.ConcentricPerturbation(0.3, 0.3, rho)
        assert dk.nd_eigenvalue(p, 2) == pytest.approx(1.0 / (1.3 * 2), rel=1e-15)


def test_nd_eigenvalue_reference_case():
    p = dk.ConcentricPerturbation(0.0, 1.0, 0.3)
    assert dk.nd_eigenvalue(p, 1) == pytest.approx(2.91 / 3.09, rel=1e-14)


def test_frequency_zero_rejected():
    p = dk.ConcentricPerturbation(0.0, 1.0, 0.3)
    with pytest.raises(dk.ConcentricError):
        dk.nd_eigenvalue(p, 0)
    with pytest.raises(dk.ConcentricError):
        dk.dlambda_eigenvalue((1.0, 0.0), 0.3, 0)
    with pytest.raises(dk.ConcentricError):
        dk.neumann_mode(0)


def test_parameter_validation():
    with pytest.raises(dk.ConcentricError):
        dk.ConcentricPerturbation(-1.0, 0.0, 0.3)
    with pytest.raises(dk.ConcentricError):
        dk.ConcentricPerturbation(0.0, 0.0, 1.2)
    with pytest.raises(dk.ConcentricError):
        dk.SpanSelection(())
    with pytest.raises(dk.ConcentricError):
        dk.SpanSelection((1, 1))


def test_dlambda_eigenvalue_cases():
    assert dk.dlambda_eigenvalue((0.0, 0.0), 0.5, 3) == 0.0
    assert dk.dlambda_eigenvalue((1.0, 0.0), 0.3, 2) == pytest.approx(
        (0.3 ** 4 - 1.0) / 2.0, rel=1e-15)


def test_dlambda_is_derivative_of_nd():
    eta = np.array([0.4, -0.7])
    rho, j = 0.45, 2
    d = dk.dlambda_eigenvalue(eta, rho, j)
    errs = []
    for t in (1e-3, 5e-4, 2.5e-4):
        p = dk.ConcentricPerturbation(t * eta[0], t * eta[1], rho)
        fd = (dk.nd_eigenvalue(p, j) - 1.0 / j) / t
        errs.append(abs(fd - d))
    assert 1.8 <= errs[0] / errs[1] <= 2.2
    assert 1.8 <= errs[1] / errs[2] <= 2.2


def test_neumann_mode_values():
    m1 = dk.neumann_mode(1)
    assert m1.alpha == pytest.approx(1.0 / SQRT_2PI, rel=1e-15)
    assert m1.beta == 0.0 and m1.gamma == m1.alpha
    m3 = dk.neumann_mode(-3)
    assert m3.alpha == pytest.approx(1.0 / (3.0 * SQRT_2PI), rel=1e-15)
    assert m3.transmission_residual(0.5) == 0.0


def test_apply_p_eta_hand_case():
    out = dk.apply_P_eta((0.0, 1.0), 0.5, dk.ModeTriple(1, 0.0, 0.0, 1.0))
    assert (out.alpha, out.beta, out.gamma) == (-0.125, -0.125, -0.625)
    assert out.transmission_residual(0.5) <= 1e-12
    assert dk.trace_mode(out) == -0.25


def test_apply_p_eta_zero():
    out = dk.apply_P_eta((0.0, 0.0), 0.5, dk.ModeTriple(2, 1.0, 2.0, 3.0))
    assert (out.alpha, out.beta, out.gamma) == (0.0, 0.0, 0.0)


def test_trace_mode_cases():
    assert dk.trace_mode(dk.neumann_mode(1)) == pytest.approx(1.0 / SQRT_2PI)
    assert dk.trace_mode(dk.ModeTriple(1, 1.0, -1.0, 0.0)) == 0.0


def test_neumann_series_resummation():
    # geometric resummation of the perturbation operator reproduces the
    # closed-form eigenvalue of the perturbed measurement map
    c, rho, j = 0.2, 0.3, 1
    tri = dk.neumann_mode(j)
    acc, cur = dk.trace_mode(tri), tri
    for _ in range(30):
        cur = dk.apply_P_eta((c, c), rho, cur)
        acc += dk.trace_mode(cur)
    lam = dk.nd_eigenvalue(dk.ConcentricPerturbation(c, c, rho), j)
    assert abs(acc * SQRT_2PI - lam) <= 1e-10


def test_taylor_remainder_orders():
    eta = np.array([0.5, -0.4])
    rho, j = 0.55, 2
    # exact directional Taylor coefficients from the mode recursion
    tri = dk.neumann_mode(j)
    coeffs = [dk.trace_mode(tri) * SQRT_2PI]
    cur = tri
    for _ in range(6):
        cur = dk.apply_P_eta(eta, rho, cur)
        coeffs.append(dk.trace_mode(cur) * SQRT_2PI)
    for K in (1, 2, 3, 4):
        errs = []
        for t in (0.1, 0.05):
            p = dk.ConcentricPerturbation(t * eta[0], t * eta[1], rho)
            lam = dk.nd_eigenvalue(p, j)
            approx = sum(coeffs[k] * t ** k for k in range(K + 1))
            errs.append(abs(lam - approx))
        ratio = errs[0] / errs[1]
        assert 2 ** (K + 0.6) <= ratio <= 2 ** (K + 1.4)


# ------------------------------------------------------ hypothesis properties

@settings(max_examples=200, deadline=None)
@given(j=st.integers(-5, 5).filter(lambda v: v != 0),
       rho=st.floats(0.15, 0.9),
       coeffs=st.tuples(*[st.floats(-3, 3) for _ in range(6)]),
       eta=st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_transmission_invariant_preserved(j, rho, coeffs, eta):
    triple = dk.ModeTriple(j, complex(coeffs[0], coeffs[1]),
                           complex(coeffs[2], coeffs[3]),
                           complex(coeffs[4], coeffs[5]))
    out = dk.apply_P_eta(eta, rho, triple)
    scale = max(1.0, abs(out.alpha), abs(out.beta) * rho ** (-2 * abs(j)),
                abs(out.gamma))
    assert out.transmission_residual(rho) <= 1e-10 * scale


@settings(max_examples=100, deadline=None)
@given(j=st.integers(1, 4), rho=st.floats(0.2, 0.8),
       eta1=st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
       eta2=st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_apply_p_eta_linear_in_direction(j, rho, eta1, eta2):
    tri = dk.ModeTriple(j, 0.4, -0.2, 0.7)
    a = dk.apply_P_eta(eta1, rho, tri).as_array()
    b = dk.apply_P_eta(eta2, rho, tri).as_array()
    both = dk.apply_P_eta((eta1[0] + eta2[0], eta1[1] + eta2[1]), rho, tri).as_array()
    assert np.abs(both - (a + b)).max() <= 1e-12 * max(1.0, np.abs(both).max())


def test_spectral_backend_never_mixes_frequencies(rng):
    backend = dk.SpectralBackend(0.5, dk.SpanSelection((1, 3)))
    sols = backend.basis_solutions()
    out = backend.apply_p(rng.standard_normal(2), sols)
    tm = backend.trace_matrix(out)
    assert np.abs(tm - np.diag(np.diag(tm))).max() == 0.0


# ------------------------------------------------------------ reconstruction

def test_reconstruct_zero_perturbation():
    res = dk.reconstruct_kappa(dk.ConcentricPerturbation(0.0, 0.0, 0.3),
                               dk.SpanSelection((1, 2)), K=4)
    assert np.abs(res["estimates"]).max() == 0.0
    assert np.abs(res["signed_errors"]).max() == 0.0


def test_reconstruct_one_mode_closed_form():
    res = dk.reconstruct_kappa(dk.ConcentricPerturbation(0.0, 1.0, 0.3),
                               dk.SpanSelection((1,)), K=1, active=(1,))
    f1 = res["estimates"][0][1]
    kappa2, rho = 1.0, 0.3
    closed = 2.0 * kappa2 / (kappa2 + 2.0 + kappa2 * rho ** 2)
    assert f1 == pytest.approx(closed, abs=1e-12)
    assert res["signed_errors"][0][1] == pytest.approx(1.0 - closed, abs=1e-12)


def test_reconstruct_requires_known_zero():
    with pytest.raises(ReversionError):
        dk.reconstruct_kappa(dk.ConcentricPerturbation(0.5, 1.0, 0.3),
                             dk.SpanSelection((1,)), K=1, active=(1,))


def test_reconstruct_singular_span_rejected():
    # two unknowns but a single measurement frequency: not injective
    with pytest.raises(ReversionError):
        dk.reconstruct_kappa(dk.ConcentricPerturbation(0.0, 0.5, 0.3),
                             dk.SpanSelection((1,)), K=1, active=(0, 1))


def test_reconstruct_error_decays_with_order():
    res = dk.reconstruct_kappa(
        dk.ConcentricPerturbation(-0.5, 1.0, 1.0 / math.sqrt(2.0)),
        dk.SpanSelection((1, 2)), K=4)
    errs = np.linalg.norm(res["signed_errors"], axis=1)
    assert np.all(np.diff(errs) < 0)


def test_single_parameter_grids_improve_uniformly():
    grid = np.linspace(-0.5, 1.0, 31)
    for active in (0, 1):
        worst = np.zeros(4)
        for kappa in grid:
            kv = [0.0, 0.0]
            kv[active] = float(kappa)
            res = dk.reconstruct_kappa(
                dk.ConcentricPerturbation(kv[0], kv[1], 0.3),
                dk.SpanSelection((1,)), K=4, active=(active,))
            worst = np.maximum(worst,
                               np.abs(res["signed_errors"][:, active]))
        assert np.all(np.diff(worst) < 0)


def test_error_sweep_slopes_and_limits():
    deltas = np.logspace(-3, -1, 8)
    table = dk.error_sweep(1.0 / math.sqrt(2.0), dk.SpanSelection((1, 2)), 4,
                           deltas, samples_per_circle=32)
    for K in range(1, 5):
        sel = table[table["K"] == K]
        slope = dk.fit_loglog_slope(sel["delta"], sel["err"])
        assert K + 0.75 <= slope <= K + 1.25
        # errors vanish with the perturbation
        assert sel["err"][0] < sel["err"][-1]
        assert sel["err"][0] < 1e-4
    with pytest.raises(dk.ConcentricError):
        dk.error_sweep(0.5, dk.SpanSelection((1, 2)), 2, [0.5, 1.5])


def test_large_perturbations_can_diverge():
    # outside the convergence regime the partial sums are recorded as-is;
    # for a strong contrast they grow with the order instead of improving
    direction = np.array([-0.75, 2.0])
    res = dk.reconstruct_kappa(
        dk.ConcentricPerturbation(direction[0], direction[1], 1.0 / math.sqrt(2.0)),
        dk.SpanSelection((1, 2)), K=4)
    errs = np.linalg.norm(res["signed_errors"], axis=1)
    assert errs[3] > errs[0]


def test_complex_pair_conversion_round_trip():
    u = np.array([[1.0, 1.0], [-1.0j, 1.0j]]) / math.sqrt(2.0)
    c = np.diag([0.0, 1.0]).astype(complex)
    r = u.conj() @ c @ u.T
    assert np.allclose(r, np.array([[0.5, 0.5j], [-0.5j, 0.5]]))
    assert np.abs(dk.complex_pair_from_real(r) - c).max() < 1e-14
    lam = 0.7
    assert np.abs(dk.complex_pair_from_real(lam * np.eye(2))
                  - lam * np.eye(2)).max() < 1e-14
