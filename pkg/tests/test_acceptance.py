"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(run with -s to see them). Tolerances are fixed here, not tuned elsewhere.
"""
import math
import time

import numpy as np
import pytest

from eitseries import continuum as cm
from eitseries import diskmodes as dk
from eitseries import electrodes as el
from eitseries import mesh as msh
from eitseries import reversion as rv
from eitseries.pipelines import RunDescriptor, run_phantom

RHO_PAIR = 1.0 / math.sqrt(2.0)
F1_CLOSED_FORM = 2.0 / 3.09   # one-mode reversion at kappa=(0,1), rho=0.3


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def spectrum_mesh():
    return msh.generate_disk_mesh(1.0, 0.015, 2)


@pytest.fixture(scope="module")
def recon_mesh():
    return msh.generate_disk_mesh(1.0, 0.02, 2, internal_circles=(0.3,))


@pytest.fixture(scope="module")
def recon_partition(recon_mesh):
    return msh.concentric_partition(recon_mesh, 0.3)


@pytest.fixture(scope="module")
def recon_system(recon_mesh):
    return cm.assemble_system(recon_mesh, 1.0)


def test_criterion_1_convergence_rates():
    deltas = np.logspace(-3, -1, 12)
    start = time.perf_counter()
    table = dk.error_sweep(RHO_PAIR, dk.SpanSelection((1, 2)), 4, deltas,
                           samples_per_circle=64)
    elapsed = time.perf_counter() - start
    slopes = {}
    ok = elapsed < 10.0
    for K in range(1, 5):
        sel = table[table["K"] == K]
        slopes[K] = dk.fit_loglog_slope(sel["delta"], sel["err"])
        ok &= K + 0.75 <= slopes[K] <= K + 1.25
    report("criterion-1 convergence rates",
           ok, f"slopes {[f'{slopes[K]:.2f}' for K in range(1, 5)]}, "
           f"windows [K+0.75, K+1.25], {elapsed:.2f}s < 10s")


def test_criterion_2_single_parameter_improvement():
    grid = np.linspace(-0.5, 1.0, 151)
    start = time.perf_counter()
    ok = True
    details = []
    for active in (0, 1):
        worst = np.zeros(4)
        for kappa in grid:
            kv = [0.0, 0.0]
            kv[active] = float(kappa)
            res = dk.reconstruct_kappa(
                dk.ConcentricPerturbation(kv[0], kv[1], 0.3),
                dk.SpanSelection((1,)), K=4, active=(active,))
            worst = np.maximum(worst, np.abs(res["signed_errors"][:, active]))
        ok &= bool(np.all(np.diff(worst) < 0))
        details.append("max errors " + "/".join(f"{w:.4f}" for w in worst))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 5.0
    report("criterion-2 single-parameter improvement",
           ok, f"{'; '.join(details)}; {elapsed:.2f}s < 5s")


def test_criterion_3_closed_form_f1(recon_mesh, recon_partition, recon_system):
    res = dk.reconstruct_kappa(dk.ConcentricPerturbation(0.0, 1.0, 0.3),
                               dk.SpanSelection((1,)), K=1, active=(1,))
    analytic_err = abs(res["estimates"][0][1] - F1_CLOSED_FORM)

    data_mesh = msh.generate_disk_mesh(1.0, 0.015, 2, internal_circles=(0.3,))
    data_part = msh.concentric_partition(data_mesh, 0.3)
    b = msh.CoefficientField(np.array([0.0, 1.0]), data_part)
    data_system = cm.assemble_system(data_mesh, 1.0 + b.triangle_values().real)
    data_basis = cm.BoundaryBasis.trigonometric(data_mesh, 2)
    datum = cm.nd_matrix(data_system, data_basis).entries

    basis = cm.BoundaryBasis.trigonometric(recon_mesh, 2)
    backend = cm.CmBackend(recon_system, basis, recon_partition)
    d_active = backend.derivative_matrix()[:, [1]]
    pinv = rv.truncated_pseudoinverse(d_active, 0.0, column_indices=[1], n_full=2)
    fem_f1 = float(np.real(rv.compute_F1(backend, datum, pinv)[1]))
    fem_err = abs(fem_f1 - F1_CLOSED_FORM) / F1_CLOSED_FORM

    ok = analytic_err <= 1e-9 and fem_err <= 0.01
    report("criterion-3 closed-form F1",
           ok, f"analytic |err| {analytic_err:.2e} <= 1e-9; "
           f"FEM value {fem_f1:.6f}, rel err {fem_err:.2e} <= 1e-2")


def test_criterion_4_unit_disk_spectrum(spectrum_mesh):
    system = cm.assemble_system(spectrum_mesh, 1.0)
    basis = cm.BoundaryBasis.trigonometric(spectrum_mesh, 12)
    nd = cm.nd_matrix(system, basis).entries
    freqs = np.repeat(np.arange(1, 7), 2)
    diag = np.diag(nd)
    diag_err = float(np.max(np.abs(diag * freqs - 1.0)))
    off = float(np.max(np.abs(nd - np.diag(diag))))
    ok = diag_err <= 0.01 and off <= 1e-3
    report("criterion-4 unit-disk spectrum",
           ok, f"J=12, h=0.015: worst diagonal rel err {diag_err:.2e} <= 1e-2, "
           f"max |off-diagonal| {off:.2e} <= 1e-3")


def test_criterion_5_cross_backend_equivalence(recon_mesh, recon_partition):
    b = msh.CoefficientField(np.array([0.0, 1.0]), recon_partition)
    system = cm.assemble_system(recon_mesh, 1.0 + b.triangle_values().real)
    basis = cm.BoundaryBasis.trigonometric(recon_mesh, 8)
    nd = cm.nd_matrix(system, basis).entries
    p = dk.ConcentricPerturbation(0.0, 1.0, 0.3)
    worst = 0.0
    for j in range(1, 5):
        lam = dk.nd_eigenvalue(p, j)
        for idx in (2 * (j - 1), 2 * (j - 1) + 1):
            worst = max(worst, abs(nd[idx, idx] - lam) / lam)
    ok = worst <= 0.005
    report("criterion-5 cross-backend forward equivalence",
           ok, f"frequencies 1-4, worst rel gap {worst:.2e} <= 5e-3")


def test_criterion_6_derivative_finite_differences(rng):
    mesh = msh.generate_disk_mesh(1.0, 0.05, 2, internal_circles=(0.3,))
    part = msh.concentric_partition(mesh, 0.3)
    system = cm.assemble_system(mesh, 1.0)
    basis = cm.BoundaryBasis.trigonometric(mesh, 4)
    d = cm.dlambda_matrix(system, basis, part)
    b = rng.uniform(-0.5, 0.5, 2)
    tri = part.triangle_values(b)
    directional = (d.entries @ b).reshape(4, 4, order="F")
    base = cm.nd_matrix(system, basis).entries
    cm_errs = []
    for t in (1e-2, 5e-3, 2.5e-3):
        st = cm.assemble_system(mesh, 1.0 + t * tri.real)
        cm_errs.append(np.linalg.norm(
            (cm.nd_matrix(st, basis).entries - base) / t - directional))
    cm_ratios = (cm_errs[0] / cm_errs[1], cm_errs[1] / cm_errs[2])

    layout = el.ElectrodeLayout.equispaced(8, 0.5, 1.0)
    esys = el.assemble_scem(mesh, 1.0, layout)
    de = el.dlambda_e_matrix(esys, part)
    be = rng.uniform(-0.5, 0.5, 2)
    trie = part.triangle_values(be)
    dire = (de.entries @ be).reshape(7, 7, order="F")
    ebase = el.electrode_matrix(esys).entries
    e_errs = []
    for t in (1e-2, 5e-3, 2.5e-3):
        st = el.assemble_scem(mesh, 1.0 + t * trie.real, layout)
        e_errs.append(np.linalg.norm(
            (el.electrode_matrix(st).entries - ebase) / t - dire))
    e_ratios = (e_errs[0] / e_errs[1], e_errs[1] / e_errs[2])

    ok = all(1.8 <= r <= 2.2 for r in (*cm_ratios, *e_ratios))
    report("criterion-6 derivative correctness",
           ok, f"CM halving ratios {cm_ratios[0]:.3f}/{cm_ratios[1]:.3f}, "
           f"SCEM {e_ratios[0]:.3f}/{e_ratios[1]:.3f}, all in [1.8, 2.2]")


def test_criterion_7_reversion_formula_equivalence(recon_mesh, recon_partition,
                                                   recon_system):
    def spread(routes):
        worst = 0.0
        for k in range(4):
            scale = max(float(np.max(np.abs(routes[0][k]))), 1e-300)
            for other in routes[1:]:
                worst = max(worst, float(np.max(np.abs(routes[0][k] - other[k])))
                            / scale)
        return worst

    backend_a = dk.SpectralBackend(RHO_PAIR, dk.SpanSelection((1, 2)))
    pinv_a = rv.truncated_pseudoinverse(backend_a.derivative_matrix(), 0.0,
                                        column_indices=[0, 1], n_full=2)
    datum = backend_a.datum_matrix(
        dk.ConcentricPerturbation(-0.5, 1.0, RHO_PAIR))
    f1 = rv.compute_F1(backend_a, datum, pinv_a)
    spread_a = spread([rv.pipeline_terms(backend_a, f1, pinv_a, 4),
                       rv.theorem_terms(backend_a, f1, pinv_a, 4),
                       rv.recursion_terms(backend_a, f1, pinv_a, 4)])

    truth = np.array([0.05, -0.08])
    basis = cm.BoundaryBasis.trigonometric(recon_mesh, 4)
    pert = cm.assemble_system(
        recon_mesh, 1.0 + recon_partition.triangle_values(truth))
    datum_f = cm.nd_matrix(pert, basis).entries
    backend_f = cm.CmBackend(recon_system, basis, recon_partition)
    pinv_f = rv.truncated_pseudoinverse(backend_f.derivative_matrix(), 0.0)
    f1f = rv.compute_F1(backend_f, datum_f, pinv_f)
    spread_f = spread([rv.pipeline_terms(backend_f, f1f, pinv_f, 4),
                       rv.theorem_terms(backend_f, f1f, pinv_f, 4),
                       rv.recursion_terms(backend_f, f1f, pinv_f, 4)])

    ok = spread_a <= 1e-12 and spread_f <= 1e-10
    report("criterion-7 reversion-formula equivalence",
           ok, f"analytic route spread {spread_a:.2e} <= 1e-12, "
           f"FEM route spread {spread_f:.2e} <= 1e-10")


def test_criterion_8_operator_bounds(rng):
    mesh = msh.generate_disk_mesh(1.0, 0.08, 2)
    part = msh.build_pixel_partition(mesh, 0.85, 12)
    system = cm.assemble_system(mesh, 1.0)
    basis = cm.BoundaryBasis.trigonometric(mesh, 6)
    sols = cm.solve_for_basis(system, basis)
    worst_cm = 0.0
    for k in range(20):
        b = msh.CoefficientField(rng.uniform(-1.0, 1.0, part.n_pixels), part)
        y = sols[k % 6]
        w = cm.apply_P(system, b, y)
        bound = b.max_abs() / system.coefficient.min()
        worst_cm = max(worst_cm, system.gradient_norm(w)
                       / (bound * system.gradient_norm(y)))

    layout = el.ElectrodeLayout.equispaced(8, 0.5, 2.0)
    esys = el.assemble_scem(mesh, 1.0, layout)
    esols = el.solve_current_basis(esys)
    c_min = min(esys.coefficient.min(), min(layout.contact))
    worst_e = 0.0
    for k in range(20):
        b = rng.uniform(-1.0, 1.0, part.n_pixels)
        y = esols[k % 7]
        w = el.apply_P_E(esys, part.triangle_values(b), y)
        bound = float(np.max(np.abs(b))) / c_min
        worst_e = max(worst_e, esys.h_norm(w) / (bound * esys.h_norm(y)))

    ok = worst_cm <= 1.0 + 1e-10 and worst_e <= 1.0 + 1e-10
    report("criterion-8 operator bounds",
           ok, f"20 samples each: CM worst ratio {worst_cm:.6f}, "
           f"SCEM worst ratio {worst_e:.6f}, both <= 1 + 1e-10")


def test_criterion_9_phantom_pipeline(tmp_path):
    start = time.perf_counter()
    desc = RunDescriptor(command="phantom", out=str(tmp_path / "phantom"))
    out = run_phantom(desc)
    elapsed = time.perf_counter() - start
    errors = out["errors"]
    monotone = bool(np.all(np.diff(errors) <= 1e-12))
    ok = monotone and elapsed < 300.0
    report("criterion-9 phantom pipeline",
           ok, "relative errors " + "/".join(f"{e:.4f}" for e in errors)
           + f" non-increasing; {elapsed:.0f}s < 300s")


def test_criterion_10_determinism(tmp_path):
    deltas = np.logspace(-3, -1, 5)
    t1 = dk.error_sweep(RHO_PAIR, dk.SpanSelection((1, 2)), 3, deltas, 16)
    t2 = dk.error_sweep(RHO_PAIR, dk.SpanSelection((1, 2)), 3, deltas, 16)
    sweep_same = t1.tobytes() == t2.tobytes()

    def fem_bytes():
        mesh = msh.generate_disk_mesh(1.0, 0.1, 2, internal_circles=(0.4,))
        part = msh.concentric_partition(mesh, 0.4)
        b = msh.CoefficientField(np.array([0.1, -0.2]), part)
        system = cm.assemble_system(mesh, 1.0 + b.triangle_values().real)
        basis = cm.BoundaryBasis.trigonometric(mesh, 6)
        return cm.nd_matrix(system, basis).entries.tobytes()

    fem_same = fem_bytes() == fem_bytes()
    ok = sweep_same and fem_same
    report("criterion-10 determinism",
           ok, f"analytic sweep rerun bitwise equal: {sweep_same}; "
           f"FEM forward rerun bitwise equal: {fem_same}")
