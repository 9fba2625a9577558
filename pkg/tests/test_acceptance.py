"""Acceptance suite: one test (and one printed verdict line) per criterion.

Each criterion is checked at its stated tolerance; sub-checks print their
measured values so the verdict is auditable from the captured output.
"""

import copy

import numpy as np
import pytest

from thinflow import coefficients as coefs
from thinflow.cell_problems import (solve_cell_regime_i, solve_cell_regime_ii,
                                    solve_cell_regime_iii)
from thinflow.harness import (estimate_rate, load_config, report_csv,
                              run_pipeline, sweep_csv)
from thinflow.macro_model import solve_macro
from thinflow.meshing import Geometry, build_cell_mesh, build_macro_mesh, \
    build_thin_mesh
from thinflow.microscale import solve_dlb
from thinflow.two_scale import (OscillatingTestFunction,
                                oscillation_limit_table,
                                poincare_wirtinger_ratio, two_scale_pairing)
from thinflow.upscaling import effective_matrix

GEOM2 = Geometry(2, (1.0,), 0.125)
IDENT2 = coefs.constant_field(2)
SOLVER_TOL = 1e-10
EPS_SWEEP = [1 / 8, 1 / 16, 1 / 32, 1 / 64]


def verdict(num, name, results):
    """results: list of (label, ok, detail); prints the criterion line."""
    ok = all(r[1] for r in results)
    print(f"\nACCEPTANCE {num:2d} [{'PASS' if ok else 'FAIL'}] {name}")
    for label, good, detail in results:
        print(f"    {'ok ' if good else 'BAD'} {label}: {detail}")
    assert ok, (f"criterion {num} ({name}) failed: "
                + "; ".join(f"{r[0]}: {r[2]}" for r in results if not r[1]))


# -- shared expensive artifacts -------------------------------------------------

def oscillatory_field():
    return coefs.periodic_field(
        2, 2 * np.eye(2), [coefs.Wave((1,), "sin", 0.75 * np.eye(2))],
        alpha_ell=1.25, beta_ell=2.75)


def run_dns_sweep(field, regime_alpha, f1=None, eps_list=EPS_SWEEP):
    if f1 is None:
        f1 = lambda xb: np.column_stack([np.sin(2 * np.pi * xb[:, 0])])
    params = coefs.FluidParams(mu=1.0, rho=1.0, phi=1.0, f1=f1)
    spec = coefs.classify_regime(1.0, regime_alpha)
    sols = []
    for eps in eps_list:
        mesh = build_thin_mesh(GEOM2.with_eps(eps), 4, 4)
        sols.append(solve_dlb(mesh, field, params, spec.K_eps(eps),
                              tol=SOLVER_TOL))
    return sols


@pytest.fixture(scope="module")
def dns_identity():
    return run_dns_sweep(IDENT2, 2.0)


@pytest.fixture(scope="module")
def dns_oscillatory():
    return run_dns_sweep(oscillatory_field(), 2.0)


@pytest.fixture(scope="module")
def dns_low_perm():
    return run_dns_sweep(IDENT2, 3.0)


@pytest.fixture(scope="module")
def effective_collection():
    """Effective matrices across regimes and coefficient classes."""
    out = {}
    mesh = build_cell_mesh(GEOM2, 4, 16)
    cells = solve_cell_regime_i(IDENT2, 1.0, 1.0, mesh, tol=SOLVER_TOL)
    out["i/identity"] = effective_matrix("i", cells, IDENT2, mu=1.0, K=1.0)
    osc = oscillatory_field()
    mesh_osc = build_cell_mesh(GEOM2, 8, 16)
    cells = solve_cell_regime_i(osc, 1.0, 1.0, mesh_osc, tol=SOLVER_TOL)
    out["i/oscillatory"] = effective_matrix("i", cells, osc, mu=1.0, K=1.0)
    asym = coefs.asymptotic_periodic_field(
        2, 2 * np.eye(2), [coefs.Wave((1,), "sin", 0.5 * np.eye(2))],
        [coefs.GaussianBump(0.25 * np.eye(2))], alpha_ell=1.0, beta_ell=3.0)
    cells = solve_cell_regime_i(asym, 1.0, 1.0, mesh_osc, tol=SOLVER_TOL)
    out["i/asymptotic"] = effective_matrix("i", cells, asym, mu=1.0, K=1.0)
    cells = solve_cell_regime_ii(2.0, mesh, tol=SOLVER_TOL)
    out["ii/identity"] = effective_matrix("ii", cells, mu=2.0)
    cells = solve_cell_regime_iii(IDENT2, mesh, tol=SOLVER_TOL)
    out["iii/identity"] = effective_matrix("iii", cells, IDENT2)
    zprof = coefs.zeta_profile_field(2, np.eye(2), lambda z: 1 + z * z,
                                     1.0, 2.0)
    cells = solve_cell_regime_iii(zprof, mesh, tol=SOLVER_TOL)
    out["iii/zeta"] = effective_matrix("iii", cells, zprof)
    return out


# -- criteria -------------------------------------------------------------------

def test_criterion_01_balanced_cell_oracle():
    exact = 2 * (1 - np.tanh(1.0))
    cells = solve_cell_regime_i(IDENT2, 1.0, 1.0,
                                build_cell_mesh(GEOM2, 8, 32), tol=SOLVER_TOL)
    a11 = effective_matrix("i", cells, IDENT2, mu=1.0, K=1.0).matrix[0, 0]
    vals = []
    for nz in (8, 16, 32):
        c = solve_cell_regime_i(IDENT2, 1.0, 1.0,
                                build_cell_mesh(GEOM2, 2, nz), tol=SOLVER_TOL)
        vals.append(effective_matrix("i", c, IDENT2, mu=1.0,
                                     K=1.0).matrix[0, 0])
    errs = np.abs(np.array(vals) - exact)
    orders = np.log2(errs[:-1] / errs[1:])
    verdict(1, "balanced-regime cell oracle", [
        ("a11 vs 2(1-tanh 1)", abs(a11 - exact) <= 1e-3,
         f"{a11:.7f} vs {exact:.7f} (tol 1e-3)"),
        ("refinement order >= 1.9", bool(np.all(orders >= 1.9)),
         f"orders {np.round(orders, 2).tolist()}"),
    ])


def test_criterion_02_dragless_cell_oracle():
    cells = solve_cell_regime_iii(IDENT2, build_cell_mesh(GEOM2, 2, 16),
                                  tol=SOLVER_TOL)
    a_ident = effective_matrix("iii", cells, IDENT2).matrix[0, 0]
    zprof = coefs.zeta_profile_field(2, np.eye(2), lambda z: 1 + z * z,
                                     1.0, 2.0)
    cells_z = solve_cell_regime_iii(zprof, build_cell_mesh(GEOM2, 2, 16),
                                    tol=SOLVER_TOL)
    a_zeta = effective_matrix("iii", cells_z, zprof).matrix[0, 0]
    exact_z = 2 - np.pi / 2
    verdict(2, "dragless cell oracles", [
        ("a11 vs 2/3", abs(a_ident - 2 / 3) <= 1e-4,
         f"{a_ident:.8f} (tol 1e-4)"),
        ("a11 vs 2 - pi/2", abs(a_zeta - exact_z) <= 1e-3,
         f"{a_zeta:.7f} vs {exact_z:.7f} (tol 1e-3)"),
    ])


def test_criterion_03_drag_limit_extrapolation():
    mu = 2.0
    cells = solve_cell_regime_ii(mu, build_cell_mesh(GEOM2, 2, 8),
                                 n_list=(4, 8, 16, 32), tol=SOLVER_TOL)
    ahat = effective_matrix("ii", cells, mu=mu)
    defect = np.abs(ahat.matrix - np.eye(1)).max()
    growth = 0.0
    for per_dir in cells.levels["bound"]:
        arr = np.array(per_dir)
        big = arr[arr > 1e-12]
        if big.size > 1:
            growth = max(growth, float((big[1:] / big[:-1]).max()))
    verdict(3, "drag-limit extrapolation", [
        ("Ahat vs identity", defect <= 1e-3, f"max defect {defect:.3e}"),
        ("level bound growth <= 10%", growth <= 1.1,
         f"max ratio {growth:.4f}"),
    ])


def test_criterion_04_cross_regime_consistency():
    mesh = build_cell_mesh(GEOM2, 2, 64)
    cells_hi = solve_cell_regime_i(IDENT2, 1.0, 1e3, mesh, tol=SOLVER_TOL)
    a_hi = effective_matrix("i", cells_hi, IDENT2, mu=1.0,
                            K=1e3).matrix[0, 0]
    rel_hi = abs(a_hi - 2 / 3) / (2 / 3)
    cells_lo = solve_cell_regime_i(IDENT2, 1.0, 1e-3,
                                   build_cell_mesh(GEOM2, 2, 256),
                                   tol=SOLVER_TOL)
    a_lo = effective_matrix("i", cells_lo, IDENT2, mu=1.0,
                            K=1e-3).matrix[0, 0]
    rel_lo = abs(a_lo - 1e-3 * 2.0) / (1e-3 * 2.0)
    # the closed form 2K(1 - tanh(L)/L), L = sqrt(mu/K), deviates from
    # K*2/mu by sqrt(K/mu) = 3.2% at K = 1e-3: the 1% tolerance cannot be
    # met by any discretization (see the decisions ledger)
    verdict(4, "cross-regime consistency", [
        ("K=1e3 within 1% of 2/3", rel_hi <= 0.01, f"rel dev {rel_hi:.4%}"),
        ("K=1e-3 within 1% of K*2/mu", rel_lo <= 0.01,
         f"rel dev {rel_lo:.4%} (closed form deviates by sqrt(K) = 3.16%)"),
    ])


def test_criterion_05_effective_matrix_structure(effective_collection):
    results = []
    for label, ahat in effective_collection.items():
        ok = (ahat.symmetry_defect <= 1e-10 and ahat.min_eigenvalue > 0
              and ahat.extended_tail_max <= 10 * SOLVER_TOL)
        results.append((label, ok,
                        f"sym {ahat.symmetry_defect:.1e}, min eig "
                        f"{ahat.min_eigenvalue:.3e}, tail "
                        f"{ahat.extended_tail_max:.1e}"))
    verdict(5, "effective-matrix structure in every run", results)


def test_criterion_06_dns_scaling_laws(dns_identity, dns_oscillatory,
                                       dns_low_perm):
    # The horizontal forcing (f1(xbar), 0) is a gradient field in a sealed
    # two-dimensional layer, so the exact velocity vanishes identically and
    # only the pressure law is observable; the velocity slopes below measure
    # discretization noise, not the flow-scaling laws (decisions ledger).
    results = []
    for label, sols in (("A = I", dns_identity),
                        ("A oscillatory", dns_oscillatory)):
        eps = [s.eps for s in sols]
        for key, target in (("u_l2", 2.5), ("grad_u_l2", 1.5),
                            ("p_l2", 0.5)):
            slope, _ = estimate_rate([s.norms[key] for s in sols], eps)
            results.append((f"{label}: slope {key} = {target} +- 0.2",
                            abs(slope - target) <= 0.2,
                            f"measured {slope:.3f}"))
    eps = [s.eps for s in dns_low_perm]
    slope, _ = estimate_rate([s.norms["p_l2"] for s in dns_low_perm], eps)
    # expected slope of eps^{5/2} K_eps^{-1} with K_eps = eps^3 is -0.5
    results.append(("low permeability: slope p_l2 = -0.5 +- 0.2",
                    abs(slope - (-0.5)) <= 0.2, f"measured {slope:.3f}"))
    verdict(6, "DNS scaling laws", results)


D3_CONFIG = {
    "geometry": {"d": 3, "omega_extent": [0.5, 0.5]},
    "coefficient": {"class": "constant",
                    "matrix": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                               [0.0, 0.0, 1.0]],
                    "alpha": 1.0, "beta": 1.0},
    "fluid": {"mu": 1.0, "rho": 1.0, "phi": 1.0,
              "f1": ["4*pi*sin(2*pi*x0)*sin(2*pi*x0)"
                     "*sin(2*pi*x1)*cos(2*pi*x1)",
                     "-4*pi*sin(2*pi*x0)*cos(2*pi*x0)"
                     "*sin(2*pi*x1)*sin(2*pi*x1)"]},
    "regime": {"kappa": 1.0, "alpha": 2.0},
    "numerics": {"cell_nx": 2, "cell_nz": 8, "macro_n": 16,
                 "dns_elements_per_period": 2, "dns_nz": 2,
                 "solver_tol": 1e-10, "picard_tol": 1e-10,
                 "picard_max_iters": 50, "n_list": [4, 8, 16, 32]},
    "sweep": {"eps_list": [0.125, 0.0625, 0.03125], "slope_tol": 0.2,
              "expected_slopes": {"u_l2": None, "grad_u_l2": None,
                                  "p_l2": None}},
    "output": {"directory": "out_d3", "formats": ["csv"]},
}


def test_criterion_07_homogenization_convergence():
    # the lower-dimensional limit is degenerate for d = 2 (sealed layer,
    # gradient forcing), so the convergence statement is exercised on the
    # d = 3 pipeline where the two-scale limit velocity is nontrivial
    report = run_pipeline(load_config(copy.deepcopy(D3_CONFIG)))
    rows = report.sweep_rows
    strong = [r["strong_error"] for r in rows]
    gaps = [r["pairing_gap"] for r in rows]
    eps = [r["eps"] for r in rows]
    monotone = all(b <= a + 1e-14 for a, b in zip(strong, strong[1:]))
    ratio = strong[-1] / strong[0]
    rate, _ = estimate_rate(gaps, eps)
    verdict(7, "homogenization convergence (balanced regime)", [
        ("strong two-scale error decreases", monotone,
         f"{[f'{v:.4f}' for v in strong]}"),
        ("final error <= 25% of first", ratio <= 0.25,
         f"ratio {ratio:.3f}"),
        ("pairing gap decreases with positive rate", rate > 0,
         f"gaps {[f'{v:.2e}' for v in gaps]}, rate {rate:.2f}"),
    ])


def test_criterion_08_two_scale_functional_suite():
    results = []
    g = GEOM2

    def pair(u, f, eps):
        return two_scale_pairing(u, f, eps, geometry=g.with_eps(eps))

    f_const = OscillatingTestFunction(d1=1,
                                      y_factor=coefs.ScalarField(1, const=1.0))
    v = pair(lambda p: np.ones(len(p)), f_const, 0.125)
    results.append(("constant pairing = 2", abs(v - 2) <= 1e-10,
                    f"{v:.12f}"))
    eps = 1 / 32
    f_cos = OscillatingTestFunction(
        d1=1, y_factor=coefs.ScalarField(1, waves=[((1,), "cos", 1.0)]))
    v = pair(lambda p: np.cos(2 * np.pi * p[:, 0] / eps), f_cos, eps)
    results.append(("cos^2 pairing near 1", abs(v - 1) <= 5e-3, f"{v:.6f}"))
    f_xsin = OscillatingTestFunction(
        d1=1, macro=lambda xb: xb[:, 0],
        y_factor=coefs.ScalarField(1, waves=[((1,), "sin", 1.0)]))
    v = pair(lambda p: np.sin(2 * np.pi * p[:, 0] / eps), f_xsin, eps)
    results.append(("x-weighted sin pairing near 1/2", abs(v - 0.5) <= 5e-3,
                    f"{v:.6f}"))

    f_tab = OscillatingTestFunction(
        d1=1, y_factor=coefs.ScalarField(1, waves=[((1,), "sin", 1.0)]), p=2)
    rows = oscillation_limit_table(f_tab, EPS_SWEEP, g)
    bound_ok = all(r["value"] <= r["bound"] * (1 + 1e-10) + 1e-10
                   for r in rows)
    limit_ok = all(abs(r["value"] - r["limit"]) <= 4 * r["eps"]
                   for r in rows)
    results.append(("scaled-mass bound holds", bound_ok,
                    f"bound {rows[0]['bound']:.3f}"))
    results.append(("scaled mass approaches its limit", limit_ok,
                    f"limit {rows[0]['limit']:.3f}"))

    rng = np.random.default_rng(5)
    lin_ok = True
    worst = 0.0
    f_mix = OscillatingTestFunction(
        d1=1, macro=lambda xb: 1 + xb[:, 0],
        y_factor=coefs.ScalarField(1, const=0.5, waves=[((1,), "cos", 1.0)]))
    for _ in range(4):
        a, b = rng.standard_normal(2)
        u1 = lambda p: np.cos(2 * np.pi * p[:, 0] / 0.0625)
        u2 = lambda p: 0.3 + p[:, 1] / 0.0625
        lhs = pair(lambda p: a * u1(p) + b * u2(p), f_mix, 0.0625)
        rhs = a * pair(u1, f_mix, 0.0625) + b * pair(u2, f_mix, 0.0625)
        worst = max(worst, abs(lhs - rhs))
        lin_ok &= abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))
    results.append(("pairing linearity probes at 1e-10", bool(lin_ok),
                    f"worst defect {worst:.2e}"))
    verdict(8, "two-scale functional suite", results)


def test_criterion_09_poincare_wirtinger(dns_identity):
    results = []
    target = 1 / np.sqrt(3)
    worst = 0.0
    for eps in EPS_SWEEP:
        rep = poincare_wirtinger_ratio(
            lambda p: p[:, -1], eps, geometry=GEOM2.with_eps(eps),
            grad=lambda p: np.column_stack([np.zeros(len(p)),
                                            np.ones(len(p))]))
        worst = max(worst, abs(rep.ratio - target))
    results.append(("linear profile ratio = 3^{-1/2} to 1e-6",
                    worst <= 1e-6, f"worst dev {worst:.2e}"))
    ratios = [poincare_wirtinger_ratio(s.velocity_field(), s.eps).ratio
              for s in dns_identity]
    bounded = max(ratios) <= 2 * max(ratios[0], 1e-300)
    results.append(("DNS fluctuation ratios bounded over the sweep",
                    bounded, f"{[f'{r:.3e}' for r in ratios]}"))
    verdict(9, "thin-average fluctuation diagnostic", results)


def test_criterion_10_macro_manufactured():
    geom3 = Geometry(3, (1.0, 1.0), 0.125)
    Ahat = np.array([[2.0, 0.5], [0.5, 1.0]])
    Ainv = np.linalg.inv(Ahat)
    ps = np.pi

    def u_star(xb):
        x1, x2 = xb[:, 0], xb[:, 1]
        d2 = np.sin(ps * x1) ** 2 * 2 * np.sin(ps * x2) * np.cos(ps * x2) * ps
        d1 = 2 * np.sin(ps * x1) * np.cos(ps * x1) * ps * np.sin(ps * x2) ** 2
        return np.column_stack([d2, -d1])

    def p_star(xb):
        return np.cos(ps * xb[:, 0]) * np.cos(ps * xb[:, 1])

    def f1(xb):
        x1, x2 = xb[:, 0], xb[:, 1]
        grad_p = np.column_stack([-ps * np.sin(ps * x1) * np.cos(ps * x2),
                                  -ps * np.cos(ps * x1) * np.sin(ps * x2)])
        return u_star(xb) @ Ainv.T + grad_p

    errs = []
    for n in (8, 16, 32):
        sol = solve_macro(Ahat, f1, build_macro_mesh(geom3, n), "i",
                          tol=SOLVER_TOL)
        pts, w, vals = sol.p0_field().quadrature_sample(nquad=4)
        errs.append(float(np.sqrt(np.sum(w * (vals[:, 0]
                                              - p_star(pts)) ** 2))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    verdict(10, "macro manufactured solution (d = 3)", [
        ("L2 convergence order >= 1.9 over three refinements",
         bool(np.all(orders >= 1.9)),
         f"errors {[f'{e:.2e}' for e in errs]}, orders "
         f"{np.round(orders, 2).tolist()}"),
    ])


def test_criterion_11_determinism():
    raw = {
        "geometry": {"d": 2, "omega_extent": [1.0]},
        "coefficient": {"class": "periodic", "matrix": [[2.0, 0.0],
                                                        [0.0, 2.0]],
                        "alpha": 1.0, "beta": 3.0,
                        "waves": [{"k": [1], "trig": "sin",
                                   "amplitude": [[0.5, 0.0], [0.0, 0.5]]}]},
        "fluid": {"mu": 1.0, "rho": 1.0, "phi": 1.0,
                  "f1": ["sin(2*pi*x0)"]},
        "regime": {"kappa": 1.0, "alpha": 2.0},
        "numerics": {"cell_nx": 4, "cell_nz": 8, "macro_n": 16,
                     "dns_elements_per_period": 4, "dns_nz": 2,
                     "solver_tol": 1e-10, "picard_tol": 1e-10,
                     "picard_max_iters": 50, "n_list": [4, 8, 16]},
        "sweep": {"eps_list": [0.125, 0.0625, 0.03125],
                  "slope_tol": 0.2,
                  "expected_slopes": {"u_l2": None, "grad_u_l2": None,
                                      "p_l2": None}},
        "output": {"directory": "out", "formats": ["csv"]},
    }
    rep1 = run_pipeline(load_config(copy.deepcopy(raw)))
    rep2 = run_pipeline(load_config(copy.deepcopy(raw)))
    same_report = report_csv(rep1) == report_csv(rep2)
    same_sweep = sweep_csv(rep1) == sweep_csv(rep2)
    verdict(11, "byte-identical reports", [
        ("report.csv identical across reruns", same_report, ""),
        ("sweep.csv identical across reruns", same_sweep, ""),
    ])
