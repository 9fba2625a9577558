import numpy as np
import pytest
import scipy.sparse as sp

from thinflow.assembly import (FunctionSpace, assemble_diffusion,
                               assemble_divergence, assemble_load,
                               assemble_mass, pressure_gauge)
from thinflow.errors import SingularSystemError
from thinflow.linalg import (SaddleSystem, residual, solve_gauged_spd,
                             solve_sparse)
from thinflow.meshing import Geometry, build_cell_mesh


def stokes_system(nx=4, nz=4, drag=1.0):
    mesh = build_cell_mesh(Geometry(2, (1.0,), 0.125), nx, nz)
    V = FunctionSpace(mesh, "velocity")
    Q = FunctionSpace(mesh, "pressure")
    K = (assemble_diffusion(V) + drag * assemble_mass(V)).tocsr()
    B = assemble_divergence(V, Q)
    load = assemble_load(V, np.array([1.0, 0.0]))
    return SaddleSystem(K=K, B=B, gauge=pressure_gauge(Q), rhs_u=load)


def test_identity_block():
    rhs = np.array([1.0, -2.0, 3.0])
    system = SaddleSystem(K=sp.identity(3, format="csr"), rhs_u=rhs)
    u, p = solve_sparse(system)
    assert p is None
    assert np.allclose(u, rhs, atol=1e-14)


def test_dense_2x2():
    K = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    system = SaddleSystem(K=K, rhs_u=np.array([3.0, 3.0]))
    u, _ = solve_sparse(system)
    assert np.allclose(u, [1.0, 1.0], atol=1e-14)


def test_missing_gauge_raises():
    system = stokes_system()
    system.gauge = None
    with pytest.raises(SingularSystemError):
        solve_sparse(system)
    system.gauge = np.zeros(system.n_p)
    with pytest.raises(SingularSystemError):
        solve_sparse(system)


def test_stokes_solve_contract():
    system = stokes_system()
    u, p = solve_sparse(system, tol=1e-10)
    assert residual(system, (u, p)) <= 1e-10
    assert abs(system.gauge @ p) <= 1e-12 * max(np.abs(p).max(), 1.0)


def test_residual_examples():
    K = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 4.0]]))
    system = SaddleSystem(K=K, rhs_u=np.array([2.0, 4.0]))
    exact = np.array([1.0, 1.0])
    assert residual(system, (exact, None)) <= 1e-14
    assert residual(system, (np.zeros(2), None)) == pytest.approx(1.0)
    # linear growth in the perturbation size
    base = np.array([0.3, -0.4])
    r1 = residual(system, (exact + 1e-3 * base, None))
    r2 = residual(system, (exact + 2e-3 * base, None))
    assert r2 / r1 == pytest.approx(2.0, rel=1e-10)


def test_residual_recheck_invariant():
    for drag in (1.0, 1e4):
        system = stokes_system(drag=drag)
        sol = solve_sparse(system, tol=1e-10)
        assert residual(system, sol) <= 1e-10


def test_minres_matches_direct():
    system = stokes_system(nx=2, nz=2)
    u_d, p_d = solve_sparse(system, tol=1e-12)
    u_m, p_m = solve_sparse(system, tol=1e-8, method="minres")
    assert np.abs(u_m - u_d).max() <= 1e-6 * max(np.abs(u_d).max(), 1.0)
    assert residual(system, (u_m, p_m)) <= 1e-8


def test_tolerance_backward_stability():
    # solving tighter by 10x moves the answer by less than 10*tol relative
    system = stokes_system()
    u1, _ = solve_sparse(system, tol=1e-8)
    u2, _ = solve_sparse(system, tol=1e-9)
    rel = np.linalg.norm(u1 - u2) / np.linalg.norm(u2)
    assert rel <= 10 * 1e-8


def test_gauged_spd_neumann():
    # 1D Neumann Laplacian: solution determined up to constants
    n = 11
    main = 2.0 * np.ones(n)
    main[0] = main[-1] = 1.0
    K = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, -1, 1],
                 format="csc")
    x_nodes = np.linspace(0, 1, n)
    rhs = np.cos(np.pi * x_nodes)
    rhs -= rhs.mean()
    gauge = np.ones(n)
    x = solve_gauged_spd(K, rhs, gauge)
    assert abs(gauge @ x) <= 1e-12 * max(np.abs(x).max(), 1.0)
    with pytest.raises(SingularSystemError):
        solve_gauged_spd(K, rhs, np.zeros(n))
