"""Direct and Krylov solution of the assembled saddle-point systems.

The mean-zero pressure constraint is enforced by a rank-one gauge row
(bordered system), which keeps the matrix symmetric and realizes the
zero-mean pressure space exactly at the discrete level.  The sign
convention is

    [K + N,  B^T] [u]   [f]
    [B,      0  ] [q] = [r]

with (B u)_q = int q div u; the physical pressure is p = -q, so solvers
return p directly.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailureError, SingularSystemError

DEFAULT_TOL_DIRECT = 1e-10
DEFAULT_TOL_ITERATIVE = 1e-8


@dataclass
class SaddleSystem:
    """Velocity block, optional coupling/convection blocks and gauge."""

    K: sp.spmatrix
    B: Optional[sp.spmatrix] = None
    N: Optional[sp.spmatrix] = None
    gauge: Optional[np.ndarray] = None
    rhs_u: np.ndarray = field(default=None)
    rhs_p: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.rhs_u is None:
            self.rhs_u = np.zeros(self.K.shape[0])
        if self.B is not None and self.rhs_p is None:
            self.rhs_p = np.zeros(self.B.shape[0])

    @property
    def n_u(self):
        return self.K.shape[0]

    @property
    def n_p(self):
        return 0 if self.B is None else self.B.shape[0]

    def velocity_operator(self):
        return self.K if self.N is None else (self.K + self.N).tocsr()

    def blocks(self):
        """Assembled block matrix and rhs, gauge border included."""
        A_uu = self.velocity_operator()
        if self.B is None:
            return A_uu.tocsc(), self.rhs_u.copy()
        if self.gauge is None or not np.any(self.gauge):
            raise SingularSystemError(
                "pressure block present but gauge vector missing or zero")
        n_u, n_p = self.n_u, self.n_p
        g = sp.csr_matrix(np.asarray(self.gauge, dtype=float).reshape(1, n_p))
        zero_u1 = sp.csr_matrix((n_u, 1))
        zero_p = sp.csr_matrix((n_p, n_p))
        mat = sp.bmat([[A_uu, self.B.T, zero_u1],
                       [self.B, zero_p, g.T],
                       [zero_u1.T, g, None]], format="csc")
        rhs = np.concatenate([self.rhs_u, self.rhs_p, [0.0]])
        return mat, rhs

    def split(self, x):
        u = x[:self.n_u]
        p = x[self.n_u:self.n_u + self.n_p] if self.B is not None else None
        return u, p


def residual(system, solution):
    """Relative block residual of a (velocity, pressure) pair.

    Uses the Euclidean norm of the unbordered block residual divided by
    the rhs norm (absolute norm when the rhs vanishes).
    """
    u, p = solution
    A_uu = system.velocity_operator()
    res_u = A_uu @ u - system.rhs_u
    parts = [res_u]
    rhs_parts = [system.rhs_u]
    if system.B is not None:
        # q = -p in the symmetric block convention
        res_u -= system.B.T @ p
        parts = [res_u, system.B @ u - system.rhs_p]
        rhs_parts.append(system.rhs_p)
    num = np.sqrt(sum(float(r @ r) for r in parts))
    den = np.sqrt(sum(float(r @ r) for r in rhs_parts))
    return num / den if den > 0 else num


def _project_gauge(system, p):
    g = np.asarray(system.gauge, dtype=float)
    total = float(g.sum())
    if total != 0.0:
        p = p - (g @ p) / total
    return p


def solve_sparse(system, tol=DEFAULT_TOL_DIRECT, method="direct",
                 max_iterations=None):
    """Solve the gauged block system to a relative residual <= tol.

    Returns (velocity, pressure); pressure is None for pure velocity
    systems and otherwise satisfies gauge^T p = 0.  The residual is
    re-checked independently of the solver; direct solves apply iterative
    refinement before giving up.
    """
    if not (0 < tol < 1):
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    mat, rhs = system.blocks()
    if method == "direct":
        try:
            lu = spla.splu(mat, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from exc
        x = lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("factorization produced non-finite values")
        for _ in range(3):
            if _block_residual(mat, x, rhs) <= tol:
                break
            x = x + lu.solve(rhs - mat @ x)
    elif method == "minres":
        if system.N is not None:
            raise ValueError("minres path requires a symmetric system")
        diag = mat.diagonal()
        scale = np.where(np.abs(diag) > 1e-14, np.abs(diag), 1.0)
        precond = sp.diags(1.0 / scale)
        maxiter = max_iterations or 20 * mat.shape[0]
        x, info = spla.minres(mat, rhs, M=precond, rtol=tol * 1e-2,
                              maxiter=maxiter)
        if info != 0:
            raise ConvergenceFailureError(
                f"minres stopped with info={info}",
                residual=_block_residual(mat, x, rhs))
    else:
        raise ValueError(f"unknown method '{method}'")

    rel = _block_residual(mat, x, rhs)
    if rel > tol:
        raise ConvergenceFailureError(
            f"residual {rel:.3e} above tolerance {tol:.3e}", residual=rel)
    u, q = system.split(x)
    if q is None:
        return u, None
    p = _project_gauge(system, -q)
    return u, p


def _block_residual(mat, x, rhs):
    r = rhs - mat @ x
    den = np.linalg.norm(rhs)
    return float(np.linalg.norm(r) / den) if den > 0 else float(np.linalg.norm(r))


def solve_gauged_spd(K, rhs, gauge, tol=DEFAULT_TOL_DIRECT):
    """Solve K x = rhs subject to gauge^T x = 0 via a bordered system.

    For symmetric positive semidefinite K whose kernel is spanned by the
    constants (pure Neumann problems); the rhs is compatibilized against
    the gauge direction by the multiplier.
    """
    gauge = np.asarray(gauge, dtype=float)
    if not np.any(gauge):
        raise SingularSystemError("gauge vector missing or zero")
    n = K.shape[0]
    g = sp.csr_matrix(gauge.reshape(1, n))
    mat = sp.bmat([[K, g.T], [g, None]], format="csc")
    full_rhs = np.concatenate([rhs, [0.0]])
    try:
        lu = spla.splu(mat, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    x = lu.solve(full_rhs)
    for _ in range(3):
        if _block_residual(mat, x, full_rhs) <= tol:
            break
        x = x + lu.solve(full_rhs - mat @ x)
    rel = _block_residual(mat, x, full_rhs)
    if rel > tol:
        raise ConvergenceFailureError(
            f"residual {rel:.3e} above tolerance {tol:.3e}", residual=rel)
    sol = x[:n]
    total = float(gauge.sum())
    if total != 0.0:
        sol = sol - (gauge @ sol) / total
    return sol
