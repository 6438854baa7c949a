"""
Homogeneous self-dual interior-point method with Mehrotra's predictor-corrector.

Works on the standard form  min c.x  s.t.  A x = b,  x >= 0  with a sparse
A.  Each iteration factorizes the normal-equations matrix A D A^T with
SuperLU and falls back to LSQR when the factorization fails, which happens
on rank-deficient rows and close to the optimum.

to_standard_form / from_standard_form convert between a SparseProgram and
the standard form and map the solution back (x and row duals).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError
from scipy.sparse import linalg as splinalg

logger = logging.getLogger(__name__)

STATUS_OPTIMAL, STATUS_ITERATIONS, STATUS_INFEASIBLE, STATUS_UNBOUNDED, STATUS_NUMERICAL = range(5)

# Fraction of the step to the boundary.
STEP_FRACTION = 0.99995


@dataclass
class StandardForm:
    A: sparse.csc_matrix
    b: np.ndarray
    c: np.ndarray
    n_orig: int
    m_orig: int
    shift: np.ndarray  # lower bounds subtracted from x
    c0: float


@dataclass
class IpmResult:
    x: np.ndarray
    y: np.ndarray
    status: int
    iterations: int
    message: str


# ---------------------------------------------------------------------------
# Conversion
# ---------------------------------------------------------------------------

def to_standard_form(program) -> StandardForm:
    """Shift lower bounds to zero, add a slack per inequality and a row per finite upper bound."""
    if np.any(~np.isfinite(program.lb)):
        raise ValueError("standard form needs finite lower bounds")
    m, n = program.n_rows, program.n_cols
    A = program.matrix().tocsc()
    lb, ub = program.lb, program.ub
    b = program.rhs - A @ lb

    ineq = np.flatnonzero(program.senses != "=")
    sign = np.where(program.senses[ineq] == "<=", 1.0, -1.0)
    slack = sparse.csc_matrix((sign, (ineq, np.arange(len(ineq)))), shape=(m, len(ineq)))

    capped = np.flatnonzero(np.isfinite(ub))
    k = len(capped)
    bound_rows = sparse.hstack([
        sparse.csc_matrix((np.ones(k), (np.arange(k), capped)), shape=(k, n)),
        sparse.csc_matrix((k, len(ineq))),
        sparse.identity(k, format="csc"),
    ])
    top = sparse.hstack([A, slack, sparse.csc_matrix((m, k))])
    A_std = sparse.vstack([top, bound_rows]).tocsc()
    b_std = np.concatenate([b, ub[capped] - lb[capped]])
    c_std = np.concatenate([program.c, np.zeros(len(ineq) + k)])
    return StandardForm(A_std, b_std, c_std, n, m, lb.copy(), float(program.c @ lb))


def from_standard_form(form: StandardForm, result: IpmResult) -> tuple[np.ndarray, np.ndarray]:
    """Original-space (x, y): shifted back columns and the duals of the original rows."""
    x = result.x[: form.n_orig] + form.shift
    y = result.y[: form.m_orig]
    return x, y


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def _get_solver(M: sparse.csc_matrix, lstsq: bool):
    if lstsq:
        def solve(r):
            return splinalg.lsqr(M, r, atol=1e-14, btol=1e-14)[0]
        return solve
    return splinalg.splu(M, permc_spec="MMD_AT_PLUS_A").solve


def _sym_solve(Dinv, A, r1, r2, solve):
    r = r2 + A @ (Dinv * r1)
    v = solve(r)
    u = Dinv * (A.T @ v - r1)
    return u, v


def _get_step(x, d_x, z, d_z, tau, d_tau, kappa, d_kappa, alpha0) -> float:
    i_x = d_x < 0
    i_z = d_z < 0
    alpha_x = alpha0 * np.min(x[i_x] / -d_x[i_x]) if np.any(i_x) else 1.0
    alpha_tau = alpha0 * tau / -d_tau if d_tau < 0 else 1.0
    alpha_z = alpha0 * np.min(z[i_z] / -d_z[i_z]) if np.any(i_z) else 1.0
    alpha_kappa = alpha0 * kappa / -d_kappa if d_kappa < 0 else 1.0
    return float(min(1.0, alpha_x, alpha_tau, alpha_z, alpha_kappa))


class _Direction:
    """Search direction for one iteration; keeps the factorization for the corrector."""

    def __init__(self, A, x, z):
        self.A = A
        self.Dinv = x / z
        self.M = (A @ sparse.diags(self.Dinv, 0, format="csc") @ A.T).tocsc()
        self.lstsq = False
        self.solve = self._factorize()

    def _factorize(self):
        try:
            return _get_solver(self.M, self.lstsq)
        except (RuntimeError, LinAlgError, ValueError):
            if self.lstsq:
                raise
            logger.debug("SuperLU factorization failed; switching to LSQR")
            self.lstsq = True
            return _get_solver(self.M, True)

    def pair(self, r1, r2):
        while True:
            try:
                u, v = _sym_solve(self.Dinv, self.A, r1, r2, self.solve)
                if np.any(~np.isfinite(u)) or np.any(~np.isfinite(v)):
                    raise LinAlgError("non-finite direction")
                return u, v
            except (RuntimeError, LinAlgError, ValueError):
                if self.lstsq:
                    raise LinAlgError("normal equations could not be solved") from None
                self.lstsq = True
                self.solve = _get_solver(self.M, True)


def _get_delta(A, b, c, x, y, z, tau, kappa):
    r_P = b * tau - A @ x
    r_D = c * tau - A.T @ y - z
    r_G = c @ x - b @ y + kappa
    mu = (x @ z + tau * kappa) / (len(x) + 1)
    direction = _Direction(A, x, z)
    p, q = direction.pair(c, b)

    gamma, alpha = 0.0, 0.0
    d_x = d_z = np.zeros_like(x)
    d_tau = d_kappa = 0.0
    for corrector in (False, True):
        eta = 1.0 - gamma
        rhatxs = gamma * mu - x * z
        rhattk = gamma * mu - tau * kappa
        if corrector:
            rhatxs = rhatxs - d_x * d_z
            rhattk = rhattk - d_tau * d_kappa
        u, v = direction.pair(eta * r_D - rhatxs / x, eta * r_P)
        d_tau = (eta * r_G + rhattk / tau - (-c @ u + b @ v)) / (kappa / tau + (-c @ p + b @ q))
        d_x = u + p * d_tau
        d_y = v + q * d_tau
        d_z = (rhatxs - z * d_x) / x
        d_kappa = (rhattk - kappa * d_tau) / tau
        alpha = _get_step(x, d_x, z, d_z, tau, d_tau, kappa, d_kappa, 1.0)
        gamma = (1 - alpha) ** 2 * min(0.1, 1 - alpha)
    return d_x, d_y, d_z, d_tau, d_kappa


def _indicators(A, b, c, x, y, z, tau, kappa, start):
    x0, y0, z0, tau0, kappa0 = start
    norm = np.linalg.norm

    def r_p(x, tau):
        return b * tau - A @ x

    def r_d(y, z, tau):
        return c * tau - A.T @ y - z

    def r_g(x, y, kappa):
        return kappa + c @ x - b @ y

    def mu(x, tau, z, kappa):
        return (x @ z + tau * kappa) / (len(x) + 1)

    rho_p = norm(r_p(x, tau)) / max(1.0, norm(r_p(x0, tau0)))
    rho_d = norm(r_d(y, z, tau)) / max(1.0, norm(r_d(y0, z0, tau0)))
    rho_A = abs(c @ x - b @ y) / (tau + abs(b @ y))
    rho_g = abs(r_g(x, y, kappa)) / max(1.0, abs(r_g(x0, y0, kappa0)))
    rho_mu = mu(x, tau, z, kappa) / mu(x0, tau0, z0, kappa0)
    return rho_p, rho_d, rho_A, rho_g, rho_mu


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def solve_standard_form(form: StandardForm, tol: float = 1e-8, max_iterations: int = 200) -> IpmResult:
    A, b, c = form.A, form.b, form.c
    m, n = A.shape
    start = (np.ones(n), np.zeros(m), np.ones(n), 1.0, 1.0)
    x, y, z, tau, kappa = (np.ones(n), np.zeros(m), np.ones(n), 1.0, 1.0)

    rho_p, rho_d, rho_A, rho_g, rho_mu = _indicators(A, b, c, x, y, z, tau, kappa, start)
    go = rho_p > tol or rho_d > tol or rho_A > tol
    status, message, iteration = STATUS_OPTIMAL, "converged", 0

    with np.errstate(divide="raise", over="raise", invalid="raise"):
        while go:
            iteration += 1
            try:
                d_x, d_y, d_z, d_tau, d_kappa = _get_delta(A, b, c, x, y, z, tau, kappa)
                alpha = _get_step(x, d_x, z, d_z, tau, d_tau, kappa, d_kappa, STEP_FRACTION)
                x = x + alpha * d_x
                y = y + alpha * d_y
                z = z + alpha * d_z
                tau = tau + alpha * d_tau
                kappa = kappa + alpha * d_kappa
                rho_p, rho_d, rho_A, rho_g, rho_mu = _indicators(A, b, c, x, y, z, tau, kappa, start)
            except (LinAlgError, FloatingPointError, ValueError, ZeroDivisionError) as exc:
                status, message = STATUS_NUMERICAL, f"numerical difficulty: {exc}"
                break
            logger.debug(
                "ipm it=%d rho_p=%.2e rho_d=%.2e rho_A=%.2e alpha=%.3f",
                iteration, rho_p, rho_d, rho_A, alpha,
            )
            go = rho_p > tol or rho_d > tol or rho_A > tol

            inf1 = rho_p < tol and rho_d < tol and rho_g < tol and tau < tol * max(1.0, kappa)
            inf2 = rho_mu < tol and tau < tol * min(1.0, kappa)
            if inf1 or inf2:
                if b @ y > tol:
                    status, message = STATUS_INFEASIBLE, "primal infeasible"
                else:
                    status, message = STATUS_UNBOUNDED, "primal unbounded"
                break
            if go and iteration >= max_iterations:
                status, message = STATUS_ITERATIONS, "iteration limit reached"
                break

    return IpmResult(x=x / tau, y=y / tau, status=status, iterations=iteration, message=message)
