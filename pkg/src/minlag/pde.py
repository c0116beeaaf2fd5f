"""Structure-equation residual, linearization, Newton solver, eigenvalues.

The residual of the equation

    Delta u + 2 - 2 e^u - 16 t^2 ||q||^2 e^{-2u} = 0

is evaluated in weak form and returned as a nodal field (weak residual
divided by the lumped mass).  The linearized operator about u is

    L(u, t) = -Delta + 2 e^{-2u} (e^{3u} - 16 t^2 ||q||^2),

assembled as K + M diag(potential) and always generalized against M.  Its
smallest eigenvalue decides stability of a solution: positive on the stable
branch, zero at the fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cubic import CubicDifferential, norm_field
from .surface import DiscreteSurface, laplacian

BLOWUP_THRESHOLD = -50.0     # e^{-2u} overflow guard; solutions are O(1)
TOL_POS = 1e-8               # discrete ceiling for u <= 0
DENSE_EIG_LIMIT = 600        # below this, dense generalized eigh is cheaper


class ResidualBlowup(RuntimeError):
    """u dropped below the overflow guard; the iterate left the solution set."""


class NonConvergence(RuntimeError):
    """Newton failed: t beyond the existence range or a bad initial guess."""

    def __init__(self, message, iterations=None, residual_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm


class SingularJacobian(RuntimeError):
    """Linearized operator could not be factorized (typically at a fold)."""


@dataclass
class SolutionPoint:
    """One accepted point (u, t) with its stability data."""

    u: np.ndarray
    t: float
    residual_norm: float
    lambda_min: float
    stable: bool
    meta: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "t": float(self.t),
            "u": [float(v) for v in self.u],
            "residual_norm": float(self.residual_norm),
            "lambda_min": float(self.lambda_min),
            "stable": bool(self.stable),
        }


@dataclass
class LinearizedOperator:
    matrix: sp.csr_matrix
    mass_diag: np.ndarray
    potential: np.ndarray


def _norm_sq_field(q: CubicDifferential) -> np.ndarray:
    return norm_field(q) ** 2


def residual(u: np.ndarray, t: float, s: DiscreteSurface,
             q: CubicDifferential) -> np.ndarray:
    """Nodal residual of the structure equation at (u, t)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    u = np.asarray(u, dtype=float)
    if u.min() < BLOWUP_THRESHOLD:
        raise ResidualBlowup(f"min u = {u.min():.3g} below {BLOWUP_THRESHOLD}")
    op = laplacian(s)
    lap = -(op.stiffness @ u) / op.mass_diag
    # overflow of exp(u) for wildly positive trial iterates yields inf, which
    # the Newton line search rejects; only u < threshold is a hard failure
    with np.errstate(over="ignore"):
        return (lap + 2.0 - 2.0 * np.exp(u)
                - 16.0 * t * t * _norm_sq_field(q) * np.exp(-2.0 * u))


def residual_norm(u: np.ndarray, t: float, s: DiscreteSurface,
                  q: CubicDifferential) -> float:
    """M-weighted L2 norm of the nodal residual."""
    f = residual(u, t, s, q)
    m = laplacian(s).mass_diag
    return float(np.sqrt(m @ f ** 2))


def linearize(u: np.ndarray, t: float, s: DiscreteSurface,
              q: CubicDifferential) -> LinearizedOperator:
    """Assemble L(u, t) = K + M diag(2 e^{-2u}(e^{3u} - 16 t^2 ||q||^2))."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    u = np.asarray(u, dtype=float)
    if u.min() < BLOWUP_THRESHOLD:
        raise ResidualBlowup(f"min u = {u.min():.3g} below {BLOWUP_THRESHOLD}")
    op = laplacian(s)
    pot = 2.0 * np.exp(-2.0 * u) * (np.exp(3.0 * u) - 16.0 * t * t * _norm_sq_field(q))
    mat = (op.stiffness + sp.diags(op.mass_diag * pot)).tocsr()
    return LinearizedOperator(matrix=mat, mass_diag=op.mass_diag, potential=pot)


def smallest_eigenvalue(L: LinearizedOperator, tol: float = 1e-9):
    """Smallest generalized eigenpair of (L, M), eigenvector M-normalized.

    Uses shift-invert Lanczos with a shift strictly below the spectrum
    (the potential minimum bounds the smallest eigenvalue from below since
    K >= 0); falls back to a dense solve for small operators or on ARPACK
    breakdown.
    """
    n = L.matrix.shape[0]
    m = L.mass_diag

    def _dense():
        w, v = sla.eigh(L.matrix.toarray(), np.diag(m))
        return float(w[0]), v[:, 0]

    if n <= DENSE_EIG_LIMIT:
        lam, vec = _dense()
    else:
        lower = min(0.0, float(L.potential.min()))
        sigma = lower - 0.1 * (1.0 + abs(lower))
        try:
            w, v = spla.eigsh(L.matrix, k=1, M=sp.diags(m), sigma=sigma,
                              which="LM", tol=tol)
            lam, vec = float(w[0]), v[:, 0]
        except (spla.ArpackError, RuntimeError):
            lam, vec = _dense()

    vec = vec / np.sqrt(m @ vec ** 2)
    res = np.linalg.norm(L.matrix @ vec - lam * (m * vec))
    scale = max(1.0, abs(lam)) * np.sqrt(float(n))
    if res > 1e-6 * scale:
        raise RuntimeError(f"eigen residual {res:.2e} exceeds tolerance")
    return lam, vec


def newton_solve(u0: np.ndarray, t: float, s: DiscreteSurface,
                 q: CubicDifferential, tol: float = 1e-10,
                 max_iter: int = 50) -> SolutionPoint:
    """Damped Newton iteration on the weak residual.

    The merit function is half the squared M-weighted residual norm; steps
    are Armijo-backtracked.  The accepted point records the smallest
    eigenvalue of the linearization and its stability flag.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = laplacian(s)
    m = op.mass_diag
    u = np.asarray(u0, dtype=float).copy()

    def merit(v):
        f = residual(v, t, s, q)
        with np.errstate(over="ignore", invalid="ignore"):
            return 0.5 * float(m @ f ** 2), f

    try:
        phi, f = merit(u)
    except ResidualBlowup as exc:
        raise NonConvergence(f"initial guess out of range: {exc}") from exc

    for it in range(max_iter + 1):
        rnorm = np.sqrt(2.0 * phi)
        if rnorm <= tol:
            L = linearize(u, t, s, q)
            lam, _ = smallest_eigenvalue(L)
            return SolutionPoint(u=u, t=float(t), residual_norm=float(rnorm),
                                 lambda_min=lam, stable=lam > 0.0,
                                 meta={"newton_iterations": it})
        if it == max_iter:
            break
        L = linearize(u, t, s, q)
        try:
            lu = spla.splu(L.matrix.tocsc())
            delta = lu.solve(m * f)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian("non-finite Newton step")

        alpha = 1.0
        while True:
            try:
                phi_new, f_new = merit(u + alpha * delta)
            except ResidualBlowup:
                phi_new = np.inf
            if phi_new <= (1.0 - 2e-4 * alpha) * phi:
                u = u + alpha * delta
                phi, f = phi_new, f_new
                break
            alpha *= 0.5
            if alpha < 1e-12:
                raise NonConvergence("line search failed to reduce the residual",
                                     iterations=it, residual_norm=float(rnorm))

    raise NonConvergence(f"no convergence in {max_iter} iterations",
                         iterations=max_iter, residual_norm=float(np.sqrt(2 * phi)))


def legendre_pair(a: float, b: float):
    """Legendre-transform pair H(a) = a (log a)^2 / 4 and its conjugate.

    For a >= 1 and b >= 0 the pair satisfies a*b <= H(a) + H*(b).
    """
    if a < 1.0:
        raise ValueError("legendre_pair requires a >= 1")
    if b < 0.0:
        raise ValueError("legendre_pair requires b >= 0")
    h = 0.25 * a * np.log(a) ** 2
    r = np.sqrt(1.0 + 4.0 * b)
    hstar = 0.5 * np.exp(-1.0 + r) * (-1.0 + r)
    return float(h), float(hstar)
