"""Area functional on the canonical branch and its variations at t = 0.

The functional is A(t) = -integral e^{u(t)} dA along the warm-started branch
through (0, 0).  Its value at 0 is minus the surface area (4 pi (1 - g) on a
hyperbolic surface), its first variation vanishes, and its second variation
equals 16 integral ||q||^2 dA, the Weil-Petersson norm of the cubic
differential up to the fixed factor.  The operator

    D = -2 (Delta - 2)^{-1}

realizes the second derivative of the branch itself: u_tt(0) = -16 D(||q||^2).
D is positive, self-adjoint in the area inner product, and fixes constants.

The equation depends on t only through t^2, so A extends evenly across 0;
derivative estimates use the even extension by default (centered stencils
with A(-h) = A(h)) with a one-sided variant available for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cubic import CubicDifferential, norm_field
from .pde import NonConvergence, SingularJacobian, SolutionPoint, newton_solve
from .surface import DiscreteSurface, integrate, laplacian


class BranchUnavailable(RuntimeError):
    """Newton failed at a t required by a finite-difference stencil."""


def area_functional(p: SolutionPoint, s: DiscreteSurface) -> float:
    """A = -integral e^u dA at a converged point."""
    m = laplacian(s).mass_diag
    return -float(m @ np.exp(p.u))


def d_operator(s: DiscreteSurface, f: np.ndarray) -> np.ndarray:
    """Apply D = -2 (Delta - 2)^{-1}: solve (K + 2M) x = 2 M f."""
    op = laplacian(s)
    f = np.asarray(f, dtype=float)
    if f.shape != (s.n_classes,):
        raise ValueError("field size does not match the surface")
    A = (op.stiffness + 2.0 * sp.diags(op.mass_diag)).tocsc()
    return spla.splu(A).solve(2.0 * op.mass_diag * f)


def udotdot(s: DiscreteSurface, q: CubicDifferential) -> np.ndarray:
    """Second t-derivative of the branch at t = 0: -16 D(||q||^2)."""
    nq2 = norm_field(q) ** 2
    return -16.0 * d_operator(s, nq2)


def _branch_point(s, q, t, u_start, tol):
    try:
        return newton_solve(u_start, t, s, q, tol=tol)
    except (NonConvergence, SingularJacobian) as exc:
        raise BranchUnavailable(f"branch solve failed at t = {t}: {exc}") from exc


def first_variation_check(s: DiscreteSurface, q: CubicDifferential,
                          h: float, tol: float = 1e-13) -> float:
    """One-sided estimate (A(h) - A(0)) / h of dA/dt at 0; tends to 0 as O(h)."""
    n = s.n_classes
    p0 = _branch_point(s, q, 0.0, np.zeros(n), tol)
    ph = _branch_point(s, q, h, p0.u, tol)
    return (area_functional(ph, s) - area_functional(p0, s)) / h


def second_variation_check(s: DiscreteSurface, q: CubicDifferential,
                           h: float, stencil: str = "centered",
                           tol: float = 1e-12):
    """Second t-derivative of A at 0 versus 16 integral ||q||^2 dA.

    `stencil` is "centered" (default; uses the even extension A(-h) = A(h),
    so d2 = 2 (A(h) - A(0)) / h^2) or "oneside"
    (d2 = (2 A(0) - 5 A(h) + 4 A(2h) - A(3h)) / h^2).

    Returns (fd2, exact, rel_err).
    """
    n = s.n_classes
    p0 = _branch_point(s, q, 0.0, np.zeros(n), tol)
    a0 = area_functional(p0, s)

    if stencil == "centered":
        ph = _branch_point(s, q, h, p0.u, tol)
        fd2 = 2.0 * (area_functional(ph, s) - a0) / h ** 2
    elif stencil == "oneside":
        prev, areas = p0, [a0]
        for k in (1, 2, 3):
            prev = _branch_point(s, q, k * h, prev.u, tol)
            areas.append(area_functional(prev, s))
        fd2 = (2.0 * areas[0] - 5.0 * areas[1] + 4.0 * areas[2]
               - areas[3]) / h ** 2
    else:
        raise ValueError("stencil must be 'centered' or 'oneside'")

    exact = 16.0 * integrate(s, norm_field(q) ** 2)
    rel_err = abs(fd2 - exact) / abs(exact)
    return float(fd2), float(exact), float(rel_err)


@dataclass
class AreaRecord:
    """Sampled A(t) along the branch with derivative estimates at 0."""

    ts: np.ndarray
    areas: np.ndarray
    fd1: float
    fd2: float
    exact_second: float
    rel_err: float

    def rows(self):
        return list(zip(self.ts.tolist(), self.areas.tolist()))


def area_record(s: DiscreteSurface, q: CubicDifferential, h: float,
                n_points: int = 4, stencil: str = "centered",
                tol: float = 1e-12) -> AreaRecord:
    """Sample A on {0, h, ..., (n-1) h} and attach the variation checks."""
    n = s.n_classes
    ts, areas = [], []
    prev_u = np.zeros(n)
    for k in range(n_points):
        p = _branch_point(s, q, k * h, prev_u, tol)
        prev_u = p.u
        ts.append(k * h)
        areas.append(area_functional(p, s))
    fd1 = first_variation_check(s, q, h, tol)
    fd2, exact, rel = second_variation_check(s, q, h, stencil=stencil, tol=tol)
    return AreaRecord(ts=np.array(ts), areas=np.array(areas), fd1=float(fd1),
                      fd2=fd2, exact_second=exact, rel_err=rel)
