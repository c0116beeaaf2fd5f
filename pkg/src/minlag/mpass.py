"""Reformulated functional with cutoff nonlinearities and mountain-pass search.

The structure equation is recast as -Delta u + V u = f1(u) + V f2(u) with
V = 16 t^2 ||q||^2 and cutoff functions

    f1(s) = 2 - 2 e^s        (s <= 0),   -theta s^(theta-1)  (s > 1),
    f2(s) = s - e^{-2s}      (s <= 0),   0                   (s > 1),

joined on (0, 1) by quintic blends that match value and first derivative at
both ends, stay negative inside, and integrate to the exact jump of the
closed-form antiderivatives F1, F2 so that F1' = f1 and F2' = f2 globally.
Both equations have the same solution set: any critical point of

    F(u) = 1/2 integral (|grad u|^2 + V u^2) - integral (F1(u) + V F2(u))

with u <= 0 solves the structure equation, and conversely.  The second
(mountain-pass) solution at t in (0, T0) is found by deforming a discrete
path from the stable branch point to a deep negative constant, then polishing
the path maximum with Newton on grad F = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cubic import CubicDifferential, norm_field
from .pde import TOL_POS, SolutionPoint, linearize, residual, smallest_eigenvalue
from .surface import DiscreteSurface, laplacian

EPS_UNSTABLE = 1e-4   # mountain-pass points must have lambda_min below this


class BlendSignViolation(RuntimeError):
    """Cutoff blend failed to stay negative on the joining interval."""


class DegenerateNorm(ValueError):
    """integral V = 0: the V-inner product is not a norm (t = 0 or q = 0)."""


class PathCollapse(RuntimeError):
    """The deformed path slid back to the stable minimizer."""


class VerificationFailure(RuntimeError):
    """A computed critical point violates the cutoff-equivalence checks."""


# ---------------------------------------------------------------------------
# cutoff construction


def _hermite_blend(v0, d0, v1, d1, jump, curv0):
    """Quintic on [0,1] matching end values/slopes, a prescribed integral,
    and the left second derivative.

    Returns polynomial coefficients (ascending).  The basis is the cubic
    Hermite interpolant plus a*s^2(1-s)^2 + b*s^2(1-s)^3, both of which keep
    the end values and slopes; integral and curvature constraints fix (a, b).
    """
    h = np.zeros(6)
    h[0] = v0
    h[1] = d0
    h[2] = -3 * v0 - 2 * d0 + 3 * v1 - d1
    h[3] = 2 * v0 + d0 - 2 * v1 + d1
    p4 = np.array([0.0, 0.0, 1.0, -2.0, 1.0, 0.0])        # s^2 (1-s)^2
    p5 = np.array([0.0, 0.0, 1.0, -3.0, 3.0, -1.0])       # s^2 (1-s)^3

    def poly_int01(c):
        return sum(ck / (k + 1) for k, ck in enumerate(c))

    # [integral, f''(0)] conditions on the two free coefficients
    A = np.array([[poly_int01(p4), poly_int01(p5)], [2.0, 2.0]])
    rhs = np.array([jump - poly_int01(h), curv0 - 2.0 * h[2]])
    a, b = np.linalg.solve(A, rhs)
    return h + a * p4 + b * p5


def _polyval(c, s):
    out = np.zeros_like(s)
    for ck in c[::-1]:
        out = out * s + ck
    return out


def _polyder(c):
    return np.array([k * ck for k, ck in enumerate(c)])[1:]


def _polyint(c, const):
    return np.concatenate([[const], [ck / (k + 1) for k, ck in enumerate(c)]])


@dataclass
class CutoffPair:
    """Cutoff functions f1, f2 with antiderivatives F1, F2 and derivatives."""

    theta: float
    f1: callable
    f2: callable
    F1: callable
    F2: callable
    df1: callable
    df2: callable
    blend_knots: dict = field(default_factory=dict)


def _piecewise(neg_fn, blend_coeffs, pos_fn):
    def fn(s):
        scalar = np.isscalar(s)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        lo, mid, hi = s <= 0.0, (s > 0.0) & (s <= 1.0), s > 1.0
        with np.errstate(over="ignore"):
            out[lo] = neg_fn(s[lo])
            out[mid] = _polyval(blend_coeffs, s[mid])
            out[hi] = pos_fn(s[hi])
        return float(out[0]) if scalar else out
    return fn


def build_cutoffs(theta: float = 3.0) -> CutoffPair:
    """Construct the cutoff pair for a growth exponent theta > 2.

    The blends are checked negative on a fine grid of (0, 1); a violation is
    retried with a softened curvature condition before raising
    BlendSignViolation.
    """
    if theta <= 2.0:
        raise ValueError("theta must exceed 2")

    # f1 matches 2 - 2e^s at 0 and -theta s^(theta-1) at 1; its integral over
    # (0,1) must equal F1(1+) - F1(0-) = -1 so that F1' = f1 distributionally.
    f1_data = dict(v0=0.0, d0=-2.0, v1=-theta, d1=-theta * (theta - 1.0),
                   jump=-1.0, curv0=-2.0)
    # f2 matches s - e^{-2s} at 0 and 0 at 1; integral equals 0 - 1/2.
    f2_data = dict(v0=-1.0, d0=3.0, v1=0.0, d1=0.0, jump=-0.5, curv0=-4.0)

    grid = np.linspace(0.0, 1.0, 4001)[1:]

    def make_blend(data, include_right):
        for curv in (data["curv0"], 0.0, -8.0):
            c = _hermite_blend(**dict(data, curv0=curv))
            vals = _polyval(c, grid if include_right else grid[:-1])
            if np.all(vals < 0.0):
                return c
        raise BlendSignViolation(
            f"blend not negative on (0,1) for theta = {data}")

    c1 = make_blend(f1_data, include_right=True)    # f1 < 0 for all s > 0
    c2 = make_blend(f2_data, include_right=False)   # f2 < 0 on (0,1), f2(1)=0

    C1 = _polyint(c1, 0.0)   # F1(0) = 0 matches 2s - 2e^s + 2 from the left
    C2 = _polyint(c2, 0.5)   # F2(0) = 1/2 matches (s^2 + e^{-2s})/2

    f1 = _piecewise(lambda s: 2.0 - 2.0 * np.exp(s), c1,
                    lambda s: -theta * s ** (theta - 1.0))
    f2 = _piecewise(lambda s: s - np.exp(-2.0 * s), c2,
                    lambda s: np.zeros_like(s))
    F1 = _piecewise(lambda s: 2.0 * s - 2.0 * np.exp(s) + 2.0, C1,
                    lambda s: -s ** theta)
    F2 = _piecewise(lambda s: 0.5 * (s * s + np.exp(-2.0 * s)), C2,
                    lambda s: np.zeros_like(s))
    df1 = _piecewise(lambda s: -2.0 * np.exp(s), _polyder(c1),
                     lambda s: -theta * (theta - 1.0) * s ** (theta - 2.0))
    df2 = _piecewise(lambda s: 1.0 + 2.0 * np.exp(-2.0 * s), _polyder(c2),
                     lambda s: np.zeros_like(s))

    return CutoffPair(theta=float(theta), f1=f1, f2=f2, F1=F1, F2=F2,
                      df1=df1, df2=df2,
                      blend_knots={"f1": c1.tolist(), "f2": c2.tolist()})


# ---------------------------------------------------------------------------
# functional, gradient, V-norm


def _v_field(t: float, q: CubicDifferential) -> np.ndarray:
    return 16.0 * t * t * norm_field(q) ** 2


def functional_value(u: np.ndarray, t: float, s: DiscreteSurface,
                     q: CubicDifferential, cp: CutoffPair) -> float:
    """F(u) = 1/2 integral(|grad u|^2 + V u^2) - integral(F1(u) + V F2(u))."""
    op = laplacian(s)
    u = np.asarray(u, dtype=float)
    V = _v_field(t, q)
    # overflowing trial fields yield inf/nan, rejected by the line searches
    with np.errstate(over="ignore", invalid="ignore"):
        quad = 0.5 * float(u @ (op.stiffness @ u)) \
            + 0.5 * float(op.mass_diag @ (V * u * u))
        bulk = float(op.mass_diag @ (cp.F1(u) + V * cp.F2(u)))
        return quad - bulk


def functional_gradient(u: np.ndarray, t: float, s: DiscreteSurface,
                        q: CubicDifferential, cp: CutoffPair) -> np.ndarray:
    """Nodal gradient field g with dF(u)[v] = <g, v>_M."""
    op = laplacian(s)
    u = np.asarray(u, dtype=float)
    V = _v_field(t, q)
    with np.errstate(over="ignore", invalid="ignore"):
        weak = op.stiffness @ u + op.mass_diag * (V * u - cp.f1(u) - V * cp.f2(u))
        return weak / op.mass_diag


def v_gram(s: DiscreteSurface, q: CubicDifferential, t: float) -> sp.csr_matrix:
    """Gram matrix of the V-inner product: int grad f.grad g + V f g."""
    op = laplacian(s)
    V = _v_field(t, q)
    if float(op.mass_diag @ V) <= 0.0:
        raise DegenerateNorm("integral V = 0; V-norm requires t > 0 and q != 0")
    return (op.stiffness + sp.diags(op.mass_diag * V)).tocsr()


def v_norm(u: np.ndarray, t: float, q: CubicDifferential,
           s: DiscreteSurface) -> float:
    """V-norm sqrt(integral |grad u|^2 + V u^2)."""
    g = v_gram(s, q, t)
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(u @ (g @ u)))


def norm_equivalence_constants(s: DiscreteSurface, q: CubicDifferential,
                               t: float):
    """Extreme generalized eigenvalues of (V-Gram, H1-Gram).

    Both Grams are positive definite when integral V > 0, so the constants
    are finite and positive; they quantify the equivalence of the V-norm
    with the standard first-order Sobolev norm (V = 1 gives exactly H1).
    """
    op = laplacian(s)
    gv = v_gram(s, q, t).toarray()
    gh = (op.stiffness + sp.diags(op.mass_diag)).toarray()
    w = sla.eigh(gv, gh, eigvals_only=True)
    return float(w[0]), float(w[-1])


# ---------------------------------------------------------------------------
# mountain pass


def _hessian(u, t, s, q, cp):
    op = laplacian(s)
    V = _v_field(t, q)
    pot = V - cp.df1(u) - V * cp.df2(u)
    return (op.stiffness + sp.diags(op.mass_diag * pot)).tocsr()


def _newton_critical(u0, t, s, q, cp, tol, max_iter=60):
    """Newton on grad F = 0 with backtracking on the gradient norm."""
    m = laplacian(s).mass_diag
    u = u0.copy()
    g = functional_gradient(u, t, s, q, cp)
    gnorm = np.sqrt(float(m @ g ** 2))
    for _ in range(max_iter):
        if gnorm <= tol:
            return u, gnorm
        H = _hessian(u, t, s, q, cp)
        try:
            delta = spla.splu(H.tocsc()).solve(m * g)
        except RuntimeError:
            return None
        if not np.all(np.isfinite(delta)):
            return None
        alpha = 1.0
        while alpha >= 1e-10:
            u_try = u - alpha * delta
            g_try = functional_gradient(u_try, t, s, q, cp)
            with np.errstate(over="ignore", invalid="ignore"):
                gnorm_try = np.sqrt(float(m @ g_try ** 2))
            if gnorm_try <= (1.0 - 1e-4 * alpha) * gnorm:
                u, g, gnorm = u_try, g_try, gnorm_try
                break
            alpha *= 0.5
        else:
            return None
    return (u, gnorm) if gnorm <= tol else None


def _negative_endpoint(f_target, t, s, q, cp):
    """Constant field w with F(w) strictly below f_target; exists because
    F(k) -> -infinity for constants k -> -infinity."""
    n = s.n_classes
    k = -1.0
    while k > -200.0:
        w = np.full(n, k)
        if functional_value(w, t, s, q, cp) < f_target - 1.0:
            return w
        k *= 2.0
    raise VerificationFailure("no negative constant with low functional value")


def find_mountain_pass(u_stable: SolutionPoint, t: float, s: DiscreteSurface,
                       q: CubicDifferential, cp: CutoffPair,
                       tol: float = 1e-10, n_nodes: int = 20,
                       max_sweeps: int = 600) -> SolutionPoint:
    """Second critical point of F at the same t as a converged stable point.

    Runs a discretized min-max: the node of highest functional value on a
    path from u_stable to a deep negative constant is relaxed by descent
    steps preconditioned with the V-Gram matrix, and the limiting node is
    polished with Newton on grad F = 0.  The result is verified against the
    cutoff equivalence: u <= 0 within TOL_POS, structure-equation residual
    at most 10*tol, and smallest eigenvalue of the linearization at most
    EPS_UNSTABLE (a second minimizer would signal a path collapse).
    """
    if abs(t - u_stable.t) > 1e-12 * max(1.0, t):
        raise ValueError("u_stable was computed at a different t")
    op = laplacian(s)
    m = op.mass_diag
    gram = v_gram(s, q, t)                      # raises DegenerateNorm at t=0
    gram_lu = spla.splu(gram.tocsc())

    f_stable = functional_value(u_stable.u, t, s, q, cp)
    w = _negative_endpoint(f_stable, t, s, q, cp)

    def vnorm(x):
        return float(np.sqrt(x @ (gram @ x)))

    def redistribute(path):
        """Resample the polyline at uniform V-arclength, endpoints fixed."""
        seg = np.array([vnorm(path[i + 1] - path[i])
                        for i in range(len(path) - 1)])
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if cum[-1] <= 0.0:
            return path
        targets = np.linspace(0.0, cum[-1], len(path))
        out = [path[0]]
        for tgt in targets[1:-1]:
            i = min(np.searchsorted(cum, tgt) - 1, len(seg) - 1)
            i = max(i, 0)
            frac = 0.0 if seg[i] == 0.0 else (tgt - cum[i]) / seg[i]
            out.append((1.0 - frac) * path[i] + frac * path[i + 1])
        out.append(path[-1])
        return out

    def separated(u_cand):
        return vnorm(u_cand - u_stable.u) > 10.0 * tol

    def attempt(nodes_count):
        tau = np.linspace(0.0, 1.0, nodes_count)
        path = [(1.0 - a) * u_stable.u + a * w for a in tau]
        step = 1.0
        for sweeps in range(1, max_sweeps + 1):
            path = redistribute(path)
            vals = [functional_value(p, t, s, q, cp) for p in path]
            jmax = int(np.argmax(vals[1:-1])) + 1
            u_top = path[jmax]
            g = functional_gradient(u_top, t, s, q, cp)
            gnorm = np.sqrt(float(m @ g ** 2))
            # polish candidates near stationarity; keep deforming if Newton
            # lands back on the stable minimizer
            if gnorm < 0.1 or sweeps % 5 == 0:
                refined = _newton_critical(u_top, t, s, q, cp, tol)
                if refined is not None and separated(refined[0]):
                    return refined, sweeps
            d = gram_lu.solve(m * g)   # descent in the V-inner product
            alpha, moved = step, False
            for _ in range(40):
                u_try = u_top - alpha * d
                if functional_value(u_try, t, s, q, cp) < vals[jmax]:
                    path[jmax] = u_try
                    step = min(alpha * 2.0, 1.0)
                    moved = True
                    break
                alpha *= 0.5
            if not moved:
                refined = _newton_critical(u_top, t, s, q, cp, tol)
                if refined is not None and separated(refined[0]):
                    return refined, sweeps
                return None, sweeps
        return None, max_sweeps

    nodes = n_nodes
    u2 = sep = gnorm = sweeps = None
    for _ in range(3):
        refined, sweeps = attempt(nodes)
        if refined is not None:
            u2, gnorm = refined
            sep = vnorm(u2 - u_stable.u)
            break
        nodes *= 2
    else:
        raise PathCollapse(
            f"path slid back to the stable solution for up to {nodes // 2} nodes")

    if u2.max() > TOL_POS:
        raise VerificationFailure(
            f"critical point violates u <= 0: max u = {u2.max():.3g}")
    rnorm = float(np.sqrt(m @ residual(u2, t, s, q) ** 2))
    if rnorm > 10.0 * tol:
        raise VerificationFailure(
            f"structure-equation residual {rnorm:.3g} exceeds 10*tol")
    lam, _ = smallest_eigenvalue(linearize(u2, t, s, q))
    if lam > EPS_UNSTABLE:
        raise VerificationFailure(
            f"second critical point is stable (lambda_min = {lam:.3g}); "
            "the path converged to another minimizer")

    return SolutionPoint(u=u2, t=float(t), residual_norm=rnorm,
                         lambda_min=lam, stable=False,
                         meta={"path_iterations": sweeps,
                               "vnorm_separation": sep,
                               "gradient_norm": gnorm,
                               "path_nodes": nodes})
