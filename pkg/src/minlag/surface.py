"""Discrete conformal surfaces and their Laplace operators.

Two mesh backends are provided:

* a flat square torus with a constant conformal factor, used as the test
  domain where constant-data closed forms exist, and
* a regular hyperbolic octagon in the Poincare disk with all vertex angles
  pi/4, sides glued by the standard pairing a b a^-1 b^-1 c d c^-1 d^-1,
  which gives a closed genus-2 surface of area 4*pi.

The metric is lambda(z) |dz|^2 in chart coordinates.  The P1 stiffness
matrix uses flat cotangent weights (the Dirichlet energy is conformally
invariant in two dimensions, so no curvature correction is needed), and the
mass matrix is lumped with the conformal factor interpolated linearly over
each triangle.  Scalar fields live on vertex *classes*, i.e. on the quotient
surface after boundary identification.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class MeshError(RuntimeError):
    """Raised when mesh construction or assembly produces degenerate data."""


@dataclass
class DiscreteSurface:
    """Triangulated fundamental domain plus quotient identification.

    Attributes
    ----------
    vertices : complex array, shape (Vc,)
        Chart coordinates of all mesh vertices, including duplicates on
        identified boundary edges.
    triangles : int array, shape (T, 3)
        Counterclockwise triangles indexing chart vertices.
    class_of : int array, shape (Vc,)
        Quotient class index of each chart vertex.
    identification : dict
        chart vertex index -> class, listed only for vertices that share
        their class with another chart vertex (the glued boundary).
    conformal_factor : float array, shape (Vc,)
        Metric factor lambda at each chart vertex (chart dependent on the
        octagon, constant on the torus).
    genus : int
    area : float
        Total area of the quotient surface, set during assembly.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    class_of: np.ndarray
    conformal_factor: np.ndarray
    genus: int
    identification: dict = field(default_factory=dict)
    area: float = 0.0
    side_pairings: list = field(default_factory=list)
    _ops: "LaplaceOperator | None" = field(default=None, repr=False)

    @property
    def n_classes(self) -> int:
        return int(self.class_of.max()) + 1

    @property
    def class_representative(self) -> np.ndarray:
        """Index of the first chart vertex in each class."""
        reps = np.full(self.n_classes, -1, dtype=int)
        for i, c in enumerate(self.class_of):
            if reps[c] < 0:
                reps[c] = i
        return reps

    def lambda_classes(self) -> np.ndarray:
        """Conformal factor sampled at class representatives."""
        return self.conformal_factor[self.class_representative]

    def euler_characteristic(self) -> int:
        """V - E + F of the quotient mesh.

        Chart edges interior to the fundamental domain are quotient edges;
        boundary chart edges are glued in pairs by the identification, and
        distinct quotient edges may connect the same class pair, so edges are
        counted by chart incidence rather than by class pairs.
        """
        counts: dict = {}
        for a, b, c in self.triangles:
            for e in (frozenset((int(a), int(b))), frozenset((int(b), int(c))),
                      frozenset((int(c), int(a)))):
                counts[e] = counts.get(e, 0) + 1
        interior = sum(1 for v in counts.values() if v == 2)
        boundary = sum(1 for v in counts.values() if v == 1)
        if boundary % 2 or any(v > 2 for v in counts.values()):
            raise MeshError("mesh is not a surface with pairable boundary")
        n_edges = interior + boundary // 2
        return self.n_classes - n_edges + len(self.triangles)


@dataclass
class LaplaceOperator:
    """Stiffness/mass pair on quotient classes.

    The convention is weak: <Delta f, g> = -integral grad f . grad g, so
    the assembled stiffness K satisfies f^T K g = integral grad f . grad g
    and the discrete Laplacian field is -(K f) / diag(M).
    """

    stiffness: sp.csr_matrix
    mass: sp.dia_matrix
    mass_diag: np.ndarray

    def apply_laplacian(self, f: np.ndarray) -> np.ndarray:
        return -(self.stiffness @ f) / self.mass_diag


def _assemble(s: DiscreteSurface) -> LaplaceOperator:
    """Assemble cotangent stiffness and lumped mass over the quotient."""
    z = s.vertices
    tris = s.triangles
    lam = s.conformal_factor
    n = s.n_classes

    p = np.column_stack([z.real, z.imag])[tris]          # (T, 3, 2)
    e = p[:, [2, 0, 1], :] - p[:, [1, 2, 0], :]          # edge opposite vertex i
    area2 = e[:, 0, 0] * e[:, 1, 1] - e[:, 0, 1] * e[:, 1, 0]
    if not np.all(np.isfinite(area2)) or np.any(area2 <= 0):
        raise MeshError("degenerate or misoriented triangle in assembly")
    tri_area = 0.5 * area2

    cls = s.class_of[tris]                               # (T, 3)
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            w = (e[:, i, :] * e[:, j, :]).sum(axis=1) / (4.0 * tri_area)
            rows.append(cls[:, i])
            cols.append(cls[:, j])
            vals.append(w)
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )

    # Lumped mass: integral of lambda * phi_i over each triangle with lambda
    # interpolated linearly, i.e. tri_area * (2*lam_i + lam_j + lam_k) / 12.
    lam_t = lam[tris]
    m = np.zeros(n)
    for i in range(3):
        contrib = tri_area * (2.0 * lam_t[:, i] + lam_t[:, (i + 1) % 3]
                              + lam_t[:, (i + 2) % 3]) / 12.0
        np.add.at(m, cls[:, i], contrib)
    if not np.all(np.isfinite(K.data)) or not np.all(np.isfinite(m)):
        raise MeshError("non-finite entries in assembled operators")

    op = LaplaceOperator(stiffness=K, mass=sp.diags(m), mass_diag=m)
    return op


def laplacian(s: DiscreteSurface) -> LaplaceOperator:
    """Return the (cached) stiffness/mass pair of the surface."""
    if s._ops is None:
        s._ops = _assemble(s)
        s.area = float(s._ops.mass_diag.sum())
    return s._ops


def integrate(s: DiscreteSurface, f: np.ndarray) -> float:
    """Integrate a per-class scalar field against the area element."""
    op = laplacian(s)
    f = np.asarray(f, dtype=float)
    if f.shape != (s.n_classes,):
        raise ValueError(f"field has shape {f.shape}, expected ({s.n_classes},)")
    return float(op.mass_diag @ f)


def build_flat_torus(n: int, side: float, lambda0: float) -> DiscreteSurface:
    """Periodic n x n grid on [0, side]^2 with constant conformal factor.

    Parameters
    ----------
    n : grid size per side, at least 4.
    side : physical side length of the square.
    lambda0 : constant metric factor, so the surface area is lambda0*side^2.
    """
    if n < 4:
        raise MeshError("torus grid size must be at least 4")
    if side <= 0 or lambda0 <= 0:
        raise MeshError("side and lambda0 must be positive")

    h = side / n
    m = n + 1
    jj, ii = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    verts = (ii * h + 1j * jj * h).ravel()
    class_of = ((jj % n) * n + (ii % n)).ravel()

    tris = []
    for j in range(n):
        for i in range(n):
            a = j * m + i
            b = j * m + i + 1
            c = (j + 1) * m + i + 1
            d = (j + 1) * m + i
            tris.append((a, b, c))
            tris.append((a, c, d))
    triangles = np.array(tris, dtype=int)

    ident = {int(k): int(class_of[k]) for k in range(m * m)
             if ii.ravel()[k] == n or jj.ravel()[k] == n}

    s = DiscreteSurface(
        vertices=verts,
        triangles=triangles,
        class_of=class_of,
        conformal_factor=np.full(m * m, float(lambda0)),
        genus=1,
        identification=ident,
    )
    laplacian(s)
    return s


# ---------------------------------------------------------------------------
# Poincare disk helpers (metric 4 |dz|^2 / (1 - |z|^2)^2, curvature -1)


def disk_lambda(z: np.ndarray) -> np.ndarray:
    """Hyperbolic conformal factor 4 / (1 - |z|^2)^2."""
    return 4.0 / (1.0 - np.abs(z) ** 2) ** 2


def hyperbolic_midpoint(z1: complex, z2: complex) -> complex:
    """Midpoint of the geodesic segment [z1, z2] in the Poincare disk."""
    w = (z2 - z1) / (1.0 - z1.conjugate() * z2)
    r = abs(w)
    if r == 0.0:
        return z1
    rm = math.tanh(0.5 * math.atanh(r))
    m = w / r * rm
    return (m + z1) / (1.0 + z1.conjugate() * m)


def _mobius_apply(mat: np.ndarray, z: complex) -> complex:
    a, b = mat[0]
    c, d = mat[1]
    return (a * z + b) / (c * z + d)


def _disk_translation(p: complex) -> np.ndarray:
    """Isometry z -> (z - p) / (1 - conj(p) z) as a 2x2 matrix."""
    return np.array([[1.0, -p], [-p.conjugate(), 1.0]], dtype=complex)


def mobius_two_point(p: complex, q: complex, p_img: complex, q_img: complex) -> np.ndarray:
    """Unique orientation-preserving disk isometry with p -> p_img, q -> q_img.

    Requires equal hyperbolic distances d(p, q) = d(p_img, q_img).
    """
    tp = _disk_translation(p)
    tq = _disk_translation(p_img)
    w1 = _mobius_apply(tp, q)
    w2 = _mobius_apply(tq, q_img)
    alpha = cmath.phase(w2) - cmath.phase(w1)
    rot = np.array([[cmath.exp(1j * alpha), 0.0], [0.0, 1.0]], dtype=complex)
    tq_inv = np.array([[1.0, p_img], [p_img.conjugate(), 1.0]], dtype=complex)
    mat = tq_inv @ rot @ tp
    return mat / cmath.sqrt(mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0])


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


# Side pairs realizing the boundary word a b a^-1 b^-1 c d c^-1 d^-1: side k
# carries the k-th letter, so paired sides are two apart within each half.
_OCTAGON_PAIRS = [(0, 2), (1, 3), (4, 6), (5, 7)]


def build_genus2_octagon(refinement: int) -> DiscreteSurface:
    """Triangulated regular hyperbolic octagon with genus-2 identification.

    The octagon has all vertex angles pi/4 (vertices at Euclidean radius
    2^(-1/4)), so the eight corners glue to a single smooth point and the
    quotient is a closed genus-2 surface.  `refinement` counts recursive
    4-way subdivisions of the initial 8-triangle fan; all edge midpoints are
    hyperbolic midpoints, and vertices on paired sides are generated through
    the side-pairing isometries so boundary identification is exact.
    """
    if refinement < 1:
        raise MeshError("refinement must be at least 1")

    rv = 2.0 ** -0.25
    corners = [rv * cmath.exp(1j * math.pi * k / 4.0) for k in range(8)]

    verts: list[complex] = [0.0 + 0.0j]
    # boundary tag: vertex index -> {side: tau}, tau in [0,1] along the side
    tags: dict[int, dict[int, float]] = {}
    for k, c in enumerate(corners):
        verts.append(c)
        tags[k + 1] = {k: 0.0, (k - 1) % 8: 1.0}

    # 16-triangle base fan: each side is pre-split at its hyperbolic midpoint
    # so the rim, where the conformal factor is largest, starts twice as fine.
    tris = []
    for k in range(8):
        mk = len(verts)
        verts.append(hyperbolic_midpoint(corners[k], corners[(k + 1) % 8]))
        tags[mk] = {k: 0.5}
        tris.append((0, 1 + k, mk))
        tris.append((0, mk, 1 + (k + 1) % 8))

    def shared_side(a: int, b: int):
        ta, tb = tags.get(a), tags.get(b)
        if ta is None or tb is None:
            return None
        common = set(ta) & set(tb)
        if not common:
            return None
        return min(common)

    midpoint_cache: dict[frozenset, int] = {}

    def midpoint(a: int, b: int) -> int:
        key = frozenset((a, b))
        idx = midpoint_cache.get(key)
        if idx is not None:
            return idx
        zm = hyperbolic_midpoint(verts[a], verts[b])
        idx = len(verts)
        verts.append(zm)
        side = shared_side(a, b)
        if side is not None:
            tags[idx] = {side: 0.5 * (tags[a][side] + tags[b][side])}
        midpoint_cache[key] = idx
        return idx

    for _ in range(refinement):
        new_tris = []
        for a, b, c in tris:
            mab, mbc, mca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        tris = new_tris
        midpoint_cache.clear()

    # Pairing isometries: g maps side j onto side i reversing the boundary
    # direction, i.e. start of j -> end of i and end of j -> start of i.
    side_nodes: dict[int, dict[float, int]] = {k: {} for k in range(8)}
    for idx, tg in tags.items():
        for side, tau in tg.items():
            side_nodes[side][tau] = idx

    pairings = []
    for i, j in _OCTAGON_PAIRS:
        vi0, vi1 = corners[i], corners[(i + 1) % 8]
        vj0, vj1 = corners[j], corners[(j + 1) % 8]
        g = mobius_two_point(vj0, vj1, vi1, vi0)
        pairings.append((i, j, g))
        # snap side-i nodes onto the exact images of side-j nodes
        for tau, idx in side_nodes[j].items():
            partner = side_nodes[i][round(1.0 - tau, 12)]
            if partner > 8:  # keep the corner coordinates exact
                verts[partner] = _mobius_apply(g, verts[idx])

    uf = _UnionFind(len(verts))
    for i, j, g in pairings:
        for tau, idx in side_nodes[j].items():
            uf.union(idx, side_nodes[i][round(1.0 - tau, 12)])

    corner_roots = {uf.find(k + 1) for k in range(8)}
    if len(corner_roots) != 1:
        raise MeshError("octagon corners did not glue to a single class")

    roots = [uf.find(k) for k in range(len(verts))]
    order = {}
    class_of = np.empty(len(verts), dtype=int)
    for k, r in enumerate(roots):
        if r not in order:
            order[r] = len(order)
        class_of[k] = order[r]

    vertices = np.array(verts, dtype=complex)
    triangles = np.array(tris, dtype=int)

    # enforce ccw orientation
    p = np.column_stack([vertices.real, vertices.imag])[triangles]
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = det < 0
    triangles[flip] = triangles[flip][:, ::-1]
    if np.any(np.abs(det) < 1e-14):
        raise MeshError("refinement produced a degenerate triangle")

    counts = np.bincount(class_of)
    ident = {int(k): int(class_of[k]) for k in range(len(verts))
             if counts[class_of[k]] > 1}

    s = DiscreteSurface(
        vertices=vertices,
        triangles=triangles,
        class_of=class_of,
        conformal_factor=disk_lambda(vertices),
        genus=2,
        identification=ident,
        side_pairings=pairings,
    )
    if s.euler_characteristic() != -2:
        raise MeshError("octagon quotient is not a genus-2 surface")
    laplacian(s)
    return s


def mesh_to_json(s: DiscreteSurface) -> dict:
    """Mesh export payload: vertices, triangles, classes, lambda, genus, area."""
    return {
        "vertices": [[float(z.real), float(z.imag)] for z in s.vertices],
        "triangles": s.triangles.tolist(),
        "classes": s.class_of.tolist(),
        "lambda": s.conformal_factor.tolist(),
        "genus": int(s.genus),
        "area": float(s.area),
    }
