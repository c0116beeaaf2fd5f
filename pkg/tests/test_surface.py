import math

import numpy as np
import pytest
import scipy.linalg as sla

from minlag.surface import (MeshError, build_flat_torus, build_genus2_octagon,
                            integrate, laplacian, mesh_to_json)


def test_torus_unit_area():
    s = build_flat_torus(4, 1.0, 1.0)
    assert s.area == pytest.approx(1.0, rel=1e-12)
    assert s.genus == 1


def test_torus_euler_characteristic():
    s = build_flat_torus(32, 2.0 * math.pi, 1.0)
    assert s.euler_characteristic() == 0


def test_torus_area_scaling():
    s = build_flat_torus(16, 1.0, 4.0)
    assert s.area == pytest.approx(4.0, rel=1e-12)


def test_torus_rejects_tiny_grid():
    with pytest.raises(MeshError):
        build_flat_torus(3, 1.0, 1.0)
    with pytest.raises(MeshError):
        build_flat_torus(8, -1.0, 1.0)


def test_octagon_topology():
    s = build_genus2_octagon(1)
    assert s.euler_characteristic() == -2
    assert s.genus == 2
    # all eight corners glue to one smooth point
    corner_classes = {int(s.class_of[k]) for k in range(1, 9)}
    assert len(corner_classes) == 1


def test_octagon_area_refinement():
    errors = []
    for k in (1, 2, 3):
        s = build_genus2_octagon(k)
        errors.append(abs(s.area - 4.0 * math.pi) / (4.0 * math.pi))
    assert errors[0] > errors[1] > errors[2], f"not monotone: {errors}"
    assert errors[2] <= 0.02, f"refinement 3 area error {errors[2]:.3%}"
    print(f"octagon area errors over refinements 1..3: "
          f"{', '.join(f'{e:.3%}' for e in errors)}")


def test_octagon_conformal_factor_positive(octagon2):
    assert np.all(octagon2.conformal_factor > 0)
    assert octagon2.conformal_factor.min() >= 4.0  # minimum of the disk factor


def test_stiffness_kills_constants(torus16, octagon2):
    for s in (torus16, octagon2):
        K = laplacian(s).stiffness
        ones = np.ones(s.n_classes)
        assert np.abs(K @ ones).max() <= 1e-12


def test_stiffness_symmetric(torus16, octagon2):
    for s in (torus16, octagon2):
        K = laplacian(s).stiffness
        assert abs(K - K.T).max() == 0.0


def test_green_identity(torus16):
    rng = np.random.default_rng(7)
    K = laplacian(torus16).stiffness
    scale = abs(K).max()
    for _ in range(5):
        f, g = rng.standard_normal((2, torus16.n_classes))
        assert f @ (K @ g) == pytest.approx(g @ (K @ f), rel=1e-12)
        assert abs(f @ (K @ np.ones_like(f))) <= 1e-12 * scale * np.abs(f).sum()


def test_torus_laplace_eigenvalue(torus32):
    # sin(2 pi x / side) is an exact discrete mode of the periodic stencil
    op = laplacian(torus32)
    x = torus32.vertices[torus32.class_representative].real
    f = np.sin(2.0 * math.pi * x)
    mu = (f @ (op.stiffness @ f)) / (f @ (op.mass_diag * f))
    assert mu == pytest.approx((2.0 * math.pi) ** 2, rel=0.01)


def test_octagon_spectral_gap(octagon2):
    op = laplacian(octagon2)
    w = sla.eigh(op.stiffness.toarray(), np.diag(op.mass_diag),
                 eigvals_only=True)
    assert abs(w[0]) < 1e-10
    assert w[1] > 0.1


def test_mass_sums_to_area(torus16, octagon2):
    for s in (torus16, octagon2):
        assert laplacian(s).mass_diag.sum() == pytest.approx(s.area, rel=1e-12)


def test_integrate_constants(torus16, octagon2):
    assert integrate(torus16, np.ones(torus16.n_classes)) == pytest.approx(1.0)
    val = integrate(octagon2, 2.0 * np.ones(octagon2.n_classes))
    assert val == pytest.approx(2.0 * octagon2.area, rel=1e-12)


def test_integrate_is_mass_weighted_sum(torus16):
    rng = np.random.default_rng(3)
    f = rng.standard_normal(torus16.n_classes)
    m = laplacian(torus16).mass_diag
    assert integrate(torus16, f) == pytest.approx(float(m @ f), rel=1e-14)


def test_integrate_dimension_mismatch(torus16):
    with pytest.raises(ValueError):
        integrate(torus16, np.ones(torus16.n_classes + 1))


def test_identification_maps_boundary(torus16, octagon2):
    for s in (torus16, octagon2):
        for chart_idx, cls in s.identification.items():
            assert s.class_of[chart_idx] == cls
    # octagon boundary classes carry at least two chart vertices
    counts = np.bincount(octagon2.class_of)
    assert all(counts[octagon2.class_of[i]] > 1
               for i in octagon2.identification)


def test_mesh_export_schema(octagon2):
    payload = mesh_to_json(octagon2)
    assert set(payload) == {"vertices", "triangles", "classes", "lambda",
                            "genus", "area"}
    assert len(payload["vertices"]) == len(payload["classes"])
    assert payload["genus"] == 2
    assert payload["area"] == pytest.approx(octagon2.area)
