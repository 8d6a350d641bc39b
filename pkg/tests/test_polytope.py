import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from tubelab.polytope import (FaceError, Polytope, Projector, boundary_area,
                              boundary_intrinsic_volumes, box, cube, embed, external_angle,
                              external_angles, f_vector, face_lattice,
                              intrinsic_volumes_polytope, load_polytope, random_polytope,
                              regular_polygon, regular_simplex, spherical_polygon_area)


def test_cube_intrinsic_volumes():
    v = intrinsic_volumes_polytope(cube(3))
    assert v.values == pytest.approx((1, 3, 3, 1), abs=1e-12)


def test_box_2x3():
    v = intrinsic_volumes_polytope(box([2.0, 3.0]))
    assert v.values == pytest.approx((1, 5, 6), abs=1e-12)


def test_regular_tetrahedron():
    P = regular_simplex(3, 1.0)
    assert f_vector(P) == (4, 6, 4, 1)
    assert P.volume == pytest.approx(1 / (6 * math.sqrt(2)), rel=1e-12)
    v = intrinsic_volumes_polytope(P)
    # V_2 is half the surface area of four unit triangles
    assert v[2] == pytest.approx(math.sqrt(3) / 2, rel=1e-12)
    # V_1: six edges, each with external angle (pi - dihedral) / (2 pi)
    dihedral = math.acos(1 / 3)
    assert v[1] == pytest.approx(6 * (math.pi - dihedral) / (2 * math.pi), rel=1e-12)


def test_tetrahedron_boundary_surface():
    b = boundary_intrinsic_volumes(regular_simplex(3))
    assert b.values == pytest.approx((2, 0, math.sqrt(3)), abs=1e-12)


def test_square_embedded_in_r4():
    v = intrinsic_volumes_polytope(embed(box([1.0, 1.0]), 2))
    assert v.values == pytest.approx((1, 2, 1), abs=1e-12)


def test_segment_and_point():
    assert intrinsic_volumes_polytope(Polytope([[0.0, 0, 0], [0, 0, 2]])).values == pytest.approx((1, 2))
    assert intrinsic_volumes_polytope(Polytope([[1.0, 2.0]])).values == (1.0,)


def test_four_cube_f_vector():
    assert f_vector(cube(4)) == (16, 32, 24, 8, 1)
    # exact solid angles stop at dimension 3; the MC path covers the rest
    with pytest.raises(FaceError, match="dimension"):
        intrinsic_volumes_polytope(cube(4))


def test_polygon_256_is_close_to_disk():
    v = intrinsic_volumes_polytope(regular_polygon(256))
    assert v[0] == pytest.approx(1, abs=1e-12)
    assert abs(v[1] - math.pi) / math.pi < 1e-3
    assert abs(v[2] - math.pi) / math.pi < 1e-3


def test_duplicate_and_interior_points_dropped():
    pts = np.vstack([cube(3).vertices, cube(3).vertices, [[0.5, 0.5, 0.5]]])
    P = Polytope(pts)
    assert len(P.vertices) == 8 and P.dim == 3


@pytest.mark.parametrize("P", [cube(3), regular_simplex(3), box([1.0, 2.0, 0.5]),
                               Polytope([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1.0]])])
def test_euler_relation(P):
    f = f_vector(P)
    assert sum((-1) ** k * n for k, n in enumerate(f)) == 1


def defect_angle(P, vertex):
    """(2 pi - sum of face angles at the vertex) / (4 pi), for a simple 3-polytope."""
    lattice = face_lattice(P)
    total = 0.0
    for facet in lattice[2]:
        if vertex not in facet.vertices:
            continue
        nbrs = [e.vertices - {vertex} for e in lattice[1]
                if vertex in e.vertices and e.vertices <= facet.vertices]
        a, b = (P.vertices[next(iter(s))] - P.vertices[vertex] for s in nbrs)
        total += math.acos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))
    return (2 * math.pi - total) / (4 * math.pi)


@pytest.mark.parametrize("P", [cube(3), regular_simplex(3), box([1.0, 2.0, 3.0])])
def test_vertex_angles_match_defect_oracle(P):
    angles = external_angles(P)
    for f in face_lattice(P)[0]:
        (v,) = f.vertices
        assert angles[f.vertices][0] == pytest.approx(defect_angle(P, v), abs=1e-12)


def test_octant_spherical_area():
    assert spherical_polygon_area(np.eye(3)) == pytest.approx(math.pi / 2, rel=1e-12)


def test_external_angle_single_face():
    P = cube(3)
    assert external_angle(P, [0]) == pytest.approx(1 / 8)
    assert external_angle(P, [0, 1]) == pytest.approx(1 / 4)
    with pytest.raises(FaceError):
        external_angle(P, [0, 7])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 12))
def test_random_polytope_invariants(seed, n):
    P = random_polytope(n, 3, np.random.default_rng(seed))
    v = intrinsic_volumes_polytope(P)
    assert v[0] == pytest.approx(1, abs=1e-9)
    assert v[3] == pytest.approx(P.volume, rel=1e-9)
    assert v[2] == pytest.approx(boundary_area(P) / 2, rel=1e-9)
    assert all(x > 0 for x in v)
    # homogeneity V_i(aP) = a^i V_i(P)
    w = intrinsic_volumes_polytope(P.scaled(1.7))
    assert w.values == pytest.approx([1.7 ** i * x for i, x in enumerate(v)], rel=1e-9)
    # rigid motions
    R = Rotation.random(random_state=seed).as_matrix()
    u = intrinsic_volumes_polytope(P.transformed(R, [1.0, -2.0, 0.5]))
    assert u.values == pytest.approx(v.values, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_monotone_under_inclusion(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(10, 3))
    small, big = Polytope(pts[:6]), Polytope(pts)
    vs, vb = intrinsic_volumes_polytope(small), intrinsic_volumes_polytope(big)
    for a, b in zip(vs, vb):
        assert a <= b + 1e-9


def qp_projection(P, x):
    """Nearest point as a convex combination of vertices (SLSQP)."""
    V = P.vertices
    k = len(V)
    res = minimize(lambda w: np.sum((w @ V - x) ** 2), np.full(k, 1 / k),
                   jac=lambda w: 2 * V @ (w @ V - x), method="SLSQP",
                   bounds=[(0, 1)] * k,
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return res.x @ V


def test_projector_against_qp_oracle():
    rng = np.random.default_rng(11)
    P = random_polytope(9, 3, rng)
    proj = Projector(P)
    pts = rng.normal(scale=2.0, size=(40, 3))
    dist, which, nearest = proj(pts)
    for x, d, y in zip(pts, dist, nearest):
        ref = qp_projection(P, x)
        assert d == pytest.approx(np.linalg.norm(x - ref), abs=1e-6)
        assert np.allclose(y, ref, atol=1e-4)


def test_projector_reports_lowest_face():
    proj = Projector(cube(3))
    dist, which, _ = proj(np.array([[2.0, 2.0, 2.0], [0.5, 0.5, 3.0], [0.5, 0.5, 0.5]]))
    dims = [proj.faces[j].dim for j in which]
    assert dims == [0, 2, 3]
    assert dist[0] == pytest.approx(math.sqrt(3))


def test_mc_cube_within_noise():
    v = intrinsic_volumes_polytope(cube(3), "mc", eps=0.5, samples=200_000, seed=3)
    for est, err, exact in zip(v, v.std_errors, (1, 3, 3, 1)):
        assert abs(est - exact) <= 4 * err + 1e-12


def test_mc_is_deterministic_and_cached():
    P = cube(2)
    a = external_angles(P, "mc", samples=50_000, seed=1)
    b = external_angles(cube(2), "mc", samples=50_000, seed=1)
    assert a == b
    assert external_angles(P, "mc", samples=50_000, seed=1) is a


def test_mc_errors():
    with pytest.raises(FaceError):
        external_angles(cube(2), "mc", eps=1.0, samples=10, seed=0, reach=0.5)
    with pytest.raises(ValueError):
        external_angles(cube(2), "bogus")
    with pytest.raises(ValueError):
        external_angles(cube(2), "mc", eps=-1.0, samples=10, seed=0)


def test_constructor_errors():
    with pytest.raises(ValueError):
        Polytope(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        Polytope([[0.0, math.inf]])
    with pytest.raises(ValueError):
        embed(cube(2), -1)
    with pytest.raises(FaceError):
        boundary_intrinsic_volumes(cube(2))


def test_json_round_trip(tmp_path):
    P = regular_simplex(3)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(P.to_json()))
    Q = load_polytope(path)
    assert np.allclose(Q.vertices, P.vertices)
    assert intrinsic_volumes_polytope(Q).values == pytest.approx(intrinsic_volumes_polytope(P).values)
    with pytest.raises(ValueError):
        Polytope.from_json({"dim": 2, "vertices": [[0, 0, 0]]})
