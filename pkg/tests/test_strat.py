import json

import numpy as np
import pytest

from tubelab.strat import (BUNDLED_MAPS, ConstructibleFunction, IsometryAction, MapModel,
                           StratError, StratPoset, StratVolumes, boundary_coefficients, compose,
                           conjectured_limit, disk_poset, disk_volumes, equivalent_up_to_isometry,
                           euler_pushforward, from_coeffs, identity_map, interval_poset,
                           interval_to_point, interval_volumes, load_strat,
                           manifold_with_boundary_poset, orbit, point_poset, point_volumes,
                           product_collapse_pair, random_poset, sphere_to_disk,
                           sphere_to_interval, stratum_fiber_chi_c, to_coeffs, torus_to_point,
                           verdier_check)


def chain():
    return StratPoset({"E1": 0, "E2": 1}, [("E1", "E2")])


def test_poset_basics():
    P = interval_poset()
    assert P.top == "interior"
    assert P.leq("left", "interior") and not P.leq("left", "right")
    assert P.below("interior") == {"left", "right"}
    ext = P.linear_extension()
    assert ext.index("interior") == 2
    assert StratPoset.from_json(P.to_json()) == P


def test_poset_transitive_closure():
    P = StratPoset({"a": 0, "b": 1, "c": 2}, [("a", "b"), ("b", "c")])
    assert P.leq("a", "c")
    assert set(P.cover_pairs()) == {("a", "b"), ("b", "c")}


@pytest.mark.parametrize("strata, order, match", [
    ({}, [], "at least one"),
    ({"a": 0, "b": 0}, [], "unique maximum"),
    ({"a": 0, "b": 1}, [("a", "b"), ("b", "a")], "antisymmetric"),
    ({"a": 0, "b": 1}, [("a", "z")], "unknown"),
    ({"a": 3, "b": 1}, [("a", "b")], "larger dimension"),
])
def test_poset_errors(strata, order, match):
    with pytest.raises(StratError, match=match):
        StratPoset(strata, order)


def test_function_must_be_total_and_integer():
    P = chain()
    with pytest.raises(StratError):
        ConstructibleFunction(P, {"E1": 1})
    with pytest.raises(StratError):
        ConstructibleFunction(P, {"E1": 1, "E2": 0.5})


def test_coefficients_of_constant_and_chain():
    P = chain()
    assert to_coeffs(ConstructibleFunction.constant(P, 1)) == {"E1": 0, "E2": 1}
    assert to_coeffs(ConstructibleFunction(P, {"E1": 3, "E2": 1})) == {"E1": 2, "E2": 1}
    assert from_coeffs(P, {"E1": 2, "E2": 1}) == ConstructibleFunction(P, {"E1": 3, "E2": 1})
    with pytest.raises(StratError):
        from_coeffs(P, {"E1": 1})


def test_indicator_coefficients():
    P = interval_poset()
    assert to_coeffs(ConstructibleFunction.indicator(P, "left")) == {"interior": 0, "left": 1, "right": 0}


def random_function(rng, P):
    return ConstructibleFunction(P, {e: int(rng.integers(-5, 6)) for e in P.ids})


def test_coefficient_round_trip_on_random_posets():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        P = random_poset(rng, int(rng.integers(1, 9)))
        F = random_function(rng, P)
        assert from_coeffs(P, to_coeffs(F)) == F
        c = {e: int(rng.integers(-5, 6)) for e in P.ids}
        assert to_coeffs(from_coeffs(P, c)) == c


def test_pushforward_examples():
    P = interval_poset()
    F = ConstructibleFunction(P, {"interior": 4, "left": -1, "right": 2})
    assert euler_pushforward(identity_map(P), F) == F
    G = euler_pushforward(sphere_to_interval(), ConstructibleFunction.constant(sphere_to_interval().source, 1))
    assert G.values == {"interior": 0, "left": 1, "right": 1}
    t = torus_to_point()
    assert euler_pushforward(t, ConstructibleFunction.constant(t.source, 1)).values == {"pt": 0}


def test_pushforward_is_linear():
    rng = np.random.default_rng(1)
    for _ in range(200):
        P = random_poset(rng, int(rng.integers(1, 7)))
        Q = random_poset(rng, int(rng.integers(1, 5)))
        f = MapModel(P, Q, {(E, S): int(rng.integers(-2, 3)) for E in P.ids for S in Q.ids})
        F1, F2 = random_function(rng, P), random_function(rng, P)
        k = int(rng.integers(-4, 5))
        assert euler_pushforward(f, F1 + F2) == euler_pushforward(f, F1) + euler_pushforward(f, F2)
        assert euler_pushforward(f, k * F1) == k * euler_pushforward(f, F1)
        assert euler_pushforward(f, F1 - F2) == euler_pushforward(f, F1) - euler_pushforward(f, F2)


def test_pushforward_poset_mismatch():
    with pytest.raises(StratError):
        euler_pushforward(torus_to_point(), ConstructibleFunction.constant(interval_poset(), 1))


@pytest.mark.parametrize("f, g, expected", [
    (sphere_to_interval(), interval_to_point(), 2),
    (sphere_to_disk(), MapModel(disk_poset(), point_poset(),
                                {"interior": {"pt": 1}, "boundary": {"pt": 0}}), 2),
])
def test_composition_on_chains(f, g, expected):
    F = ConstructibleFunction.constant(f.source, 1)
    gf = compose(f, g)
    direct = euler_pushforward(gf, F)
    assert direct == euler_pushforward(g, euler_pushforward(f, F))
    # everything collapses to a point: the total Euler characteristic of S^2
    assert direct.values == {"pt": expected}


def test_composition_with_identity_and_mismatch():
    f = sphere_to_interval()
    assert compose(f, identity_map(f.target)).table == f.table
    with pytest.raises(StratError):
        compose(f, torus_to_point())


def test_stratum_fiber_chi_c_of_interval_map():
    chi_c = stratum_fiber_chi_c(interval_to_point())
    # open interval has chi_c = -1, each endpoint 1
    assert chi_c == {("left", "pt"): 1, ("right", "pt"): 1, ("interior", "pt"): -1}


def test_isometry_examples():
    P = interval_poset()
    swap = {"interior": "interior", "left": "right", "right": "left"}
    G = IsometryAction.generated(P, [swap])
    assert len(G) == 2
    F = ConstructibleFunction(P, {"interior": 0, "left": 1, "right": 2})
    H = ConstructibleFunction(P, {"interior": 0, "left": 2, "right": 1})
    K = ConstructibleFunction(P, {"interior": 0, "left": 1, "right": 3})
    assert equivalent_up_to_isometry(F, F, IsometryAction.trivial(P)) == {e: e for e in P.ids}
    assert equivalent_up_to_isometry(F, H, G) == swap
    assert equivalent_up_to_isometry(F, K, G) is None
    assert len(orbit(F, G)) == 2 and len(orbit(F, IsometryAction.trivial(P))) == 1


def test_isometry_validation():
    P = interval_poset()
    with pytest.raises(StratError, match="identity"):
        IsometryAction(P, [{"interior": "interior", "left": "right", "right": "left"}])
    with pytest.raises(StratError, match="dimension"):
        IsometryAction(P, [{e: e for e in P.ids}, {"interior": "left", "left": "interior", "right": "right"}])


@pytest.mark.parametrize("alpha, betas, holds, branch", [
    (0, [1, 1], True, "alpha_zero"),
    (-2, [1, 1], True, "beta_equal"),
    (1, [0, 0], False, None),
    (4, [-2], True, "beta_equal"),
    (-2, [1, 2], False, None),
    (0, [3, -7], True, "alpha_zero"),
])
def test_verdier_examples(alpha, betas, holds, branch):
    res = verdier_check(alpha, betas, n_parity=1)
    assert (res.holds, res.branch, res.n_parity) == (holds, branch, 1)


def test_verdier_needs_boundary():
    with pytest.raises(StratError):
        verdier_check(1, [])


def test_verdier_on_bundled_pushforwards():
    # closed-manifold sources over targets with boundary
    checked = []
    for name, make in sorted(BUNDLED_MAPS.items()):
        f = make()
        if len(f.source) != 1 or len(f.target) == 1:
            continue
        G = euler_pushforward(f, ConstructibleFunction.constant(f.source, 1))
        alpha, betas = boundary_coefficients(G)
        assert verdier_check(alpha, betas).holds, name
        checked.append(name)
    assert checked == ["sphere-disk", "sphere-interval"]


def test_boundary_coefficients():
    P = manifold_with_boundary_poset(2, 3)
    F = from_coeffs(P, {"interior": -2, "B1": 1, "B2": 1, "B3": 1})
    assert boundary_coefficients(F) == (-2, [1, 1, 1])
    with pytest.raises(StratError):
        boundary_coefficients(ConstructibleFunction.constant(
            StratPoset({"a": 0, "b": 1, "c": 2}, [("a", "b"), ("b", "c")]), 1))


@pytest.mark.parametrize("chi, value", [(0, 0), (2, 2), (1, 1)])
def test_product_collapse_pair(chi, value):
    P, F = product_collapse_pair(disk_poset(), chi)
    assert P == disk_poset() and set(F.values.values()) == {value}


def test_conjectured_limits():
    F = ConstructibleFunction(interval_poset(), {"interior": 0, "left": 1, "right": 1})
    assert conjectured_limit(interval_volumes(3.0), F) == [2.0, 0.0]
    one = ConstructibleFunction.constant(interval_poset(), 1)
    # the closed interval itself: chi = 1, length 3
    assert conjectured_limit(interval_volumes(3.0), one) == [1.0, 3.0]
    zero = ConstructibleFunction.constant(interval_poset(), 0)
    assert conjectured_limit(interval_volumes(3.0), zero) == [0.0, 0.0]
    assert conjectured_limit(point_volumes(), ConstructibleFunction.constant(point_poset(), 1)) == [1.0]
    # closed disk: chi 1, half perimeter pi, area pi
    disk = conjectured_limit(disk_volumes(1.0), ConstructibleFunction.constant(disk_poset(), 1))
    assert disk == pytest.approx([1.0, 2 * np.pi, np.pi])


def test_single_stratum_limit_is_own_volumes():
    P = StratPoset({"M": 2})
    vols = StratVolumes(P, {"M": [2.0, 0.0, 4.0]}, {"M": 2})
    assert conjectured_limit(vols, ConstructibleFunction.constant(P, 1)) == [2.0, 0.0, 4.0]


def test_volume_validation():
    P = interval_poset()
    with pytest.raises(StratError, match="vanish"):
        StratVolumes(P, {"interior": [0, 1], "left": [1, 1], "right": [1]}, {"interior": -1, "left": 1, "right": 1})
    with pytest.raises(StratError):
        StratVolumes(P, {"interior": [0, 1]}, {"interior": -1})
    with pytest.raises(StratError):
        conjectured_limit(point_volumes(), ConstructibleFunction.constant(P, 1))


def test_map_table_validation():
    with pytest.raises(StratError):
        MapModel(point_poset(), point_poset(), {"pt": {"nowhere": 1}})
    with pytest.raises(StratError):
        MapModel(point_poset(), point_poset(), {"pt": {"pt": 0.5}})


def test_json_documents(tmp_path):
    f = sphere_to_disk()
    path = tmp_path / "map.json"
    path.write_text(json.dumps(f.to_json()))
    doc = load_strat(path)
    assert doc["map"].table == f.table and doc["poset"] == f.source

    P = interval_poset()
    data = P.to_json()
    data["F"] = {"interior": 1, "left": 2, "right": 3}
    path = tmp_path / "f.json"
    path.write_text(json.dumps(data))
    doc = load_strat(path)
    assert doc["F"].values == data["F"] and "map" not in doc
