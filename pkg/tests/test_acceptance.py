"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

The lines are printed as the tests run and repeated in the pytest terminal
summary. Wall-clock budgets are part of each verdict.
"""

import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from tubelab import metric, strat
from tubelab.euclid import steiner_fit, unit_ball_volume
from tubelab.experiments import run_experiment
from tubelab.mesh import angle_defects, bernig_inequality, euler_char, genus_two, icosphere, torus_grid
from tubelab.polytope import boundary_area, box, cube, embed, intrinsic_volumes_polytope


def report(number, title, ok, detail, seconds, budget):
    in_time = seconds < budget
    verdict = ok and in_time
    line = (f"{'PASS' if verdict else 'FAIL'}  [{number:2d}] {title}: {detail} "
            f"({seconds:.1f} s, budget {budget:g} s)")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert in_time, line


def test_01_unit_ball_volumes():
    t0 = time.perf_counter()
    closed = [1, 2, math.pi, 4 * math.pi / 3, math.pi ** 2 / 2, 8 * math.pi ** 2 / 15,
              math.pi ** 3 / 6, 16 * math.pi ** 3 / 105, math.pi ** 4 / 24,
              32 * math.pi ** 4 / 945, math.pi ** 5 / 120]
    err = max(abs(unit_ball_volume(j) - c) / c for j, c in enumerate(closed))
    # kappa_j = (2 pi / j) kappa_{j-2}
    rec = max(abs(unit_ball_volume(j) - 2 * math.pi / j * unit_ball_volume(j - 2))
              / unit_ball_volume(j) for j in range(2, 40))
    report(1, "kappa_j closed form and recursion", err <= 1e-12 and rec <= 1e-12,
           f"max rel err {err:.1e}, recursion {rec:.1e}", time.perf_counter() - t0, 1)


def test_02_steiner_fit_square_and_disk():
    t0 = time.perf_counter()
    eps = [0.1, 0.2, 0.5, 1.0, 2.0]
    sq, r1 = steiner_fit([(e, 1 + 4 * e + math.pi * e * e) for e in eps], 2)
    dk, r2 = steiner_fit([(e, math.pi * (1 + e) ** 2) for e in eps], 2)
    e1 = max(abs(a - b) for a, b in zip(sq, (1, 2, 1)))
    e2 = max(abs(a - b) for a, b in zip(dk, (1, math.pi, math.pi)))
    ok = e1 < 1e-9 and e2 < 1e-9 and r1 < 1e-9 and r2 < 1e-9
    report(2, "steiner_fit square/disk", ok,
           f"coef err {max(e1, e2):.1e}, residuals {max(r1, r2):.1e}", time.perf_counter() - t0, 1)


def test_03_unit_cube():
    t0 = time.perf_counter()
    P = cube(3)
    exact = intrinsic_volumes_polytope(P)
    e_exact = max(abs(a - b) for a, b in zip(exact, (1, 3, 3, 1)))
    mc = intrinsic_volumes_polytope(P, "mc", eps=0.5, samples=10**6, seed=2024)
    e_mc = max(abs(a - b) / b for a, b in zip(mc, (1, 3, 3, 1)))
    half_area = abs(exact[2] - boundary_area(P) / 2)
    ok = e_exact <= 1e-9 and e_mc <= 0.01 and half_area == 0.0 and exact[3] == pytest.approx(1, abs=1e-12)
    report(3, "cube intrinsic volumes", ok,
           f"exact err {e_exact:.1e}, MC max rel err {e_mc:.2%}, |V_2 - area/2| = {half_area:.1e}",
           time.perf_counter() - t0, 30)


def test_04_embedding_stability():
    t0 = time.perf_counter()
    square = box([1.0, 1.0])
    base = intrinsic_volumes_polytope(square)
    e_exact, e_mc = 0.0, 0.0
    for k in (1, 2):
        P = embed(square, k)
        v = intrinsic_volumes_polytope(P)
        e_exact = max(e_exact, max(abs(a - b) for a, b in zip(v, base)))
        m = intrinsic_volumes_polytope(P, "mc", eps=0.5, samples=10**6, seed=100 + k)
        e_mc = max(e_mc, max(abs(a - b) / b for a, b in zip(m, base)))
    report(4, "square in R^3 and R^4", e_exact <= 1e-9 and e_mc <= 0.02,
           f"exact change {e_exact:.1e}, MC max rel change {e_mc:.2%}", time.perf_counter() - t0, 60)


def test_05_discrete_gauss_bonnet():
    t0 = time.perf_counter()
    errs = {}
    for name, mesh, chi in (("icosphere", icosphere(1.0, 4), 2),
                            ("torus grid", torus_grid(1.0, 1.0, 16, 16), 0),
                            ("genus 2", genus_two(), -2)):
        assert euler_char(mesh) == chi
        errs[name] = abs(angle_defects(mesh).total_defect - 2 * math.pi * chi)
    worst = max(errs.values())
    report(5, "angle defects sum to 2 pi chi", worst < 1e-9,
           ", ".join(f"{k} {v:.1e}" for k, v in errs.items()), time.perf_counter() - t0, 1)


@pytest.fixture(scope="module")
def weyl():
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_experiment("weyl-independence", seed=7)
    return res, time.perf_counter() - t0


@pytest.mark.slow
def test_06_vanishing_v1_and_bernig(weyl):
    res, weyl_seconds = weyl
    t0 = time.perf_counter()
    row3 = next(r for r in res.rows if r["N"] == 3)
    v1_ok = abs(row3["V1"]) <= 3 * row3["sigma1"]
    sc_err = max(abs(bernig_inequality(icosphere(1.0, k), 1.0).lhs - 8 * math.pi) for k in range(6))
    fine = bernig_inequality(icosphere(1.0, 5), 1.0)
    rhs_err = abs(fine.rhs - 8 * math.pi) / (8 * math.pi)
    ok = v1_ok and sc_err < 1e-9 and rhs_err <= 0.01 and fine.holds
    report(6, "V_1 vanishing and curvature inequality", ok,
           f"V_1 = {row3['V1']:.3f} (sigma {row3['sigma1']:.3f}), "
           f"int Sc err {sc_err:.1e}, RHS off 8 pi by {rhs_err:.2%}, holds {fine.holds}",
           weyl_seconds + time.perf_counter() - t0, 300)


@pytest.mark.slow
def test_07_weyl_independence(weyl):
    res, seconds = weyl
    r3, r4 = (next(r for r in res.rows if r["N"] == N) for N in (3, 4))
    four_pi = 4 * math.pi
    d3, d4 = abs(r3["V2"] - four_pi) / four_pi, abs(r4["V2"] - four_pi) / four_pi
    agree = abs(r3["V2"] - r4["V2"]) / r3["V2"]
    report(7, "V_2 of the unit sphere in R^3 vs R^4", d3 <= 0.02 and d4 <= 0.02 and agree <= 0.03,
           f"V_2 = {r3['V2']:.4f} / {r4['V2']:.4f}, off 4 pi by {d3:.2%} / {d4:.2%}, "
           f"disagree {agree:.2%}", seconds, 300)


def random_space(rng, n):
    x = rng.normal(size=(n, int(rng.integers(1, 4))))
    return metric.FiniteMetricSpace(np.linalg.norm(x[:, None] - x[None], axis=2))


def test_08_gh_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    pt = metric.FiniteMetricSpace.point()
    point_err = max(abs(metric.gh_exact(pt, X) - X.diameter / 2)
                    for X in (random_space(rng, int(rng.integers(1, 7))) for _ in range(50)))

    order_ok, brute_err, brute_checked = True, 0.0, 0
    for _ in range(50):
        A, B = (random_space(rng, int(rng.integers(1, 6))) for _ in range(2))
        exact = metric.gh_exact(A, B)
        if A.size * B.size <= 16:
            brute_err = max(brute_err, abs(metric.gh_brute_force(A, B) - exact))
            brute_checked += 1
        lo, hi = metric.gh_lower(A, B), metric.gh_upper(A, B, seed=int(rng.integers(1 << 30)))
        order_ok &= lo <= exact + 1e-12 and exact <= hi + 1e-12

    slack = -math.inf
    for _ in range(50):
        A, B, C = (random_space(rng, int(rng.integers(1, 5))) for _ in range(3))
        slack = max(slack, metric.gh_exact(A, C) - metric.gh_exact(A, B) - metric.gh_exact(B, C))
    ok = point_err == 0.0 and order_ok and brute_err < 1e-12 and slack <= 1e-9
    report(8, "GH point/ordering/triangle", ok,
           f"point err {point_err:.1e}, lower<=exact<=upper {order_ok}, "
           f"brute-force agreement {brute_err:.1e} on {brute_checked} pairs, "
           f"worst triangle excess {slack:.1e}", time.perf_counter() - t0, 120)


def test_09_collapse():
    t0 = time.perf_counter()
    sph = run_experiment("collapse-sphere", seed=9)
    tor = run_experiment("collapse-torus", seed=9)
    v = {**{f"sphere:{k}": x for k, x in sph.verdicts.items()},
         **{f"torus:{k}": x for k, x in tor.verdicts.items()}}
    failed = [k for k, x in v.items() if not x]
    report(9, "collapse to a point", not failed,
           f"{len(v) - len(failed)}/{len(v)} checks" + (f", failed {failed}" if failed else ""),
           time.perf_counter() - t0, 120)


def test_10_product_boxes():
    t0 = time.perf_counter()
    res = run_experiment("product-box", seed=0)
    err = max(r["max_err_vs_e_i"] for r in res.rows)
    margin = min(r["bound_3eps"] - r["max_gap_vs_square"] for r in res.rows)
    report(10, "boxes [0,1]^2 x [0,eps]", res.passed,
           f"max err vs e_i {err:.1e}, min margin to 3 eps {margin:.1e}", time.perf_counter() - t0, 1)


def test_11_strat_suite():
    t0 = time.perf_counter()
    res = run_experiment("sphere-interval-strat", seed=0)
    rng = np.random.default_rng(11)
    trips = 0
    for _ in range(1000):
        P = strat.random_poset(rng, int(rng.integers(1, 9)))
        F = strat.ConstructibleFunction(P, {e: int(rng.integers(-5, 6)) for e in P.ids})
        trips += strat.from_coeffs(P, strat.to_coeffs(F)) == F
    failed = [k for k, x in res.verdicts.items() if not x]
    report(11, "push-forward, constraint, limits, round trip", not failed and trips == 1000,
           f"{len(res.verdicts) - len(failed)}/{len(res.verdicts)} checks, round trip {trips}/1000",
           time.perf_counter() - t0, 5)


def test_12_polygon_continuity():
    t0 = time.perf_counter()
    res = run_experiment("hausdorff-continuity", seed=0)
    last = res.rows[-1]
    report(12, "inscribed m-gons to the disk", res.passed,
           f"monotone {res.verdicts['monotone_in_m']}, max rel err at m={last['m']} "
           f"{last['max_rel_err']:.2e}", time.perf_counter() - t0, 1)
