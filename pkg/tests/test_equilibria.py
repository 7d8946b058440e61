import math
from functools import lru_cache

import numpy as np
import pytest

from clfcbf.equilibria import (
    closed_loop_residual, find_boundary_equilibria, find_interior_equilibria, full_matrix_test,
    integrator_boundary_jacobian, numeric_closed_loop_jacobian, stability_tangent_test,
    verdict_from_eigenvalues,
)
from clfcbf.errors import NotBoundaryPoint, UnsupportedBoundary
from clfcbf.models import CircularObstacleCbf, QuadraticClf, builtin_system
from clfcbf.nominal import NominalController, NominalGains
from clfcbf.simulate import SimConfig, simulate_nominal

V0 = QuadraticClf((6.0, 1.0))
H0 = CircularObstacleCbf((0.0, 3.0), 1.5)
G0 = NominalGains()


@lru_cache(maxsize=None)
def boundary(name):
    return find_boundary_equilibria(builtin_system(name), V0, H0, G0)


@lru_cache(maxsize=None)
def interior(name):
    return find_interior_equilibria(builtin_system(name), V0, G0, h=H0)


def test_boundary_set():
    reps = boundary("integrator")
    locs = np.array([r.location for r in reps])
    # oracle: on the circle, 6 x1 (x2 - 3) = x1 x2 gives x1 = 0 or x2 = 3.6
    x1 = math.sqrt(1.5 ** 2 - 0.6 ** 2)
    expected = np.array([[x1, 3.6], [0.0, 4.5], [-x1, 3.6]])
    assert len(reps) == 3
    np.testing.assert_allclose(locs, expected, atol=1e-9)
    top = reps[1]
    assert top.c == pytest.approx(3.0, abs=1e-9)
    assert top.tangent_form_value == pytest.approx(3.0, abs=1e-9)
    assert top.verdict == "asymptotically_stable"
    for r in (reps[0], reps[2]):
        assert r.c == pytest.approx(6.0, abs=1e-9)
        assert r.tangent_form_value == pytest.approx(-4.2, abs=1e-9)
        assert r.verdict == "unstable"
    # (0, 1.5) has c < 0 and is not reported
    assert not any(np.linalg.norm(r.location - [0.0, 1.5]) < 1e-6 for r in reps)


def test_disagreement_is_flagged_at_the_stable_point():
    top = boundary("integrator")[1]
    assert top.full_matrix_verdict == "unstable"
    assert top.disagreement


def test_analytic_jacobian_matches_numeric():
    for r in boundary("integrator"):
        num = np.sort(np.real(r.eigenvalues))
        ana = np.array(r.extra["analytic_eigenvalues"])
        np.testing.assert_allclose(num, ana, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(boundary("integrator")[1].extra["analytic_eigenvalues"], (-151.875, -1.0))


def test_mirror_symmetry():
    reps = boundary("integrator")
    a, b = reps[0], reps[2]
    np.testing.assert_allclose(a.location * [-1, 1], b.location, atol=1e-9)
    assert a.c == pytest.approx(b.c, abs=1e-9)


def test_swapped_weights_make_the_top_point_unstable():
    V = QuadraticClf((1.0, 6.0))
    reps = find_boundary_equilibria(builtin_system("integrator"), V, H0, G0)
    assert len(reps) == 1
    r = reps[0]
    np.testing.assert_allclose(r.location, [0.0, 4.5], atol=1e-9)
    assert r.c == pytest.approx(18.0, abs=1e-9)
    assert r.tangent_form_value == pytest.approx(-17.0, abs=1e-9)
    assert r.verdict == "unstable"


def test_radial_clf_centred_obstacle_is_a_continuum():
    V = QuadraticClf((2.0, 2.0))
    h = CircularObstacleCbf((0.0, 0.0), 1.0)
    reps = find_boundary_equilibria(builtin_system("integrator"), V, h, G0)
    assert len(reps) == 1
    assert reps[0].note == "degenerate continuum"
    assert reps[0].verdict == "marginal"


def test_boundary_checks():
    with pytest.raises(NotBoundaryPoint):
        stability_tangent_test(V0, H0, np.array([0.0, 5.0]), 3.0, G0)
    with pytest.raises(UnsupportedBoundary):
        find_boundary_equilibria(builtin_system("integrator", 3), QuadraticClf((1.0, 2.0, 3.0)),
                                 CircularObstacleCbf((0.0, 3.0, 0.0), 1.5), G0)


def test_tangent_and_full_tests_direct():
    x = np.array([0.0, 4.5])
    assert stability_tangent_test(V0, H0, x, 3.0, G0) == ("asymptotically_stable", pytest.approx(3.0))
    assert full_matrix_test(V0, H0, x, 3.0)[0] == "unstable"
    J = integrator_boundary_jacobian(V0, H0, x, 3.0, G0)
    Jn = numeric_closed_loop_jacobian(NominalController(builtin_system("integrator"), V0, H0, G0), x)
    np.testing.assert_allclose(J, Jn, rtol=1e-5, atol=1e-5)


def test_verdicts():
    assert verdict_from_eigenvalues([-1.0, -2.0]) == "asymptotically_stable"
    assert verdict_from_eigenvalues([-1.0, 0.5]) == "unstable"
    assert verdict_from_eigenvalues([-1.0, 0.0]) == "marginal"


def test_integrator_has_no_interior_roots():
    assert interior("integrator") == []


@pytest.mark.parametrize("name, stable", [
    ("f1", (0.03107278, 0.1864367)),
    ("f2", (0.02827472, 0.16964834)),
])
def test_interior_roots_nonlinear(name, stable):
    reps = interior(name)
    assert reps
    for r in reps:
        assert r.residual <= 1e-9
        assert r.extra["closed_loop_residual"] <= 1e-9
    locs = [r.location for r in reps if r.verdict == "asymptotically_stable"]
    assert any(np.linalg.norm(x - stable) <= 1e-6 for x in locs)


@pytest.mark.parametrize("name", ["f1", "f2"])
def test_nonlinear_boundary_roots_are_equilibria(name):
    ctrl = NominalController(builtin_system(name), V0, H0, G0)
    reps = boundary(name)
    assert reps
    for r in reps:
        assert abs(H0.value(r.location)) <= 1e-9
        assert closed_loop_residual(ctrl, r.location) <= 1e-8


def test_ring_concordance():
    """Every run from a ring of starts ends at a reported stable point or heads for the origin.

    Near the origin V' ~ -2 p V^2, so V(t) ~ 1/(2 p t): about 2e-3 at t = 50,
    too slow to enter a 1e-2 ball but unmistakable.
    """
    sys = builtin_system("integrator")
    stable = [tuple(r.location) for r in boundary("integrator") if r.verdict == "asymptotically_stable"]
    cfg = SimConfig(dt=1e-2, t_final=50.0)
    to_boundary = 0
    for k in range(12):
        th = 2 * math.pi * k / 12 + 0.1
        rec = simulate_nominal(sys, V0, H0, G0, (6 * math.cos(th), 6 * math.sin(th)), cfg, stable)
        if rec.terminal.kind == "converged":
            p = np.array(rec.terminal.point)
            assert any(np.linalg.norm(p - s) <= 1e-9 for s in stable)
            to_boundary += 1
        else:
            assert rec.V[-1] <= 2.0 / (2 * G0.p * cfg.t_final)
    assert to_boundary >= 1
