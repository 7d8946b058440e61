import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clfcbf.errors import InfeasibleQP
from clfcbf.models import CircularObstacleCbf, QuadraticClf, builtin_system
from clfcbf.nominal import NominalGains, assemble_nominal
from clfcbf.qp import Constraint, QpProblem, QpSolution, kkt_residuals, solve_active_set


def random_problem(rng, dim=None, rows=None):
    dim = dim or int(rng.integers(1, 5))
    rows = int(rng.integers(0, 4)) if rows is None else rows
    w = rng.uniform(0.2, 5.0, dim)
    z0 = rng.normal(size=dim) * 2
    cons = []
    for i in range(rows):
        a = rng.normal(size=dim)
        # feasible by construction: z0 satisfies every row
        b = float(a @ z0) + rng.uniform(0.0, 1.0)
        if rng.random() < 0.5:
            cons.append(Constraint(a, b, "<=", f"r{i}"))
        else:
            cons.append(Constraint(-a, -b, ">=", f"r{i}"))
    return QpProblem(w, tuple(cons))


def pad(prob, dim=4, rows=3):
    """Embed a problem in a fixed shape: extra variables get unit weight and
    zero coefficients, extra rows read 0 <= 1. Neither changes the argmin."""
    A, b = prob.normalized()
    Ap = np.zeros((rows, dim))
    bp = np.ones(rows)
    Ap[: A.shape[0], : A.shape[1]] = A
    bp[: b.shape[0]] = b
    w = np.ones(dim)
    w[: prob.dim] = prob.weights
    return Ap, bp, w


def projected_gradient(problems, iters=5000):
    """Oracle: accelerated projected gradient ascent on the dual, batched.

    With L(z, lam) = z^T W z + lam^T (A z - b) the inner minimizer is
    z = -W^-1 A^T lam / 2 and the dual gradient is A z - b; the projection is
    onto lam >= 0. The step is 1/L for each problem's dual Lipschitz constant.
    """
    A, b, w = (np.array(v) for v in zip(*(pad(p) for p in problems)))
    winv = 1.0 / w
    M = 0.5 * np.einsum("kij,kj,klj->kil", A, winv, A)
    step = 1.0 / np.maximum(np.linalg.eigvalsh(M)[:, -1], 1e-12)
    lam = np.zeros(b.shape)
    y, t = lam.copy(), 1.0
    for _ in range(iters):
        z = -0.5 * winv * np.einsum("kij,ki->kj", A, y)
        new = np.maximum(0.0, y + step[:, None] * (np.einsum("kij,kj->ki", A, z) - b))
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = new + (t - 1) / t_new * (new - lam)
        lam, t = new, t_new
    z = -0.5 * winv * np.einsum("kij,ki->kj", A, lam)
    return [zi[: p.dim] for zi, p in zip(z, problems)]


def test_no_rows():
    sol = solve_active_set(QpProblem(np.array([1.0, 2.0])))
    np.testing.assert_array_equal(sol.z, [0, 0])
    assert sol.active == ()


def test_validation():
    with pytest.raises(ValueError):
        QpProblem(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        QpProblem(np.ones(2), (Constraint(np.ones(3), 0.0),))
    with pytest.raises(ValueError):
        QpProblem(np.ones(2), tuple(Constraint(np.ones(2), 0.0) for _ in range(4)))
    with pytest.raises(ValueError):
        Constraint(np.ones(2), 0.0, "==")
    with pytest.raises(ValueError):
        QpProblem(np.ones(2), (Constraint(np.array([np.inf, 0.0]), 0.0),))


def test_nominal_examples(V, h, integrator, gains):
    sol = solve_active_set(assemble_nominal(integrator, V, h, gains, np.zeros(2)))
    np.testing.assert_allclose(sol.z, 0.0, atol=1e-15)
    sol = solve_active_set(assemble_nominal(integrator, V, h, gains, np.array([0.0, -3.0])))
    np.testing.assert_allclose(sol.z[:2], [0.0, 4.5 / 9.2 * 3.0], atol=1e-12)
    assert sol.active == (True, False)
    A, b = assemble_nominal(integrator, V, h, gains, np.array([0.0, -3.0])).normalized()
    u = sol.z
    assert b[1] - A[1] @ u == pytest.approx(8.0706521739, abs=1e-9)


def test_infeasible():
    # 0 * z >= 1 cannot hold
    prob = QpProblem(np.ones(2), (Constraint(np.zeros(2), 1.0, ">="),))
    with pytest.raises(InfeasibleQP):
        solve_active_set(prob)
    prob = QpProblem(np.ones(1), (Constraint([1.0], -1.0, "<="), Constraint([1.0], 1.0, ">=")))
    with pytest.raises(InfeasibleQP):
        solve_active_set(prob)


def test_kkt_residual_examples(rng):
    prob = QpProblem(np.array([1.0, 2.0]), (Constraint([1.0, 1.0], 1.0, ">="),))
    sol = solve_active_set(prob)
    assert max(kkt_residuals(prob, sol)) <= 1e-12
    bumped = QpSolution(sol.z + 1e-3, sol.multipliers, sol.active, sol.objective)
    assert kkt_residuals(prob, bumped)[0] >= 1e-4
    flipped = QpSolution(sol.z, -sol.multipliers, sol.active, sol.objective)
    assert kkt_residuals(prob, flipped)[2] == pytest.approx(abs(sol.multipliers[0]))


def test_certificates_on_random_problems(rng):
    for _ in range(1000):
        prob = random_problem(rng)
        sol = solve_active_set(prob)
        stat, primal, dual, compl = kkt_residuals(prob, sol)
        assert stat <= 1e-9 and primal <= 1e-9 and dual <= 1e-10 and compl <= 1e-8
        assert sol.objective == pytest.approx(prob.objective(sol.z), abs=1e-12)


def test_against_projected_gradient(rng):
    problems = [random_problem(rng, rows=int(rng.integers(1, 4))) for _ in range(1000)]
    for prob, z in zip(problems, projected_gradient(problems)):
        sol = solve_active_set(prob)
        assert abs(prob.objective(z) - sol.objective) <= 1e-6 * (1 + sol.objective)
        assert np.max(np.abs(z - sol.z)) <= 1e-4


def test_row_scaling_invariance(rng):
    for _ in range(300):
        prob = random_problem(rng, rows=int(rng.integers(1, 4)))
        scaled = QpProblem(prob.weights, tuple(
            Constraint(r.coeffs * s, r.rhs * s, r.sense, r.label)
            for r, s in zip(prob.rows, rng.uniform(1e-3, 1e3, len(prob.rows)))
        ))
        np.testing.assert_allclose(solve_active_set(scaled).z, solve_active_set(prob).z, atol=1e-9)


def test_deleting_a_row_never_increases_objective(rng):
    for _ in range(300):
        prob = random_problem(rng, rows=int(rng.integers(1, 4)))
        full = solve_active_set(prob).objective
        for i in range(len(prob.rows)):
            fewer = QpProblem(prob.weights, prob.rows[:i] + prob.rows[i + 1:])
            assert solve_active_set(fewer).objective <= full + 1e-12 * (1 + full)


def test_lambda_equals_p_w_on_nominal(V, h, gains, rng):
    sys = builtin_system("f1")
    for _ in range(300):
        x = rng.uniform(-6, 6, 2)
        if h.value(x) < 0:
            continue
        sol = solve_active_set(assemble_nominal(sys, V, h, gains, x))
        assert abs(sol.multipliers[0] - gains.p * sol.z[-1]) <= 1e-9 * (1 + abs(sol.multipliers[0]))


@given(st.floats(0.1, 10), st.floats(-10, 10), st.floats(0.1, 10))
def test_single_row_closed_form(w, b, a):
    # min w z^2 s.t. a z >= b: z = max(0, b / a)
    sol = solve_active_set(QpProblem(np.array([w]), (Constraint([a], b, ">="),)))
    assert sol.z[0] == pytest.approx(max(0.0, b / a), abs=1e-12)


def test_tiny_row_is_not_degenerate():
    # a row scaled down to 1e-9 still pins the solution
    prob = QpProblem(np.ones(2), (Constraint(np.array([1e-9, 0.0]), 1e-9, ">="),))
    np.testing.assert_allclose(solve_active_set(prob).z, [1.0, 0.0])
