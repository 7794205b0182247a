import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_inner_min, grid_inner_sup, power_return
from robustpack import robust_mdp as rm


def draw(seed, S=None, A=None, gamma=None):
    rng = np.random.default_rng(seed)
    S = S or int(rng.integers(2, 6))
    A = A or int(rng.integers(1, 4))
    gamma = gamma or float(rng.choice([0.8, 0.9, 0.95]))
    mdp = rm.random_mdp(rng, S, A, gamma)
    pi = rng.dirichlet(np.ones(A), size=S)
    return rng, mdp, pi


def feasible_setup(rng, mdp, pi, alpha=None):
    alpha = alpha if alpha is not None else float(rng.uniform(0.1, 1.0))
    rho_w = float(rng.uniform(0, 0.5))
    Pw = rm.worst_case_kernel(mdp, pi, rho_w)
    need = alpha * rm.model_discrepancy(mdp.P, Pw)
    rho_prime = need + float(rng.uniform(0, 0.8))
    return alpha, Pw, rho_prime


# distances and returns ---------------------------------------------------------


def test_tv_distance_examples():
    assert rm.tv_distance([1, 0], [0, 1]) == 1
    assert rm.tv_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert rm.tv_distance([0.5, 0.5], [0.8, 0.2]) == pytest.approx(0.3)
    with pytest.raises(rm.DimensionMismatch):
        rm.tv_distance([1, 0], [1, 0, 0])


def test_model_discrepancy():
    rng, mdp, _ = draw(1, 4, 2)
    P = mdp.P
    assert rm.model_discrepancy(P, P) == 0
    Q = P.copy()
    Q[2, 1] = P[2, 1] * 0.0
    Q[2, 1, 0] = 1.0
    assert rm.model_discrepancy(P, Q) == pytest.approx(rm.tv_distance(P[2, 1], Q[2, 1]))
    P2 = rm.random_mdp(rng, 4, 2, 0.9).P
    loop = max(0.5 * sum(abs(P[s, a, t] - P2[s, a, t]) for t in range(4)) for s in range(4) for a in range(2))
    assert rm.model_discrepancy(P, P2) == pytest.approx(loop, abs=1e-15)
    with pytest.raises(rm.DimensionMismatch):
        rm.model_discrepancy(P, P[:3])


def test_policy_return_examples():
    one = rm.FiniteMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9)
    assert rm.policy_return(one, np.array([0])) == pytest.approx(10.0)
    zero = rm.FiniteMDP(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 0.9)
    assert rm.policy_return(zero, np.array([0, 1, 0])) == 0.0


def test_policy_return_matches_power_iteration():
    rng, mdp, pi = draw(5, 4, 2, 0.9)
    mu0 = rng.dirichlet(np.ones(4))
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    r_pi = (pi * mdp.r).sum(1)
    # 0.9^400 is far below the tolerance; more steps change nothing
    assert rm.policy_return(mdp, pi, mu0=mu0) == pytest.approx(power_return(P_pi, r_pi, 0.9, mu0, 400), abs=1e-8)


def test_mdp_validation():
    with pytest.raises(ValueError):
        rm.FiniteMDP(np.full((2, 1, 2), 0.6), np.zeros((2, 1)), 0.9)
    with pytest.raises(ValueError):
        rm.FiniteMDP(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), 1.0)
    with pytest.raises(rm.DimensionMismatch):
        rm.FiniteMDP(np.full((2, 1, 2), 0.5), np.zeros((3, 1)), 0.9)
    with pytest.raises(ValueError):
        rm.RobustConfig(alpha=0.0)
    assert rm.RobustConfig(alpha=0.5, rho=0.4).rho_prime == pytest.approx(0.6)


# robust operator ---------------------------------------------------------------


def test_tv_ball_min_examples():
    assert rm.tv_ball_min([1, 0], [0.5, 0.5], 0.2)[0] == pytest.approx(0.3)
    assert rm.tv_ball_min([1, 0], [0.5, 0.5], 0.2)[0] == pytest.approx(grid_inner_min([1, 0], [0.5, 0.5], 0.2)[0], abs=1e-9)
    assert rm.tv_ball_min([3, 1, 2], [0.2, 0.3, 0.5], 1.0)[0] == 1.0
    val, p = rm.tv_ball_min([2, 2], [0.4, 0.6], 0.5)
    assert val == 2 and p.tolist() == [0.4, 0.6]


def test_robust_bellman_limits():
    rng, mdp, pi = draw(2, 4, 2)
    V = rng.normal(size=4)
    assert np.allclose(rm.robust_bellman(mdp, V, pi, 0.0), rm.bellman(mdp, V, pi))
    full = rm.robust_bellman(mdp, V, pi, 1.0)
    assert np.allclose(full, (pi * (mdp.r + mdp.gamma * V.min())).sum(1))


def test_worst_case_kernel_examples():
    rng, mdp, pi = draw(3, 3, 2)
    assert np.array_equal(rm.worst_case_kernel(mdp, pi, 0.0), mdp.P)
    # constant reward in every state gives a constant robust value; nothing moves
    flat = rm.FiniteMDP(mdp.P, np.ones((3, 2)), 0.9)
    assert np.allclose(rm.worst_case_kernel(flat, pi, 0.3), mdp.P)
    two = rm.FiniteMDP(np.full((2, 1, 2), 0.5), np.array([[1.0], [0.0]]), 0.5)
    Pw = rm.worst_case_kernel(two, np.array([0, 0]), 0.2)
    assert np.allclose(Pw[:, 0], [[0.3, 0.7], [0.3, 0.7]])


def test_robust_value_below_nominal():
    for seed in range(20):
        rng, mdp, pi = draw(seed)
        robust = rm.fixed_point(mdp, pi, rm.RobustConfig(rho_w=0.3), operator="robust").V
        nominal = rm.policy_values(mdp, pi)
        assert np.all(robust <= nominal + 1e-9)


# inner problems ----------------------------------------------------------------


def test_inner_sup_examples():
    p0 = np.array([0.2, 0.5, 0.3])
    V = np.array([1.0, -2.0, 4.0])
    val, p = rm.inner_sup_direct(V, p0, p0, 0.7, 0.0)
    assert val == pytest.approx(p0 @ V) and p == pytest.approx(p0)
    assert rm.inner_sup_direct(V, p0, [0.5, 0.25, 0.25], 0.7, 1.7)[0] == pytest.approx(4.0)
    val, p = rm.inner_sup_direct([1, 0], [0.5, 0.5], [0.1, 0.9], 1.0, 1.0)
    assert val == pytest.approx(0.8, abs=1e-12) and p == pytest.approx([0.8, 0.2])
    ref, _ = grid_inner_sup([1, 0], [0.5, 0.5], [0.1, 0.9], 1.0, 1.0)
    assert abs(val - ref) <= 1e-9


def test_inner_dual_examples():
    p0 = np.array([0.2, 0.5, 0.3])
    V = np.array([1.0, -2.0, 4.0])
    assert rm.inner_sup_dual(V, p0, p0, 0.4, 0.0)[0] == pytest.approx(p0 @ V)
    val, dual = rm.inner_sup_dual([1, 0], [0.5, 0.5], [0.1, 0.9], 1.0, 0.5)
    assert val == pytest.approx(0.8, abs=1e-12)
    assert dual.mu == pytest.approx(dual.mu1 + 1.0 * dual.mu2, abs=1e-9)
    for c in (-3.0, 0.0, 2.5):
        assert rm.inner_sup_dual(np.full(3, c), p0, [0.1, 0.1, 0.8], 0.5, 0.6)[0] == pytest.approx(c)


def test_infeasible_radius():
    with pytest.raises(rm.InfeasibleRadius):
        rm.inner_sup_direct([1, 0], [1, 0], [0, 1], 1.0, 0.5)
    with pytest.raises(rm.InfeasibleRadius):
        rm.inner_sup_dual([1, 0], [1, 0], [0, 1], 1.0, 0.2)
    rng, mdp, pi = draw(4, 3, 2)
    Pw = rm.worst_case_kernel(mdp, pi, 0.5)
    with pytest.raises(rm.InfeasibleRadius, match=r"\(s=\d, a=\d\)"):
        rm.adjustable_bellman(mdp, np.ones(3), pi, Pw, 1.0, 0.0)


def test_dual_multipliers_satisfy_their_identities():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n = int(rng.integers(2, 8))
        V, p0, pw = rng.normal(size=n), rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        a = float(rng.uniform(0.1, 1))
        rho = (a * rm.tv_distance(p0, pw) + rng.uniform(0, 1)) / (1 + a)
        _, d = rm.inner_sup_dual(V, p0, pw, a, rho)
        assert np.allclose(d.mu, d.mu1 + a * d.mu2, atol=1e-9)
        assert d.lam >= max(0, np.max(V - d.mu1), np.max(V - d.mu2)) - 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_direct_equals_dual(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    V, p0, pw = rng.normal(size=n) * 3, rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    a = float(rng.uniform(0.05, 1))
    rho_prime = a * rm.tv_distance(p0, pw) + float(rng.uniform(0, 2))
    d, p = rm.inner_sup_direct(V, p0, pw, a, rho_prime)
    u, _ = rm.inner_sup_dual(V, p0, pw, a, rho_prime / (1 + a))
    assert abs(d - u) <= 1e-6
    assert rm.tv_distance(p, p0) + a * rm.tv_distance(p, pw) <= rho_prime + 1e-9
    assert d >= p0 @ V - 1e-9
    if rm.tv_distance(pw, p0) <= rho_prime:
        assert d >= pw @ V - 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), step=st.sampled_from([1e-3]))
def test_two_point_direct_matches_grid(seed, step):
    rng = np.random.default_rng(seed)
    V, p0, pw = rng.normal(size=2), rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
    a = float(rng.uniform(0.05, 1))
    rho_prime = a * rm.tv_distance(p0, pw) + float(rng.uniform(0, 1))
    ref, _ = grid_inner_sup(V, p0, pw, a, rho_prime, step)
    got, _ = rm.inner_sup_direct(V, p0, pw, a, rho_prime)
    # the grid optimum is a feasible point within one step of the true one
    assert ref - 1e-12 <= got <= ref + step * np.abs(V).sum() + 1e-12


# adjustable operator -------------------------------------------------------------


def test_adjustable_examples():
    rng, mdp, pi = draw(6, 3, 2)
    V = rng.normal(size=3)
    for form in ("direct", "dual"):
        assert np.allclose(rm.adjustable_bellman(mdp, V, pi, mdp.P, 0.5, 0.0, form), rm.bellman(mdp, V, pi))
        ones = rm.FiniteMDP(mdp.P, np.ones((3, 2)), mdp.gamma)
        Pw = rm.worst_case_kernel(ones, pi, 0.2)
        assert np.allclose(rm.adjustable_bellman(ones, np.zeros(3), pi, Pw, 0.5, 0.4, form), 1.0)
    with pytest.raises(ValueError):
        rm.adjustable_bellman(mdp, V, pi, mdp.P, 0.5, 0.0, "primal")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_adjustable_operator_properties(seed):
    rng, mdp, pi = draw(seed)
    alpha, Pw, rho_prime = feasible_setup(rng, mdp, pi)
    S = mdp.n_states
    V1, V2 = rng.normal(size=S) * 4, rng.normal(size=S) * 4
    c = float(rng.normal() * 3)
    for form in ("direct", "dual"):
        T = lambda v: rm.adjustable_bellman(mdp, v, pi, Pw, alpha, rho_prime, form)
        T1, T2 = T(V1), T(V2)
        assert np.abs(T1 - T2).max() <= mdp.gamma * np.abs(V1 - V2).max() + 1e-9
        assert np.allclose(T(V1 + c), T1 + mdp.gamma * c, atol=1e-9)
        lo = np.minimum(V1, V2)
        assert np.all(T(lo) <= T1 + 1e-9) and np.all(T(lo) <= T2 + 1e-9)
    assert np.allclose(rm.adjustable_bellman(mdp, V1, pi, Pw, alpha, rho_prime, "direct"), rm.adjustable_bellman(mdp, V1, pi, Pw, alpha, rho_prime, "dual"), atol=1e-6)


# fixed points ----------------------------------------------------------------------


def test_one_state_fixed_point():
    mdp = rm.FiniteMDP(np.ones((1, 2, 1)), np.array([[2.0, 1.0]]), 0.8)
    for op in ("bellman", "robust", "adjustable"):
        vf = rm.fixed_point(mdp, np.array([0]), rm.RobustConfig(alpha=0.5, rho=0.2, rho_w=0.3), operator=op)
        assert vf.V == pytest.approx([10.0], abs=1e-9)


def test_fixed_point_unique_and_contracting():
    rng, mdp, pi = draw(8, 4, 2, 0.9)
    alpha, Pw, rho_prime = feasible_setup(rng, mdp, pi)
    cfg = rm.RobustConfig(alpha, rho_prime / (1 + alpha), 0.0)
    a = rm.fixed_point(mdp, pi, cfg, Pw=Pw, V0=rng.normal(size=4) * 10, record=True)
    b = rm.fixed_point(mdp, pi, cfg, Pw=Pw, V0=rng.normal(size=4) * 10, form="dual")
    k = rm.fixed_point(mdp, pi, cfg, Pw=Pw, method="kernel")
    assert np.abs(a.V - b.V).max() < 1e-8 and np.abs(a.V - k.V).max() < 1e-8
    errs = [np.abs(v - k.V).max() for v in a.trajectory]
    for e0, e1 in zip(errs, errs[1:]):
        assert e1 <= mdp.gamma * e0 + 1e-9
    assert np.abs(a.V).max() <= mdp.r_max / (1 - mdp.gamma) + 1e-9


def test_fixed_point_non_convergence():
    rng, mdp, pi = draw(8, 4, 2, 0.95)
    with pytest.raises(rm.NonConvergence):
        rm.fixed_point(mdp, pi, operator="bellman", max_iter=3)


# return bound ------------------------------------------------------------------------


def test_bound_equality_when_kernels_coincide():
    rng, mdp, pi = draw(10)
    chk = rm.return_bound_check(mdp, pi, mdp.P, mdp.P, mdp.P, 0.6)
    assert chk.holds and chk.lhs == pytest.approx(chk.rhs, abs=1e-12)
    assert chk.lhs == pytest.approx(1.6 * rm.policy_return(mdp, pi))


def test_bound_slack_for_disjoint_kernels():
    S = 3
    P0 = np.zeros((S, 1, S))
    P0[:, 0, 0] = 1.0
    Pm = np.zeros((S, 1, S))
    Pm[:, 0, 1] = 1.0
    mdp = rm.FiniteMDP(P0, np.array([[1.0], [0.5], [-1.0]]), 0.9)
    pi = np.zeros(S, dtype=int)
    chk = rm.return_bound_check(mdp, pi, P0, P0, Pm, 1.0)
    drop = 2 * 0.9 * 1.0 * 2 / 0.1**2
    assert chk.rhs == pytest.approx(2 * rm.policy_return(mdp, pi, Pm) - drop)
    assert chk.holds


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bound_holds_for_random_kernels(seed):
    rng, mdp, pi = draw(seed)
    shape = mdp.P.shape
    Pw = rng.dirichlet(np.ones(shape[2]), size=shape[:2])
    Pm = rng.dirichlet(np.ones(shape[2]) * 0.3, size=shape[:2])
    assert rm.return_bound_check(mdp, pi, mdp.P, Pw, Pm, float(rng.uniform(0.01, 1))).holds


# policy iteration -----------------------------------------------------------------------


def enumerate_policies(S, A):
    return [np.array(p) for p in itertools.product(range(A), repeat=S)]


def test_ar2l_without_uncertainty_is_nominal_optimal():
    for seed in range(15):
        rng, mdp, _ = draw(seed, int(np.random.default_rng(seed).integers(2, 5)), 2)
        res = rm.ar2l_policy_iteration(mdp, rm.RobustConfig(alpha=1.0, rho=0.0, rho_w=0.0))
        values = {tuple(p): rm.policy_values(mdp, p) for p in enumerate_policies(mdp.n_states, 2)}
        best = max(values, key=lambda k: values[k].sum())
        assert np.all(values[best] >= np.array([v for v in values.values()]) - 1e-9)
        assert tuple(res.policy) == best
        assert np.array_equal(res.policy, rm.optimal_policy(mdp))


def test_ar2l_with_small_alpha_and_no_attack_is_nominal_optimal():
    rng, mdp, _ = draw(21, 4, 2)
    res = rm.ar2l_policy_iteration(mdp, rm.RobustConfig(alpha=1e-6, rho=0.0, rho_w=0.0))
    assert np.array_equal(res.policy, rm.optimal_policy(mdp))


def test_ar2l_against_robust_and_enumeration():
    wins = total = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        S = int(rng.integers(2, 5))
        mdp = rm.random_mdp(rng, S, 2, 0.9)
        alpha, rho_w = float(rng.uniform(0.2, 1)), float(rng.uniform(0.05, 0.4))
        rho = alpha * rho_w / (1 + alpha) + float(rng.uniform(0, 0.1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", rm.CycleDetected)
            res = rm.ar2l_policy_iteration(mdp, rm.RobustConfig(alpha, rho, rho_w))
        J = lambda p: rm.ar2l_objective(mdp, p, alpha, rho_w)
        scores = [J(p) for p in enumerate_policies(S, 2)]
        assert min(scores) - 1e-9 <= res.objective <= max(scores) + 1e-9
        assert res.objective == pytest.approx(J(res.policy))
        robust = rm.robust_policy_iteration(mdp, rho_w)
        total += 1
        wins += res.objective >= J(robust) - 1e-9
    assert wins >= 0.9 * total
