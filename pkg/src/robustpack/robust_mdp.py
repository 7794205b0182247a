"""Tabular robust MDP tools: TV balls, the robust and adjustable robust Bellman
operators, the return bound relating nominal, worst-case and mixture kernels,
and exact policy iteration for the adjustable robust objective.

Kernels are arrays ``P[s, a, s']``; policies are ``pi[s, a]`` (row-stochastic)
or integer action arrays for deterministic policies.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .lp import linprog

ROW_TOL = 1e-12


class DimensionMismatch(ValueError):
    pass


class InfeasibleRadius(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


class SingularSystem(np.linalg.LinAlgError):
    pass


class CycleDetected(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    """Nominal kernel ``P`` (S, A, S), reward ``r`` (S, A) and discount ``gamma`` < 1."""

    P: np.ndarray
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or r.shape != P.shape[:2]:
            raise DimensionMismatch(f"kernel {P.shape} and reward {r.shape} do not describe one MDP")
        _check_kernel(P)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.abs(self.r).max())


@dataclass(frozen=True)
class RobustConfig:
    """``alpha`` weights the worst case; ``rho`` is the normalized mixture radius."""

    alpha: float = 1.0
    rho: float = 0.0
    rho_w: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 0.0 <= self.rho_w <= 1.0:
            raise ValueError("rho_w must lie in [0, 1]")

    @property
    def rho_prime(self) -> float:
        return self.rho * (1.0 + self.alpha)


@dataclass
class DualSolution:
    lam: float
    mu1: np.ndarray
    mu2: np.ndarray
    mu: float


@dataclass
class ValueFunction:
    V: np.ndarray
    iterations: int
    residuals: List[float] = field(default_factory=list)
    trajectory: Optional[List[np.ndarray]] = None
    kernel: Optional[np.ndarray] = None


def _check_kernel(P):
    if np.any(P < -ROW_TOL) or np.any(np.abs(P.sum(axis=-1) - 1.0) > ROW_TOL * P.shape[-1] + 1e-15):
        raise ValueError("kernel rows must be non-negative and sum to 1")


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float, concentration: float = 1.0) -> FiniteMDP:
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return FiniteMDP(P, r, gamma)


def as_policy(pi, n_actions: Optional[int] = None) -> np.ndarray:
    """Return a (S, A) stochastic policy matrix; integer arrays are one-hot encoded."""
    pi = np.asarray(pi)
    if pi.ndim == 1:
        n_actions = int(pi.max()) + 1 if n_actions is None else n_actions
        out = np.zeros((len(pi), n_actions))
        out[np.arange(len(pi)), pi.astype(int)] = 1.0
        return out
    return pi.astype(float)


# distances -----------------------------------------------------------


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"distributions of shape {p.shape} and {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def model_discrepancy(P1, P2) -> float:
    """Largest per-(s, a) total variation distance between two kernels."""
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    if P1.shape != P2.shape:
        raise DimensionMismatch(f"kernels of shape {P1.shape} and {P2.shape}")
    return float(0.5 * np.abs(P1 - P2).sum(axis=-1).max())


# exact evaluation ------------------------------------------------------


def policy_return(mdp: FiniteMDP, pi, P=None, mu0=None) -> float:
    """Exact discounted return of ``pi`` under kernel ``P`` from start distribution ``mu0``."""
    return float(_start(mdp, mu0) @ policy_values(mdp, pi, P))


def policy_values(mdp: FiniteMDP, pi, P=None) -> np.ndarray:
    P = mdp.P if P is None else np.asarray(P, dtype=float)
    if P.shape != mdp.P.shape:
        raise DimensionMismatch(f"kernel {P.shape} does not match the MDP {mdp.P.shape}")
    pi = as_policy(pi, mdp.n_actions)
    P_pi = np.einsum("sa,sat->st", pi, P)
    r_pi = (pi * mdp.r).sum(axis=1)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi
    try:
        return np.linalg.solve(A, r_pi)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def _start(mdp, mu0):
    if mu0 is None:
        return np.full(mdp.n_states, 1.0 / mdp.n_states)
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (mdp.n_states,):
        raise DimensionMismatch("start distribution has the wrong length")
    return mu0


# robust operator -------------------------------------------------------


def tv_ball_min(V, p0, radius: float) -> Tuple[float, np.ndarray]:
    """Minimise E_p[V] over the TV ball of ``radius`` around ``p0``.

    Mass moves from the highest-valued states to the lowest-index minimiser
    of ``V``; states within round-off of the minimum never give mass, so a
    constant ``V`` returns ``p0`` unchanged.
    """
    V = np.asarray(V, dtype=float)
    p = np.array(p0, dtype=float)
    target = int(np.argmin(V))
    vmin = V[target] + 1e-12 * max(1.0, abs(V[target]))
    budget = float(radius)
    for j in np.argsort(-V, kind="stable"):
        if budget <= 0.0 or V[j] <= vmin:
            break
        move = min(budget, p[j])
        p[j] -= move
        p[target] += move
        budget -= move
    return float(p @ V), p


def _robust_q(mdp, V, rho_w):
    S, A = mdp.n_states, mdp.n_actions
    q = np.empty((S, A))
    Pw = np.empty_like(mdp.P)
    for s in range(S):
        for a in range(A):
            val, p = tv_ball_min(V, mdp.P[s, a], rho_w)
            q[s, a] = mdp.r[s, a] + mdp.gamma * val
            Pw[s, a] = p
    return q, Pw


def robust_bellman(mdp: FiniteMDP, V, pi, rho_w: float) -> np.ndarray:
    """One application of the robust operator (inner infimum over the TV ball)."""
    q, _ = _robust_q(mdp, np.asarray(V, dtype=float), rho_w)
    return (as_policy(pi, mdp.n_actions) * q).sum(axis=1)


def bellman(mdp: FiniteMDP, V, pi, P=None) -> np.ndarray:
    P = mdp.P if P is None else P
    q = mdp.r + mdp.gamma * P @ np.asarray(V, dtype=float)
    return (as_policy(pi, mdp.n_actions) * q).sum(axis=1)


def worst_case_kernel(mdp: FiniteMDP, pi, rho_w: float, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Minimising kernel of the robust operator at its fixed point for ``pi``."""
    if rho_w == 0.0:
        return mdp.P.copy()
    vf = fixed_point(mdp, pi, RobustConfig(rho_w=rho_w), operator="robust", tol=tol, max_iter=max_iter)
    _, Pw = _robust_q(mdp, vf.V, rho_w)
    return Pw


# adjustable operator ----------------------------------------------------


def _feasible(p0, pw, alpha, rho_prime, where=""):
    need = alpha * tv_distance(p0, pw)
    if rho_prime < need - 1e-12:
        raise InfeasibleRadius(
            f"radius {rho_prime:.6g} is below alpha * TV(P0, Pw) = {need:.6g}{where}"
        )


def inner_sup_direct(V, p0, pw, alpha: float, rho_prime: float) -> Tuple[float, np.ndarray]:
    """Maximise E_p[V] subject to TV(p, p0) + alpha * TV(p, pw) <= rho_prime.

    Solved as an LP over (p, t, u) with t >= |p - p0| and u >= |p - pw|.
    Returns the optimum and the maximising distribution.
    """
    V = np.asarray(V, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    pw = np.asarray(pw, dtype=float)
    if not (V.shape == p0.shape == pw.shape):
        raise DimensionMismatch("value and distributions must share one support")
    _feasible(p0, pw, alpha, rho_prime)
    n = len(V)
    I = np.eye(n)
    Z = np.zeros((n, n))
    c = np.concatenate([-V, np.zeros(2 * n)])
    A_ub = np.vstack(
        [
            np.hstack([I, -I, Z]),
            np.hstack([-I, -I, Z]),
            np.hstack([I, Z, -I]),
            np.hstack([-I, Z, -I]),
            np.concatenate([np.zeros(n), np.full(n, 0.5), np.full(n, 0.5 * alpha)])[None, :],
        ]
    )
    b_ub = np.concatenate([p0, -p0, pw, -pw, [rho_prime]])
    A_eq = np.concatenate([np.ones(n), np.zeros(2 * n)])[None, :]
    res = linprog(c, A_ub, b_ub, A_eq, [1.0])
    p = np.clip(res.x[:n], 0.0, None)
    p /= p.sum()
    return float(-res.fun), p


def inner_sup_dual(V, p0, pw, alpha: float, rho: float) -> Tuple[float, DualSolution]:
    """Dual form of :func:`inner_sup_direct` with normalized radius ``rho``.

    Minimises ``(E_p0[V - mu1]_+ + alpha E_pw[V - mu2]_+ + mu + lam rho (1 + alpha)) / (1 + alpha)``
    with ``mu2 = (mu - mu1) / alpha`` and ``lam >= max(V - mu1, V - mu2, 0)``,
    as an LP in (mu1, mu, lam) plus epigraph variables for the positive parts.
    """
    V = np.asarray(V, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    pw = np.asarray(pw, dtype=float)
    if not (V.shape == p0.shape == pw.shape):
        raise DimensionMismatch("value and distributions must share one support")
    rho_prime = rho * (1.0 + alpha)
    _feasible(p0, pw, alpha, rho_prime)
    n = len(V)
    # variables: mu1 (n, free), mu (free), lam, t (n), u (n)
    nv = 2 + 3 * n
    i_mu, i_lam = n, n + 1
    t0, u0 = n + 2, 2 * n + 2
    c = np.zeros(nv)
    c[i_mu] = 1.0
    c[i_lam] = rho_prime
    c[t0:u0] = p0
    c[u0:] = alpha * pw
    rows, rhs = [], []
    for i in range(n):
        # t_i >= V_i - mu1_i
        row = np.zeros(nv)
        row[i], row[t0 + i] = -1.0, -1.0
        rows.append(row), rhs.append(-V[i])
        # u_i >= V_i - (mu - mu1_i) / alpha
        row = np.zeros(nv)
        row[i], row[i_mu], row[u0 + i] = 1.0 / alpha, -1.0 / alpha, -1.0
        rows.append(row), rhs.append(-V[i])
        # lam >= V_i - mu1_i
        row = np.zeros(nv)
        row[i], row[i_lam] = -1.0, -1.0
        rows.append(row), rhs.append(-V[i])
        # lam >= V_i - mu2_i
        row = np.zeros(nv)
        row[i], row[i_mu], row[i_lam] = 1.0 / alpha, -1.0 / alpha, -1.0
        rows.append(row), rhs.append(-V[i])
    res = linprog(c, np.array(rows), np.array(rhs), free=list(range(n + 1)))
    x = res.x
    mu1 = x[:n].copy()
    mu = float(x[i_mu])
    mu2 = (mu - mu1) / alpha
    lam = float(max(0.0, np.max(V - mu1), np.max(V - mu2)))
    value = (
        p0 @ np.maximum(V - mu1, 0.0) + alpha * pw @ np.maximum(V - mu2, 0.0) + mu + lam * rho_prime
    ) / (1.0 + alpha)
    return float(value), DualSolution(lam=lam, mu1=mu1, mu2=mu2, mu=mu)


def _adjustable_q(mdp, V, Pw, alpha, rho_prime, form="direct", want_kernel=False):
    S, A = mdp.n_states, mdp.n_actions
    q = np.empty((S, A))
    Pm = np.empty_like(mdp.P) if want_kernel else None
    for s in range(S):
        for a in range(A):
            try:
                if form == "direct" or want_kernel:
                    val, p = inner_sup_direct(V, mdp.P[s, a], Pw[s, a], alpha, rho_prime)
                    if want_kernel:
                        Pm[s, a] = p
                else:
                    val, _ = inner_sup_dual(V, mdp.P[s, a], Pw[s, a], alpha, rho_prime / (1.0 + alpha))
            except InfeasibleRadius as exc:
                raise InfeasibleRadius(f"{exc} at (s={s}, a={a})") from None
            q[s, a] = mdp.r[s, a] + mdp.gamma * val
    return q, Pm


def adjustable_bellman(mdp: FiniteMDP, V, pi, Pw, alpha: float, rho_prime: float, form: str = "direct") -> np.ndarray:
    """One application of the adjustable robust operator.

    ``form`` selects the inner solver: ``"direct"`` (primal LP) or ``"dual"``.
    """
    if form not in ("direct", "dual"):
        raise ValueError(f"unknown form {form!r}")
    Pw = np.asarray(Pw, dtype=float)
    if Pw.shape != mdp.P.shape:
        raise DimensionMismatch("worst-case kernel does not match the MDP")
    q, _ = _adjustable_q(mdp, np.asarray(V, dtype=float), Pw, alpha, rho_prime, form)
    return (as_policy(pi, mdp.n_actions) * q).sum(axis=1)


def mixture_kernel(mdp: FiniteMDP, V, Pw, alpha: float, rho_prime: float) -> np.ndarray:
    """Per-(s, a) maximising distribution of the adjustable operator at ``V``."""
    _, Pm = _adjustable_q(mdp, np.asarray(V, dtype=float), np.asarray(Pw, dtype=float), alpha, rho_prime, want_kernel=True)
    return Pm


# fixed points -----------------------------------------------------------


def fixed_point(
    mdp: FiniteMDP,
    pi,
    config: RobustConfig = RobustConfig(),
    Pw=None,
    operator: str = "adjustable",
    form: str = "direct",
    method: str = "value",
    V0=None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    record: bool = False,
) -> ValueFunction:
    """Fixed point of the ``operator`` ("bellman", "robust" or "adjustable") for ``pi``.

    ``method="value"`` iterates the operator until successive iterates differ
    by less than ``tol``. ``method="kernel"`` (adjustable only) alternates an
    exact linear solve with choosing the maximising mixture kernel, then
    confirms the result with one operator application.
    """
    pi = as_policy(pi, mdp.n_actions)
    V = np.zeros(mdp.n_states) if V0 is None else np.array(V0, dtype=float)
    if operator == "bellman":
        op = lambda v: bellman(mdp, v, pi)
    elif operator == "robust":
        op = lambda v: robust_bellman(mdp, v, pi, config.rho_w)
    elif operator == "adjustable":
        if Pw is None:
            Pw = worst_case_kernel(mdp, pi, config.rho_w)
        op = lambda v: adjustable_bellman(mdp, v, pi, Pw, config.alpha, config.rho_prime, form)
    else:
        raise ValueError(f"unknown operator {operator!r}")

    if method == "kernel":
        if operator != "adjustable":
            raise ValueError("kernel iteration applies to the adjustable operator only")
        return _kernel_iteration(mdp, pi, Pw, config, op, V, tol, max_iter)
    if method != "value":
        raise ValueError(f"unknown method {method!r}")

    residuals = []
    traj = [V.copy()] if record else None
    for k in range(1, max_iter + 1):
        nxt = op(V)
        res = float(np.abs(nxt - V).max())
        residuals.append(res)
        V = nxt
        if record:
            traj.append(V.copy())
        if res < tol:
            return ValueFunction(V, k, residuals, traj)
    raise NonConvergence(f"no convergence after {max_iter} iterations (residual {residuals[-1]:.3e})")


def _kernel_iteration(mdp, pi, Pw, config, op, V, tol, max_iter):
    residuals = []
    last = None
    for k in range(1, max_iter + 1):
        Pm = mixture_kernel(mdp, V, Pw, config.alpha, config.rho_prime)
        V_new = policy_values(mdp, pi, Pm)
        residuals.append(float(np.abs(V_new - V).max()))
        V = V_new
        if residuals[-1] < tol or (last is not None and np.allclose(Pm, last, atol=1e-12, rtol=0.0)):
            break
        last = Pm
    else:
        raise NonConvergence(f"kernel iteration did not settle after {max_iter} rounds")
    # polish with a few operator steps; each one contracts the error by gamma
    for _ in range(max_iter):
        nxt = op(V)
        res = float(np.abs(nxt - V).max())
        residuals.append(res)
        V = nxt
        if res < tol:
            return ValueFunction(V, k, residuals, kernel=Pm)
    raise NonConvergence("kernel iteration result failed the residual check")


# return bound -------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool


def return_bound_check(mdp: FiniteMDP, pi, P0, Pw, Pm, alpha: float, mu0=None) -> BoundCheck:
    """Check eta(P0) + alpha eta(Pw) >= (1 + alpha) eta(Pm) - C (d(Pm, P0) + alpha d(Pm, Pw)).

    ``C = 2 gamma |r|_max / (1 - gamma)^2`` and ``d`` is :func:`model_discrepancy`.
    """
    g = mdp.gamma
    lhs = policy_return(mdp, pi, P0, mu0) + alpha * policy_return(mdp, pi, Pw, mu0)
    C = 2.0 * g * mdp.r_max / (1.0 - g) ** 2
    rhs = (1.0 + alpha) * policy_return(mdp, pi, Pm, mu0) - C * (
        model_discrepancy(Pm, P0) + alpha * model_discrepancy(Pm, Pw)
    )
    return BoundCheck(lhs, rhs, bool(lhs >= rhs - 1e-9))


# policy iteration -----------------------------------------------------------


@dataclass
class AR2LResult:
    policy: np.ndarray
    V: np.ndarray
    Pw: np.ndarray
    Pm: np.ndarray
    iterations: int
    objective: float
    cycle_detected: bool = False


def _greedy(q, tol=1e-10):
    # lowest action index among near-maximal ones
    return np.argmax(q >= q.max(axis=1, keepdims=True) - tol, axis=1)


def ar2l_objective(mdp: FiniteMDP, pi, alpha: float, rho_w: float, mu0=None) -> float:
    """Nominal return plus ``alpha`` times the worst-case return of ``pi``."""
    Pw = worst_case_kernel(mdp, pi, rho_w)
    return policy_return(mdp, pi, None, mu0) + alpha * policy_return(mdp, pi, Pw, mu0)


def ar2l_policy_iteration(
    mdp: FiniteMDP,
    config: RobustConfig,
    mu0=None,
    max_iter: int = 200,
    method: str = "kernel",
) -> AR2LResult:
    """Tabular policy iteration for the adjustable robust objective.

    Each round takes the worst-case kernel for the current policy, evaluates
    the policy under the adjustable operator (recording the maximising
    mixture kernel) and improves greedily on r + gamma E_Pm[V]. If policies
    start repeating, the best one seen by the weighted objective is returned
    with ``cycle_detected`` set and a :class:`CycleDetected` warning.
    """
    S = mdp.n_states
    policy = np.zeros(S, dtype=int)
    seen = {}
    history = []
    for it in range(1, max_iter + 1):
        Pw = worst_case_kernel(mdp, policy, config.rho_w)
        vf = fixed_point(mdp, policy, config, Pw=Pw, method=method)
        Pm = vf.kernel if vf.kernel is not None else mixture_kernel(mdp, vf.V, Pw, config.alpha, config.rho_prime)
        q = mdp.r + mdp.gamma * np.einsum("sat,t->sa", Pm, vf.V)
        history.append((policy.copy(), vf.V, Pw, Pm))
        seen[tuple(policy)] = it - 1
        new = _greedy(q)
        # keep the current action when it is still (near-)optimal
        cur = q[np.arange(S), policy]
        new = np.where(cur >= q.max(axis=1) - 1e-10, policy, new)
        if np.array_equal(new, policy):
            obj = ar2l_objective(mdp, policy, config.alpha, config.rho_w, mu0)
            return AR2LResult(policy, vf.V, Pw, Pm, it, obj)
        if tuple(new) in seen:
            warnings.warn("policy iteration is cycling; returning the best policy seen", CycleDetected)
            scored = [(ar2l_objective(mdp, h[0], config.alpha, config.rho_w, mu0), i) for i, h in enumerate(history)]
            obj, i = max(scored, key=lambda t: (t[0], -t[1]))
            pol, V, Pw_, Pm_ = history[i]
            return AR2LResult(pol, V, Pw_, Pm_, it, obj, cycle_detected=True)
        policy = new
    raise NonConvergence(f"policy iteration did not stabilise in {max_iter} rounds")


def robust_policy_iteration(mdp: FiniteMDP, rho_w: float, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Max-min robust policy: value iteration on max_a of the robust backup."""
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q, _ = _robust_q(mdp, V, rho_w)
        nxt = q.max(axis=1)
        if np.abs(nxt - V).max() < tol:
            return _greedy(q)
        V = nxt
    raise NonConvergence("robust value iteration did not converge")


def optimal_policy(mdp: FiniteMDP, max_iter: int = 1000) -> np.ndarray:
    """Nominal optimal deterministic policy by standard policy iteration."""
    policy = np.zeros(mdp.n_states, dtype=int)
    for _ in range(max_iter):
        V = policy_values(mdp, policy)
        q = mdp.r + mdp.gamma * mdp.P @ V
        cur = q[np.arange(mdp.n_states), policy]
        new = np.where(cur >= q.max(axis=1) - 1e-10, policy, _greedy(q))
        if np.array_equal(new, policy):
            return policy
        policy = new
    raise NonConvergence("policy iteration did not converge")
