"""Bayes Wardrop equilibrium and obedient signal design.

The Wardrop flow is the uninformed benchmark: a single state-independent
flow vector equalizing prior-expected latencies on all used routes. It is
the unique minimizer of the Beckmann potential, solved here by projected
gradient with backtracking.

Signal design searches for the obedient policy of minimum social cost.
The obedience constraints are bilinear in the policy, so the problem is
nonconvex; we run a multi-start local search (penalized projected-gradient
descent followed by an exact local polish) and keep the best feasible
policy. Global optimality is not claimed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .game import (
    GameConfig,
    ObedienceReport,
    SignalPolicy,
    check_obedience,
    social_cost,
)


class SolverError(RuntimeError):
    """Raised when a solve does not reach its tolerance; carries diagnostics."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class WardropSolution:
    flow: np.ndarray
    expected_cost: float
    kkt_residual: float


@dataclass(frozen=True)
class DesignResult:
    policy: SignalPolicy
    cost: float
    obedience_report: ObedienceReport
    iterations: int
    restarts: int


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    valid = u - css / ks > 0
    rho = ks[valid][-1]
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def _prior_avg_coeffs(cfg: GameConfig) -> np.ndarray:
    """abar[d, i] = prior-expected coefficient on flow^d for route i."""
    return np.einsum("w,dwi->di", cfg.prior, cfg.coeffs)


def expected_latency(cfg: GameConfig, flows: np.ndarray) -> np.ndarray:
    """Prior-expected latency per route at the given flow vector."""
    f = np.asarray(flows, dtype=float)
    if f.shape != (cfg.n_routes,):
        raise ValueError(f"flows: expected {cfg.n_routes} entries, got shape {f.shape}")
    abar = _prior_avg_coeffs(cfg)
    acc = abar[-1].copy()
    for d in range(abar.shape[0] - 2, -1, -1):
        acc = acc * f + abar[d]
    return acc


def _beckmann(abar: np.ndarray, f: np.ndarray) -> float:
    """sum_i integral_0^{f_i} of the prior-expected latency."""
    degrees = np.arange(abar.shape[0])
    powers = f[None, :] ** (degrees[:, None] + 1)
    return float(np.sum(abar / (degrees[:, None] + 1) * powers))


def _kkt_residual(cfg: GameConfig, f: np.ndarray, zero_tol: float = 1e-12) -> float:
    lat = expected_latency(cfg, f)
    used = f > zero_tol
    if not used.any():
        return float("inf")
    return float(max(0.0, lat[used].max() - lat.min()))


def bayes_wardrop(
    cfg: GameConfig,
    tol: float = 1e-9,
    max_iter: int = 200_000,
    trace: list | None = None,
) -> WardropSolution:
    """Unique Wardrop flow under the prior, by projected gradient descent.

    Exactness is asserted through the KKT residual (max excess of any used
    route's expected latency over the minimum), not iteration count. When
    ``trace`` is a list, the Beckmann objective of every accepted iterate
    is appended to it.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    abar = _prior_avg_coeffs(cfg)
    n = cfg.n_routes
    f = np.full(n, 1.0 / n)
    obj = _beckmann(abar, f)
    if trace is not None:
        trace.append(obj)
    # gradient Lipschitz bound on the simplex: max slope of expected latency
    degrees = np.arange(1, abar.shape[0])
    lip = float(np.max((abar[1:] * degrees[:, None]).sum(axis=0))) if abar.shape[0] > 1 else 1.0
    step = 1.0 / max(lip, 1e-12)

    for _ in range(max_iter):
        grad = expected_latency(cfg, f)
        if _kkt_residual(cfg, f) <= tol:
            break
        t = step
        while True:
            cand = project_simplex(f - t * grad)
            cand_obj = _beckmann(abar, cand)
            if cand_obj < obj - 1e-16 or np.allclose(cand, f, atol=1e-16):
                break
            t *= 0.5
            if t < 1e-18:
                break
        if np.allclose(cand, f, atol=1e-16):
            # stationary under projection; residual check below decides
            break
        f, obj = cand, cand_obj
        if trace is not None:
            trace.append(obj)

    residual = _kkt_residual(cfg, f)
    if residual > tol:
        # first-order steps bottom out near machine precision of the
        # objective; equalize latencies exactly on the support instead
        polished = _equalize_on_support(cfg, abar)
        if polished is not None and _kkt_residual(cfg, polished) < residual:
            f = polished
            residual = _kkt_residual(cfg, f)
            if trace is not None:
                trace.append(_beckmann(abar, f))
    if residual > tol:
        raise SolverError(
            f"wardrop solve stalled at KKT residual {residual:.3e} (tol {tol:.0e})",
            flow=f,
            residual=residual,
        )
    lat = expected_latency(cfg, f)
    return WardropSolution(flow=f, expected_cost=float(f @ lat), kkt_residual=residual)


def _poly_inverse(abar_i: np.ndarray, level: float) -> float:
    """Flow at which route i's prior-expected latency reaches the level (capped at 1)."""
    lo, hi = 0.0, 1.0

    def val(x: float) -> float:
        acc = abar_i[-1]
        for d in range(len(abar_i) - 2, -1, -1):
            acc = acc * x + abar_i[d]
        return acc

    if val(lo) >= level:
        return 0.0
    if val(hi) <= level:
        return 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if val(mid) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _equalize_on_support(cfg: GameConfig, abar: np.ndarray) -> np.ndarray | None:
    """Exact Wardrop flow by scanning supports in zero-flow latency order."""
    n = cfg.n_routes
    order = np.argsort(abar[0], kind="stable")
    for k in range(1, n + 1):
        support = order[:k]
        lo = float(abar[0][support].min())
        hi = float(max(expected_latency(cfg, np.eye(n)[i])[i] for i in support)) + 1.0
        for _ in range(200):
            level = 0.5 * (lo + hi)
            total = sum(_poly_inverse(abar[:, i], level) for i in support)
            if total < 1.0:
                lo = level
            else:
                hi = level
        level = 0.5 * (lo + hi)
        f = np.zeros(n)
        for i in support:
            f[i] = _poly_inverse(abar[:, i], level)
        total = f.sum()
        if total <= 0:
            continue
        f /= total
        unused_ok = all(abar[0][j] >= level - 1e-9 for j in order[k:])
        if unused_ok:
            return f
    return None


# -- obedience-constrained design ------------------------------------------


def _slack_matrix(cfg: GameConfig, pi: np.ndarray) -> np.ndarray:
    lat = np.broadcast_to(cfg.coeffs[-1], pi.shape).copy()
    for d in range(cfg.coeffs.shape[0] - 2, -1, -1):
        lat = lat * pi + cfg.coeffs[d]
    weighted = cfg.prior[:, None] * pi
    cross = weighted.T @ lat
    slack = cross - np.diag(cross)[:, None]
    np.fill_diagonal(slack, 0.0)
    return slack


def _design_objective_grad(cfg: GameConfig, pi: np.ndarray, rho: float):
    """Penalized social cost and its gradient w.r.t. the policy table."""
    coeffs = cfg.coeffs
    mu = cfg.prior
    # latency and marginal latency at the policy's own flows
    lat = np.broadcast_to(coeffs[-1], pi.shape).copy()
    for d in range(coeffs.shape[0] - 2, -1, -1):
        lat = lat * pi + coeffs[d]
    dlat = np.zeros_like(pi)
    for d in range(1, coeffs.shape[0]):
        dlat += d * coeffs[d] * pi ** (d - 1)

    cost = float(np.einsum("w,wi,wi->", mu, pi, lat))
    grad = mu[:, None] * (lat + pi * dlat)

    weighted = mu[:, None] * pi
    cross = weighted.T @ lat
    slack = cross - np.diag(cross)[:, None]
    np.fill_diagonal(slack, 0.0)
    viol = np.maximum(0.0, -slack)  # viol[i, j] > 0 where pair (i, j) is violated

    if viol.any():
        cost += rho * float((viol**2).sum())
        # d slack_ij / d pi_wi = mu_w (lat_wj - lat_wi) - mu_w pi_wi dlat_wi
        # d slack_ij / d pi_wj = mu_w pi_wi dlat_wj
        coef = -2.0 * rho * viol  # multiplies grad slack
        row_sum = coef.sum(axis=1)  # over j, for the pi_wi terms
        col_dot = pi @ coef  # col_dot[w, j] = sum_i pi_wi coef_ij
        grad += mu[:, None] * (
            (lat @ coef.T) - row_sum[None, :] * (lat + pi * dlat)
        )
        grad += mu[:, None] * col_dot * dlat
    return cost, grad


def _penalized_descent(cfg: GameConfig, pi0: np.ndarray, max_iter: int = 400) -> tuple[np.ndarray, int]:
    pi = pi0.copy()
    iters = 0
    for rho in (1e2, 1e4, 1e6):
        obj, grad = _design_objective_grad(cfg, pi, rho)
        step = 1.0
        for _ in range(max_iter):
            iters += 1
            cand = np.vstack([project_simplex(row) for row in pi - step * grad])
            cand_obj, cand_grad = _design_objective_grad(cfg, cand, rho)
            if cand_obj < obj - 1e-14:
                pi, obj, grad = cand, cand_obj, cand_grad
                step = min(step * 1.5, 1e3)
            else:
                step *= 0.5
                if step < 1e-14:
                    break
    return pi, iters


def _polish(cfg: GameConfig, pi0: np.ndarray) -> tuple[np.ndarray, int]:
    """Exact local solve: minimize social cost s.t. obedience and simplex rows."""
    nw, n = pi0.shape

    def unpack(x):
        return x.reshape(nw, n)

    def cost(x):
        c, g = _design_objective_grad(cfg, unpack(x), rho=0.0)
        return c, g.ravel()

    def slack_vec(x):
        s = _slack_matrix(cfg, unpack(x))
        return s[~np.eye(n, dtype=bool)]

    constraints = [
        {"type": "ineq", "fun": slack_vec},
        {
            "type": "eq",
            "fun": lambda x: unpack(x).sum(axis=1) - 1.0,
        },
    ]
    res = minimize(
        lambda x: cost(x),
        pi0.ravel(),
        jac=True,
        bounds=[(0.0, 1.0)] * (nw * n),
        constraints=constraints,
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-12},
    )
    pi = np.clip(unpack(res.x), 0.0, None)
    sums = pi.sum(axis=1, keepdims=True)
    pi = np.where(sums > 0, pi / sums, 1.0 / n)
    return pi, int(res.nit)


def design_signal(
    cfg: GameConfig,
    restarts: int = 32,
    feas_tol: float = 1e-8,
    seed: int = 0,
) -> DesignResult:
    """Best obedient policy found by multi-start local search.

    Each restart projects a random table onto per-state simplices, runs
    penalized projected-gradient descent on social cost with a quadratic
    penalty on violated obedience slacks, then polishes with an exact
    local solve. Deterministic given the seed; candidates are ranked by
    (cost, restart index).
    """
    if restarts < 1:
        raise ValueError(f"restarts must be positive, got {restarts}")
    rng = np.random.default_rng(seed)
    nw, n = cfg.n_states, cfg.n_routes

    starts = [np.full((nw, n), 1.0 / n)]
    zero_flow_lat = cfg.coeffs[0]
    greedy = np.zeros((nw, n))
    greedy[np.arange(nw), np.argmin(zero_flow_lat, axis=1)] = 1.0
    starts.append(greedy)
    while len(starts) < restarts:
        starts.append(np.vstack([project_simplex(row) for row in rng.random((nw, n)) * 2 - 0.5]))

    best = None  # (cost, restart_idx, pi, report, iters)
    most_feasible = None  # (violation, pi, report)
    total_iters = 0
    for idx, start in enumerate(starts[:restarts]):
        pi, iters = _penalized_descent(cfg, start)
        pi, polish_iters = _polish(cfg, pi)
        total_iters += iters + polish_iters
        policy = SignalPolicy(pi)
        report = check_obedience(cfg, policy, tol=feas_tol)
        if report.obedient:
            cost = social_cost(cfg, policy)
            if best is None or (cost, idx) < (best[0], best[1]):
                best = (cost, idx, policy, report)
        else:
            violation = -report.min_slack
            if most_feasible is None or violation < most_feasible[0]:
                most_feasible = (violation, policy, report)

    if best is None:
        violation, policy, report = most_feasible
        raise SolverError(
            f"no obedient policy found in {restarts} restarts; "
            f"closest candidate violates by {violation:.3e} minutes",
            policy=policy,
            report=report,
        )
    cost, _, policy, report = best
    return DesignResult(
        policy=policy,
        cost=cost,
        obedience_report=report,
        iterations=total_iters,
        restarts=restarts,
    )
