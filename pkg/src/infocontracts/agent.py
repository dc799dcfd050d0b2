"""The agent's problem: optimal experiments for a given contract.

Three routes:

* `best_response_shannon` -- the logit fixed point for mutual-information
  costs, computed by iterating on the decision marginal from a uniform
  start (deterministic, no randomness);
* `best_response_capacity` -- wraps the above in a bisection on the
  capacity dual mu so the cost constraint just binds;
* `best_response_general` -- any posterior-separable cost: concavification
  of the net-utility envelope for two states, entropic mirror ascent per
  state column otherwise.

`agent_kkt_residual` certifies a candidate experiment: within each state
the quantity pi(theta) b(d,theta) - dc/dp(d|theta) must be constant across
decisions at an optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import geometry
from .costs import ShannonCost
from .errors import BoundaryPointError, NoConvergenceError
from .model import Contract, Experiment, marginal

MAX_ITER = 100_000
MARGINAL_TOL = 1e-12
DROP_TOL = 1e-14


@dataclass(frozen=True)
class AgentSolution:
    """An optimal experiment with its capacity dual and certification data."""

    experiment: Experiment
    mu: float
    rho: np.ndarray
    value: float
    cost: float
    iterations: int
    residual: float


def _logit_iterate(weights, prior, tol, max_iter):
    """Marginal iteration q <- sum_theta pi(theta) P(d|theta) for the logit map.

    Accepts a fixed point when the marginal change either drops below `tol`
    or stops shrinking at the rounding noise floor (weak contraction
    amplifies float jitter above `tol` for near-uninformative weights).
    """
    n_d = weights.shape[0]
    q = np.full(n_d, 1.0 / n_d)
    noise_events = 0
    prev_delta = np.inf
    for it in range(1, max_iter + 1):
        w = q[:, None] * weights
        p = w / w.sum(axis=0, keepdims=True)
        q_new = p @ prior
        delta = np.max(np.abs(q_new - q))
        q = q_new
        if delta < tol:
            return p, q, it
        # pure geometric decay shrinks every step; a non-shrinking tiny
        # delta means the iteration is cycling on float rounding noise
        if delta < 1e-9 and delta >= prev_delta:
            noise_events += 1
            if noise_events >= 20:
                return p, q, it
        prev_delta = delta
    if delta < 1e-10:
        return p, q, max_iter
    raise NoConvergenceError(
        f"logit fixed point not converged after {max_iter} iterations "
        f"(last marginal change {delta:.3e})"
    )


def best_response_shannon(b: Contract, prior, mu=0.0, scale=1.0,
                          tol=MARGINAL_TOL, max_iter=MAX_ITER) -> AgentSolution:
    """Optimal experiment under mutual-information cost and capacity dual mu.

    Solves p(d|theta) proportional to p(d) exp(b(d,theta)/(scale (1+mu)))
    with marginal consistency, starting from the uniform marginal.
    Decisions whose marginal collapses below 1e-14 are dropped from the
    consideration set and the iteration restarts once without them.
    """
    if mu < 0:
        raise ValueError("capacity dual mu must be nonnegative")
    pi = np.asarray(prior, float)
    temp = scale * (1.0 + mu)
    # per-state stabilization: the column softmax is shift invariant
    z = b.payments / temp
    weights = np.exp(z - z.max(axis=0, keepdims=True))

    active = np.arange(b.n_decisions)
    p_act, q_act, iters = _logit_iterate(weights, pi, tol, max_iter)
    if np.any(q_act < DROP_TOL) and len(active) > 1:
        keep = q_act >= DROP_TOL
        active = active[keep]
        p_act, q_act, extra = _logit_iterate(weights[keep], pi, tol, max_iter)
        iters += extra

    cond = np.zeros_like(b.payments)
    cond[active] = p_act
    exp = Experiment(cond)
    model = ShannonCost(scale)
    cost = model.value(exp, pi)
    e_b = float(np.sum(cond * pi[None, :] * b.payments))
    residual, rho = _support_residual(b, pi, model, cond, active, mu)
    return AgentSolution(experiment=exp, mu=float(mu), rho=rho,
                         value=e_b - cost, cost=cost,
                         iterations=iters, residual=residual)


def _support_residual(b, pi, model, cond, active, mu):
    """KKT spread restricted to the active consideration set."""
    m = cond[active] @ pi
    grad = model.scale * pi[None, :] * np.log(cond[active] / m[:, None])
    vals = pi[None, :] * b.payments[active] - (1.0 + mu) * grad
    residual = float(np.max(vals.max(axis=0) - vals.min(axis=0)))
    rho = vals.mean(axis=0)
    return residual, rho


def best_response_capacity(b: Contract, prior, capacity, model,
                           cost_tol=1e-8, max_doublings=200) -> AgentSolution:
    """Optimal experiment subject to cost <= capacity.

    Returns the unconstrained optimum with mu = 0 when capacity is slack;
    otherwise bisects the dual mu until the cost meets the capacity.  For
    non-Shannon posterior-separable models the dual search runs on the
    penalized problem with the cost scaled by (1 + mu).
    """
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    pi = np.asarray(prior, float)
    shannon = isinstance(model, ShannonCost)

    def solve(mu):
        if shannon:
            return best_response_shannon(b, pi, mu=mu, scale=model.scale)
        sol = best_response_general(b, pi, model.scaled(1.0 + mu))
        cost = model.value(sol.experiment, pi)
        e_b = float(np.sum(sol.experiment.conditionals * pi[None, :] * b.payments))
        return AgentSolution(experiment=sol.experiment, mu=mu, rho=sol.rho,
                             value=e_b - cost, cost=cost,
                             iterations=sol.iterations, residual=sol.residual)

    free = solve(0.0)
    if free.cost <= capacity:
        return free

    lo, hi = 0.0, 1.0
    sol = solve(hi)
    n = 0
    while sol.cost >= capacity:
        lo, hi = hi, 2.0 * hi
        sol = solve(hi)
        n += 1
        if n > max_doublings:
            raise NoConvergenceError("capacity dual bracket not found")
    while True:
        mid = 0.5 * (lo + hi)
        sol = solve(mid)
        if abs(sol.cost - capacity) < cost_tol:
            return sol
        if sol.cost > capacity:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * (1.0 + hi):
            return sol


def agent_kkt_residual(b: Contract, prior, model, p: Experiment,
                       mu=0.0, eps=1e-9):
    """Max within-state spread of pi(theta) b - (1+mu) dc/dp and implied rho.

    Decisions outside the consideration set (rows uniformly below `eps`)
    are excluded; a row that is zero in some states but not others is a
    genuine boundary point and raises.
    """
    pi = np.asarray(prior, float)
    cond = p.conditionals
    row_min = cond.min(axis=1)
    row_max = cond.max(axis=1)
    dropped = row_max <= eps
    if np.any((row_min <= eps) & ~dropped):
        raise BoundaryPointError("experiment touches the boundary on a live decision")
    active = np.flatnonzero(~dropped)
    sub = Experiment(cond[active] / cond[active].sum(axis=0, keepdims=True))
    grad = model.gradient(sub, pi)
    vals = pi[None, :] * b.payments[active] - (1.0 + mu) * grad
    residual = float(np.max(vals.max(axis=0) - vals.min(axis=0)))
    return residual, vals.mean(axis=0)


def _experiment_from_contacts(b, pi, contacts, weights, labels):
    """Turn contact posteriors q (prob of state 2) into an experiment."""
    n_d = b.n_decisions
    if len(contacts) == 1 or labels[0] == labels[-1]:
        cond = np.zeros((n_d, 2))
        cond[labels[0]] = 1.0
        return Experiment(cond)
    cond = np.zeros((n_d, 2))
    for q, w, d in zip(contacts, weights, labels):
        post = np.array([1.0 - q, q])
        cond[d] += w * post / pi
    # numerical cleanup: columns must sum to one exactly
    cond = np.clip(cond, 0.0, None)
    cond /= cond.sum(axis=0, keepdims=True)
    return Experiment(cond)


def _polish_contacts(b, model, contacts, labels):
    """Newton polish of the two-contact tangency system.

    Unknowns are the two contact posteriors; the conditions are equal
    slopes of the two net utilities and a common tangent line.  Falls back
    to the grid answer when the solve fails.
    """
    d1, d2 = labels
    h = 1e-6

    def net(d, q):
        post = np.array([1.0 - q, q])
        return float(b.payments[d] @ post) + model.upsilon(post)

    def dnet(d, q):
        return (net(d, q + h) - net(d, q - h)) / (2 * h)

    def eqs(x):
        q1, q2 = x
        s1, s2 = dnet(d1, q1), dnet(d2, q2)
        return [s1 - s2, (net(d1, q1) - s1 * q1) - (net(d2, q2) - s2 * q2)]

    try:
        sol = optimize.root(eqs, list(contacts), method="hybr", tol=1e-12)
    except Exception:
        return contacts
    q = np.sort(sol.x)
    if not sol.success or np.any(q <= 0) or np.any(q >= 1):
        return contacts
    if np.max(np.abs(q - np.sort(contacts))) > 0.01:
        # polish wandered off the grid solution; distrust it
        return contacts
    return q


def best_response_general(b: Contract, prior, model, grid=None,
                          tol=1e-8, max_iter=20_000) -> AgentSolution:
    """Optimal experiment for any posterior-separable cost model.

    Two states: concavify the net-utility envelope at the prior and map
    the contact posteriors back to an experiment (with a Newton polish of
    the contact locations).  More states: entropic mirror ascent on each
    state column with step halving until the KKT residual drops below
    `tol`.
    """
    pi = np.asarray(prior, float)
    if b.n_states == 2:
        return _general_two_state(b, pi, model, grid)
    return _mirror_ascent(b, pi, model, tol, max_iter)


def _general_two_state(b, pi, model, grid):
    curve = geometry.net_utility_curve(b, model, grid=grid)
    conc = geometry.concavify(curve, float(pi[1]))
    labels = []
    for c in conc.contacts:
        idx = int(np.argmin(np.abs(curve.grid - c)))
        labels.append(int(curve.pieces[idx]))
    contacts = conc.contacts
    weights = conc.weights
    if len(contacts) == 2 and labels[0] != labels[1]:
        q1, q2 = _polish_contacts(b, model, contacts, labels)
        prior_q = float(pi[1])
        if q1 < prior_q < q2:
            w1 = (q2 - prior_q) / (q2 - q1)
            contacts, weights = np.array([q1, q2]), np.array([w1, 1.0 - w1])
    exp = _experiment_from_contacts(b, pi, contacts, weights, labels)
    cost = model.value(exp, pi)
    e_b = float(np.sum(exp.conditionals * pi[None, :] * b.payments))
    value = e_b - cost
    rho = np.zeros_like(pi)
    if np.min(exp.conditionals) > 1e-9:
        residual, rho = agent_kkt_residual(b, pi, model, exp)
    else:
        # boundary solution: certify through the geometry instead
        residual = abs(value + model.upsilon(pi) - conc.value)
    return AgentSolution(experiment=exp, mu=0.0, rho=rho, value=value,
                         cost=cost, iterations=len(curve.grid), residual=float(residual))


def _mirror_ascent(b, pi, model, tol, max_iter, floor=1e-10):
    n_d, n_s = b.payments.shape
    cond = np.full((n_d, n_s), 1.0 / n_d)

    def project(c):
        # keep iterates inside the gradient's domain; decisions pinned at
        # the floor are treated as dropped by the residual check
        c = np.clip(c, floor, None)
        return c / c.sum(axis=0, keepdims=True)

    def objective(c):
        exp = Experiment(c)
        return float(np.sum(c * pi[None, :] * b.payments)) - model.value(exp, pi)

    eta = 1.0
    f = objective(cond)
    residual = np.inf
    for it in range(1, max_iter + 1):
        exp = Experiment(cond)
        grad = pi[None, :] * b.payments - model.gradient(exp, pi)
        step = grad / pi[None, :]
        step -= step.max(axis=0, keepdims=True)
        accepted = False
        for _ in range(60):
            cand = project(cond * np.exp(eta * step))
            f_cand = objective(cand)
            if f_cand >= f - 1e-15:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        cond, f = cand, f_cand
        eta = min(eta * 1.5, 8.0)
        exp = Experiment(cond)
        try:
            residual, rho = agent_kkt_residual(b, pi, model, exp, eps=100 * floor)
        except BoundaryPointError:
            continue
        if residual < tol:
            cost = model.value(exp, pi)
            e_b = float(np.sum(cond * pi[None, :] * b.payments))
            return AgentSolution(experiment=exp, mu=0.0, rho=rho,
                                 value=e_b - cost, cost=cost,
                                 iterations=it, residual=residual)
    raise NoConvergenceError(
        f"mirror ascent stalled after {it} iterations (residual {residual:.3e})"
    )
