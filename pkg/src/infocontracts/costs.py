"""Information-cost functions: values, gradients, and Hessians.

Three families, all posterior separable (cost = Upsilon(prior) minus the
expected Upsilon of the posteriors, for a concave uncertainty function
Upsilon):

* `ShannonCost` -- expected reduction in Shannon entropy (mutual
  information), everything analytic;
* `BregmanMatrixCost` -- expected Bregman divergence between posterior and
  prior, parametrized by an information cost matrix k(theta, theta', q)
  evaluated at posteriors (the Hessian is block diagonal across decisions);
* `PosteriorSeparableCost` -- a named or gridded uncertainty function,
  derivatives by central finite differences.

All entropic quantities are in nats.  Gradients of a cost on the product
of per-state simplexes are identified only up to a per-state constant;
each model reports its natural representative, and consumers must only
rely on within-state differences (which is what the agent's first-order
condition uses).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryPointError
from .model import Experiment, Garbling, garble, marginal, posterior_matrix

FD_STEP = 1e-5
INTERIOR_EPS = 1e-12


def entropy(q) -> float:
    """Shannon entropy in nats with the 0 log 0 = 0 convention."""
    q = np.asarray(q, float)
    mask = q > 0
    return float(-np.sum(q[mask] * np.log(q[mask])))


def cost_shannon(p: Experiment, prior) -> float:
    """Expected entropy reduction H(prior) - sum_d p(d) H(posterior_d)."""
    pi = np.asarray(prior, float)
    m = marginal(p, pi)
    total = entropy(pi)
    for d in range(p.n_decisions):
        if m[d] > 0:
            total -= m[d] * entropy(p.conditionals[d] * pi / m[d])
    return max(total, 0.0)


@dataclass(frozen=True)
class CostEvaluation:
    """Value, gradient over p(d|theta), and Hessian over (d, theta) pairs.

    The Hessian row/column index is d * n_states + theta.
    """

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


class CostModel:
    """Base class: a posterior-separable cost with a positive scale factor."""

    scale = 1.0

    def upsilon(self, q) -> float:
        """Uncertainty function on the state simplex (concave)."""
        raise NotImplementedError

    def scaled(self, factor):
        """Same cost family with the scale multiplied by `factor`."""
        raise NotImplementedError

    def value(self, p: Experiment, prior) -> float:
        return _posterior_separable_value(self, p.conditionals, np.asarray(prior, float))

    def _require_interior(self, p: Experiment, eps):
        if np.min(p.conditionals) <= eps:
            raise BoundaryPointError(
                f"experiment entry {np.min(p.conditionals):.3e} <= {eps:.0e}; "
                "derivatives are undefined at the boundary"
            )

    def gradient(self, p: Experiment, prior, eps=INTERIOR_EPS) -> np.ndarray:
        # Finite differences need room to perturb without leaving [0, 1].
        self._require_interior(p, max(eps, 2 * FD_STEP))
        return _fd_gradient(self, p.conditionals, np.asarray(prior, float))

    def hessian(self, p: Experiment, prior, eps=INTERIOR_EPS) -> np.ndarray:
        self._require_interior(p, max(eps, 4 * FD_STEP))
        return _fd_hessian(self, p.conditionals, np.asarray(prior, float))


class ShannonCost(CostModel):
    """Mutual-information cost, optionally scaled."""

    tag = "shannon"

    def __init__(self, scale=1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    def __repr__(self):
        return f"ShannonCost(scale={self.scale})"

    def scaled(self, factor):
        return ShannonCost(self.scale * factor)

    def upsilon(self, q) -> float:
        return self.scale * entropy(q)

    def value(self, p: Experiment, prior) -> float:
        return self.scale * cost_shannon(p, prior)

    def gradient(self, p: Experiment, prior, eps=INTERIOR_EPS) -> np.ndarray:
        self._require_interior(p, eps)
        pi = np.asarray(prior, float)
        m = marginal(p, pi)
        return self.scale * pi[None, :] * np.log(p.conditionals / m[:, None])

    def hessian(self, p: Experiment, prior, eps=INTERIOR_EPS) -> np.ndarray:
        self._require_interior(p, eps)
        pi = np.asarray(prior, float)
        m = marginal(p, pi)
        n_d, n_s = p.conditionals.shape
        h = np.zeros((n_d * n_s, n_d * n_s))
        for d in range(n_d):
            block = -np.outer(pi, pi) / m[d]
            block[np.diag_indices(n_s)] += pi / p.conditionals[d]
            h[d * n_s:(d + 1) * n_s, d * n_s:(d + 1) * n_s] = self.scale * block
        return h


def inverse_fisher_matrix(q) -> np.ndarray:
    """Information cost matrix diag(q) - q q^T (symmetric, PSD, rows sum to 0)."""
    q = np.asarray(q, float)
    return np.diag(q) - np.outer(q, q)


def _kl(q, pi):
    q = np.asarray(q, float)
    mask = q > 0
    return float(np.sum(q[mask] * np.log(q[mask] / pi[mask])))


def _kl_grad(q, pi):
    return np.log(np.asarray(q, float) / pi) + 1.0


# name -> (k matrix at a posterior, divergence D(q||pi), gradient of D in q,
# closed-form Upsilon).  The divergence gradient may be None, in which case
# the cost gradient falls back to finite differences.
BREGMAN_REGISTRY = {
    "inverse_fisher": (inverse_fisher_matrix, _kl, _kl_grad, entropy),
}


class BregmanMatrixCost(CostModel):
    """Expected Bregman divergence cost driven by an information cost matrix."""

    tag = "bregman"

    def __init__(self, name="inverse_fisher", scale=1.0):
        key = name.removeprefix("named:")
        if key not in BREGMAN_REGISTRY:
            raise ValueError(f"unknown information cost matrix {name!r}")
        self.name = key
        self.scale = float(scale)
        self._k, self._div, self._div_grad, self._ups = BREGMAN_REGISTRY[key]

    def __repr__(self):
        return f"BregmanMatrixCost({self.name!r}, scale={self.scale})"

    def scaled(self, factor):
        return BregmanMatrixCost(self.name, self.scale * factor)

    def info_matrix(self, q) -> np.ndarray:
        """k(theta, theta', q) evaluated at a posterior q, including scale."""
        return self.scale * self._k(q)

    def upsilon(self, q) -> float:
        return self.scale * self._ups(q)

    def value(self, p: Experiment, prior) -> float:
        pi = np.asarray(prior, float)
        m = marginal(p, pi)
        total = 0.0
        for d in range(p.n_decisions):
            if m[d] > 0:
                total += m[d] * self._div(p.conditionals[d] * pi / m[d], pi)
        return self.scale * total

    def gradient(self, p: Experiment, prior, eps=INTERIOR_EPS) -> np.ndarray:
        if self._div_grad is None:
            return super().gradient(p, prior, eps)
        self._require_interior(p, eps)
        pi = np.asarray(prior, float)
        q = posterior_matrix(p, pi)
        g = np.empty_like(p.conditionals)
        for d in range(p.n_decisions):
            dv = self._div(q[d], pi)
            dg = self._div_grad(q[d], pi)
            g[d] = pi * (dv + dg - q[d] @ dg)
        return self.scale * g

    def hessian(self, p: Experiment, prior, eps=INTERIOR_EPS) -> np.ndarray:
        self._require_interior(p, eps)
        pi = np.asarray(prior, float)
        m = marginal(p, pi)
        q = posterior_matrix(p, pi)
        n_d, n_s = p.conditionals.shape
        h = np.zeros((n_d * n_s, n_d * n_s))
        for d in range(n_d):
            k = self._k(q[d])
            block = m[d] * k / np.outer(p.conditionals[d], p.conditionals[d])
            h[d * n_s:(d + 1) * n_s, d * n_s:(d + 1) * n_s] = self.scale * block
        return h


class PosteriorSeparableCost(CostModel):
    """Cost from a named or gridded uncertainty function.

    Gridded tables are supported for two states only: points (q, value)
    where q is the probability of the second state, linearly interpolated.
    """

    tag = "posterior_separable"

    def __init__(self, upsilon="entropy", scale=1.0):
        self.spec = upsilon
        self.scale = float(scale)
        if upsilon == "entropy":
            self._ups = entropy
            self._grid = None
        elif isinstance(upsilon, dict) and "grid" in upsilon:
            pts = np.asarray(upsilon["grid"], float)
            if pts.ndim != 2 or pts.shape[1] != 2:
                raise ValueError("grid must be a list of (q, value) pairs")
            order = np.argsort(pts[:, 0])
            self._grid = (pts[order, 0].copy(), pts[order, 1].copy())
            self._ups = None
        else:
            raise ValueError(f"unknown uncertainty function {upsilon!r}")

    def __repr__(self):
        return f"PosteriorSeparableCost({self.spec!r}, scale={self.scale})"

    def scaled(self, factor):
        return PosteriorSeparableCost(self.spec, self.scale * factor)

    def upsilon(self, q) -> float:
        q = np.asarray(q, float)
        if self._grid is not None:
            if len(q) != 2:
                raise ValueError("gridded uncertainty functions need two states")
            return self.scale * float(np.interp(q[1], *self._grid))
        return self.scale * self._ups(q)


def _posterior_separable_value(model, cond, pi):
    # The formula extends smoothly off the column simplexes: posteriors
    # renormalize by construction, which is what makes ambient finite
    # differences of the value well defined.
    m = cond @ pi
    total = model.upsilon(pi)
    for d in range(cond.shape[0]):
        if m[d] > 0:
            total -= m[d] * model.upsilon(cond[d] * pi / m[d])
    return total


def _fd_gradient(model, cond, pi, h=FD_STEP):
    g = np.empty_like(cond)
    for d in range(cond.shape[0]):
        for s in range(cond.shape[1]):
            up = cond.copy()
            dn = cond.copy()
            up[d, s] += h
            dn[d, s] -= h
            g[d, s] = (
                _posterior_separable_value(model, up, pi)
                - _posterior_separable_value(model, dn, pi)
            ) / (2 * h)
    return g


def _fd_hessian(model, cond, pi, h=FD_STEP):
    n = cond.size
    hess = np.empty((n, n))
    for j in range(n):
        d, s = divmod(j, cond.shape[1])
        up = cond.copy()
        dn = cond.copy()
        up[d, s] += h
        dn[d, s] -= h
        g_up = _fd_gradient(model, up, pi, h)
        g_dn = _fd_gradient(model, dn, pi, h)
        hess[:, j] = ((g_up - g_dn) / (2 * h)).ravel()
    return 0.5 * (hess + hess.T)


def cost_value(model: CostModel, p: Experiment, prior) -> float:
    """Cost of experiment p under `model`."""
    return model.value(p, prior)


def cost_grad_hess(model: CostModel, p: Experiment, prior, eps=INTERIOR_EPS) -> CostEvaluation:
    """Value, gradient, and Hessian at an interior experiment."""
    return CostEvaluation(
        value=model.value(p, prior),
        gradient=model.gradient(p, prior, eps),
        hessian=model.hessian(p, prior, eps),
    )


@dataclass(frozen=True)
class BlackwellWitness:
    monotone: bool
    cost_before: float
    cost_after: float


def check_blackwell_monotone(model: CostModel, p: Experiment, g: Garbling, prior,
                             tol=1e-10) -> BlackwellWitness:
    """Garbling must weakly reduce cost; returns both costs as a witness."""
    before = model.value(p, prior)
    after = model.value(garble(p, g), prior)
    return BlackwellWitness(monotone=after <= before + tol,
                            cost_before=before, cost_after=after)
