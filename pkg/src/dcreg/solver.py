"""Smoothed penalty objectives and a deterministic L-BFGS.

The optimizer uses Armijo-only backtracking.  The objectives it sees have
gradients that are only piecewise smooth (soft-max smoothing is applied to
gradients, not values), so whenever a line search fails the L-BFGS memory is
reset and a plain gradient step is tried; a second failure terminates.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class SolverAbort(RuntimeError):
    """Raised by callers when a solve produced unusable (non-finite) output."""


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 1e-6               # soft-max smoothing width
    rho_pen: float = 1e6           # quadratic penalty weight
    lbfgs_memory: int = 10
    max_iters: int = 2000
    grad_tol: float = 1e-6         # on the max-norm of the gradient
    ls_shrink: float = 0.5
    ls_c1: float = 1e-4            # Armijo constant
    ls_max_steps: int = 40

    def __post_init__(self):
        if self.mu <= 0 or self.rho_pen <= 0:
            raise ValueError("mu and rho_pen must be positive")
        if self.lbfgs_memory < 1 or self.max_iters < 0:
            raise ValueError("lbfgs_memory must be >= 1 and max_iters >= 0")
        if not (0 < self.ls_shrink < 1) or not (0 < self.ls_c1 < 1):
            raise ValueError("ls_shrink and ls_c1 must lie in (0, 1)")
        if self.ls_max_steps < 1:
            raise ValueError("ls_max_steps must be >= 1")


@dataclass(frozen=True)
class ObjectiveHandle:
    """A differentiable objective: evaluate(x) -> (value, gradient)."""

    dim: int
    evaluate: Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_value: float
    final_grad_norm: float
    line_search_failures: int
    converged: bool
    aborted: bool = False


def softmax_smooth(alpha, mu: float) -> float:
    """Soft maximum mu*log(sum(exp(alpha/mu))), computed with a max shift.

    Overestimates max(alpha) by at most mu*log(len(alpha)).
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        raise ValueError("empty input")
    if mu <= 0:
        raise ValueError("mu must be positive")
    m = float(np.max(alpha))
    return m + mu * float(np.log(np.sum(np.exp((alpha - m) / mu))))


def softmax_weights(alpha, mu: float) -> np.ndarray:
    """Gradient weights of the soft maximum: a probability vector."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        raise ValueError("empty input")
    if mu <= 0:
        raise ValueError("mu must be positive")
    w = np.exp((alpha - np.max(alpha)) / mu)
    return w / np.sum(w)


def penalty_objective(base: ObjectiveHandle, constraints, rho_pen: float) -> ObjectiveHandle:
    """Quadratic penalty wrapper: base(x) + rho * sum(max(0, g_i(x))^2).

    ``constraints`` is either an object with a vectorized
    ``penalty(x, rho) -> (value, gradient)`` method, or an iterable of
    callables x -> (g_i, grad_g_i) for inequality residuals g_i(x) <= 0.
    """
    if hasattr(constraints, "penalty"):
        def evaluate(x):
            v, g = base.evaluate(x)
            pv, pg = constraints.penalty(x, rho_pen)
            return v + pv, g + pg
        return ObjectiveHandle(base.dim, evaluate)

    cons = list(constraints)

    def evaluate(x):
        value, grad = base.evaluate(x)
        grad = grad.copy()
        for con in cons:
            gi, gradi = con(x)
            if gi > 0.0:
                value += rho_pen * gi * gi
                grad += (2.0 * rho_pen * gi) * gradi
        return value, grad

    return ObjectiveHandle(base.dim, evaluate)


def _two_loop(grad, s_list, y_list):
    q = grad.copy()
    alphas = []
    for s, yv, rho in reversed(list(zip(s_list, y_list, _rhos(s_list, y_list)))):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * yv
    if s_list:
        s, yv = s_list[-1], y_list[-1]
        q *= np.dot(s, yv) / np.dot(yv, yv)
    for (s, yv, rho), a in zip(zip(s_list, y_list, _rhos(s_list, y_list)), reversed(alphas)):
        b = rho * np.dot(yv, q)
        q += (a - b) * s
    return -q


def _rhos(s_list, y_list):
    return [1.0 / np.dot(s, yv) for s, yv in zip(s_list, y_list)]


def _backtrack(obj, x, f, g, direction, t0, cfg):
    """Armijo backtracking; returns (accepted, t, x_new, f_new, g_new)."""
    slope = float(np.dot(g, direction))
    t = t0
    for _ in range(cfg.ls_max_steps):
        x_new = x + t * direction
        f_new, g_new = obj.evaluate(x_new)
        if np.isfinite(f_new) and f_new <= f + cfg.ls_c1 * t * slope:
            return True, t, x_new, float(f_new), np.asarray(g_new, dtype=float)
        t *= cfg.ls_shrink
    return False, t, x, f, g


def lbfgs_minimize(obj: ObjectiveHandle, x0, cfg: SolverConfig, callback=None):
    """Minimize obj from x0; returns (x_star, SolveReport).

    Accepted steps are monotone non-increasing in the objective.  A failed
    backtracking line search resets the curvature memory and retries along
    the negative gradient; failing that too, the solve terminates.  If a
    non-finite value or gradient is encountered the best iterate so far is
    returned with ``aborted`` set.  ``callback(iteration, x, value)`` runs
    after every accepted step.
    """
    x = np.array(x0, dtype=float, copy=True)
    f, g = obj.evaluate(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.isfinite(g).all():
        raise ValueError("objective must be finite at the starting point")

    best_x, best_f = x.copy(), f
    s_mem: deque = deque(maxlen=cfg.lbfgs_memory)
    y_mem: deque = deque(maxlen=cfg.lbfgs_memory)
    ls_failures = 0
    iters = 0
    aborted = False
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    converged = gnorm <= cfg.grad_tol
    t_prev = 1.0  # last accepted quasi-Newton step; seeds the next trial

    while not converged and iters < cfg.max_iters:
        use_gradient = not s_mem
        direction = -g if use_gradient else _two_loop(g, list(s_mem), list(y_mem))
        if not np.isfinite(direction).all() or float(np.dot(g, direction)) >= 0.0:
            # Memory produced a non-descent direction: drop it.
            s_mem.clear()
            y_mem.clear()
            use_gradient = True
            direction = -g
            t_prev = 1.0
        if use_gradient:
            t0 = 1.0 / max(1.0, float(np.linalg.norm(g)))
        else:
            # Growing restart from the last accepted step keeps backtracking
            # cheap on kinked objectives while recovering full steps fast.
            t0 = min(1.0, 2.0 * t_prev)

        ok, t_acc, x_new, f_new, g_new = _backtrack(obj, x, f, g, direction, t0, cfg)
        if not ok:
            ls_failures += 1
            if use_gradient:
                break  # gradient-direction search failed: nothing left to try
            s_mem.clear()
            y_mem.clear()
            t_prev = 1.0
            use_gradient = True
            direction = -g
            t0 = 1.0 / max(1.0, float(np.linalg.norm(g)))
            ok, t_acc, x_new, f_new, g_new = _backtrack(obj, x, f, g, direction, t0, cfg)
            if not ok:
                ls_failures += 1
                break
        if not use_gradient:
            t_prev = t_acc

        if not np.isfinite(f_new) or not np.isfinite(g_new).all():
            log.warning("lbfgs abort: non-finite value/gradient at iter=%d", iters)
            aborted = True
            break

        s = x_new - x
        yv = g_new - g
        sy = float(np.dot(s, yv))
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv)):
            s_mem.append(s)
            y_mem.append(yv)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()
        iters += 1
        if callback is not None:
            callback(iters, x, f)
        gnorm = float(np.max(np.abs(g)))
        converged = gnorm <= cfg.grad_tol

    if f <= best_f:
        best_f, best_x = f, x
    report = SolveReport(
        iterations=iters,
        final_value=float(best_f),
        final_grad_norm=gnorm,
        line_search_failures=ls_failures,
        converged=bool(converged),
        aborted=aborted,
    )
    return best_x, report
