"""Optimizers: L-BFGS with backtracking line search for image-space
minimization, and SGD with momentum plus a plateau learning-rate schedule
for training.
"""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OptTrace",
    "lbfgs_minimize",
    "sgd_momentum_step",
    "LrSchedule",
]

_ARMIJO_C1 = 1e-4
_EXPAND_FRAC = 0.8  # realized/predicted decrease above this => step too short
_MAX_LS_TRIALS = 40
_CURVATURE_SKIP = 1e-10


@dataclass
class OptTrace:
    """Per-accepted-iterate record of an optimization run (includes the
    initial point, so length = iterations + 1)."""

    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    line_search_failed: bool = False

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,objective,grad_norm,seconds\n")
            for i, (f, g, s) in enumerate(zip(self.objective, self.grad_norm, self.seconds)):
                fh.write(f"{i},{f!r},{g!r},{s!r}\n")


def _two_loop(grad, history):
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if history:
        s, y, _ = history[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _line_search(f, x, fx, g, p):
    """Armijo line search: halve the step until sufficient decrease (at
    most 40 trials), then grow an accepted unit step by doubling while the
    Armijo condition keeps holding and the value keeps dropping.  The
    expansion guards against overly conservative quasi-Newton scaling,
    where the unit step is a descent step but far too short.
    Returns (t, x_new, f_new, g_new) or None."""
    slope = np.dot(g.ravel(), p.ravel())
    t = 1.0
    accepted = None
    for _ in range(_MAX_LS_TRIALS):
        x_new = x + t * p
        f_new, g_new = f(x_new)
        if np.isfinite(f_new) and f_new <= fx + _ARMIJO_C1 * t * slope:
            accepted = (t, x_new, f_new, g_new)
            break
        t *= 0.5
    if accepted is None or accepted[0] < 1.0:
        return accepted
    # a unit step that realizes almost the full linear-model decrease is in
    # the locally linear regime, i.e. far too short; keep doubling while
    # that stays true and the value keeps dropping
    for _ in range(_MAX_LS_TRIALS):
        t = accepted[0]
        if accepted[2] > fx + _EXPAND_FRAC * t * slope:
            break
        t *= 2.0
        x_new = x + t * p
        f_new, g_new = f(x_new)
        if (np.isfinite(f_new) and f_new <= fx + _ARMIJO_C1 * t * slope
                and f_new < accepted[2]):
            accepted = (t, x_new, f_new, g_new)
        else:
            break
    return accepted


def lbfgs_minimize(f, x0, max_iters=100, m=10, grad_tol=1e-10, stop_at=None,
                   callback=None):
    """Minimize f (returning (value, gradient)) from x0 with L-BFGS.

    Uses the two-loop recursion over at most m stored (s, y) pairs; pairs
    with s.y <= 1e-10 * |s||y| are skipped.  The trace records accepted
    points only, so the objective column is non-increasing.  On a failed
    line search along the L-BFGS direction the history is dropped and a
    steepest-descent step is tried once; a second failure terminates the
    run.  `stop_at` ends the run early once the objective falls to or
    below the given value.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    shape = x.shape
    fx, gx = f(x)
    if not (np.isfinite(fx) and np.all(np.isfinite(gx))):
        raise ValueError("objective or gradient non-finite at the initial point")
    gx = np.asarray(gx, dtype=np.float64)

    trace = OptTrace()
    t0 = time.perf_counter()

    def record(fv, gv):
        trace.objective.append(float(fv))
        trace.grad_norm.append(float(np.linalg.norm(gv.ravel())))
        trace.seconds.append(time.perf_counter() - t0)

    record(fx, gx)
    history = deque(maxlen=m if m > 0 else 1)
    if m == 0:
        history = deque(maxlen=0)

    def fv(z):
        val, grad = f(z.reshape(shape))
        return float(val), np.asarray(grad, dtype=np.float64).ravel()

    xf = x.ravel().copy()
    gf = gx.ravel().copy()

    for _ in range(max_iters):
        if stop_at is not None and fx <= stop_at:
            break
        if np.linalg.norm(gf) <= grad_tol:
            break
        p = -_two_loop(gf, list(history))
        if np.dot(p, gf) >= 0:  # not a descent direction; fall back
            history.clear()
            p = -gf
        res = _line_search(lambda z: fv(z), xf, fx, gf, p)
        if res is None and len(history) > 0:
            history.clear()
            res = _line_search(lambda z: fv(z), xf, fx, gf, -gf)
        if res is None:
            trace.line_search_failed = True
            break
        _, x_new, f_new, g_new = res
        s = x_new - xf
        y = g_new - gf
        sy = np.dot(s, y)
        if history.maxlen and sy > _CURVATURE_SKIP * np.linalg.norm(s) * np.linalg.norm(y):
            history.append((s, y, 1.0 / sy))
        xf, fx, gf = x_new, f_new, g_new
        record(fx, gf)
        if callback is not None:
            callback(len(trace.objective) - 1, xf.reshape(shape), fx)

    return xf.reshape(shape), trace


def sgd_momentum_step(params, grads, state, lr, momentum=0.9, weight_decay=0.0):
    """One SGD-with-momentum update, in place.

    params/grads/state are parallel dicts of arrays (state holds the
    velocities and is created lazily).  Update rule:
    v <- momentum*v - lr*(g + weight_decay*p); p <- p + v.
    """
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            continue
        v = state.get(key)
        if v is None:
            v = np.zeros_like(p)
        v = momentum * v - lr * (g + weight_decay * p)
        state[key] = v
        p += v
    return params, state


@dataclass
class LrSchedule:
    """Divide the learning rate by 10 when validation error plateaus.

    An evaluation "improves" when it beats the best seen error by at least
    rel_threshold (relative).  After `patience` consecutive non-improving
    evaluations the rate drops 10x; after two drops with no improvement in
    between, the schedule signals stop.
    """

    lr: float
    rel_threshold: float = 1e-3
    patience: int = 2
    _best: float = None
    _bad: int = 0
    _drops_since_improve: int = 0
    stopped: bool = False

    def record(self, val_error):
        """Feed one validation error; returns the (possibly reduced) lr."""
        if self._best is None or val_error < self._best * (1.0 - self.rel_threshold):
            self._best = val_error
            self._bad = 0
            self._drops_since_improve = 0
        else:
            self._bad += 1
            if self._bad >= self.patience:
                self.lr /= 10.0
                self._bad = 0
                self._drops_since_improve += 1
                if self._drops_since_improve >= 2:
                    self.stopped = True
        return self.lr
