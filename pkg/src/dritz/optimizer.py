"""Limited-memory BFGS with a strong Wolfe line search.

The objective maps a coefficient vector to ``(value, gradient)``. An
optional ``precondition`` callable applies an approximate inverse Hessian
and is used as the initial matrix of the two-loop recursion.

Near a minimiser the energy decrease of a step can fall below the rounding
level of the energy itself. The sufficient-decrease test then falls back to
the approximate Wolfe test of Hager and Zhang (energy unchanged up to
rounding, slope reduced), which only needs the directional derivative to be
accurate. Accepted energies are therefore non-increasing up to a few ulps.
A run of steps that only move the iterate by rounding ends the search.

Energies with p < 2 are not twice differentiable, and the Wolfe search can
stall at a kink. A halving backtracking search on the sufficient-decrease
test is tried next, and then the whole step is retried without curvature
history before a line-search failure is reported.
"""

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILURE = "line_search_failure"
STALL_LIMIT = 20


@dataclass
class MinimizeOptions:
    gtol: float = 1e-8
    max_iter: int = 20000
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    initial_step: float = 1.0
    trace: object = None  # writable text stream for a CSV iteration trace

    def __post_init__(self):
        if self.gtol <= 0 or self.max_iter < 0:
            raise ValueError("tolerances must be positive")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class MinimizeResult:
    x: np.ndarray
    energy: float
    grad_norm: float
    iterations: int
    n_evals: int
    status: str
    energies: list = field(default_factory=list, repr=False)

    @property
    def converged(self):
        return self.status == CONVERGED


def _two_loop(g, pairs, precondition):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    r = precondition(q) if precondition is not None else q.copy()
    if pairs:
        s, y, _ = pairs[-1]
        Hy = precondition(y) if precondition is not None else y
        r *= (s @ y) / (y @ Hy)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ r)
        r += (a - b) * s
    return -r


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolating two points with slopes, or None."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


class _LineSearch:
    """Strong Wolfe search along ``d`` (Nocedal and Wright, Alg. 3.5/3.6)."""

    def __init__(self, fun, x, d, f0, g0, c1, c2, max_evals=40):
        self.fun, self.x, self.d = fun, x, d
        self.f0 = f0
        self.dphi0 = float(g0 @ d)
        self.c1, self.c2 = c1, c2
        # energies closer than this are indistinguishable in floating point
        self.f_noise = 8 * np.finfo(float).eps * max(1.0, abs(f0))
        self.evals = 0
        self.max_evals = max_evals
        self.best = None

    def phi(self, a):
        self.evals += 1
        f, g = self.fun(self.x + a * self.d)
        f = float(f)
        dphi = float(g @ self.d) if np.isfinite(f) else np.nan
        return f, dphi, g

    def sufficient(self, a, f, dphi):
        if f <= self.f0 + self.c1 * a * self.dphi0:
            return True
        # approximate Wolfe: energy flat to rounding, slope still decreasing
        return f <= self.f0 + self.f_noise and dphi <= (2 * self.c1 - 1) * self.dphi0

    def curvature(self, dphi):
        return abs(dphi) <= -self.c2 * self.dphi0

    def run(self, a1):
        a_prev, f_prev, d_prev = 0.0, self.f0, self.dphi0
        a = a1
        first = True
        while self.evals < self.max_evals:
            f, dphi, g = self.phi(a)
            if not np.isfinite(f) or not np.isfinite(dphi):
                a = 0.5 * (a_prev + a)
                continue
            if not self.sufficient(a, f, dphi) or (not first and f > f_prev + self.f_noise):
                return self.zoom(a_prev, f_prev, d_prev, a, f, dphi)
            if self.curvature(dphi):
                return a, f, g
            if dphi >= 0:
                return self.zoom(a, f, dphi, a_prev, f_prev, d_prev)
            a_prev, f_prev, d_prev = a, f, dphi
            a = 2.0 * a
            first = False
        return None

    def zoom(self, lo, flo, dlo, hi, fhi, dhi):
        while self.evals < self.max_evals:
            width = hi - lo
            if abs(fhi - flo) > 10 * self.f_noise:
                a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            elif np.isfinite(dhi) and dhi != dlo:
                # energies are noise; secant on the slope
                a = lo - dlo * (hi - lo) / (dhi - dlo)
            else:
                a = None
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * abs(width)
            if a is None or not (left + margin <= a <= right - margin):
                a = 0.5 * (lo + hi)
            f, dphi, g = self.phi(a)
            if not np.isfinite(f):
                hi, fhi, dhi = a, np.inf, np.inf
                continue
            if not self.sufficient(a, f, dphi) or f > flo + self.f_noise:
                hi, fhi, dhi = a, f, dphi
            else:
                if self.curvature(dphi):
                    return a, f, g
                if dphi * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, dphi
                self.best = (a, f, g)
            if abs(hi - lo) <= 1e-14 * max(1.0, abs(lo)):
                break
        # accept the best point that passed the decrease test
        return self.best

    def backtrack(self, a, max_halvings=60):
        """Halve the step until the sufficient-decrease test holds."""
        for _ in range(max_halvings):
            f, dphi, g = self.phi(a)
            if np.isfinite(f) and np.isfinite(dphi) and self.sufficient(a, f, dphi):
                return a, f, g
            a *= 0.5
        return None


def _first_step(opts, d, g, last_step):
    """Trial step without curvature pairs: reuse the length of the last step."""
    if last_step is not None:
        return float(np.linalg.norm(last_step) / np.linalg.norm(d))
    return opts.initial_step / max(1.0, float(np.max(np.abs(d))))


def minimize(fun, x0, options=None, precondition=None):
    """Minimise ``fun`` from ``x0``; see :class:`MinimizeOptions`."""
    opts = options or MinimizeOptions()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    n_evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the initial point")
    writer = None
    if opts.trace is not None:
        writer = csv.writer(opts.trace)
        writer.writerow(["iteration", "energy", "grad_norm", "step"])
        writer.writerow([0, repr(f), repr(float(np.max(np.abs(g), initial=0.0))), ""])
    pairs = deque(maxlen=opts.memory)
    energies = [f]
    stalled = 0
    status = MAX_ITERS
    it = 0
    last_step = None
    while True:
        gnorm = float(np.max(np.abs(g), initial=0.0))
        if gnorm <= opts.gtol:
            status = CONVERGED
            break
        if it >= opts.max_iter:
            break
        d = _two_loop(g, pairs, precondition)
        if not d @ g < 0:
            pairs.clear()
            d = _two_loop(g, pairs, precondition)
        a1 = 1.0 if pairs else _first_step(opts, d, g, last_step)
        ls = _LineSearch(fun, x, d, f, g, opts.c1, opts.c2)
        found = ls.run(a1)
        if found is None:
            # kinks of p < 2 energies can defeat the Wolfe search
            found = ls.backtrack(a1)
        n_evals += ls.evals
        if found is None and pairs:
            # discard curvature history and retry along the preconditioned gradient
            pairs.clear()
            d = _two_loop(g, pairs, precondition)
            a1 = _first_step(opts, d, g, last_step)
            ls = _LineSearch(fun, x, d, f, g, opts.c1, opts.c2)
            found = ls.run(a1) or ls.backtrack(a1)
            n_evals += ls.evals
        if found is None:
            status = LINE_SEARCH_FAILURE
            break
        step, f_new, g_new = found
        x_new = x + step * d
        last_step = step * d
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            pairs.append((s, y, 1.0 / sy))
        f, g, x = f_new, g_new, x_new
        energies.append(f)
        it += 1
        gnorm = float(np.max(np.abs(g)))
        if writer is not None:
            writer.writerow([it, repr(f), repr(gnorm), repr(float(step))])
        tiny = np.max(np.abs(s)) <= 16 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x))))
        stalled = stalled + 1 if tiny else 0
        if stalled >= STALL_LIMIT:
            # a run of rounding-level steps: the search cannot make progress
            status = LINE_SEARCH_FAILURE
            break
    return MinimizeResult(x, f, float(np.max(np.abs(g), initial=0.0)), it, n_evals, status, energies)
