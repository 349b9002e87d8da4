"""Log-barrier interior-point solver for the structured convex programs.

The hot per-iterate evaluation lives in `_barrier_cy` (compiled) with a
numpy fallback in `_barrier_py`; selection happens at import and can be
forced with the COOPSIM_BACKEND environment variable ("compiled" or
"python").
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _barrier_py
from .problem import CompiledProgram, ConvexProgram

try:
    from . import _barrier_cy
except ImportError:          # extension not built; fall back to numpy
    _barrier_cy = None

_FORCE = os.environ.get("COOPSIM_BACKEND", "auto")
if _FORCE == "python" or (_FORCE == "auto" and _barrier_cy is None):
    _impl = _barrier_py
elif _barrier_cy is not None:
    _impl = _barrier_cy
else:
    raise ImportError("COOPSIM_BACKEND=compiled but the extension is not built")

BACKEND = _impl.BACKEND_NAME

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"
STATUS_NUMERICAL = "numerical_failure"


class KernelError(RuntimeError):
    pass


@dataclass
class KernelResult:
    x: np.ndarray
    status: str
    objective: float
    kkt_residual: float
    newton_iters: int


def get_backend(name: str = "auto"):
    if name == "auto":
        return _impl
    if name == "python":
        return _barrier_py
    if name == "compiled":
        if _barrier_cy is None:
            raise KernelError("compiled backend not available")
        return _barrier_cy
    raise ValueError(f"unknown backend {name!r}")


def _newton_center(prog, x, t, impl, max_steps=60, tol=1e-9):
    """Minimize t*c.x + phi(x) from a strictly feasible x. Returns (x, iters)."""
    c = prog.cost
    iters = 0
    for _ in range(max_steps):
        ok, f, phi, grad, hess = impl.eval_barrier(prog, x)
        if not ok:
            raise KernelError("Newton iterate left the feasible region")
        g = t * c + grad
        H = hess
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            ridge = 1e-12 * (np.trace(H) / prog.n + 1.0)
            d = np.linalg.solve(H + ridge * np.eye(prog.n), -g)
        lam2 = float(-g @ d)
        if not np.isfinite(lam2):
            raise KernelError("non-finite Newton decrement")
        if lam2 < 0:
            # H numerically indefinite from roundoff; regularize and retry.
            ridge = 1e-8 * (np.trace(H) / prog.n + 1.0)
            d = np.linalg.solve(H + ridge * np.eye(prog.n), -g)
            lam2 = float(-g @ d)
            if lam2 < 0:
                break
        iters += 1
        if lam2 / 2.0 <= tol:
            break
        merit = t * float(c @ x) + phi
        step = 1.0
        accepted = False
        while step > 1e-14:
            xn = x + step * d
            okn, fn, phin, _, _ = impl.eval_barrier(prog, xn)
            if okn and t * float(c @ xn) + phin <= merit - 1e-4 * step * lam2:
                x = xn
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return x, iters


def _kkt_residual(prog, x, t, impl):
    ok, f, phi, grad, hess = impl.eval_barrier(prog, x)
    if not ok:
        return np.inf
    r = prog.cost + grad / t
    return float(np.max(np.abs(r)) / max(1.0, np.max(np.abs(prog.cost))))


def solve(prog, x0=None, *, gap_tol=1e-10, t0=1.0, mu=20.0, max_outer=60,
          backend="auto") -> KernelResult:
    """Barrier method for `prog` (ConvexProgram or CompiledProgram).

    ``x0``, when given, must be strictly feasible; otherwise a phase-I
    program is solved first.  Infeasibility is reported via status, never
    by a silent wrong answer.
    """
    impl = get_backend(backend)
    if isinstance(prog, ConvexProgram):
        prog = prog.compile()
    if prog.m == 0:
        raise KernelError("program has no constraints; objective is unbounded")

    x = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(prog.n)
        ok, f = impl.eval_f(prog, x0)
        if ok and np.all(f < 0.0):
            x = x0
    if x is None:
        x, feasible = _phase1(prog, impl, x_hint=x0)
        if not feasible:
            return KernelResult(x=None, status=STATUS_INFEASIBLE,
                                objective=np.inf, kkt_residual=np.inf,
                                newton_iters=0)

    t = t0
    total_newton = 0
    scale = max(1.0, abs(float(prog.cost @ x)))
    for _ in range(max_outer):
        x, it = _newton_center(prog, x, t, impl)
        total_newton += it
        if prog.m / t <= gap_tol * scale:
            break
        t *= mu
    else:
        return KernelResult(x=x, status=STATUS_MAX_ITER,
                            objective=float(prog.cost @ x),
                            kkt_residual=_kkt_residual(prog, x, t, impl),
                            newton_iters=total_newton)
    return KernelResult(x=x, status=STATUS_OPTIMAL,
                        objective=float(prog.cost @ x),
                        kkt_residual=_kkt_residual(prog, x, t, impl),
                        newton_iters=total_newton)


def _phase1(prog, impl, x_hint=None):
    """Find a strictly feasible point, or decide infeasibility."""
    aug = prog.phase1()
    x = np.ones(prog.n) if x_hint is None else np.asarray(x_hint, dtype=float).copy()
    if prog.dom_pos.size:
        x[prog.dom_pos] = np.maximum(x[prog.dom_pos], 1.0)
    ok, f = impl.eval_f(prog, x)
    if not ok:
        x = np.ones(prog.n)
        ok, f = impl.eval_f(prog, x)
        if not ok:
            raise KernelError("cannot construct a domain point for phase-I")
    s = float(np.max(f)) + 1.0
    z = np.concatenate([x, [s]])

    t = 1.0
    for _ in range(60):
        z, _ = _newton_center(aug, z, t, impl)
        if z[-1] < -1e-9:
            okf, ff = impl.eval_f(prog, z[:-1])
            if okf and np.all(ff < 0.0):
                return z[:-1], True
        if aug.m / t <= 1e-12 * max(1.0, abs(z[-1])):
            break
        t *= 20.0
    okf, ff = impl.eval_f(prog, z[:-1])
    if okf and ff is not None and np.all(ff < 0.0):
        return z[:-1], True
    return z[:-1], False
