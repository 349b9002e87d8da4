"""Pure-numpy evaluation of constraint values and the log-barrier.

Same contract as the compiled module `_barrier_cy`; selected at import time
by `kernel` when the extension is unavailable.
"""

from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)

BACKEND_NAME = "python"


def eval_f(prog, x):
    """Constraint values f(x); (ok, f) where ok=False on domain violation."""
    if prog.dom_pos.size and np.any(x[prog.dom_pos] <= 0.0):
        return False, None
    f = prog.A @ x + prog.b
    if prog.e_con.size:
        args = prog.e_rows @ x + prog.e_off
        np.add.at(f, prog.e_con, prog.e_coef * np.exp2(args))
    if prog.i_con.size:
        np.add.at(f, prog.i_con, prog.i_coef / x[prog.i_var])
    if prog.q_con.size:
        vals = prog.q_rows @ x + prog.q_off
        np.add.at(f, prog.q_con, prog.q_coef * vals * vals)
    return True, f


def eval_barrier(prog, x):
    """(ok, f, phi, grad, hess) of phi(x) = -sum log(-f_i(x)).

    ok is False when x is outside the domain or any f_i >= 0.
    """
    ok, f = eval_f(prog, x)
    if not ok or np.any(f >= 0.0):
        return False, f, None, None, None
    m, n = prog.m, prog.n
    G = prog.A.copy()
    s = -1.0 / f                       # positive
    phi = -np.sum(np.log(-f))
    hess = np.zeros((n, n))

    if prog.e_con.size:
        args = prog.e_rows @ x + prog.e_off
        vals = prog.e_coef * np.exp2(args)
        np.add.at(G, prog.e_con, (LN2 * vals)[:, None] * prog.e_rows)
        w = LN2 * LN2 * vals * s[prog.e_con]
        hess += (prog.e_rows * w[:, None]).T @ prog.e_rows
    if prog.i_con.size:
        xi = x[prog.i_var]
        gvals = -prog.i_coef / (xi * xi)
        np.add.at(G, (prog.i_con, prog.i_var), gvals)
        w = 2.0 * prog.i_coef / (xi ** 3) * s[prog.i_con]
        np.add.at(hess, (prog.i_var, prog.i_var), w)
    if prog.q_con.size:
        vals = prog.q_rows @ x + prog.q_off
        np.add.at(G, prog.q_con, (2.0 * prog.q_coef * vals)[:, None] * prog.q_rows)
        w = 2.0 * prog.q_coef * s[prog.q_con]
        hess += (prog.q_rows * w[:, None]).T @ prog.q_rows

    grad = G.T @ s
    hess += (G * (s * s)[:, None]).T @ G
    return True, f, phi, grad, hess
