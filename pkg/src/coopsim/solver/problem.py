"""Structured description of the convex subproblems the barrier kernel solves.

A program is  min c^T x  subject to constraints f_i(x) <= 0 where each f_i
is a sum of an affine part and terms of three shapes (all with positive
coefficients, so each f_i is convex):

* exp2:  coef * 2^(a^T x + b)
* inv:   coef / x_j           (domain x_j > 0)
* quad:  coef * (a^T x + b)^2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class _Constraint:
    row: np.ndarray
    offset: float
    exp2: list = field(default_factory=list)   # (coef, row, off)
    inv: list = field(default_factory=list)    # (coef, var)
    quad: list = field(default_factory=list)   # (coef, row, off)


class ConvexProgram:
    def __init__(self, n_vars: int, cost: np.ndarray):
        self.n = int(n_vars)
        self.cost = np.asarray(cost, dtype=float).reshape(self.n)
        self.constraints: list[_Constraint] = []

    def add_constraint(self, row=None, offset=0.0, exp2=(), inv=(), quad=(),
                       normalize=True):
        """Add f(x) = row.x + offset + sum(terms) <= 0.

        With ``normalize`` the whole constraint is scaled by the inverse of
        its largest coefficient magnitude (harmless for the barrier, kinder
        to floating point).
        """
        r = np.zeros(self.n) if row is None else np.asarray(row, dtype=float).reshape(self.n)
        exp2 = [(float(c), np.asarray(a, dtype=float).reshape(self.n), float(b))
                for c, a, b in exp2]
        inv = [(float(c), int(j)) for c, j in inv]
        quad = [(float(c), np.asarray(a, dtype=float).reshape(self.n), float(b))
                for c, a, b in quad]
        if normalize:
            scale = max(
                [np.max(np.abs(r)) if r.any() else 0.0, abs(offset)]
                + [c for c, _, _ in exp2] + [c for c, _ in inv]
                + [c for c, _, _ in quad]
            )
            if scale > 0:
                s = 1.0 / scale
                r = r * s
                offset *= s
                exp2 = [(c * s, a, b) for c, a, b in exp2]
                inv = [(c * s, j) for c, j in inv]
                quad = [(c * s, a, b) for c, a, b in quad]
        self.constraints.append(_Constraint(r, float(offset), exp2, inv, quad))

    def add_box(self, j: int, lower: float = None, upper: float = None):
        if lower is not None:
            row = np.zeros(self.n)
            row[j] = -1.0
            self.add_constraint(row, lower, normalize=False)
        if upper is not None:
            row = np.zeros(self.n)
            row[j] = 1.0
            self.add_constraint(row, -upper, normalize=False)

    def compile(self) -> "CompiledProgram":
        m = len(self.constraints)
        A = np.zeros((m, self.n))
        b = np.zeros(m)
        e_con, e_coef, e_rows, e_off = [], [], [], []
        i_con, i_coef, i_var = [], [], []
        q_con, q_coef, q_rows, q_off = [], [], [], []
        for i, cst in enumerate(self.constraints):
            A[i] = cst.row
            b[i] = cst.offset
            for c, a, off in cst.exp2:
                e_con.append(i); e_coef.append(c); e_rows.append(a); e_off.append(off)
            for c, j in cst.inv:
                i_con.append(i); i_coef.append(c); i_var.append(j)
            for c, a, off in cst.quad:
                q_con.append(i); q_coef.append(c); q_rows.append(a); q_off.append(off)
        dom = sorted(set(i_var))
        return CompiledProgram(
            n=self.n, m=m, cost=self.cost.copy(), A=A, b=b,
            e_con=np.asarray(e_con, dtype=np.int64),
            e_coef=np.asarray(e_coef, dtype=float),
            e_rows=np.asarray(e_rows, dtype=float).reshape(len(e_con), self.n),
            e_off=np.asarray(e_off, dtype=float),
            i_con=np.asarray(i_con, dtype=np.int64),
            i_coef=np.asarray(i_coef, dtype=float),
            i_var=np.asarray(i_var, dtype=np.int64),
            q_con=np.asarray(q_con, dtype=np.int64),
            q_coef=np.asarray(q_coef, dtype=float),
            q_rows=np.asarray(q_rows, dtype=float).reshape(len(q_con), self.n),
            q_off=np.asarray(q_off, dtype=float),
            dom_pos=np.asarray(dom, dtype=np.int64),
        )


@dataclass
class CompiledProgram:
    n: int
    m: int
    cost: np.ndarray
    A: np.ndarray
    b: np.ndarray
    e_con: np.ndarray
    e_coef: np.ndarray
    e_rows: np.ndarray
    e_off: np.ndarray
    i_con: np.ndarray
    i_coef: np.ndarray
    i_var: np.ndarray
    q_con: np.ndarray
    q_coef: np.ndarray
    q_rows: np.ndarray
    q_off: np.ndarray
    dom_pos: np.ndarray

    def phase1(self) -> "CompiledProgram":
        """Augmented program min s  s.t.  f_i(x) - s <= 0 over (x, s)."""
        n1 = self.n + 1
        pad = lambda M: np.hstack([M, np.zeros((M.shape[0], 1))]) if M.size else M.reshape(M.shape[0], n1)
        A = np.hstack([self.A, -np.ones((self.m, 1))])
        cost = np.zeros(n1)
        cost[-1] = 1.0
        return CompiledProgram(
            n=n1, m=self.m, cost=cost, A=A, b=self.b.copy(),
            e_con=self.e_con, e_coef=self.e_coef, e_rows=pad(self.e_rows),
            e_off=self.e_off,
            i_con=self.i_con, i_coef=self.i_coef, i_var=self.i_var,
            q_con=self.q_con, q_coef=self.q_coef, q_rows=pad(self.q_rows),
            q_off=self.q_off, dom_pos=self.dom_pos,
        )
