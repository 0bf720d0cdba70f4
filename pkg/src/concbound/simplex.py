"""Dense two-phase simplex over ``fractions.Fraction`` with Bland's rule.

Small and exact: the loop analyses produce LPs with a handful of rows, where
exactness of the Farkas certificate matters more than speed.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: Optional[list] = None
    objective: Optional[Fraction] = None


def _F(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def linprog_exact(c: Sequence, A_ub: Sequence = (), b_ub: Sequence = (), A_eq: Sequence = (),
                  b_eq: Sequence = (), bounds: Optional[Sequence] = None) -> LPResult:
    """Minimise ``c.x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and per-variable bounds.

    ``bounds`` holds ``(lo, hi)`` pairs with ``None`` meaning unbounded; the
    default is ``(0, None)`` for every variable, as in ``scipy.optimize.linprog``.
    """
    nx = len(c)
    bounds = list(bounds) if bounds is not None else [(0, None)] * nx
    # x_j = shift_j + sum_k coef * z_k with z >= 0
    cols: list = []  # (orig var, sign)
    shift = [Fraction(0)] * nx
    extra_ub: list = []
    for j, (lo, hi) in enumerate(bounds):
        if lo is not None:
            shift[j] = _F(lo)
            cols.append((j, 1))
            if hi is not None:
                extra_ub.append((len(cols) - 1, _F(hi) - _F(lo)))
        elif hi is not None:
            shift[j] = _F(hi)
            cols.append((j, -1))
        else:
            cols.append((j, 1))
            cols.append((j, -1))
    nz = len(cols)

    def lift(row):
        out = [Fraction(0)] * nz
        for k, (j, s) in enumerate(cols):
            out[k] = s * _F(row[j])
        return out

    def offset(row):
        return sum((_F(row[j]) * shift[j] for j in range(nx)), Fraction(0))

    rows = []  # (coeffs, sense, rhs)
    for a, b in zip(A_ub, b_ub):
        rows.append((lift(a), "<=", _F(b) - offset(a)))
    for k, ub in extra_ub:
        e = [Fraction(0)] * nz
        e[k] = Fraction(1)
        rows.append((e, "<=", ub))
    for a, b in zip(A_eq, b_eq):
        rows.append((lift(a), "=", _F(b) - offset(a)))
    cz = lift(c)
    status, z, obj = _solve_standard(cz, rows, nz)
    if status != OPTIMAL:
        return LPResult(status)
    x = list(shift)
    for k, (j, s) in enumerate(cols):
        x[j] += s * z[k]
    objective = sum((_F(c[j]) * x[j] for j in range(nx)), Fraction(0))
    return LPResult(OPTIMAL, x, objective)


def _solve_standard(cz, rows, nz):
    m = len(rows)
    # columns: z (nz) | slack/surplus (one per inequality) | artificials
    n_slack = sum(1 for _, s, _ in rows if s != "=")
    art_rows = [i for i, (_, s, b) in enumerate(rows) if s == "=" or b < 0]
    ncol = nz + n_slack + len(art_rows)
    T = []
    basis = []
    si = nz
    ai = nz + n_slack
    for i, (a, sense, b) in enumerate(rows):
        r = list(a) + [Fraction(0)] * (ncol - nz) + [b]
        if sense == "<=":
            r[si] = Fraction(1)
            slack_col = si
            si += 1
        else:
            slack_col = None
        if b < 0 or sense == "=":
            if b < 0:
                r = [-v for v in r]
            r[ai] = Fraction(1)
            basis.append(ai)
            ai += 1
        else:
            basis.append(slack_col)
        T.append(r)
    art_cols = set(range(nz + n_slack, ncol))
    if art_cols:
        cost1 = [Fraction(1) if j in art_cols else Fraction(0) for j in range(ncol)]
        st = _iterate(T, basis, cost1, range(ncol))
        if st != OPTIMAL:  # phase 1 is bounded below by 0
            raise AssertionError("phase 1 cannot be unbounded")
        if sum((T[i][-1] for i in range(len(T)) if basis[i] in art_cols), Fraction(0)) > 0:
            return INFEASIBLE, None, None
        # drive zero-valued artificials out of the basis
        i = 0
        while i < len(T):
            if basis[i] in art_cols:
                j = next((j for j in range(nz + n_slack) if T[i][j] != 0), None)
                if j is None:
                    T.pop(i)
                    basis.pop(i)
                    continue
                _pivot(T, basis, i, j)
            i += 1
    cost2 = list(cz) + [Fraction(0)] * (ncol - nz)
    allowed = [j for j in range(ncol) if j not in art_cols]
    st = _iterate(T, basis, cost2, allowed)
    if st != OPTIMAL:
        return st, None, None
    z = [Fraction(0)] * nz
    for i, j in enumerate(basis):
        if j < nz:
            z[j] = T[i][-1]
    obj = sum((cz[j] * z[j] for j in range(nz)), Fraction(0))
    return OPTIMAL, z, obj


def _pivot(T, basis, r, j):
    piv = T[r][j]
    row = [v / piv for v in T[r]]
    T[r] = row
    for i in range(len(T)):
        if i != r and T[i][j] != 0:
            f = T[i][j]
            T[i] = [a - f * b for a, b in zip(T[i], row)]
    basis[r] = j


def _iterate(T, basis, cost, allowed):
    allowed = list(allowed)
    while True:
        # Bland: lowest-index column with negative reduced cost
        enter = None
        for j in allowed:
            if j in basis:
                continue
            rc = cost[j] - sum((cost[basis[i]] * T[i][j] for i in range(len(T)) if T[i][j] != 0), Fraction(0))
            if rc < 0:
                enter = j
                break
        if enter is None:
            return OPTIMAL
        best = None
        for i in range(len(T)):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return UNBOUNDED
        _pivot(T, basis, best[1], enter)
