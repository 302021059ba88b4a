"""Dense two-phase simplex for box-constrained linear programs.

Solves  min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper
with finite variable bounds, which is all the 0-1 relaxations here need.
Dantzig pricing with a Bland fallback against cycling; fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_TOL = 1e-9
_PIVOT_TOL = 1e-10

_NB_LOWER = 0
_NB_UPPER = 1
_BASIC = 2


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0


class _Tableau:
    """Simplex state: B^-1 A kept dense, basic values tracked incrementally."""

    def __init__(self, a, rhs, ubounds, basis):
        self.t = a
        self.xb = rhs
        self.ub = ubounds
        self.basis = basis
        self.m, self.total = a.shape
        self.status = np.full(self.total, _NB_LOWER, dtype=np.int8)
        self.status[basis] = _BASIC
        self.iters = 0

    def _entering(self, d, bland):
        pick, pick_dir, best = -1, 0, _TOL
        for j in range(self.total):
            st = self.status[j]
            if st == _BASIC or self.ub[j] <= _PIVOT_TOL:
                continue
            if st == _NB_LOWER and d[j] < -_TOL:
                score, direction = -d[j], 1
            elif st == _NB_UPPER and d[j] > _TOL:
                score, direction = d[j], -1
            else:
                continue
            if bland:
                return j, direction
            if score > best:
                pick, pick_dir, best = j, direction, score
        return pick, pick_dir

    def _ratio(self, w, t_self, bland):
        """Smallest step before a basic variable hits a bound.

        Returns (t_limit, leave_row, leave_to_upper); leave_row is -1 when
        the entering variable's own bound binds first.
        """
        t_min, row, to_upper = t_self, -1, False
        for i in range(self.m):
            wi = w[i]
            if wi > _PIVOT_TOL:
                t, up = self.xb[i] / wi, False
            elif wi < -_PIVOT_TOL and np.isfinite(self.ub[self.basis[i]]):
                t, up = (self.ub[self.basis[i]] - self.xb[i]) / (-wi), True
            else:
                continue
            t = max(t, 0.0)
            better = t < t_min - _TOL
            tie = abs(t - t_min) <= _TOL
            if better or (tie and row < 0):
                t_min, row, to_upper = t, i, up
            elif tie and row >= 0 and bland and self.basis[i] < self.basis[row]:
                t_min, row, to_upper = min(t, t_min), i, up
        return t_min, row, to_upper

    def run(self, cost, max_iter):
        """Optimize one phase. Returns OPTIMAL or UNBOUNDED."""
        n_iter = 0
        while True:
            n_iter += 1
            self.iters += 1
            if n_iter > max_iter:
                raise ArithmeticError("simplex iteration limit exceeded")
            bland = n_iter > max(200, 4 * self.total)
            d = cost - cost[self.basis] @ self.t
            enter, direction = self._entering(d, bland)
            if enter < 0:
                return OPTIMAL
            w = self.t[:, enter] * direction
            t_star, leave_row, to_upper = self._ratio(w, self.ub[enter], bland)
            if not np.isfinite(t_star):
                return UNBOUNDED
            if leave_row < 0:
                # bound flip: the entering variable crosses to its other bound
                self.xb -= w * t_star
                self.status[enter] = _NB_UPPER if direction > 0 else _NB_LOWER
                np.clip(self.xb, 0.0, None, out=self.xb)
                continue
            self.xb -= w * t_star
            enter_value = (
                0.0 if self.status[enter] == _NB_LOWER else self.ub[enter]
            ) + direction * t_star
            self.pivot(leave_row, enter, enter_value, to_upper)

    def pivot(self, row, enter, enter_value, leave_to_upper):
        leaving = self.basis[row]
        self.status[leaving] = _NB_UPPER if leave_to_upper else _NB_LOWER
        self.t[row] /= self.t[row, enter]
        col = self.t[:, enter].copy()
        col[row] = 0.0
        self.t -= np.outer(col, self.t[row])
        self.t[:, enter] = 0.0
        self.t[row, enter] = 1.0
        self.xb[row] = enter_value
        self.basis[row] = enter
        self.status[enter] = _BASIC
        np.clip(self.xb, 0.0, None, out=self.xb)


def solve_lp(c, a_ub, b_ub, a_eq, b_eq, lower, upper) -> LpResult:
    """Solve one boxed LP; see the module docstring for the problem form."""
    c = np.asarray(c, dtype=np.float64)
    n = len(c)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(upper < lower - _TOL):
        return LpResult(INFEASIBLE)
    a_ub = np.zeros((0, n)) if a_ub is None or not len(a_ub) else np.asarray(a_ub, dtype=np.float64)
    b_ub = np.zeros(0) if b_ub is None or not len(b_ub) else np.asarray(b_ub, dtype=np.float64)
    a_eq = np.zeros((0, n)) if a_eq is None or not len(a_eq) else np.asarray(a_eq, dtype=np.float64)
    b_eq = np.zeros(0) if b_eq is None or not len(b_eq) else np.asarray(b_eq, dtype=np.float64)

    # shift x = lower + y with 0 <= y <= span
    span = np.maximum(upper - lower, 0.0)
    rhs_ub = b_ub - (a_ub @ lower if len(b_ub) else 0.0)
    rhs_eq = b_eq - (a_eq @ lower if len(b_eq) else 0.0)

    m_ub, m_eq = len(rhs_ub), len(rhs_eq)
    m = m_ub + m_eq
    if m == 0:
        y = np.where(c > 0, 0.0, span)
        x = lower + y
        return LpResult(OPTIMAL, x, float(c @ x))

    n_slack = m_ub
    n_cols = n + n_slack
    a = np.zeros((m, n_cols))
    rhs = np.empty(m)
    a[:m_ub, :n] = a_ub
    a[:m_ub, n:n_cols] = np.eye(m_ub)
    rhs[:m_ub] = rhs_ub
    a[m_ub:, :n] = a_eq
    rhs[m_ub:] = rhs_eq

    neg = rhs < 0
    a[neg] *= -1.0
    rhs[neg] *= -1.0

    ubounds = np.concatenate([span, np.full(n_slack, np.inf)])

    # initial basis: honest slacks where possible, artificials elsewhere
    basis = np.empty(m, dtype=np.int64)
    art_rows = [i for i in range(m) if i >= m_ub or neg[i]]
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis[i] = n + i
    n_art = len(art_rows)
    if n_art:
        art_cols = np.zeros((m, n_art))
        for j, row in enumerate(art_rows):
            art_cols[row, j] = 1.0
            basis[row] = n_cols + j
        a = np.hstack([a, art_cols])
        ubounds = np.concatenate([ubounds, np.full(n_art, np.inf)])

    tab = _Tableau(a, rhs.copy(), ubounds, basis)
    total = tab.total
    max_iter = 2000 + 80 * total

    if n_art:
        cost1 = np.zeros(total)
        cost1[n_cols:] = 1.0
        tab.run(cost1, max_iter)
        art_value = sum(tab.xb[i] for i in range(m) if tab.basis[i] >= n_cols)
        if art_value > 1e-7:
            return LpResult(INFEASIBLE, iterations=tab.iters)
        for i in range(m):
            if tab.basis[i] < n_cols:
                continue
            for j in range(n_cols):
                if tab.status[j] != _BASIC and abs(tab.t[i, j]) > 1e-7:
                    value = 0.0 if tab.status[j] == _NB_LOWER else tab.ub[j]
                    tab.pivot(i, j, value, False)
                    break
        tab.ub[n_cols:] = 0.0  # pin artificials; basic leftovers sit on dead rows

    cost2 = np.zeros(total)
    cost2[:n] = c
    if tab.run(cost2, max_iter) == UNBOUNDED:
        return LpResult(UNBOUNDED, iterations=tab.iters)

    y = np.zeros(total)
    at_upper = tab.status == _NB_UPPER
    y[at_upper] = tab.ub[at_upper]
    y[tab.basis] = tab.xb
    x = lower + y[:n]
    np.clip(x, lower, upper, out=x)
    return LpResult(OPTIMAL, x, float(c @ x), iterations=tab.iters)
