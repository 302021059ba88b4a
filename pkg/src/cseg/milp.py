"""Generic 0-1 integer linear programming: exact branch and bound over the
box relaxation, lazy constraints checked at integer incumbents, warm starts,
deterministic budgets, and an exhaustive oracle for verification."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TooLargeError
from . import simplex

LESS_EQUAL = "<="
EQUAL = "="
GREATER_EQUAL = ">="

OPTIMAL = "optimal"
FEASIBLE_BUDGET_HIT = "feasible_budget_hit"
INFEASIBLE = "infeasible"
NO_SOLUTION_BUDGET_HIT = "no_solution_budget_hit"

_INT_TOL = 1e-7
_FEAS_TOL = 1e-7


@dataclass
class Constraint:
    coeffs: dict  # var index -> coefficient
    relation: str
    rhs: float

    def key(self):
        return (tuple(sorted(self.coeffs.items())), self.relation, self.rhs)

    def satisfied_by(self, x, tol=_FEAS_TOL) -> bool:
        value = sum(coef * x[j] for j, coef in sorted(self.coeffs.items()))
        if self.relation == LESS_EQUAL:
            return value <= self.rhs + tol
        if self.relation == GREATER_EQUAL:
            return value >= self.rhs - tol
        return abs(value - self.rhs) <= tol


@dataclass
class MilpModel:
    """Minimization over binary variables with linear constraints.

    ``lazy_generator``, when set, maps an integer assignment to a list of
    violated Constraints; a point is feasible only once the generator
    returns none for it.
    """

    var_count: int
    objective: np.ndarray
    constraints: list = field(default_factory=list)
    fixed_vars: dict = field(default_factory=dict)
    lazy_generator: object = None
    objective_offset: float = 0.0

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64)
        if len(self.objective) != self.var_count:
            raise ValueError("objective length != var_count")
        if not np.isfinite(self.objective).all():
            raise ValueError("objective coefficients must be finite")

    def add_constraint(self, coeffs, relation, rhs) -> None:
        if relation not in (LESS_EQUAL, EQUAL, GREATER_EQUAL):
            raise ValueError(f"unknown relation {relation!r}")
        self.constraints.append(Constraint(dict(coeffs), relation, float(rhs)))

    def objective_value(self, assignment) -> float:
        """Canonical objective: exactly-rounded sum of the active terms."""
        terms = [
            float(self.objective[j]) * int(assignment[j])
            for j in range(self.var_count)
        ]
        terms.append(self.objective_offset)
        return math.fsum(terms)

    def statically_feasible(self, assignment, tol=_FEAS_TOL) -> bool:
        for j, val in self.fixed_vars.items():
            if int(assignment[j]) != val:
                return False
        return all(c.satisfied_by(assignment, tol) for c in self.constraints)


@dataclass
class SolveBudget:
    time_limit_seconds: float | None = None
    node_limit: int | None = None
    gap_tolerance: float = 1e-9


@dataclass
class SolveStats:
    nodes_explored: int = 0
    cuts_added: int = 0
    lp_solves: int = 0
    wall_time_seconds: float = 0.0


@dataclass
class MilpSolution:
    status: str
    assignment: np.ndarray | None = None
    objective_value: float | None = None
    stats: SolveStats = field(default_factory=SolveStats)


def _build_rows(model: MilpModel, cut_pool):
    n = model.var_count
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for c in list(model.constraints) + list(cut_pool):
        row = np.zeros(n)
        for j, coef in c.coeffs.items():
            row[j] += coef
        if c.relation == LESS_EQUAL:
            a_ub.append(row)
            b_ub.append(c.rhs)
        elif c.relation == GREATER_EQUAL:
            a_ub.append(-row)
            b_ub.append(-c.rhs)
        else:
            a_eq.append(row)
            b_eq.append(c.rhs)
    return (
        np.array(a_ub) if a_ub else None,
        np.array(b_ub) if b_ub else None,
        np.array(a_eq) if a_eq else None,
        np.array(b_eq) if b_eq else None,
    )


def solve(
    model: MilpModel,
    warm_start=None,
    budget: SolveBudget | None = None,
    cut_pool: list | None = None,
    node_hook=None,
) -> MilpSolution:
    """Best-bound branch and bound over the box relaxation.

    Integer incumbents pass through the lazy generator and are rejected
    (adding the violated constraints) until it returns none. ``cut_pool``
    is mutated in place so callers may retain cuts across solves;
    ``node_hook(bound, lo, hi)`` is called for every node whose relaxation
    was solved, for instrumentation.
    """
    budget = budget or SolveBudget()
    cut_pool = cut_pool if cut_pool is not None else []
    cut_keys = {c.key() for c in cut_pool}
    stats = SolveStats()
    start = time.perf_counter()
    n = model.var_count

    base_lo = np.zeros(n)
    base_hi = np.ones(n)
    for j, val in model.fixed_vars.items():
        base_lo[j] = base_hi[j] = float(val)

    best_x = None
    best_obj = math.inf
    if warm_start is not None:
        warm = np.asarray(warm_start).round().astype(np.int8)
        if not model.statically_feasible(warm):
            raise ValueError("warm start violates static constraints or fixings")
        lazy = list(model.lazy_generator(warm)) if model.lazy_generator else []
        new = [c for c in lazy if c.key() not in cut_keys]
        if new:
            for c in new:
                cut_keys.add(c.key())
                cut_pool.append(c)
            stats.cuts_added += len(new)
        else:
            best_x = warm.copy()
            best_obj = model.objective_value(warm)

    epoch = len(cut_pool)
    rows = _build_rows(model, cut_pool)

    def lp(lo, hi):
        stats.lp_solves += 1
        return simplex.solve_lp(model.objective, rows[0], rows[1], rows[2], rows[3], lo, hi)

    def out_of_budget():
        if budget.node_limit is not None and stats.nodes_explored >= budget.node_limit:
            return True
        if (
            budget.time_limit_seconds is not None
            and time.perf_counter() - start >= budget.time_limit_seconds
        ):
            return True
        return False

    def finish(status):
        stats.wall_time_seconds = time.perf_counter() - start
        if best_x is None:
            if status == OPTIMAL:
                return MilpSolution(INFEASIBLE, stats=stats)
            return MilpSolution(NO_SOLUTION_BUDGET_HIT, stats=stats)
        if status != OPTIMAL:
            return MilpSolution(FEASIBLE_BUDGET_HIT, best_x, best_obj, stats)
        return MilpSolution(OPTIMAL, best_x, best_obj, stats)

    root = lp(base_lo, base_hi)
    if root.status == simplex.INFEASIBLE:
        return finish(OPTIMAL)
    stats.nodes_explored += 1
    if node_hook:
        node_hook(root.objective + model.objective_offset, base_lo, base_hi)

    seq = 0
    heap = [(root.objective, seq, base_lo, base_hi, root.x, epoch)]

    while heap:
        bound, _, lo, hi, x, node_epoch = heapq.heappop(heap)
        gap = budget.gap_tolerance * max(1.0, abs(best_obj))
        if best_x is not None and bound + model.objective_offset >= best_obj - gap:
            break  # best-first: every remaining node is at least as bad
        if node_epoch != epoch:
            if out_of_budget():
                return finish(FEASIBLE_BUDGET_HIT)
            res = lp(lo, hi)
            stats.nodes_explored += 1
            if res.status == simplex.INFEASIBLE:
                continue
            if node_hook:
                node_hook(res.objective + model.objective_offset, lo, hi)
            seq += 1
            heapq.heappush(heap, (res.objective, seq, lo, hi, res.x, epoch))
            continue

        frac = np.abs(x - np.round(x)) if x.size else np.zeros(0)
        if x.size == 0 or frac.max() <= _INT_TOL:
            candidate = np.round(x).astype(np.int8)
            lazy = list(model.lazy_generator(candidate)) if model.lazy_generator else []
            if lazy:
                new = [c for c in lazy if c.key() not in cut_keys]
                if not new:
                    raise ArithmeticError(
                        "lazy generator reproduced constraints already in the pool"
                    )
                for c in new:
                    cut_keys.add(c.key())
                    cut_pool.append(c)
                stats.cuts_added += len(new)
                epoch = len(cut_pool)
                rows = _build_rows(model, cut_pool)
                seq += 1
                # re-push stale so the node's relaxation is solved again
                # against the grown pool
                heapq.heappush(heap, (bound, seq, lo, hi, x, -1))
                continue
            obj = model.objective_value(candidate)
            if obj < best_obj:
                best_obj = obj
                best_x = candidate
            continue

        # branch on the most fractional variable, lowest index on ties
        scores = np.where(frac > _INT_TOL, np.abs(x - 0.5), np.inf)
        j = int(np.argmin(scores))
        for val in (0.0, 1.0):
            if out_of_budget():
                return finish(FEASIBLE_BUDGET_HIT)
            clo, chi = lo.copy(), hi.copy()
            if val == 0.0:
                chi[j] = 0.0
            else:
                clo[j] = 1.0
            res = lp(clo, chi)
            stats.nodes_explored += 1
            if res.status == simplex.INFEASIBLE:
                continue
            if node_hook:
                node_hook(res.objective + model.objective_offset, clo, chi)
            seq += 1
            heapq.heappush(heap, (res.objective, seq, clo, chi, res.x, epoch))

    return finish(OPTIMAL)


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------

_BRUTE_LIMIT = 24
_BLOCK_BITS = 16


def brute_force(model: MilpModel) -> MilpSolution:
    """Exhaustively enumerate assignments; the optimum with lexicographically
    smallest assignment on objective ties. Only for small models."""
    n = model.var_count
    if n > _BRUTE_LIMIT:
        raise TooLargeError(f"{n} variables exceeds the {_BRUTE_LIMIT}-variable limit")
    stats = SolveStats()
    start = time.perf_counter()
    free = [j for j in range(n) if j not in model.fixed_vars]
    f = len(free)
    base = np.zeros(n, dtype=np.int8)
    for j, val in model.fixed_vars.items():
        base[j] = val

    a_ub, b_ub, a_eq, b_eq = _build_rows(model, [])

    def block_assignments(start_combo, count):
        combos = np.arange(start_combo, start_combo + count, dtype=np.int64)
        block = np.tile(base, (count, 1))
        for t, j in enumerate(free):
            block[:, j] = (combos >> (f - 1 - t)) & 1
        return block

    best_dot = math.inf
    total = 1 << f
    feasible_any = False
    # pass 1: the optimal objective value, via vectorized screening
    for begin in range(0, total, 1 << _BLOCK_BITS):
        count = min(1 << _BLOCK_BITS, total - begin)
        block = block_assignments(begin, count)
        ok = np.ones(count, dtype=bool)
        if a_ub is not None:
            ok &= (block @ a_ub.T <= b_ub + _FEAS_TOL).all(axis=1)
        if a_eq is not None:
            ok &= (np.abs(block @ a_eq.T - b_eq) <= _FEAS_TOL).all(axis=1)
        if not ok.any():
            continue
        objs = block[ok] @ model.objective + model.objective_offset
        order = np.argsort(objs, kind="stable")
        rows_ok = block[ok]
        for idx in order:
            if objs[idx] > best_dot + 1e-6:
                break
            candidate = rows_ok[idx]
            if model.lazy_generator and list(model.lazy_generator(candidate)):
                continue
            feasible_any = True
            value = model.objective_value(candidate)
            if value < best_dot:
                best_dot = value
    if not feasible_any:
        stats.wall_time_seconds = time.perf_counter() - start
        return MilpSolution(INFEASIBLE, stats=stats)

    # pass 2: lexicographically smallest assignment achieving the optimum
    for begin in range(0, total, 1 << _BLOCK_BITS):
        count = min(1 << _BLOCK_BITS, total - begin)
        block = block_assignments(begin, count)
        ok = np.ones(count, dtype=bool)
        if a_ub is not None:
            ok &= (block @ a_ub.T <= b_ub + _FEAS_TOL).all(axis=1)
        if a_eq is not None:
            ok &= (np.abs(block @ a_eq.T - b_eq) <= _FEAS_TOL).all(axis=1)
        near = ok & (np.abs(block @ model.objective + model.objective_offset - best_dot) <= 1e-6)
        for row in np.nonzero(near)[0]:
            candidate = block[row]
            if model.objective_value(candidate) != best_dot:
                continue
            if model.lazy_generator and list(model.lazy_generator(candidate)):
                continue
            stats.wall_time_seconds = time.perf_counter() - start
            return MilpSolution(OPTIMAL, candidate.copy(), best_dot, stats)
    raise AssertionError("pass 2 must find the pass-1 optimum")


# ---------------------------------------------------------------------------
# CPLEX-LP export
# ---------------------------------------------------------------------------


def _format_terms(coeffs) -> str:
    parts = []
    for j, coef in coeffs:
        if not parts:
            parts.append(f"{_num(coef)} x{j}" if coef >= 0 else f"- {_num(-coef)} x{j}")
        elif coef >= 0:
            parts.append(f"+ {_num(coef)} x{j}")
        else:
            parts.append(f"- {_num(-coef)} x{j}")
    return " ".join(parts) if parts else "0 x0"


def _num(value: float) -> str:
    return repr(float(value))


def export_lp(model: MilpModel, path) -> None:
    """Write the static model in CPLEX-LP text form.

    Lazy constraints have no textual form; a comment header records that
    they are omitted.
    """
    lines = ["\\ exported 0-1 model"]
    if model.lazy_generator is not None:
        lines.append("\\ note: lazy constraints are not exportable and were omitted")
    if model.objective_offset:
        lines.append(f"\\ objective offset (not representable): {_num(model.objective_offset)}")
    lines.append("Minimize")
    obj_terms = [(j, float(c)) for j, c in enumerate(model.objective) if c != 0.0]
    lines.append(" obj: " + _format_terms(obj_terms))
    lines.append("Subject To")
    for i, c in enumerate(model.constraints):
        rel = {LESS_EQUAL: "<=", EQUAL: "=", GREATER_EQUAL: ">="}[c.relation]
        terms = sorted(c.coeffs.items())
        lines.append(f" c{i}: " + _format_terms(terms) + f" {rel} {_num(c.rhs)}")
    if model.fixed_vars:
        lines.append("Bounds")
        for j in sorted(model.fixed_vars):
            lines.append(f" x{j} = {model.fixed_vars[j]}")
    lines.append("Binaries")
    lines.append(" " + " ".join(f"x{j}" for j in range(model.var_count)))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")
