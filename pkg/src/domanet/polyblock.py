"""Outer polyblock approximation for monotonic optimisation.

Maximises an increasing objective over the intersection of a normal set
(downward closed, described by a membership oracle) and a co-normal set
(upward closed) inside the box [0, upper]. The approximating polyblock is
stored as its vertex set; each iteration picks the most promising vertex,
projects it onto the normal-set boundary along the ray from the origin,
keeps the projection as a candidate when it is co-normal feasible, and
replaces the vertex by up to ``dim`` children obtained by pulling single
coordinates down to the projection.

The upper bound (best vertex value) never increases, so the gap to the
incumbent is a certified optimality bound at every iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class ContractViolation(RuntimeError):
    """The oracles do not describe a valid normal/co-normal pair."""


@dataclass
class DifProblem:
    """What the solver consumes: a box, an increasing objective and
    membership oracles for a normal and a co-normal set."""

    upper: np.ndarray
    objective: Callable[[np.ndarray], float]
    normal_oracle: Callable[[np.ndarray], bool]
    conormal_oracle: Callable[[np.ndarray], bool]
    name: str = ""


@dataclass
class SolverOptions:
    tol_gap: float = 1e-3          # relative to max(1, |value - gap_shift|)
    tol_bisect: float = 1e-6       # ray-projection resolution
    max_iterations: int = 500
    max_vertices: int = 100_000
    gap_shift: float = 0.0         # large constant offsets in the objective
    harvest: Optional[Callable[[np.ndarray, float], None]] = None
    repair: Optional[Callable[[np.ndarray], np.ndarray]] = None
    keep_history: bool = True

    @property
    def bisect_steps(self) -> int:
        return max(1, math.ceil(math.log2(1.0 / self.tol_bisect)))


@dataclass
class Telemetry:
    iterations: int = 0
    bisection_steps: int = 0
    normal_calls: int = 0
    conormal_calls: int = 0
    objective_calls: int = 0
    children_checked: int = 0
    work_units: int = 0
    peak_vertices: int = 0


@dataclass
class SolveResult:
    status: str                    # converged | iteration_limit | memory_limit | infeasible
    point: Optional[np.ndarray]
    value: float
    upper_bound: float
    gap: float
    telemetry: Telemetry
    history: list = field(default_factory=list)   # (iteration, ub, best)


class _VertexBuffer:
    """Preallocated vertex store with an alive mask and slot reuse.

    All scans run over the used prefix [0, cursor), not the whole
    preallocated capacity."""

    def __init__(self, capacity: int, dim: int):
        self.points = np.zeros((capacity, dim))
        self.values = np.full(capacity, -np.inf)
        self.alive = np.zeros(capacity, dtype=bool)
        self.capacity = capacity
        self._cursor = 0

    @property
    def n_alive(self) -> int:
        return int(self.alive[: self._cursor].sum())

    def add(self, point: np.ndarray, value: float) -> bool:
        if self._cursor < self.capacity:
            idx = self._cursor
            self._cursor += 1
        else:
            free = np.flatnonzero(~self.alive[: self._cursor])
            if free.size == 0:
                return False
            idx = int(free[0])
        self.points[idx] = point
        self.values[idx] = value
        self.alive[idx] = True
        return True

    def remove(self, idx: int) -> None:
        self.alive[idx] = False
        self.values[idx] = -np.inf

    def alive_points(self) -> np.ndarray:
        used = self.alive[: self._cursor]
        return self.points[: self._cursor][used]

    def dominates(self, point: np.ndarray) -> bool:
        """True when an alive vertex lies (weakly) above ``point``."""
        used = self.alive[: self._cursor]
        live = self.points[: self._cursor]
        above = np.all(live >= point - 1e-12, axis=1)
        return bool(np.any(above & used))

    def drop_below(self, floor: float) -> None:
        sl = slice(0, self._cursor)
        doomed = self.alive[sl] & (self.values[sl] <= floor)
        self.alive[sl][doomed] = False
        self.values[sl][doomed] = -np.inf


def select_vertex(buffer: _VertexBuffer) -> int:
    """Index of the best alive vertex; ties go to the lexicographically
    smallest point so selection is deterministic."""
    n = buffer._cursor
    used = buffer.alive[:n]
    if not used.any():
        raise ValueError("no alive vertices")
    values = buffer.values[:n]
    best = float(values[used].max())
    ties = np.flatnonzero(used & (values == best))
    if ties.size == 1:
        return int(ties[0])
    return int(min(ties, key=lambda i: tuple(buffer.points[i])))


def project_to_boundary(problem: DifProblem, vertex: np.ndarray,
                        options: SolverOptions,
                        telemetry: Optional[Telemetry] = None) -> np.ndarray:
    """Last normal point on the segment [0, vertex], found by bisection.

    When the vertex itself is normal it is returned unchanged; otherwise
    exactly ``options.bisect_steps`` oracle calls shrink the bracket, and
    the certified-inside endpoint is returned.
    """
    if telemetry is not None:
        telemetry.normal_calls += 1
    if problem.normal_oracle(vertex):
        return vertex.copy()
    lo, hi = 0.0, 1.0
    for _ in range(options.bisect_steps):
        mid = 0.5 * (lo + hi)
        if telemetry is not None:
            telemetry.normal_calls += 1
            telemetry.bisection_steps += 1
        if problem.normal_oracle(mid * vertex):
            lo = mid
        else:
            hi = mid
    return lo * vertex


def refine_vertices(problem: DifProblem, buffer: _VertexBuffer, idx: int,
                    projection: np.ndarray, best_value: float,
                    options: SolverOptions, telemetry: Telemetry) -> Optional[str]:
    """Replace vertex ``idx`` by its children, pruning dominated,
    co-normal-infeasible and value-hopeless ones. Returns a terminal
    status string when the vertex budget is exhausted."""
    vertex = buffer.points[idx].copy()
    buffer.remove(idx)
    reduced = np.flatnonzero(vertex - projection > 0.0)
    for i in reduced:
        child = vertex.copy()
        child[i] = projection[i]
        telemetry.children_checked += 1
        telemetry.work_units += 1
        if buffer.dominates(child):
            continue
        telemetry.objective_calls += 1
        value = problem.objective(child)
        if value <= best_value:
            continue
        telemetry.conormal_calls += 1
        if not problem.conormal_oracle(child):
            continue
        if not buffer.add(child, value):
            return "memory_limit"
        telemetry.peak_vertices = max(telemetry.peak_vertices, buffer.n_alive)
    return None


def solve(problem: DifProblem, options: SolverOptions = SolverOptions()) -> SolveResult:
    """Run the outer polyblock loop until the gap closes or a budget ends."""
    upper = np.asarray(problem.upper, dtype=float)
    dim = upper.size
    telemetry = Telemetry()

    telemetry.normal_calls += 1
    if not problem.normal_oracle(np.zeros(dim)):
        raise ContractViolation("origin must belong to the normal set")
    telemetry.conormal_calls += 1
    if not problem.conormal_oracle(upper):
        return SolveResult(
            status="infeasible", point=None, value=-np.inf,
            upper_bound=-np.inf, gap=np.inf, telemetry=telemetry,
        )

    buffer = _VertexBuffer(options.max_vertices, dim)
    telemetry.objective_calls += 1
    buffer.add(upper, problem.objective(upper))
    telemetry.peak_vertices = 1

    best_value = -np.inf
    best_point: Optional[np.ndarray] = None
    history: list = []
    status = "iteration_limit"

    for iteration in range(options.max_iterations):
        if buffer.n_alive == 0:
            status = "converged" if best_point is not None else "infeasible"
            break
        telemetry.iterations += 1
        telemetry.work_units += buffer.n_alive

        idx = select_vertex(buffer)
        vertex = buffer.points[idx]
        upper_bound = float(buffer.values[idx])

        gap = upper_bound - best_value
        scale = max(1.0, abs(best_value - options.gap_shift))
        if best_point is not None and gap <= options.tol_gap * scale:
            status = "converged"
            break

        steps_before = telemetry.bisection_steps
        projection = project_to_boundary(problem, vertex, options, telemetry)
        telemetry.work_units += telemetry.bisection_steps - steps_before

        # candidate test: optionally repair first (e.g. retighten auxiliary
        # coordinates); a repaired point must still satisfy both oracles
        candidate = projection
        if options.repair is not None:
            candidate = options.repair(projection)
            telemetry.normal_calls += 1
            if not problem.normal_oracle(candidate):
                candidate = projection
        telemetry.conormal_calls += 1
        if problem.conormal_oracle(candidate):
            telemetry.objective_calls += 1
            value = problem.objective(candidate)
            if options.harvest is not None:
                options.harvest(candidate.copy(), value)
            if value > best_value:
                best_value = value
                best_point = candidate.copy()
                buffer.drop_below(best_value)

        failure = refine_vertices(problem, buffer, idx, projection,
                                  best_value, options, telemetry)
        if options.keep_history:
            history.append((iteration, upper_bound, best_value))
        if failure is not None:
            status = failure
            break

    if buffer.n_alive > 0:
        used = buffer.alive[: buffer._cursor]
        upper_bound = float(buffer.values[: buffer._cursor][used].max())
        upper_bound = max(upper_bound, best_value)
    else:
        upper_bound = best_value
    if best_point is None and status != "infeasible":
        # every remaining box was pruned without a feasible witness
        status = "infeasible" if buffer.n_alive == 0 else status
    gap = upper_bound - best_value if best_point is not None else np.inf
    return SolveResult(
        status=status, point=best_point, value=best_value,
        upper_bound=upper_bound, gap=gap, telemetry=telemetry,
        history=history,
    )
