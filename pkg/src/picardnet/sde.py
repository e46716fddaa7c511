"""Euler-Maruyama simulation of the forward dynamics on a fixed time grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .indexrng import FrozenSample, IndexPath, brownian_path


class SimulationError(ValueError):
    pass


class NumericFailure(RuntimeError):
    """A coefficient or state became non-finite; carries the index path."""

    def __init__(self, message: str, path: IndexPath):
        super().__init__(f"{message} (index path {path})")
        self.path = tuple(path)


@dataclass(frozen=True)
class TimeGrid:
    """Sorted grid 0 = tau_0 <= ... <= tau_K = T; repeated points allowed."""

    points: tuple[float, ...]

    def __post_init__(self) -> None:
        pts = tuple(float(p) for p in self.points)
        if len(pts) < 2:
            raise SimulationError("grid needs at least two points")
        if pts[0] != 0.0:
            raise SimulationError("grid must start at 0")
        if any(b < a for a, b in zip(pts, pts[1:])):
            raise SimulationError("grid points must be nondecreasing")
        object.__setattr__(self, "points", pts)

    @property
    def horizon(self) -> float:
        return self.points[-1]

    @property
    def steps(self) -> int:
        return len(self.points) - 1


def uniform_grid(horizon: float, steps: int) -> TimeGrid:
    if steps < 1:
        raise SimulationError("need at least one step")
    return TimeGrid(tuple(horizon * k / steps for k in range(steps + 1)))


def grid_floor(grid: TimeGrid, s: float) -> float:
    """Largest grid point strictly below s, or tau_0 if none.

    A grid point maps to its predecessor: grid_floor(tau_k) = tau_{k-1}.
    """
    if not grid.points[0] <= s <= grid.horizon:
        raise SimulationError(f"time {s} outside [0, {grid.horizon}]")
    below = [p for p in grid.points if p < s]
    return below[-1] if below else grid.points[0]


def effective_breakpoints(grid: TimeGrid, t: float, s: float) -> tuple[float, ...]:
    """{t} plus the grid points in (t, s] plus {s}, sorted and deduplicated.

    This is the exact sequence of states an Euler path from t to s visits;
    coincident grid points collapse so no zero-length step ever consumes
    randomness.
    """
    if s < t:
        raise SimulationError(f"query time {s} precedes start time {t}")
    pts = {t, s}
    pts.update(p for p in grid.points if t < p <= s)
    return tuple(sorted(pts))


def euler_evaluate(problem, grid: TimeGrid, sample: FrozenSample, path: IndexPath,
                   t: float, x, s: float) -> np.ndarray:
    """State at time s of the Euler scheme started at (t, x).

    Drift and diffusion are evaluated at the left endpoint of each step;
    the off-grid query time s is handled by inserting s as the final
    breakpoint, with the Brownian draw for (floor(s), s] coming from the
    same substream in time order.
    """
    if not 0.0 <= t <= grid.horizon:
        raise SimulationError(f"start time {t} outside [0, {grid.horizon}]")
    if not t <= s <= grid.horizon:
        raise SimulationError(f"query time {s} outside [{t}, {grid.horizon}]")
    y = np.asarray(x, dtype=np.float64).reshape(problem.d).copy()
    breakpoints = effective_breakpoints(grid, t, s)
    if len(breakpoints) < 2:
        return y
    noise = brownian_path(sample, path, problem.d, breakpoints)
    for k in range(len(breakpoints) - 1):
        dt = breakpoints[k + 1] - breakpoints[k]
        drift = np.asarray(problem.mu(y), dtype=np.float64).reshape(problem.d)
        diff = np.asarray(problem.sigma(y), dtype=np.float64).reshape(problem.d, problem.d)
        y = y + drift * dt + diff @ noise.increments[k]
        if not np.all(np.isfinite(y)):
            raise NumericFailure(f"state non-finite at time {breakpoints[k + 1]}", path)
    return y
