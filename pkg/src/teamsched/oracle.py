"""Independent brute-force verification: lattice search over the load simplex,
security classification of team scheduling, and monotonicity sweeps.

Nothing here reuses the closed forms; agreement between this module and the
analytic/iterative paths is what the test suite certifies.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .game import (DisaggregatedProfile, GameInstance, LoadProfile,
                   SchedulerPopulation, system_cost)
from .solvers import SolveSettings, solve_team_equilibrium

#: refuse lattices beyond this many points
CAPACITY_LIMIT = 10 ** 8


class CapacityError(ValueError):
    """Requested lattice enumeration is too large to run."""


def lattice_size(n: int, steps: int) -> int:
    """Number of points of the scaled simplex lattice with ``steps`` subdivisions."""
    return math.comb(steps + n - 1, n - 1)


def _contribution_tables(instance: GameInstance, steps: int, step: float) -> list[np.ndarray]:
    """Per-server tables of x * tau_i^attack(x) on the lattice axis."""
    axis = np.arange(steps + 1, dtype=np.float64) * step
    tables = []
    for i in range(1, instance.n + 1):
        coeffs = np.asarray(instance.delays[i - 1].coefficients, dtype=np.float64)
        delay = np.polynomial.polynomial.polyval(axis, coeffs) + instance.attack_bonus(i)
        tables.append(axis * delay)
    return tables


def grid_search_optimum(instance: GameInstance, resolution: float = 1e-3) -> tuple[LoadProfile, float]:
    """Exhaustive minimum over the scaled-simplex lattice with the given step.

    Streams the enumeration (one slice of the outer coordinates at a time) so
    memory stays bounded. For polynomial delays the winner is within a
    Lipschitz-constant multiple of the resolution of the true optimum. Ties
    resolve to the lexicographically first lattice point, so reruns are
    byte-identical. Guards: at most four servers and ``resolution >= 1e-4``.
    """
    n = instance.n
    if n > 4:
        raise CapacityError(f"lattice search supports at most 4 servers, got {n}")
    if resolution < 1e-4:
        raise ValueError(f"resolution must be at least 1e-4, got {resolution}")
    steps = round(n / resolution)
    if lattice_size(n, steps) > CAPACITY_LIMIT:
        raise CapacityError(
            f"lattice has {lattice_size(n, steps)} points, limit is {CAPACITY_LIMIT}")
    step = n / steps
    tables = _contribution_tables(instance, steps, step)

    best_key: tuple[int, ...] | None = None
    best_val = math.inf

    if n == 1:
        best_key = (steps,)
        best_val = float(tables[0][steps])
    elif n == 2:
        totals = tables[0] + tables[1][::-1]
        k = int(np.argmin(totals))
        best_key = (k, steps - k)
        best_val = float(totals[k])
    elif n == 3:
        for k1 in range(steps + 1):
            m = steps - k1
            totals = tables[1][: m + 1] + tables[2][m::-1]
            k2 = int(np.argmin(totals))
            val = float(tables[0][k1]) + float(totals[k2])
            if val < best_val:
                best_val = val
                best_key = (k1, k2, m - k2)
    else:
        for k1 in range(steps + 1):
            for k2 in range(steps - k1 + 1):
                m = steps - k1 - k2
                totals = tables[2][: m + 1] + tables[3][m::-1]
                k3 = int(np.argmin(totals))
                val = float(tables[0][k1]) + float(tables[1][k2]) + float(totals[k3])
                if val < best_val:
                    best_val = val
                    best_key = (k1, k2, k3, m - k3)

    profile = LoadProfile.from_raw([k * step for k in best_key])
    return profile, system_cost(instance, profile)


@dataclass(frozen=True)
class SecurityVerdict:
    """Outcome of a security scan over an attack-strength grid.

    ``strong``: the team response matched the lattice optimum everywhere.
    ``weak``: it never exceeded the attack-oblivious baseline.
    ``worst_alpha``/``gap`` locate the largest gap behind the verdict's
    primary comparison. ``inconclusive`` flags solver non-convergence, in
    which case both booleans are reported false.
    """

    strong: bool
    weak: bool
    worst_alpha: float
    gap: float
    inconclusive: bool = False


@dataclass(frozen=True)
class MonotonicityReport:
    """Team-equilibrium costs along a penetration grid and whether they decrease."""

    nonincreasing: bool
    costs: tuple[float, ...]
    inconclusive: bool = False


def _team_costs_multistart(instance: GameInstance, population: SchedulerPopulation,
                           settings: SolveSettings, starts: int,
                           rng: random.Random) -> list[float] | None:
    """Team costs from the default start plus ``starts`` random ones.

    Returns None when nothing converges. Multiple starts approximate the
    quantifier over all equilibria, which cannot be enumerated.
    """
    n = instance.n
    costs = []
    report = solve_team_equilibrium(instance, population, settings)
    if report.converged:
        costs.append(report.cost)

    def random_block(access: frozenset[int], mass: float) -> tuple[float, ...]:
        weights = {i: rng.expovariate(1.0) for i in access}
        total = sum(weights.values())
        return tuple(mass * weights.get(i, 0.0) / total for i in range(1, n + 1))

    for _ in range(starts):
        selfish = random_block(population.selfish_access, max(0.0, population.selfish_mass))
        machines = tuple(random_block(population.machine_access[k], population.machine_masses[k])
                         for k in range(population.machine_count))
        init = DisaggregatedProfile(selfish, machines)
        report = solve_team_equilibrium(instance, population, settings, initial=init)
        if report.converged:
            costs.append(report.cost)
    return costs or None


def _security_scan(instance: GameInstance, population: SchedulerPopulation,
                   alphas: Sequence[float], resolution: float,
                   settings: SolveSettings | None, starts: int, seed: int):
    settings = settings or SolveSettings()
    rng = random.Random(seed)
    baseline_profile, _ = grid_search_optimum(replace(instance, attack_strength=0.0), resolution)

    strong_gaps: list[tuple[float, float]] = []
    weak_gaps: list[tuple[float, float]] = []
    for alpha in alphas:
        attacked = replace(instance, attack_strength=float(alpha))
        costs = _team_costs_multistart(attacked, population, settings, starts, rng)
        if costs is None:
            return None, None
        worst_team = max(costs)
        _, opt_cost = grid_search_optimum(attacked, resolution)
        strong_gaps.append((float(alpha), worst_team - opt_cost))
        weak_gaps.append((float(alpha), worst_team - system_cost(attacked, baseline_profile)))
    return strong_gaps, weak_gaps


def _verdict(strong_gaps, weak_gaps, tol: float, primary: str) -> SecurityVerdict:
    if strong_gaps is None:
        return SecurityVerdict(False, False, math.nan, math.nan, inconclusive=True)
    strong = all(g <= tol for _, g in strong_gaps)
    weak = all(g <= tol for _, g in weak_gaps)
    gaps = strong_gaps if primary == "strong" else weak_gaps
    worst_alpha, gap = max(gaps, key=lambda ag: ag[1])
    return SecurityVerdict(strong, weak, worst_alpha, gap)


def verify_strong_security(instance: GameInstance, population: SchedulerPopulation,
                           alphas: Sequence[float], tol: float = 1e-5, *,
                           resolution: float = 1e-3, settings: SolveSettings | None = None,
                           starts: int = 5, seed: int = 0) -> SecurityVerdict:
    """Does the team response match the lattice optimum at every grid attack?"""
    strong_gaps, weak_gaps = _security_scan(instance, population, alphas,
                                            resolution, settings, starts, seed)
    return _verdict(strong_gaps, weak_gaps, tol, "strong")


def verify_weak_security(instance: GameInstance, population: SchedulerPopulation,
                         alphas: Sequence[float], tol: float = 1e-5, *,
                         resolution: float = 1e-3, settings: SolveSettings | None = None,
                         starts: int = 5, seed: int = 0) -> SecurityVerdict:
    """Does the team response stay at or below the attack-oblivious baseline
    (the no-attack optimum held fixed) at every grid attack?"""
    strong_gaps, weak_gaps = _security_scan(instance, population, alphas,
                                            resolution, settings, starts, seed)
    return _verdict(strong_gaps, weak_gaps, tol, "weak")


def monotonicity_sweep(instance: GameInstance, r_grid: Sequence[float], alpha: float,
                       tol: float = 1e-8,
                       settings: SolveSettings | None = None) -> MonotonicityReport:
    """Team cost along an ascending machine-mass grid with full access.

    Costs should never increase as more mass moves under machine control.
    """
    settings = settings or SolveSettings()
    grid = [float(r) for r in r_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("machine-mass grid must be ascending")
    attacked = replace(instance, attack_strength=float(alpha))
    costs = []
    for r in grid:
        population = SchedulerPopulation.full_access(attacked.n, r)
        report = solve_team_equilibrium(attacked, population, settings)
        if not report.converged:
            return MonotonicityReport(False, tuple(costs), inconclusive=True)
        costs.append(report.cost)
    ok = all(b <= a + tol for a, b in zip(costs, costs[1:]))
    return MonotonicityReport(ok, tuple(costs))
