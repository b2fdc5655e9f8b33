"""Aggregated simulation revenue (ASR) benchmark.

A benchmark is a fixed set of taxi trajectories, each seeded at a test-ride
pickup and owning a private pool of test rides.  Walking a trajectory: when
the pool holds a ride at the taxi's current (cell, slot) it is taken -- the
fare accrues and the taxi advances to the dropoff.  Otherwise the policy
chooses: the no-learning baseline idles one slot in place, a learned policy
relocates to its preferred cell, also spending one slot and earning nothing.
ASR is the total fare over all trajectories.  The same benchmark object is
reused across policies so revenue differences come from decisions alone.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import CityGrid, RideRecord
from .qmodel import QNetwork, encode_states

#: A policy maps (cell, slot) to a relocation target cell, or None to idle.
Policy = Callable[[int, int], "int | None"]


class EvaluationError(ValueError):
    """Malformed benchmark (empty pools, inconsistent grid)."""


@dataclass(frozen=True)
class Trajectory:
    start_cell: int
    start_slot: int
    rides: tuple[RideRecord, ...]


@dataclass(frozen=True)
class Benchmark:
    grid: CityGrid
    trajectories: tuple[Trajectory, ...]
    horizon_slots: int
    #: A ride stays on offer for this many slots after its pickup slot.
    wait_window_slots: int = 6
    #: Relocation spends travel time: 1 + distance // this many cells per slot.
    relocation_cells_per_slot: int = 3


def build_benchmark(
    grid: CityGrid,
    test_rides: list[RideRecord],
    *,
    trajectories: int = 50,
    rides_per_trajectory: int = 50,
    horizon_slots: int = 96,
    wait_window_slots: int = 6,
    relocation_cells_per_slot: int = 3,
    seed: int = 0,
) -> Benchmark:
    """Carve disjoint per-trajectory ride pools out of the test set.

    Start states are drawn from test-ride pickups.  Pools never share a ride,
    so a ride taken in one trajectory cannot be earned again in another.

    Raises:
        EvaluationError: test set too small for the requested pools.
    """
    needed = trajectories * rides_per_trajectory
    if len(test_rides) < needed:
        raise EvaluationError(
            f"test set holds {len(test_rides)} rides, benchmark needs {needed}"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(test_rides), size=needed, replace=False)
    starts = rng.choice(len(test_rides), size=trajectories, replace=False)
    out = []
    for t in range(trajectories):
        pool = tuple(
            test_rides[i]
            for i in picked[t * rides_per_trajectory : (t + 1) * rides_per_trajectory]
        )
        anchor = test_rides[starts[t]]
        out.append(
            Trajectory(
                start_cell=anchor.pickup_cell,
                start_slot=anchor.pickup_slot,
                rides=pool,
            )
        )
    return Benchmark(
        grid=grid,
        trajectories=tuple(out),
        horizon_slots=horizon_slots,
        wait_window_slots=wait_window_slots,
        relocation_cells_per_slot=relocation_cells_per_slot,
    )


def no_learning_policy(cell: int, slot: int) -> int | None:
    """Idle in place when no ride is found."""
    return None


def greedy_policy(net: QNetwork, grid: CityGrid) -> Policy:
    """Relocate to the argmax-Q action cell; ties go to the lowest cell index."""

    def policy(cell: int, slot: int) -> int:
        x = encode_states(grid, np.array([cell]), np.array([slot]))
        return int(np.argmax(net.forward(x)[0]))

    return policy


def asr_evaluate(benchmark: Benchmark, policy: Policy) -> float:
    """Total fare over all benchmark trajectories under ``policy``.

    A pool ride is on offer at (cell, slot) from its pickup slot until
    ``wait_window_slots`` later (the passenger waits, then gives up), and is
    consumed when taken.  Deterministic: ride ties at one (cell, slot) resolve
    to the earliest pool entry, and policies are pure functions of
    (cell, slot).
    """
    grid = benchmark.grid
    total = 0.0
    for traj in benchmark.trajectories:
        available: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i, ride in enumerate(traj.rides):
            for wait in range(benchmark.wait_window_slots + 1):
                slot = (ride.pickup_slot + wait) % grid.time_slots
                available[(ride.pickup_cell, slot)].append(i)
        for key in available:
            available[key].sort(reverse=True)  # pop() then yields lowest index

        consumed = [False] * len(traj.rides)
        cell = traj.start_cell
        elapsed = 0
        taken = 0
        while elapsed < benchmark.horizon_slots and taken < len(traj.rides):
            slot = (traj.start_slot + elapsed) % grid.time_slots
            queue = available.get((cell, slot))
            ride_index = None
            while queue:
                cand = queue.pop()
                if not consumed[cand]:
                    ride_index = cand
                    break
            if ride_index is not None:
                ride = traj.rides[ride_index]
                consumed[ride_index] = True
                total += ride.fare
                taken += 1
                cell = ride.dropoff_cell
                elapsed += max(1, (ride.dropoff_slot - ride.pickup_slot) % grid.time_slots)
            else:
                target = policy(cell, slot)
                if target is None or target == cell:
                    elapsed += 1  # idle in place
                else:
                    if not 0 <= target < grid.cells:
                        raise EvaluationError(f"policy chose unknown cell {target}")
                    # Relocation earns nothing and spends travel time.
                    elapsed += 1 + grid.manhattan(cell, target) // benchmark.relocation_cells_per_slot
                    cell = target
    return total


def asr_report(
    name: str,
    asr_values: list[float],
    nl_values: list[float],
    seeds: list[int],
) -> dict:
    """Summary record for one policy: mean/std ASR and benefit % over NL."""
    asr = np.asarray(asr_values, dtype=np.float64)
    nl = np.asarray(nl_values, dtype=np.float64)
    benefit = float((asr.mean() - nl.mean()) / nl.mean() * 100.0) if nl.mean() else 0.0
    return {
        "policy": name,
        "seeds": list(seeds),
        "asr_mean": float(asr.mean()),
        "asr_std": float(asr.std(ddof=1)) if asr.size > 1 else 0.0,
        "benefit_pct_vs_NL": benefit,
    }
