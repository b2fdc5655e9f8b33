"""Grid city environment and synthetic ride demand.

A city is a g x g grid of cells; a day is 96 fifteen-minute slots.  Synthetic
demand concentrates pickups in a few hotspot cells whose intensity peaks at
different times of day, so the profitable repositioning target depends on both
location and time.  Fares grow linearly with Manhattan distance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TIME_SLOTS = 96


@dataclass(frozen=True)
class CityGrid:
    rows: int = 8
    cols: int = 8
    time_slots: int = DEFAULT_TIME_SLOTS

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid must be at least 2x2")
        if self.time_slots < 1:
            raise ValueError("time_slots must be >= 1")

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    def cell_xy(self, cell: int) -> tuple[int, int]:
        return divmod(cell, self.cols)

    def manhattan(self, a: int, b: int) -> int:
        ay, ax = self.cell_xy(a)
        by, bx = self.cell_xy(b)
        return abs(ay - by) + abs(ax - bx)


@dataclass(frozen=True)
class RideRecord:
    """One observed ride: pickup state, dropoff state, action, fare."""

    pickup_cell: int
    pickup_slot: int
    dropoff_cell: int
    dropoff_slot: int
    fare: float


@dataclass(frozen=True)
class DemandParams:
    """Synthetic demand shape shared by the training and test streams."""

    hotspot_count: int = 6
    #: Probability a pickup happens in a hotspot rather than a uniform cell.
    hotspot_weight: float = 0.8
    #: Probability a dropoff targets a (currently active) hotspot.
    dropoff_hotspot_weight: float = 0.5
    base_fare: float = 4.0
    fare_per_cell: float = 0.15
    #: Gaussian width, in slots, of each hotspot's demand peak.
    peak_width_slots: float = 14.0
    peak_amplitude: float = 4.0
    #: Hotspot share of demand decays geometrically by rank; 1.0 means equal.
    hotspot_share_decay: float = 0.8
    #: Hotspot dropoffs prefer hotspots near the pickup: weight kappa^distance.
    dropoff_locality: float = 0.6
    #: Slots of travel per 3 cells of Manhattan distance (plus 1 baseline).
    travel_cells_per_slot: int = 3
    #: Seeds the hotspot layout; fixed per task, independent of ride seeds.
    structure_seed: int = 7

    def hotspot_cells(self, grid: CityGrid) -> np.ndarray:
        """Well-separated interior cells via farthest-point placement.

        Hotspots stay off the map border (population centers, not map edges),
        so border cells are reliably low-demand.
        """
        rng = np.random.default_rng(self.structure_seed)
        interior = [
            cell
            for cell in range(grid.cells)
            if 0 < grid.cell_xy(cell)[0] < grid.rows - 1
            and 0 < grid.cell_xy(cell)[1] < grid.cols - 1
        ] or list(range(grid.cells))
        k = min(self.hotspot_count, len(interior))
        chosen = [interior[int(rng.integers(len(interior)))]]
        while len(chosen) < k:
            best_cell, best_dist = -1, -1
            for cell in interior:
                if cell in chosen:
                    continue
                d = min(grid.manhattan(cell, c) for c in chosen)
                if d > best_dist:
                    best_cell, best_dist = cell, d
            chosen.append(best_cell)
        return np.array(chosen)

    def peak_slots(self, grid: CityGrid) -> np.ndarray:
        """Each hotspot peaks at a different, evenly spread time of day."""
        k = min(self.hotspot_count, grid.cells)
        return ((np.arange(k) + 0.5) * grid.time_slots / k).astype(int)


@dataclass
class _DemandTables:
    hotspots: np.ndarray
    #: (time_slots, hotspot_count) intensity of each hotspot per slot.
    intensity: np.ndarray
    slot_profile: np.ndarray
    #: (cells, hotspot_count) locality kernel kappa^manhattan(cell, hotspot).
    locality: np.ndarray


def _demand_tables(grid: CityGrid, demand: DemandParams) -> _DemandTables:
    hotspots = demand.hotspot_cells(grid)
    peaks = demand.peak_slots(grid)
    t = np.arange(grid.time_slots)[:, None]
    # Circular distance to the peak, in slots.
    delta = np.abs(t - peaks[None, :])
    delta = np.minimum(delta, grid.time_slots - delta)
    intensity = 1.0 + demand.peak_amplitude * np.exp(
        -0.5 * (delta / demand.peak_width_slots) ** 2
    )
    shares = demand.hotspot_share_decay ** np.arange(hotspots.size)
    intensity = intensity * shares[None, :]
    slot_profile = intensity.sum(axis=1)
    slot_profile = slot_profile / slot_profile.sum()
    locality = np.array(
        [
            [demand.dropoff_locality ** grid.manhattan(cell, int(h)) for h in hotspots]
            for cell in range(grid.cells)
        ]
    )
    return _DemandTables(
        hotspots=hotspots,
        intensity=intensity,
        slot_profile=slot_profile,
        locality=locality,
    )


def generate_rides(
    grid: CityGrid,
    count: int,
    round_index: int,
    seed: int,
    demand: DemandParams | None = None,
) -> list[RideRecord]:
    """Draw ``count`` synthetic rides; deterministic for fixed (seed, round).

    Pickup slots follow the aggregate demand profile; pickup cells land in a
    hotspot with probability ``hotspot_weight`` (weighted by that slot's
    hotspot intensities) and uniformly otherwise.  Dropoffs target an active
    hotspot with probability ``dropoff_hotspot_weight``.  The fare is
    ``base_fare + fare_per_cell * manhattan(pickup, dropoff)``.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    demand = demand or DemandParams()
    tables = _demand_tables(grid, demand)
    rng = np.random.default_rng((seed, round_index))

    slots = rng.choice(grid.time_slots, size=count, p=tables.slot_profile)
    rides = []
    for t in slots:
        weights = tables.intensity[t]
        if rng.random() < demand.hotspot_weight:
            pickup = int(tables.hotspots[_weighted_pick(rng, weights)])
        else:
            pickup = int(rng.integers(grid.cells))
        if rng.random() < demand.dropoff_hotspot_weight:
            dropoff = int(
                tables.hotspots[_weighted_pick(rng, weights * tables.locality[pickup])]
            )
        else:
            dropoff = int(rng.integers(grid.cells))
        distance = grid.manhattan(pickup, dropoff)
        travel = 1 + distance // demand.travel_cells_per_slot
        rides.append(
            RideRecord(
                pickup_cell=pickup,
                pickup_slot=int(t),
                dropoff_cell=dropoff,
                dropoff_slot=int((t + travel) % grid.time_slots),
                fare=demand.base_fare + demand.fare_per_cell * distance,
            )
        )
    return rides


def _weighted_pick(rng: np.random.Generator, weights: np.ndarray) -> int:
    return int(rng.choice(weights.size, p=weights / weights.sum()))


class RideFormatError(ValueError):
    """Structurally unusable ride CSV (missing columns, unreadable rows)."""


class RideValidationError(ValueError):
    """Rows that parse but violate ride invariants; carries line numbers."""


_CSV_COLUMNS = ["pickup_cell", "pickup_slot", "dropoff_cell", "dropoff_slot", "fare"]


def ingest_rides_csv(path: str, grid: CityGrid | None = None) -> list[RideRecord]:
    """Parse a ride CSV with columns pickup_cell, pickup_slot, dropoff_cell,
    dropoff_slot, fare.

    Raises:
        RideFormatError: missing header columns or unparseable fields.
        RideValidationError: negative fares or out-of-range cells/slots,
            reported with 1-based line numbers.
    """
    rides: list[RideRecord] = []
    problems: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = [c for c in _CSV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise RideFormatError(f"missing columns: {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                pickup_cell = int(row["pickup_cell"])
                pickup_slot = int(row["pickup_slot"])
                dropoff_cell = int(row["dropoff_cell"])
                dropoff_slot = int(row["dropoff_slot"])
                fare = float(row["fare"])
            except (TypeError, ValueError) as exc:
                raise RideFormatError(f"line {line}: unparseable row ({exc})") from exc
            if fare < 0:
                problems.append(f"line {line}: negative fare {fare}")
                continue
            if grid is not None:
                if not (0 <= pickup_cell < grid.cells and 0 <= dropoff_cell < grid.cells):
                    problems.append(f"line {line}: cell out of range")
                    continue
                if not (0 <= pickup_slot < grid.time_slots and 0 <= dropoff_slot < grid.time_slots):
                    problems.append(f"line {line}: slot out of range")
                    continue
            rides.append(
                RideRecord(pickup_cell, pickup_slot, dropoff_cell, dropoff_slot, fare)
            )
    if problems:
        raise RideValidationError("; ".join(problems))
    return rides
