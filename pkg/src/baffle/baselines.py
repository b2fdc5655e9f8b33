"""Reference learners sharing the taxi task: classical FL, local learning,
centralized fitted-Q, and the random decentralized scheme.

All learners derive their per-round training RNG from (seed, round, agent) so
trajectories are directly comparable: local learning over one agent's stream
is definitionally the centralized learner on that stream, and classical FL
with a single agent reproduces the centralized trajectory step for step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import TrainParams
from .ledger import Ledger, Transaction
from .learning.env import CityGrid, RideRecord
from .learning.qmodel import QNetwork, bellman_targets, encode_rides, train_step
from .params import PartitionScheme, decode_payload, serialize_chunk
from . import wire
from .wire import TxKind

RideStream = list[list[RideRecord]]  # rides per round


def _train_round(
    net: QNetwork,
    grid: CityGrid,
    rides: list[RideRecord],
    train: TrainParams,
    rng: np.random.Generator,
) -> tuple[float, int]:
    if not rides:
        return float("nan"), 0
    batch = encode_rides(grid, rides)
    targets = bellman_targets(net, batch, train.gamma)
    return train_step(
        net,
        batch,
        targets,
        eta=train.eta,
        epochs=train.epochs,
        batch_size=train.batch_size,
        rng=rng,
    )


def centralized_nfq(
    net: QNetwork,
    grid: CityGrid,
    stream: RideStream,
    train: TrainParams,
    *,
    seed: int = 0,
    agent_id: int = 0,
) -> list[float]:
    """Single learner over the full ride stream: Bellman targets then a
    gradient fit, once per round.  Mutates ``net``; returns per-round losses.
    """
    losses = []
    for round_index, rides in enumerate(stream):
        rng = np.random.default_rng((seed, round_index, agent_id))
        loss, _ = _train_round(net, grid, rides, train, rng)
        losses.append(loss)
    return losses


def ll_train(
    net: QNetwork,
    grid: CityGrid,
    stream: RideStream,
    train: TrainParams,
    *,
    seed: int = 0,
    agent_id: int = 0,
) -> list[float]:
    """Local learning: no aggregation, identical to the centralized learner
    restricted to this agent's stream."""
    return centralized_nfq(net, grid, stream, train, seed=seed, agent_id=agent_id)


@dataclass
class AggregatorState:
    """Classical FL coordinator: the global model and round bookkeeping."""

    global_net: QNetwork
    round_index: int = 0
    selected_history: list[list[int]] = field(default_factory=list)


def cfl_round(
    state: AggregatorState,
    grid: CityGrid,
    rides_by_agent: dict[int, list[RideRecord]],
    train: TrainParams,
    *,
    participants: int,
    rng: np.random.Generator,
    seed: int = 0,
) -> np.ndarray:
    """One aggregator-driven round: selected agents pull the global model,
    train on their own rides, and the aggregator averages the returns.

    Returns the new global flat weights (also installed in the state).

    Raises:
        ValueError: fewer selectable agents than ``participants``.
    """
    agent_ids = sorted(rides_by_agent)
    if len(agent_ids) < participants:
        raise ValueError(
            f"need at least {participants} agents, have {len(agent_ids)}"
        )
    selected = sorted(
        rng.choice(len(agent_ids), size=participants, replace=False).tolist()
    )
    selected_ids = [agent_ids[i] for i in selected]
    state.selected_history.append(selected_ids)

    returned = []
    for agent_id in selected_ids:
        local = state.global_net.clone()
        train_rng = np.random.default_rng((seed, state.round_index, agent_id))
        _train_round(local, grid, rides_by_agent[agent_id], train, train_rng)
        returned.append(local.get_flat())
    new_global = np.mean(np.stack(returned), axis=0)
    state.global_net.set_flat(new_global)
    state.round_index += 1
    return new_global


# -- random decentralized scheme ----------------------------------------------


class NaiveChunkStore:
    """Shared chunk store with no bidding and no round gating.

    Writes are atomic per chunk and last-write-wins.  A stored write that is
    overwritten before anyone reads the chunk counts as wasted.
    """

    def __init__(self, scheme: PartitionScheme, initial_model: np.ndarray):
        self.scheme = scheme
        self.payloads = [
            serialize_chunk(initial_model, scheme, c).payload
            for c in range(scheme.chunk_count)
        ]
        self._read_since_write = [True] * scheme.chunk_count
        self.wasted_updates = 0
        self.writes = 0

    def read_model(self) -> np.ndarray:
        for c in range(self.scheme.chunk_count):
            self._read_since_write[c] = True
        return np.concatenate([decode_payload(p) for p in self.payloads])

    def apply(self, tx: Transaction) -> tuple[object, int]:
        if tx.kind is not TxKind.PUSH:
            raise ValueError("the naive store accepts only push transactions")
        _agent, _round, chunk_id, payload = tx.op
        if not self._read_since_write[chunk_id]:
            self.wasted_updates += 1
        self.payloads[chunk_id] = payload
        self._read_since_write[chunk_id] = False
        self.writes += 1
        return "stored", len(payload)


@dataclass
class RandomDflAgent:
    agent_id: int
    net: QNetwork
    rng: np.random.Generator


@dataclass
class RandomDflRoundStats:
    gas_by_agent: dict[int, int]
    push_ticks_by_agent: dict[int, int]
    wasted_updates: int


def random_dfl_round(
    store: NaiveChunkStore,
    ledger: Ledger,
    agents: list[RandomDflAgent],
    grid: CityGrid,
    rides_by_agent: dict[int, list[RideRecord]],
    train: TrainParams,
    *,
    budget: int,
    round_index: int,
    seed: int = 0,
    jitter_ticks: int = 256,
) -> RandomDflRoundStats:
    """Every agent pulls, averages, trains, and pushes ``budget`` random chunks.

    No bidding and no participation gating: collisions simply overwrite, and
    overwritten-but-never-read values are counted by the store as wasted.
    """
    wasted_before = store.wasted_updates
    round_open = ledger.time
    txs: list[Transaction] = []
    for agent in agents:
        pulled = store.read_model()
        local = agent.net.get_flat()
        agent.net.set_flat((pulled.astype(agent.net.dtype) + local) / 2.0)
        train_rng = np.random.default_rng((seed, round_index, agent.agent_id))
        _train_round(agent.net, grid, rides_by_agent.get(agent.agent_id, []), train, train_rng)

        picks = np.sort(agent.rng.choice(store.scheme.chunk_count, size=budget, replace=False))
        offset = int(agent.rng.integers(0, jitter_ticks))
        flat = agent.net.get_flat()
        for j, chunk_id in enumerate(picks):
            payload = serialize_chunk(flat, store.scheme, int(chunk_id)).payload
            tx = Transaction(
                sender=agent.agent_id,
                kind=TxKind.PUSH,
                payload=wire.encode_push(agent.agent_id, round_index, int(chunk_id), payload),
                submit_time=round_open + offset + j,
                op=(agent.agent_id, round_index, int(chunk_id), payload),
            )
            ledger.submit(tx)
            txs.append(tx)
    ledger.execute_pending()

    gas: dict[int, int] = {a.agent_id: 0 for a in agents}
    ticks: dict[int, int] = {a.agent_id: 0 for a in agents}
    for tx in txs:
        gas[tx.sender] += tx.result.receipt.gas_used
        ticks[tx.sender] += ledger.latency_model.commit_latency(len(tx.payload))
    return RandomDflRoundStats(
        gas_by_agent=gas,
        push_ticks_by_agent=ticks,
        wasted_updates=store.wasted_updates - wasted_before,
    )


def expected_wasted_per_round(agents: int, budget: int, chunks: int) -> float:
    """Analytic occupancy oracle: C * E[max(W - 1, 0)], W ~ Binomial(n, B/C).

    Within one round every write lands after all reads, so all but the last
    write per chunk are never read.
    """
    from scipy.stats import binom

    p = budget / chunks
    w = np.arange(agents + 1)
    pmf = binom.pmf(w, agents, p)
    return float(chunks * np.sum(pmf * np.maximum(w - 1, 0)))
