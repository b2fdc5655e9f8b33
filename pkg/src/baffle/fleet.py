"""Fleet drivers: deterministic round-robin waves and a live threaded mode.

The round-robin driver is the reference schedule: every agent does its local
work, then bids land in one ordered wave, winners push in a second wave, and
close signals in a third.  Arrival order inside a wave is decided by each
agent's seeded jitter plus the ledger's seeded tie-break, so runs are
bit-reproducible.  The threaded driver runs each agent as a worker against
the same ledger in immediate mode; it must satisfy the same protocol
invariants, though not the same arrival orders.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

from .agent import Agent, RoundOutcome
from .contract import Contract, Phase
from .ledger import Ledger, Transaction
from .learning.env import CityGrid, RideRecord
from . import wire
from .wire import TxKind

RidesProvider = Callable[[int, int], list[RideRecord]]  # (agent_id, round) -> rides


@dataclass
class FleetRound:
    outcomes: dict[int, RoundOutcome]
    round_index: int


class RoundRobinFleet:
    """Deterministic wave-scheduled protocol execution for one fleet."""

    def __init__(
        self,
        contract: Contract,
        ledger: Ledger,
        agents: Sequence[Agent],
        grid: CityGrid,
    ):
        self.contract = contract
        self.ledger = ledger
        self.agents = list(agents)
        self.grid = grid

    def run_round(self, rides_by_agent: dict[int, list[RideRecord]]) -> FleetRound:
        """Execute one full protocol round across all agents."""
        contract, ledger = self.contract, self.ledger
        round_index = contract.round_index
        round_open = ledger.time
        outcomes = {a.agent_id: RoundOutcome(round_index=round_index) for a in self.agents}

        # Local work, then one bid wave ordered by jittered submit times.
        bid_txs: dict[int, Transaction] = {}
        for agent in self.agents:
            out = outcomes[agent.agent_id]
            agent.pull_and_average(contract)
            out.training_loss, out.training_steps = agent.observe_and_train(
                self.grid, rides_by_agent.get(agent.agent_id, [])
            )
            agent.round_cursor += 1
            entries = agent.make_bid_entries()
            submit = round_open + int(
                out.training_steps * agent.config.ticks_per_train_step
            ) + agent.jitter()
            tx = Transaction(
                sender=agent.agent_id,
                kind=TxKind.BID,
                payload=wire.encode_bid(agent.agent_id, round_index, entries),
                submit_time=submit,
                op=(agent.agent_id, round_index, entries),
            )
            ledger.submit(tx)
            bid_txs[agent.agent_id] = tx
            out.bids_submitted = len(entries)

        ledger.execute_pending()
        registered: list[Agent] = []
        registered_ids = set(contract.registered_agents)
        for agent in self.agents:
            tx = bid_txs[agent.agent_id]
            outcomes[agent.agent_id].gas_used += tx.result.receipt.gas_used
            if agent.agent_id in registered_ids:
                outcomes[agent.agent_id].registered = True
                registered.append(agent)

        if contract.phase is Phase.PUSHING:
            winners = contract.resolve_chunk_winners()
            push_base = ledger.time
            push_txs: list[tuple[Agent, Transaction]] = []
            for agent in registered:
                won = [
                    c
                    for c, _ in bid_txs[agent.agent_id].op[2]
                    if winners.get(c) == agent.agent_id
                ]
                outcomes[agent.agent_id].wins = len(won)
                offset = agent.jitter()
                for j, chunk_id in enumerate(won):
                    payload = agent.chunk_payload(chunk_id)
                    tx = Transaction(
                        sender=agent.agent_id,
                        kind=TxKind.PUSH,
                        payload=wire.encode_push(
                            agent.agent_id, round_index, chunk_id, payload
                        ),
                        submit_time=push_base + offset + j,
                        op=(agent.agent_id, round_index, chunk_id, payload),
                    )
                    ledger.submit(tx)
                    push_txs.append((agent, tx))
            ledger.execute_pending()
            for agent, tx in push_txs:
                out = outcomes[agent.agent_id]
                out.gas_used += tx.result.receipt.gas_used
                out.push_ticks += ledger.latency_model.commit_latency(len(tx.payload))

            signal_base = ledger.time
            signal_txs: list[tuple[Agent, Transaction]] = []
            for agent in registered:
                tx = Transaction(
                    sender=agent.agent_id,
                    kind=TxKind.SIGNAL,
                    payload=wire.encode_signal(agent.agent_id, round_index),
                    submit_time=signal_base + agent.jitter(),
                    op=(agent.agent_id, round_index),
                )
                ledger.submit(tx)
                signal_txs.append((agent, tx))
            ledger.execute_pending()
            for agent, tx in signal_txs:
                outcomes[agent.agent_id].gas_used += tx.result.receipt.gas_used

        # Count stored pushes from the contract's record of this round.
        for agent in registered:
            outcomes[agent.agent_id].pushes_stored = sum(
                1
                for core in contract.chunk_cores
                if core.last_updated_round == round_index
                and core.last_updater == agent.agent_id
            )
        return FleetRound(outcomes=outcomes, round_index=round_index)


def run_threaded_fleet(
    contract: Contract,
    ledger: Ledger,
    agents: Sequence[Agent],
    grid: CityGrid,
    rides_provider: RidesProvider,
    *,
    rounds: int,
    wall_timeout: float = 60.0,
) -> dict[int, list[RoundOutcome]]:
    """Run every agent as a live worker thread until ``rounds`` rounds close.

    Agents poll the contract and act through the ledger's immediate mode; the
    ledger lock is the only serialization point.  Arrival order is scheduler
    dependent, so results are not reproducible -- the protocol invariants must
    hold regardless.
    """
    outcomes: dict[int, list[RoundOutcome]] = {a.agent_id: [] for a in agents}
    stop = threading.Event()

    def worker(agent: Agent) -> None:
        while not stop.is_set() and contract.round_index < rounds:
            round_index = contract.round_index
            if contract.phase is Phase.ACCEPTING_BIDS and agent.round_cursor <= round_index:
                rides = rides_provider(agent.agent_id, round_index)
                out = agent.run_round(
                    contract, ledger, grid, rides, wait_for_push_phase=True
                )
                outcomes[agent.agent_id].append(out)
            else:
                stop.wait(0.0002)

    threads = [threading.Thread(target=worker, args=(a,), daemon=True) for a in agents]
    for t in threads:
        t.start()
    deadline = wall_timeout
    for t in threads:
        t.join(deadline)
    stop.set()
    for t in threads:
        t.join(1.0)
    return outcomes
