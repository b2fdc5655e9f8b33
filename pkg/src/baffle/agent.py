"""Per-device client loop: pull, average, train, score, bid, push, signal.

Each agent owns a local Q-network and two independent RNG streams -- one for
protocol randomness (chunk selection, submit-time jitter), one re-derived per
round for training -- so multi-agent runs are reproducible regardless of
scheduling and training trajectories can be compared across learners.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .contract import BidOutcome, Contract, Phase, PushOutcome
from .ledger import Ledger, OversizeTransactionError, Transaction
from .learning.env import CityGrid, RideRecord
from .learning.qmodel import QNetwork, bellman_targets, encode_rides, train_step
from .params import PartitionScheme, score_chunk, serialize_chunk
from . import wire
from .wire import TxKind


@dataclass(frozen=True)
class TrainParams:
    gamma: float = 0.9
    eta: float = 0.05
    epochs: int = 10
    batch_size: int = 32


@dataclass(frozen=True)
class AgentConfig:
    budget: int
    train: TrainParams = TrainParams()
    #: Max random offset, in ticks, added to bid submit times.
    jitter_ticks: int = 256
    #: Simulated ticks per gradient step (the training-time proxy).
    ticks_per_train_step: float = 1.0


@dataclass
class RoundOutcome:
    round_index: int
    bids_submitted: int = 0
    registered: bool = False
    wins: int = 0
    pushes_stored: int = 0
    gas_used: int = 0
    push_ticks: int = 0
    training_loss: float = float("nan")
    training_steps: int = 0

    def as_row(self) -> dict:
        return {
            "round": self.round_index,
            "bids": self.bids_submitted,
            "wins": self.wins,
            "pushes": self.pushes_stored,
            "gas": self.gas_used,
            "push_ticks": self.push_ticks,
            "training_loss": self.training_loss,
        }


class Agent:
    """One learning device participating in the chunked score-and-bid protocol."""

    def __init__(
        self,
        agent_id: int,
        net: QNetwork,
        scheme: PartitionScheme,
        config: AgentConfig,
        *,
        seed: int = 0,
    ):
        if not 1 <= config.budget <= scheme.chunk_count:
            raise ValueError(
                f"budget must be in [1, {scheme.chunk_count}], got {config.budget}"
            )
        self.agent_id = agent_id
        self.net = net
        self.scheme = scheme
        self.config = config
        self.seed = seed
        self.protocol_rng = np.random.default_rng((seed, agent_id, 0xB1D))
        self.round_cursor = 0
        self._pulled_global: np.ndarray | None = None

    # -- local computation ----------------------------------------------------

    def pull_and_average(self, contract: Contract) -> None:
        """Replace the local model with the mean of it and the pulled global."""
        pulled = contract.read_model()
        local = self.net.get_flat()
        self.net.set_flat((pulled.astype(self.net.dtype) + local) / 2.0)
        self._pulled_global = pulled

    def observe_and_train(self, grid: CityGrid, rides: list[RideRecord]) -> tuple[float, int]:
        """One batch fitted-Q round over the freshly observed rides."""
        if not rides:
            return float("nan"), 0
        batch = encode_rides(grid, rides)
        targets = bellman_targets(self.net, batch, self.config.train.gamma)
        rng = np.random.default_rng((self.seed, self.round_cursor, self.agent_id))
        return train_step(
            self.net,
            batch,
            targets,
            eta=self.config.train.eta,
            epochs=self.config.train.epochs,
            batch_size=self.config.train.batch_size,
            rng=rng,
        )

    def select_chunks(self) -> np.ndarray:
        """Uniform sample of ``budget`` distinct chunk ids (inclusion prob B/C)."""
        return np.sort(
            self.protocol_rng.choice(
                self.scheme.chunk_count, size=self.config.budget, replace=False
            )
        )

    def make_bid_entries(self) -> list[tuple[int, float]]:
        """Score the selected chunks against the global copy pulled this round."""
        if self._pulled_global is None:
            raise RuntimeError("pull_and_average must run before bidding")
        local32 = self.net.get_flat().astype(np.float32)
        entries = []
        for chunk_id in self.select_chunks():
            sl = self.scheme.chunk_slice(int(chunk_id))
            entries.append(
                (int(chunk_id), score_chunk(local32[sl], self._pulled_global[sl]))
            )
        return entries

    def chunk_payload(self, chunk_id: int) -> bytes:
        return serialize_chunk(self.net.get_flat(), self.scheme, chunk_id).payload

    def jitter(self) -> int:
        return int(self.protocol_rng.integers(0, self.config.jitter_ticks))

    # -- immediate-mode round (threaded or single-agent runs) ------------------

    def run_round(
        self,
        contract: Contract,
        ledger: Ledger,
        grid: CityGrid,
        rides: list[RideRecord],
        *,
        wait_for_push_phase: bool = False,
        poll_sleep: float = 0.0005,
        poll_limit: int = 200_000,
    ) -> RoundOutcome:
        """Run one full client round against a live contract (immediate mode).

        Follows the device flowchart: pull, average, train, and bid only when
        a round is open; if registered, push exactly the won subset of the bid
        chunks and signal close; if rejected (round full, duplicate, or stale
        view), return to data collection with no pushes.  Ledger rejections
        are recorded in the outcome, never raised.
        """
        outcome = RoundOutcome(round_index=contract.round_index)
        self.pull_and_average(contract)
        outcome.training_loss, outcome.training_steps = self.observe_and_train(grid, rides)
        self.round_cursor += 1

        if contract.phase is not Phase.ACCEPTING_BIDS:
            return outcome
        round_index = contract.round_index
        outcome.round_index = round_index
        entries = self.make_bid_entries()
        bid_tx = Transaction(
            sender=self.agent_id,
            kind=TxKind.BID,
            payload=wire.encode_bid(self.agent_id, round_index, entries),
            submit_time=ledger.time,
            op=(self.agent_id, round_index, entries),
        )
        try:
            result = ledger.transact(bid_tx)
        except OversizeTransactionError:
            return outcome
        outcome.bids_submitted = len(entries)
        outcome.gas_used += result.receipt.gas_used
        if result.outcome is not BidOutcome.ACCEPTED:
            return outcome
        outcome.registered = True

        if wait_for_push_phase:
            polls = 0
            while not (
                contract.phase is Phase.PUSHING and contract.round_index == round_index
            ):
                if contract.round_index != round_index:
                    return outcome  # round expired before pushes began
                polls += 1
                if polls > poll_limit:
                    return outcome
                _time.sleep(poll_sleep)
        if not (contract.phase is Phase.PUSHING and contract.round_index == round_index):
            return outcome

        winners = contract.resolve_chunk_winners()
        won = [c for c, _ in entries if winners.get(c) == self.agent_id]
        outcome.wins = len(won)
        for chunk_id in won:
            payload = self.chunk_payload(chunk_id)
            push_tx = Transaction(
                sender=self.agent_id,
                kind=TxKind.PUSH,
                payload=wire.encode_push(self.agent_id, round_index, chunk_id, payload),
                submit_time=ledger.time,
                op=(self.agent_id, round_index, chunk_id, payload),
            )
            try:
                result = ledger.transact(push_tx)
            except OversizeTransactionError:
                continue
            outcome.gas_used += result.receipt.gas_used
            outcome.push_ticks += ledger.latency_model.commit_latency(
                len(push_tx.payload)
            )
            if result.outcome is PushOutcome.STORED:
                outcome.pushes_stored += 1
        signal_tx = Transaction(
            sender=self.agent_id,
            kind=TxKind.SIGNAL,
            payload=wire.encode_signal(self.agent_id, round_index),
            submit_time=ledger.time,
            op=(self.agent_id, round_index),
        )
        result = ledger.transact(signal_tx)
        outcome.gas_used += result.receipt.gas_used
        return outcome
