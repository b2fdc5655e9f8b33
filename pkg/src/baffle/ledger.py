"""Simulated blockchain substrate.

The ledger is the single serialization point of the system: concurrently
submitted transactions are totally ordered by (submit time, seeded sender
tie-break), applied one at a time to an executor (normally the contract),
charged gas under a parametric fee model, and stamped with simulated commit
times.  There is no block structure; consensus latency is folded into the
per-transaction commit latency.
"""

from __future__ import annotations

import csv
import hashlib
import math
import threading
from dataclasses import dataclass, field
from typing import Protocol

from .params import MAX_TX_PAYLOAD_BYTES
from .wire import TxKind


@dataclass(frozen=True)
class GasModel:
    """Parametric per-transaction fee model.

    Charges a base fee, a per-byte fee split by zero/nonzero bytes, and a
    storage fee per 32-byte word durably written into contract state.
    """

    base_tx_gas: int = 21_000
    gas_per_nonzero_byte: int = 16
    gas_per_zero_byte: int = 4
    gas_per_storage_word: int = 5_000
    storage_word_bytes: int = 32

    def tx_gas(self, payload: bytes, storage_bytes: int) -> int:
        nonzero = sum(1 for b in payload if b)
        zero = len(payload) - nonzero
        words = math.ceil(storage_bytes / self.storage_word_bytes)
        return (
            self.base_tx_gas
            + nonzero * self.gas_per_nonzero_byte
            + zero * self.gas_per_zero_byte
            + words * self.gas_per_storage_word
        )


@dataclass(frozen=True)
class LatencyModel:
    """Deterministic commit latency: fixed consensus cost plus a per-byte term."""

    fixed_consensus_ticks: int = 50
    per_byte_ticks: float = 0.01

    def commit_latency(self, payload_bytes: int) -> int:
        return int(self.fixed_consensus_ticks + self.per_byte_ticks * payload_bytes)


@dataclass
class Transaction:
    sender: int
    kind: TxKind
    payload: bytes
    submit_time: int
    #: Structured operation consumed by the executor (decoded form of payload).
    op: object = None
    seq: int | None = None
    commit_time: int | None = None
    #: Local enqueue order; stabilizes sorting for one sender at equal times.
    enqueue_index: int = 0
    #: Filled at commit so submitters can observe their fate.
    result: "TxResult | None" = None


@dataclass(frozen=True)
class GasReceipt:
    seq: int
    sender: int
    kind: TxKind
    payload_bytes: int
    storage_bytes: int
    gas_used: int
    submit_time: int
    commit_time: int


@dataclass(frozen=True)
class TxResult:
    """Per-transaction outcome paired with its receipt."""

    outcome: object
    receipt: GasReceipt


class OversizeTransactionError(ValueError):
    """Payload above the transaction size limit; rejected before ordering."""


class Executor(Protocol):
    """State machine driven by the ledger, one transaction at a time."""

    def apply(self, tx: Transaction) -> tuple[object, int]:
        """Apply ``tx``; return (outcome, bytes durably stored)."""
        ...


@dataclass
class _Pending:
    tx: Transaction
    tie_break: int


class Ledger:
    """Totally ordered, gas-metered transaction log over one executor.

    ``submit`` only enqueues and is safe for concurrent producers;
    ``execute_pending`` orders and applies everything queued so far.
    ``transact`` is the immediate mode used by live (threaded) agents: it
    serializes submission and execution under one lock.
    """

    def __init__(
        self,
        executor: Executor,
        *,
        gas_model: GasModel | None = None,
        latency_model: LatencyModel | None = None,
        seed: int = 0,
        max_tx_payload_bytes: int = MAX_TX_PAYLOAD_BYTES,
    ):
        self.executor = executor
        self.gas_model = gas_model or GasModel()
        self.latency_model = latency_model or LatencyModel()
        self.seed = seed
        self.max_tx_payload_bytes = max_tx_payload_bytes
        self.receipts: list[GasReceipt] = []
        self.time = 0
        self._next_seq = 0
        self._enqueue_counter = 0
        self._pending: list[_Pending] = []
        self._lock = threading.Lock()

    # -- submission ----------------------------------------------------------

    def submit(self, tx: Transaction) -> Transaction:
        """Queue a transaction for ordering.

        Raises:
            OversizeTransactionError: payload over the size limit; nothing is
                queued and no gas is charged.
        """
        if len(tx.payload) > self.max_tx_payload_bytes:
            raise OversizeTransactionError(
                f"payload of {len(tx.payload)} bytes exceeds the "
                f"{self.max_tx_payload_bytes}-byte limit"
            )
        with self._lock:
            tx.enqueue_index = self._enqueue_counter
            self._enqueue_counter += 1
            self._pending.append(_Pending(tx, self._tie_break(tx.sender)))
        return tx

    def _tie_break(self, sender: int) -> int:
        digest = hashlib.blake2b(
            f"{self.seed}:{sender}".encode(), digest_size=8
        ).digest()
        return int.from_bytes(digest, "big")

    def order_concurrent(self, pending: list[Transaction]) -> list[Transaction]:
        """Total order for a set of concurrent transactions.

        Sorted by submit time, then a seeded deterministic hash of the sender,
        then per-sender enqueue order.  Replaying the same set with the same
        seed yields the same order.
        """
        wrapped = [_Pending(tx, self._tie_break(tx.sender)) for tx in pending]
        wrapped.sort(key=lambda p: (p.tx.submit_time, p.tie_break, p.tx.enqueue_index))
        return [p.tx for p in wrapped]

    # -- execution -----------------------------------------------------------

    def execute_pending(self) -> list[TxResult]:
        """Order and apply every queued transaction; returns results in order.

        Each transaction's result is also attached to ``tx.seq`` /
        ``tx.commit_time`` in place so submitters can observe their fate.
        """
        with self._lock:
            batch = self._pending
            self._pending = []
            batch.sort(key=lambda p: (p.tx.submit_time, p.tie_break, p.tx.enqueue_index))
            return [self._commit(p.tx) for p in batch]

    def transact(self, tx: Transaction) -> TxResult:
        """Immediate mode: submit and commit one transaction atomically."""
        if len(tx.payload) > self.max_tx_payload_bytes:
            raise OversizeTransactionError(
                f"payload of {len(tx.payload)} bytes exceeds the "
                f"{self.max_tx_payload_bytes}-byte limit"
            )
        with self._lock:
            tx.enqueue_index = self._enqueue_counter
            self._enqueue_counter += 1
            if tx.submit_time < self.time:
                tx.submit_time = self.time
            return self._commit(tx)

    def _commit(self, tx: Transaction) -> TxResult:
        tx.seq = self._next_seq
        self._next_seq += 1
        latency = self.latency_model.commit_latency(len(tx.payload))
        # Keep commit times strictly increasing with seq even when a later
        # submission would nominally commit earlier.
        tx.commit_time = max(tx.submit_time + latency, self.time + 1)
        self.time = tx.commit_time
        outcome, storage_bytes = self.executor.apply(tx)
        receipt = GasReceipt(
            seq=tx.seq,
            sender=tx.sender,
            kind=tx.kind,
            payload_bytes=len(tx.payload),
            storage_bytes=storage_bytes,
            gas_used=self.gas_model.tx_gas(tx.payload, storage_bytes),
            submit_time=tx.submit_time,
            commit_time=tx.commit_time,
        )
        self.receipts.append(receipt)
        tx.result = TxResult(outcome=outcome, receipt=receipt)
        return tx.result

    # -- accounting ----------------------------------------------------------

    def gas_by_sender(self) -> dict[int, int]:
        totals: dict[int, int] = {}
        for r in self.receipts:
            totals[r.sender] = totals.get(r.sender, 0) + r.gas_used
        return totals

    def total_gas(self) -> int:
        return sum(r.gas_used for r in self.receipts)

    def write_receipts_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seq", "sender", "kind", "bytes", "gas", "commit_time"])
            for r in self.receipts:
                writer.writerow(
                    [r.seq, r.sender, r.kind.name, r.payload_bytes, r.gas_used, r.commit_time]
                )


@dataclass
class ContractExecutor:
    """Adapter applying decoded ledger transactions to a contract instance.

    Contract rule violations (stale round, wrong phase, unauthorized caller)
    do not abort the transaction: like a reverted call it still commits and
    pays byte gas, stores nothing, and surfaces the error as its outcome.
    """

    contract: object  # baffle.contract.Contract

    def apply(self, tx: Transaction) -> tuple[object, int]:
        from .contract import BidOutcome, ContractError, PushOutcome

        c = self.contract
        try:
            if tx.kind is TxKind.BID:
                agent_id, round_index, entries = tx.op
                outcome = c.submit_bid(
                    agent_id, round_index, entries, seq=tx.seq, time=tx.commit_time
                )
                stored = 12 * len(entries) if outcome is BidOutcome.ACCEPTED else 0
                return outcome, stored
            if tx.kind is TxKind.PUSH:
                agent_id, _round, chunk_id, chunk_payload = tx.op
                outcome = c.push_chunk(
                    agent_id, chunk_id, chunk_payload, seq=tx.seq, time=tx.commit_time
                )
                stored = len(chunk_payload) if outcome is PushOutcome.STORED else 0
                return outcome, stored
            if tx.kind is TxKind.SIGNAL:
                agent_id, _round = tx.op
                outcome = c.signal_close(agent_id, time=tx.commit_time)
                return outcome, 0
            if tx.kind is TxKind.REGISTER:
                scheme, participation_level, initial_model = tx.op
                model_id = c.register_model(
                    scheme, participation_level, initial_model, time=tx.commit_time
                )
                # The deployed model itself is durable storage.
                return model_id, scheme.total_params * 4
        except ContractError as exc:
            return exc, 0
        raise ValueError(f"unsupported transaction kind {tx.kind}")
