"""The coordination contract as a deterministic state machine.

One contract instance hosts one learning task.  A round moves through three
phases: bid registration (first ``participation_level`` distinct bidders get
in, later bids are rejected), chunk pushes by per-chunk auction winners, and
close signals.  All mutations arrive in a single total order -- normally via
:class:`baffle.ledger.Ledger` -- so identical transaction sequences produce
bit-identical state.  Reads are free and allowed in any phase; they observe
only committed state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .params import (
    MAX_TX_PAYLOAD_BYTES,
    PartitionScheme,
    decode_payload,
    serialize_chunk,
)

#: Pushing phase deadline; missing pushes/signals after this are forfeited.
DEFAULT_PUSH_TIMEOUT_TICKS = 10_000


class Phase(Enum):
    ACCEPTING_BIDS = "accepting_bids"
    PUSHING = "pushing"
    CLOSED = "closed"


class BidOutcome(Enum):
    ACCEPTED = "accepted"
    REJECTED_ROUND_FULL = "rejected_round_full"
    REJECTED_DUPLICATE = "rejected_duplicate"


class PushOutcome(Enum):
    STORED = "stored"
    REJECTED_NOT_WINNER = "rejected_not_winner"
    REJECTED_SIZE = "rejected_size"


class SignalOutcome(Enum):
    ACKNOWLEDGED = "acknowledged"
    ROUND_CLOSED = "round_closed"


class ContractError(Exception):
    """Base class for contract rule violations."""


class RegistrationError(ContractError):
    """Invalid task registration (bad participation level or model shape)."""


class StaleRoundError(ContractError):
    """Transaction addressed to a round other than the current one."""


class PhaseError(ContractError):
    """Operation invoked in the wrong phase."""


class AuthorizationError(ContractError):
    """Caller is not registered for the current round."""


@dataclass
class ChunkCore:
    """Per-chunk record kept on the contract.

    ``bids`` maps agent id to (score, arrival seq) for the current round only;
    it is cleared at round close.  ``payload`` always decodes to exactly the
    scheme's length for this chunk.
    """

    chunk_id: int
    payload: bytes
    last_updated_round: int = 0
    last_updated_time: int = 0
    last_updater: int | None = None
    bids: dict[int, tuple[float, int]] = field(default_factory=dict)


@dataclass(frozen=True)
class ChunkRead:
    payload: bytes
    last_updated_round: int
    last_updater: int | None


@dataclass(frozen=True)
class PhaseTransition:
    round_index: int
    phase: Phase
    time: int


class Contract:
    """Deterministic model registry, bid book, and chunk store."""

    def __init__(self, *, push_timeout_ticks: int = DEFAULT_PUSH_TIMEOUT_TICKS):
        self.push_timeout_ticks = push_timeout_ticks
        self.model_id: int | None = None
        self.scheme: PartitionScheme | None = None
        self.participation_level = 0
        self.round_index = 0
        self.phase = Phase.ACCEPTING_BIDS
        self.registered_agents: list[int] = []
        self.signals: set[int] = set()
        self.chunk_cores: list[ChunkCore] = []
        self.phase_log: list[PhaseTransition] = []
        self.push_deadline: int | None = None
        # Chunks already stored this round; enforces one stored push per chunk.
        self._stored_this_round: set[int] = set()
        self._winners_cache: dict[int, int] | None = None

    # -- registration ------------------------------------------------------

    def register_model(
        self,
        scheme: PartitionScheme,
        participation_level: int,
        initial_model: np.ndarray,
        *,
        time: int = 0,
    ) -> int:
        """Install the partition scheme and seed every chunk from the model.

        Round 0 opens accepting bids.  Returns the model id.

        Raises:
            RegistrationError: participation level < 1, repeated registration,
                or a model whose length does not match the scheme.
        """
        if self.model_id is not None:
            raise RegistrationError("contract already hosts a model")
        if participation_level < 1:
            raise RegistrationError(
                f"participation_level must be >= 1, got {participation_level}"
            )
        model = np.asarray(initial_model).reshape(-1)
        if model.size != scheme.total_params:
            raise RegistrationError(
                f"initial model length {model.size} does not match scheme "
                f"total {scheme.total_params}"
            )
        self.scheme = scheme
        self.participation_level = participation_level
        self.chunk_cores = [
            ChunkCore(
                chunk_id=c,
                payload=serialize_chunk(model, scheme, c).payload,
                last_updated_time=time,
            )
            for c in range(scheme.chunk_count)
        ]
        self.model_id = 1
        self.round_index = 0
        self.phase = Phase.ACCEPTING_BIDS
        self.phase_log.append(PhaseTransition(0, Phase.ACCEPTING_BIDS, time))
        return self.model_id

    def _require_model(self) -> PartitionScheme:
        if self.scheme is None:
            raise RegistrationError("no model registered")
        return self.scheme

    # -- round phase 1: bids -----------------------------------------------

    def submit_bid(
        self,
        agent_id: int,
        round_index: int,
        entries: list[tuple[int, float]],
        *,
        seq: int,
        time: int,
    ) -> BidOutcome:
        """Record one agent's scored chunk bids for the current round.

        The ``participation_level``-th accepted bid flips the phase to
        PUSHING; every later bid for this round is rejected.

        Raises:
            StaleRoundError: bid addressed to a past or future round.
            ValueError: duplicate or out-of-range chunk ids in the entries.
        """
        scheme = self._require_model()
        self._expire_if_needed(time)
        if round_index != self.round_index:
            raise StaleRoundError(
                f"bid for round {round_index}, contract is at round {self.round_index}"
            )
        if self.phase is not Phase.ACCEPTING_BIDS:
            return BidOutcome.REJECTED_ROUND_FULL
        if agent_id in self.registered_agents:
            return BidOutcome.REJECTED_DUPLICATE

        chunk_ids = [c for c, _ in entries]
        if len(set(chunk_ids)) != len(chunk_ids):
            raise ValueError("bid entries contain duplicate chunk ids")
        for c in chunk_ids:
            if not 0 <= c < scheme.chunk_count:
                raise ValueError(f"bid references unknown chunk {c}")

        self.registered_agents.append(agent_id)
        for chunk_id, score in entries:
            self.chunk_cores[chunk_id].bids[agent_id] = (float(score), seq)
        if len(self.registered_agents) == self.participation_level:
            self.phase = Phase.PUSHING
            self.push_deadline = time + self.push_timeout_ticks
            self.phase_log.append(PhaseTransition(self.round_index, Phase.PUSHING, time))
        return BidOutcome.ACCEPTED

    # -- round phase 2: pushes ---------------------------------------------

    def resolve_chunk_winners(self) -> dict[int, int]:
        """Winning agent per chunk: maximum score, ties to earliest arrival.

        Chunks nobody bid on are absent from the map.  Read-only and
        deterministic given the bid book.

        Raises:
            PhaseError: called before the round's bid set is final.
        """
        if self.phase is not Phase.PUSHING:
            raise PhaseError("winners are resolved only during the PUSHING phase")
        if self._winners_cache is not None:
            return dict(self._winners_cache)
        winners: dict[int, int] = {}
        for core in self.chunk_cores:
            if not core.bids:
                continue
            best = min(core.bids.items(), key=lambda item: (-item[1][0], item[1][1]))
            winners[core.chunk_id] = best[0]
        self._winners_cache = winners
        return dict(winners)

    def push_chunk(
        self,
        agent_id: int,
        chunk_id: int,
        payload: bytes,
        *,
        seq: int,
        time: int,
    ) -> PushOutcome:
        """Store a chunk if the pusher won its auction and the payload is sound.

        A payload is sound when it is within the transaction limit, decodes to
        exactly the scheme's length for this chunk, and is fully finite;
        anything else is REJECTED_SIZE.  A chunk already stored this round
        cannot be stored again.

        Raises:
            PhaseError: no round in the PUSHING phase.
            AuthorizationError: pusher not registered this round.
            IndexError: unknown chunk id.
        """
        scheme = self._require_model()
        self._expire_if_needed(time)
        if self.phase is not Phase.PUSHING:
            raise PhaseError("pushes are accepted only during the PUSHING phase")
        if agent_id not in self.registered_agents:
            raise AuthorizationError(f"agent {agent_id} is not registered this round")
        if not 0 <= chunk_id < scheme.chunk_count:
            raise IndexError(f"chunk_id {chunk_id} out of range")

        if len(payload) > MAX_TX_PAYLOAD_BYTES:
            return PushOutcome.REJECTED_SIZE
        winners = self.resolve_chunk_winners()
        if winners.get(chunk_id) != agent_id or chunk_id in self._stored_this_round:
            return PushOutcome.REJECTED_NOT_WINNER
        try:
            values = decode_payload(payload)
        except ValueError:
            return PushOutcome.REJECTED_SIZE
        if values.size != scheme.chunk_length(chunk_id) or not np.all(np.isfinite(values)):
            return PushOutcome.REJECTED_SIZE

        core = self.chunk_cores[chunk_id]
        core.payload = bytes(payload)
        core.last_updated_round = self.round_index
        core.last_updated_time = time
        core.last_updater = agent_id
        self._stored_this_round.add(chunk_id)
        return PushOutcome.STORED

    # -- round phase 3: close ----------------------------------------------

    def signal_close(self, agent_id: int, *, time: int) -> SignalOutcome:
        """Mark one registered agent as done; the last signal closes the round.

        Raises:
            PhaseError: no round in the PUSHING phase.
            AuthorizationError: signal from an agent not registered this round.
        """
        self._require_model()
        self._expire_if_needed(time)
        if self.phase is not Phase.PUSHING:
            raise PhaseError("close signals are accepted only during the PUSHING phase")
        if agent_id not in self.registered_agents:
            raise AuthorizationError(f"agent {agent_id} is not registered this round")
        self.signals.add(agent_id)
        if len(self.signals) == self.participation_level:
            self._close_round(time)
            return SignalOutcome.ROUND_CLOSED
        return SignalOutcome.ACKNOWLEDGED

    def _close_round(self, time: int) -> None:
        self.phase_log.append(PhaseTransition(self.round_index, Phase.CLOSED, time))
        self.round_index += 1
        self.phase = Phase.ACCEPTING_BIDS
        self.registered_agents = []
        self.signals = set()
        self.push_deadline = None
        self._stored_this_round = set()
        self._winners_cache = None
        for core in self.chunk_cores:
            core.bids = {}
        self.phase_log.append(
            PhaseTransition(self.round_index, Phase.ACCEPTING_BIDS, time)
        )

    def _expire_if_needed(self, time: int) -> None:
        # Contracts cannot fire timers; expiry is checked lazily whenever a
        # transaction arrives after the pushing deadline.
        if (
            self.phase is Phase.PUSHING
            and self.push_deadline is not None
            and time > self.push_deadline
        ):
            self._close_round(time)

    # -- reads ---------------------------------------------------------------

    def read_chunk(self, chunk_id: int) -> ChunkRead:
        """Last committed payload for one chunk, in any phase."""
        scheme = self._require_model()
        if not 0 <= chunk_id < scheme.chunk_count:
            raise IndexError(f"chunk_id {chunk_id} out of range")
        core = self.chunk_cores[chunk_id]
        return ChunkRead(
            payload=core.payload,
            last_updated_round=core.last_updated_round,
            last_updater=core.last_updater,
        )

    def read_model(self) -> np.ndarray:
        """Concatenate every chunk into the full float32 parameter vector."""
        self._require_model()
        return np.concatenate([decode_payload(core.payload) for core in self.chunk_cores])

    def state_digest(self) -> str:
        """SHA-256 over the canonical state; equal digests mean equal state."""
        h = hashlib.sha256()
        h.update(
            f"{self.model_id}|{self.participation_level}|{self.round_index}|"
            f"{self.phase.value}|{self.registered_agents}|{sorted(self.signals)}".encode()
        )
        for core in self.chunk_cores:
            h.update(
                f"{core.chunk_id}|{core.last_updated_round}|{core.last_updated_time}|"
                f"{core.last_updater}|{sorted(core.bids.items())}".encode()
            )
            h.update(core.payload)
        return h.hexdigest()
