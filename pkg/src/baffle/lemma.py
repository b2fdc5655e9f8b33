"""Closed-form and Monte-Carlo verification of the rate-equivalence result.

Under uniform random chunk selection (budget ``B`` of ``C`` chunks) and a
uniform-winner assumption among the ``L`` agents registered in a round, the
probability that one agent wins a given chunk it bid on is

    mu = sum_{d=0}^{L-1} 1/(d+1) * C(L-1, d) * p^d * (1-p)^(L-1-d),  p = B/C,

which has the closed form ``(1 - (1-p)^L) / (L * p)``.  The per-round chunk
update probability of one agent is ``mu * B / C`` and the learning rate that
makes the decentralized scheme match aggregator-driven FL in expectation is

    eta_bfl = (2 * C * alpha_fl) / (B * mu * L * alpha_bfl) * eta_fl.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contract import Contract, PushOutcome
from .params import build_partition, serialize_chunk


class RateDomainError(ValueError):
    """Parameters outside the result's domain (e.g. zero budget)."""


def _validate(participants: int, budget: int, chunks: int) -> float:
    if chunks < 1:
        raise RateDomainError(f"chunks must be >= 1, got {chunks}")
    if budget < 1:
        raise RateDomainError(f"budget must be >= 1, got {budget}")
    if budget > chunks:
        raise RateDomainError(f"budget {budget} exceeds chunk count {chunks}")
    if participants < 1:
        raise RateDomainError(f"participants must be >= 1, got {participants}")
    return budget / chunks


def win_probability(participants: int, budget: int, chunks: int) -> float:
    """Probability mu that a bidder wins a chunk it bid on, as the exact sum.

    Evaluated term by term in the log domain so large participant counts stay
    stable.  ``participants`` is the number of agents registered in the round.
    """
    p = _validate(participants, budget, chunks)
    L = participants
    if p == 1.0:
        return 1.0 / L
    log_p = math.log(p)
    log_q = math.log1p(-p)
    total = 0.0
    for d in range(L):
        log_term = (
            -math.log(d + 1)
            + math.lgamma(L)
            - math.lgamma(d + 1)
            - math.lgamma(L - d)
            + d * log_p
            + (L - 1 - d) * log_q
        )
        total += math.exp(log_term)
    return total


def win_probability_closed_form(participants: int, budget: int, chunks: int) -> float:
    """Closed form (1 - (1-p)^L) / (L p); the binomial sum collapses to this."""
    p = _validate(participants, budget, chunks)
    L = participants
    return -math.expm1(L * math.log1p(-p)) / (L * p) if p < 1.0 else 1.0 / L


def chunk_update_probability(participants: int, budget: int, chunks: int) -> float:
    """Per-round probability that one agent updates one given chunk: mu * B/C."""
    p = _validate(participants, budget, chunks)
    return win_probability(participants, budget, chunks) * p


def equivalent_learning_rate(
    participants: int,
    budget: int,
    chunks: int,
    *,
    eta_fl: float,
    alpha_fl: float = 1.0,
    alpha_bfl: float = 1.0,
) -> float:
    """Learning rate making the decentralized scheme track FL in expectation.

    eta_bfl = 2 * C * alpha_fl / (B * mu * L * alpha_bfl) * eta_fl.

    Raises:
        RateDomainError: zero denominator (alpha_bfl or mu of zero).
    """
    mu = win_probability(participants, budget, chunks)
    denom = budget * mu * participants * alpha_bfl
    if denom == 0.0:
        raise RateDomainError("zero denominator in learning-rate relation")
    return 2.0 * chunks * alpha_fl / denom * eta_fl


def simulate_win_frequency(
    participants: int, budget: int, chunks: int, *, trials: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo estimate of mu under the uniform-winner assumption.

    Each trial draws the number of competing bidders on a contested chunk from
    Binomial(L-1, B/C) and picks a winner uniformly among all bidders.
    Returns (win frequency, standard error).
    """
    p = _validate(participants, budget, chunks)
    rng = np.random.default_rng(seed)
    competitors = rng.binomial(participants - 1, p, size=trials)
    wins = rng.integers(0, competitors + 1) == 0
    freq = float(np.mean(wins))
    se = float(np.sqrt(max(freq * (1.0 - freq), 1e-12) / trials))
    return freq, se


# -- trajectory equivalence experiment ---------------------------------------


@dataclass
class EquivalenceConfig:
    """Quadratic-objective trajectory comparison between the two schemes.

    Every agent shares the objective f(w) = 0.5 * ||w - target||^2 (identical
    data), one parameter per chunk.  ``eta_bfl_scale`` deliberately mis-scales
    the decentralized learning rate; the default of 1.0 applies the exact rate
    relation.
    """

    agents: int = 8
    chunks: int = 16
    budget: int = 4
    participants: int = 4
    rounds: int = 200
    seeds: int = 64
    eta_fl: float = 0.05
    alpha_fl: float = 1.0
    alpha_bfl: float = 1.0
    eta_bfl_scale: float = 1.0
    base_seed: int = 2024
    start_value: float = 1.0
    target_value: float = 0.0
    atol: float = 1e-9


@dataclass
class EquivalenceReport:
    eta_bfl: float
    #: Per-round L2 distance between the seed-mean trajectory and the FL one.
    mean_distance: np.ndarray
    #: Per-round L2 norm of the per-component standard errors.
    standard_error: np.ndarray
    rounds_violating: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.rounds_violating

    def summary(self) -> dict:
        return {
            "eta_bfl": self.eta_bfl,
            "rounds": int(self.mean_distance.size),
            "max_distance": float(self.mean_distance.max()),
            "rounds_violating": self.rounds_violating,
            "passed": self.passed,
        }


def _fl_trajectory(cfg: EquivalenceConfig) -> np.ndarray:
    """Aggregator-driven reference: one full-gradient step per round.

    With identical data the mean of the selected agents' locally stepped
    models is exactly one gradient step from the global, so the trajectory is
    deterministic.
    """
    dim = cfg.chunks
    w = np.full(dim, cfg.start_value)
    target = np.full(dim, cfg.target_value)
    out = np.empty((cfg.rounds, dim))
    for k in range(cfg.rounds):
        w = w - cfg.eta_fl * (w - target)
        out[k] = w
    return out


def _decentralized_trajectory(cfg: EquivalenceConfig, eta_bfl: float, seed: int) -> np.ndarray:
    """One seeded run of the decentralized fleet on the shared quadratic.

    Locals are re-based on the pulled global every round (the regime in which
    the expectation analysis holds): each agent's pushed value for a chunk is
    the average of the pulled global and one full gradient step from it.
    Selection randomness enters through arrival order and chunk choice; with
    identical data every bidder on a chunk pushes the same value, so only
    whether a chunk receives any bid matters.
    """
    rng = np.random.default_rng(seed)
    scheme = build_partition(cfg.chunks, 4)  # one parameter per chunk
    contract = Contract()
    target = np.full(cfg.chunks, cfg.target_value)
    contract.register_model(scheme, cfg.participants, np.full(cfg.chunks, cfg.start_value))

    out = np.empty((cfg.rounds, cfg.chunks))
    seq = 0
    for k in range(cfg.rounds):
        g = contract.read_model().astype(np.float64)
        candidate = g - (eta_bfl / 2.0) * (g - target)
        arrival = rng.permutation(cfg.agents)
        tick = k * 1000
        for agent_id in arrival:
            picks = rng.choice(cfg.chunks, size=cfg.budget, replace=False)
            entries = [(int(c), float(abs(candidate[c] - g[c]))) for c in picks]
            seq += 1
            contract.submit_bid(int(agent_id), k, entries, seq=seq, time=tick)
            if len(contract.registered_agents) == cfg.participants:
                break
        winners = contract.resolve_chunk_winners()
        for chunk_id, agent_id in sorted(winners.items()):
            payload = serialize_chunk(candidate, scheme, chunk_id).payload
            seq += 1
            contract.push_chunk(agent_id, chunk_id, payload, seq=seq, time=tick + 1)
        for agent_id in list(contract.registered_agents):
            contract.signal_close(agent_id, time=tick + 2)
        out[k] = contract.read_model()
    return out


def equivalence_experiment(cfg: EquivalenceConfig) -> EquivalenceReport:
    """Compare seed-mean decentralized trajectories against the FL reference.

    A round violates when the L2 distance between the seed-mean vector and
    the FL vector exceeds three times the L2 norm of the per-component
    standard errors (plus a small absolute floor for fully converged rounds).
    """
    eta_bfl = (
        equivalent_learning_rate(
            cfg.participants,
            cfg.budget,
            cfg.chunks,
            eta_fl=cfg.eta_fl,
            alpha_fl=cfg.alpha_fl,
            alpha_bfl=cfg.alpha_bfl,
        )
        * cfg.eta_bfl_scale
    )
    runs = np.stack(
        [
            _decentralized_trajectory(cfg, eta_bfl, cfg.base_seed + s)
            for s in range(cfg.seeds)
        ]
    )
    fl = _fl_trajectory(cfg)
    mean = runs.mean(axis=0)
    se = runs.std(axis=0, ddof=1) / math.sqrt(cfg.seeds)
    dist = np.linalg.norm(mean - fl, axis=1)
    se_norm = np.linalg.norm(se, axis=1)
    violating = [int(k) for k in range(cfg.rounds) if dist[k] > 3.0 * se_norm[k] + cfg.atol]
    return EquivalenceReport(
        eta_bfl=eta_bfl,
        mean_distance=dist,
        standard_error=se_norm,
        rounds_violating=violating,
    )
