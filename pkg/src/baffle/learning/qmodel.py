"""Dense Q-value network and the batch fitted-Q update.

The network maps a one-hot (cell, slot) state encoding through two tanh
hidden layers to one Q-value per action (target cell).  Training alternates
Bellman target computation over the observed ride batch with mini-batch
gradient descent on the squared error at the taken actions.

Weights pack into a flat vector in a fixed order (per layer: weights
row-major, then biases) so the model can be chunked for the ledger.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import CityGrid, RideRecord


class TrainingDivergedError(RuntimeError):
    """Loss blew up or went non-finite during a training step."""


def encode_states(grid: CityGrid, cells: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """One-hot cell concatenated with one-hot slot, one row per state."""
    cells = np.asarray(cells, dtype=np.intp)
    slots = np.asarray(slots, dtype=np.intp)
    m = cells.size
    out = np.zeros((m, grid.cells + grid.time_slots))
    out[np.arange(m), cells] = 1.0
    out[np.arange(m), grid.cells + slots] = 1.0
    return out


class QNetwork:
    """Two-hidden-layer tanh MLP over state encodings, one output per action."""

    def __init__(
        self,
        n_inputs: int,
        n_actions: int,
        hidden: int = 64,
        *,
        seed: int = 0,
        dtype=np.float64,
    ):
        self.n_inputs = n_inputs
        self.n_actions = n_actions
        self.hidden = hidden
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        sizes = [(n_inputs, hidden), (hidden, hidden), (hidden, n_actions)]
        self.weights = [
            (rng.standard_normal(s) * np.sqrt(1.0 / s[0])).astype(self.dtype) for s in sizes
        ]
        self.biases = [np.zeros(s[1], dtype=self.dtype) for s in sizes]

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a batch of encoded states, shape (batch, actions)."""
        x = np.asarray(x, dtype=self.dtype)
        h1 = np.tanh(x @ self.weights[0] + self.biases[0])
        h2 = np.tanh(h1 @ self.weights[1] + self.biases[1])
        return h2 @ self.weights[2] + self.biases[2]

    def loss_and_grads(
        self, x: np.ndarray, actions: np.ndarray, targets: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean squared error at the taken actions, with its gradients."""
        x = np.asarray(x, dtype=self.dtype)
        actions = np.asarray(actions, dtype=np.intp)
        targets = np.asarray(targets, dtype=self.dtype)
        m = x.shape[0]

        z1 = x @ self.weights[0] + self.biases[0]
        h1 = np.tanh(z1)
        z2 = h1 @ self.weights[1] + self.biases[1]
        h2 = np.tanh(z2)
        q = h2 @ self.weights[2] + self.biases[2]

        err = q[np.arange(m), actions] - targets
        loss = float(np.mean(err**2))

        dq = np.zeros_like(q)
        dq[np.arange(m), actions] = 2.0 * err / m
        dw3 = h2.T @ dq
        db3 = dq.sum(axis=0)
        dh2 = dq @ self.weights[2].T
        dz2 = dh2 * (1.0 - h2**2)
        dw2 = h1.T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ self.weights[1].T
        dz1 = dh1 * (1.0 - h1**2)
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        return loss, [dw1, dw2, dw3], [db1, db2, db3]

    # -- flat parameter vector ------------------------------------------------

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=self.dtype).reshape(-1)
        if flat.size != self.param_count:
            raise ValueError(f"expected {self.param_count} parameters, got {flat.size}")
        offset = 0
        for i, w in enumerate(self.weights):
            self.weights[i] = flat[offset : offset + w.size].reshape(w.shape).copy()
            offset += w.size
            b = self.biases[i]
            self.biases[i] = flat[offset : offset + b.size].copy()
            offset += b.size

    def clone(self) -> QNetwork:
        twin = QNetwork(
            self.n_inputs, self.n_actions, self.hidden, seed=0, dtype=self.dtype
        )
        twin.set_flat(self.get_flat())
        return twin


@dataclass(frozen=True)
class RideBatch:
    """Encoded ride set ready for Bellman targets and training."""

    pickup_x: np.ndarray
    dropoff_x: np.ndarray
    actions: np.ndarray
    fares: np.ndarray


def encode_rides(grid: CityGrid, rides: list[RideRecord]) -> RideBatch:
    pickup_cells = np.array([r.pickup_cell for r in rides], dtype=np.intp)
    pickup_slots = np.array([r.pickup_slot for r in rides], dtype=np.intp)
    dropoff_cells = np.array([r.dropoff_cell for r in rides], dtype=np.intp)
    dropoff_slots = np.array([r.dropoff_slot for r in rides], dtype=np.intp)
    return RideBatch(
        pickup_x=encode_states(grid, pickup_cells, pickup_slots),
        dropoff_x=encode_states(grid, dropoff_cells, dropoff_slots),
        actions=dropoff_cells.copy(),
        fares=np.array([r.fare for r in rides], dtype=np.float64),
    )


def bellman_targets(
    net: QNetwork, batch: RideBatch, gamma: float
) -> np.ndarray:
    """One target per ride: fare plus the discounted best dropoff-state value.

    With ``gamma == 0`` the targets equal the raw fares exactly.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if gamma == 0.0:
        return batch.fares.copy()
    continuation = net.forward(batch.dropoff_x).max(axis=1)
    return batch.fares + gamma * continuation


def train_step(
    net: QNetwork,
    batch: RideBatch,
    targets: np.ndarray,
    *,
    eta: float,
    epochs: int = 1,
    batch_size: int = 32,
    rng: np.random.Generator | None = None,
    max_loss: float = 1e6,
) -> tuple[float, int]:
    """Mini-batch gradient descent of the squared error toward the targets.

    Returns (final full-batch loss, gradient steps taken).

    Raises:
        TrainingDivergedError: non-finite or exploding loss, with the epoch
            and loss value in the message.
    """
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    rng = rng or np.random.default_rng(0)
    m = batch.pickup_x.shape[0]
    steps = 0
    if m == 0:
        return 0.0, 0
    for epoch in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start : start + batch_size]
            loss, dws, dbs = net.loss_and_grads(
                batch.pickup_x[idx], batch.actions[idx], targets[idx]
            )
            if not np.isfinite(loss) or loss > max_loss:
                raise TrainingDivergedError(
                    f"loss {loss} at epoch {epoch}, step {steps} (eta={eta})"
                )
            for w, dw in zip(net.weights, dws):
                w -= eta * dw
            for b, db in zip(net.biases, dbs):
                b -= eta * db
            steps += 1
    final_loss, _, _ = net.loss_and_grads(batch.pickup_x, batch.actions, targets)
    if not np.isfinite(final_loss) or final_loss > max_loss:
        raise TrainingDivergedError(f"final loss {final_loss} (eta={eta})")
    return float(final_loss), steps


def numerical_gradients(
    net: QNetwork, x: np.ndarray, actions: np.ndarray, targets: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of the loss over the flat parameter vector."""
    flat = net.get_flat()
    grad = np.zeros_like(flat)
    probe = net.clone()

    def loss_at(v: np.ndarray) -> float:
        probe.set_flat(v)
        loss, _, _ = probe.loss_and_grads(x, actions, targets)
        return loss

    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = eps
        grad[i] = (loss_at(flat + bump) - loss_at(flat - bump)) / (2 * eps)
    return grad


def flat_gradients(net: QNetwork, dws: list[np.ndarray], dbs: list[np.ndarray]) -> np.ndarray:
    parts = []
    for dw, db in zip(dws, dbs):
        parts.append(dw.reshape(-1))
        parts.append(db)
    return np.concatenate(parts)
