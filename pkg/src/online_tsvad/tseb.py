"""Target speaker embedding buffer.

Each of the ``capacity`` slots keeps the running mean of the frame embeddings
attributed to one speaker and the number of frames behind that mean.  Updates
reconstruct the sum from ``mean * count``, add the new frames and divide
again, so a stream fed in any chunking ends at the same means as a one-shot
label-weighted average over the whole stream.
"""
from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from . import _kernels


def aggregate_targets(embeddings: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Label-weighted mean embedding for every speaker column.

    Row ``n`` is the mean of the frames where ``labels[:, n] == 1``.  A
    speaker with no active frame gets the zero vector.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if embeddings.ndim != 2 or labels.ndim != 2:
        raise ValueError("embeddings and labels must be 2-d")
    if embeddings.shape[0] != labels.shape[0]:
        raise ValueError(
            f"frame-count mismatch: {embeddings.shape[0]} embeddings vs {labels.shape[0]} labels"
        )
    sums, counts = _kernels.label_sums(embeddings, labels)
    out = np.zeros_like(sums)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


@dataclass(frozen=True)
class Tseb:
    """Immutable buffer state; ``update`` returns a new buffer."""

    means: np.ndarray  # capacity x dim, float64
    counts: np.ndarray  # capacity, int64

    @classmethod
    def empty(cls, capacity: int = 4, dim: int = 128) -> "Tseb":
        if capacity < 1:
            raise ValueError("capacity must be positive")
        return cls(np.zeros((capacity, dim)), np.zeros(capacity, dtype=np.int64))

    @classmethod
    def from_labels(cls, embeddings: np.ndarray, labels: np.ndarray) -> "Tseb":
        """Build a buffer from scratch with one-shot aggregation."""
        labels = np.asarray(labels)
        return cls(aggregate_targets(embeddings, labels), labels.astype(bool).sum(axis=0).astype(np.int64))

    @property
    def capacity(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    @property
    def num_occupied(self) -> int:
        return int(np.count_nonzero(self.counts))

    def targets(self) -> np.ndarray:
        return self.means.copy()

    def update(self, embeddings: np.ndarray, decisions: np.ndarray) -> "Tseb":
        embeddings = np.asarray(embeddings, dtype=np.float64)
        decisions = np.asarray(decisions)
        if decisions.ndim != 2 or decisions.shape[1] != self.capacity:
            raise ValueError(f"decisions must have {self.capacity} columns, got shape {decisions.shape}")
        if embeddings.shape != (decisions.shape[0], self.dim):
            raise ValueError(
                f"embeddings shape {embeddings.shape} does not match "
                f"({decisions.shape[0]}, {self.dim})"
            )
        block_sums, block_counts = _kernels.label_sums(embeddings, decisions)
        means = self.means.copy()
        counts = self.counts.copy()
        for n in np.flatnonzero(block_counts):
            total = means[n] * counts[n] + block_sums[n]
            counts[n] += block_counts[n]
            means[n] = total / counts[n]
        return Tseb(means, counts)

    def assign_new_speaker(self) -> Optional[int]:
        """Lowest empty slot index, or ``None`` when every slot is taken."""
        free = np.flatnonzero(self.counts == 0)
        return int(free[0]) if free.size else None


def dump_snapshot(buffer: Tseb, block_index: int, fh: TextIO) -> None:
    """Append one line per slot: ``block slot count v_1 ... v_D``."""
    for slot in range(buffer.capacity):
        values = " ".join(f"{v:.8g}" for v in buffer.means[slot])
        fh.write(f"{block_index} {slot} {buffer.counts[slot]} {values}\n")
