"""Per-frame, per-slot speaker existence probabilities.

The pipeline talks to a detector through two methods::

    detect(embeddings, targets, start) -> (T, N) posteriors
    assign_slot(slot, frames) -> None

``start`` is the speech-clock index of the first row of ``embeddings`` and
``assign_slot`` tells the detector which frames seeded a newly opened slot.
The cosine detector ignores both; the oracle detector needs them to look up
ground truth.
"""
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from . import _kernels

ORACLE_HIGH = 0.95
ORACLE_LOW = 0.05


@dataclass(frozen=True)
class DetectorConfig:
    scale: float = 10.0
    offset: float = -4.0
    oracle_flip_prob: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not 0.0 <= self.oracle_flip_prob < 1.0:
            raise ValueError("oracle_flip_prob must be in [0, 1)")


def logistic(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def cosine_detect(embeddings: np.ndarray, targets: np.ndarray, config: DetectorConfig = DetectorConfig()) -> np.ndarray:
    """``sigmoid(scale * cos(e_t, target_n) + offset)``; an all-zero target has cos 0."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if embeddings.shape[1] != targets.shape[1]:
        raise ValueError(f"embedding dim {embeddings.shape[1]} != target dim {targets.shape[1]}")
    return _kernels.cosine_posteriors(embeddings, targets, config.scale, config.offset)


def oracle_detect(
    labels: np.ndarray,
    slot_map: Mapping[int, int],
    num_slots: int,
    config: DetectorConfig = DetectorConfig(),
    seed: int = 0,
) -> np.ndarray:
    """Posteriors read off ground truth.

    ``slot_map`` maps a label column (true speaker) to a buffer slot.  Mapped
    speakers give 0.95 where active and 0.05 elsewhere; unmapped speakers
    leave no trace, so their solo frames come out as all-0.05 rows.
    """
    labels = np.asarray(labels)
    slots = list(slot_map.values())
    if len(set(slots)) != len(slots):
        raise ValueError("slot_map is not injective")
    post = np.full((labels.shape[0], num_slots), ORACLE_LOW)
    for spk, slot in slot_map.items():
        if not 0 <= slot < num_slots:
            raise ValueError(f"slot {slot} out of range for {num_slots} slots")
        post[labels[:, spk].astype(bool), slot] = ORACLE_HIGH
    if config.oracle_flip_prob > 0:
        rng = np.random.default_rng(seed)
        flip = rng.random(post.shape) < config.oracle_flip_prob
        post[flip] = 1.0 - post[flip]
    return post


class CosineDetector:
    name = "cosine"

    def __init__(self, config: DetectorConfig = DetectorConfig()):
        self.config = config

    def detect(self, embeddings, targets, start=0):
        return cosine_detect(embeddings, targets, self.config)

    def assign_slot(self, slot, frames):
        pass


class OracleDetector:
    """Ground-truth detector for a single session.

    ``labels`` are speech-clock labels for the whole session (frames x true
    speakers).  Slots are bound to true speakers as the pipeline opens them:
    a new slot takes the not-yet-bound speaker that is active in most of the
    seeding frames.
    """

    name = "oracle"

    def __init__(self, labels: np.ndarray, num_slots: int = 4, config: DetectorConfig = DetectorConfig(), seed: int = 0):
        self.labels = np.asarray(labels).astype(bool)
        self.num_slots = num_slots
        self.config = config
        self.seed = seed
        self.slot_map: Dict[int, int] = {}  # true speaker -> slot

    def detect(self, embeddings, targets, start=0):
        stop = start + len(embeddings)
        if stop > len(self.labels):
            raise IndexError(f"frames {start}:{stop} beyond {len(self.labels)} labelled frames")
        seed = np.random.SeedSequence([self.seed, start, stop]).generate_state(1)[0]
        return oracle_detect(self.labels[start:stop], self.slot_map, self.num_slots, self.config, int(seed))

    def assign_slot(self, slot, frames) -> Optional[int]:
        frames = np.asarray(frames, dtype=np.int64)
        votes = self.labels[frames].sum(axis=0)
        bound = set(self.slot_map)
        best, best_votes = None, 0
        for spk, v in enumerate(votes):
            if spk not in bound and v > best_votes:
                best, best_votes = spk, v
        if best is not None:
            self.slot_map[best] = slot
        return best


def make_detector(name: str, config: DetectorConfig = DetectorConfig(), labels=None, num_slots: int = 4, seed: int = 0):
    if name == "cosine":
        return CosineDetector(config)
    if name == "oracle":
        if labels is None:
            raise ValueError("oracle detector needs speech-clock labels")
        return OracleDetector(labels, num_slots, config, seed)
    raise ValueError(f"unknown detector {name!r} (expected 'cosine' or 'oracle')")
