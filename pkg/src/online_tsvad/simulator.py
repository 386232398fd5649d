"""Synthetic multi-speaker sessions and training-style samples.

Layouts are built on the integer frame grid, so labels, VAD and RTTM all
agree exactly.  Turns alternate between speakers; each turn either starts
after the previous one (optionally after a pause) or overlaps its tail.  The
amount of overlap is steered turn by turn towards the requested overlap
ratio.  At most two speakers are ever active at once.
"""
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .frontend import FRAME_RATE_HZ, SpeakerProfile, synthetic_embed
from .tseb import aggregate_targets

logger = logging.getLogger(__name__)

MAX_OVERLAP_RATIO = 0.8
_ATTEMPTS = 20


@dataclass(frozen=True)
class SimConfig:
    num_speakers: int = 3
    duration_seconds: float = 300.0
    target_overlap_ratio: float = 0.35
    min_utterance_seconds: float = 1.0
    max_utterance_seconds: float = 8.0
    max_centroid_cos: float = 0.2
    noise_sigma: float = 0.0
    seed: int = 0
    embed_dim: int = 128
    # each speaker's first turn stays alone this long (0 disables)
    first_solo_seconds: float = 2.0
    pause_prob: float = 0.3
    max_pause_seconds: float = 2.0
    frame_rate: float = FRAME_RATE_HZ

    def __post_init__(self):
        if not 2 <= self.num_speakers <= 4:
            raise ValueError("num_speakers must be in [2, 4]")
        if not 0.0 <= self.target_overlap_ratio < 1.0:
            raise ValueError("target_overlap_ratio must be in [0, 1)")
        if not 0 < self.min_utterance_seconds <= self.max_utterance_seconds:
            raise ValueError("need 0 < min_utterance_seconds <= max_utterance_seconds")
        if self.first_solo_seconds > self.max_utterance_seconds:
            raise ValueError("first_solo_seconds cannot exceed max_utterance_seconds")
        if self.frames_at_least(self.min_utterance_seconds) > self.frames_at_most(self.max_utterance_seconds):
            raise ValueError("utterance bounds admit no whole-frame length")
        if self.duration_seconds <= 0 or self.noise_sigma < 0:
            raise ValueError("duration must be positive and noise_sigma non-negative")
        if not -1.0 <= self.max_centroid_cos <= 1.0:
            raise ValueError("max_centroid_cos must be a cosine")

    def frames(self, seconds: float) -> int:
        return int(round(seconds * self.frame_rate))

    def frames_at_least(self, seconds: float) -> int:
        return int(np.ceil(seconds * self.frame_rate - 1e-9))

    def frames_at_most(self, seconds: float) -> int:
        return int(np.floor(seconds * self.frame_rate + 1e-9))


@dataclass
class SessionPlan:
    duration_seconds: float
    entries: List[Tuple[str, float, float]]  # (speaker_id, onset, offset) seconds
    num_speakers: int

    def speakers(self) -> List[str]:
        return sorted({e[0] for e in self.entries})


class Session(NamedTuple):
    plan: SessionPlan
    labels: np.ndarray  # original-clock frames x speakers
    embeddings: np.ndarray  # original-clock frames x dim; silent rows are junk
    vad: List[Tuple[float, float]]
    profiles: List[SpeakerProfile]


def overlap_ratio(labels: np.ndarray) -> float:
    """Share of speech frames that have two or more active speakers."""
    active = np.asarray(labels).astype(bool).sum(axis=1)
    speech = np.count_nonzero(active >= 1)
    if speech == 0:
        raise ValueError("labels contain no active frame")
    return np.count_nonzero(active >= 2) / speech


def sample_centroids(num: int, dim: int, max_cos: float, rng: np.random.Generator, max_tries: int = 10000) -> np.ndarray:
    out = []
    tries = 0
    while len(out) < num:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"could not draw {num} centroids in {dim}-d with pairwise cos <= {max_cos}")
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(float(v @ u) <= max_cos for u in out):
            out.append(v)
    return np.stack(out)


def _layout(
    total: int,
    speakers: Sequence[int],
    rng: np.random.Generator,
    target: float,
    min_len: int,
    max_len: int,
    solo: int = 0,
    pause_prob: float = 0.0,
    max_pause: int = 0,
    introduce_all_first: bool = False,
    fill: bool = False,
) -> List[Tuple[int, int, int]]:
    """Turns ``(speaker, onset, offset)`` in frames inside ``[0, total)``.

    ``fill`` makes the layout silence-free: no pauses, and the last turn is
    cut at ``total`` regardless of ``min_len``.
    """
    turns: List[Tuple[int, int, int]] = []
    seen = set()
    union = overlap = 0
    prev2_off = 0
    prev_solo_end = 0  # no later turn may start before this
    while True:
        prev = turns[-1] if turns else None
        candidates = [s for s in speakers if prev is None or s != prev[0]]
        unseen = [s for s in candidates if s not in seen]
        if unseen and (introduce_all_first or rng.random() < 0.5):
            spk = int(rng.choice(unseen))
        else:
            spk = int(rng.choice(candidates))
        first = spk not in seen
        lo = max(min_len, solo) if first else min_len
        length = int(rng.integers(lo, max(lo, max_len) + 1))

        if prev is None:
            onset = 0
            o = 0
        else:
            _, p_on, p_off = prev
            o = 0
            if not first and target > 0:
                want = (target * (union + length) - overlap) / (1.0 + target)
                if want > 0:
                    o = int(round(want * rng.uniform(0.7, 1.3)))
                cap = min(p_off - prev2_off, p_off - prev_solo_end, p_off - p_on - 1, length - 1)
                o = max(0, min(o, cap))
            onset = p_off - o
            if o == 0 and not fill and pause_prob > 0 and rng.random() < pause_prob:
                onset += int(rng.integers(1, max(1, max_pause) + 1))

        offset = onset + length
        if offset > total:
            if not fill:
                break
            offset = total
            if offset - onset <= o:
                break
        turns.append((spk, onset, offset))
        seen.add(spk)
        union += (offset - onset) - o
        overlap += o
        if prev is not None:
            prev2_off = prev[2]
        if first and solo > 0:
            prev_solo_end = onset + solo
        if offset >= total:
            break
    return turns


def _rasterize(turns, total: int, num_cols: int) -> np.ndarray:
    labels = np.zeros((total, num_cols), dtype=np.int8)
    for spk, on, off in turns:
        labels[on:off, spk] = 1
    return labels


def _vad_from_labels(labels: np.ndarray, frame_rate: float) -> List[Tuple[float, float]]:
    active = labels.any(axis=1).astype(np.int8)
    edges = np.diff(np.concatenate([[0], active, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(a / frame_rate, b / frame_rate) for a, b in zip(starts, ends)]


def simulate_session(config: SimConfig, session_id: str = "") -> Session:
    """Generate one session: plan, labels, embeddings, VAD and speaker profiles.

    Deterministic in ``config.seed``.  Raises ``ValueError`` when the overlap
    target is out of reach.
    """
    if config.target_overlap_ratio > MAX_OVERLAP_RATIO:
        raise ValueError(
            f"overlap ratio {config.target_overlap_ratio} infeasible (max {MAX_OVERLAP_RATIO} "
            "with at most two simultaneous speakers)"
        )
    fr = config.frame_rate
    total = int(np.floor(config.duration_seconds * fr + 1e-9))
    min_len = max(1, config.frames_at_least(config.min_utterance_seconds))
    max_len = config.frames_at_most(config.max_utterance_seconds)
    solo = config.frames_at_least(config.first_solo_seconds)
    speakers = list(range(config.num_speakers))

    root = np.random.SeedSequence(config.seed)
    layout_seq, centroid_seq, noise_seq, junk_seq = root.spawn(4)
    turns = None
    for attempt, seq in enumerate(layout_seq.spawn(_ATTEMPTS)):
        rng = np.random.default_rng(seq)
        cand = _layout(
            total, speakers, rng, config.target_overlap_ratio, min_len, max_len, solo,
            config.pause_prob, config.frames(config.max_pause_seconds),
        )
        labels = _rasterize(cand, total, config.num_speakers)
        if {t[0] for t in cand} != set(speakers) or not labels.any():
            continue
        if abs(overlap_ratio(labels) - config.target_overlap_ratio) <= 0.05:
            turns = cand
            break
        logger.debug("layout attempt %d missed overlap target", attempt)
    if turns is None:
        raise ValueError(
            f"could not lay out {config.num_speakers} speakers in {config.duration_seconds}s "
            f"at overlap ratio {config.target_overlap_ratio}"
        )

    prefix = f"{session_id}_" if session_id else ""
    names = [f"{prefix}spk{i}" for i in speakers]
    centroids = sample_centroids(
        config.num_speakers, config.embed_dim, config.max_centroid_cos, np.random.default_rng(centroid_seq)
    )
    # renormalise so the unit-norm check holds to the last bit
    profiles = [SpeakerProfile(n, c / np.linalg.norm(c)) for n, c in zip(names, centroids)]

    speech = labels.any(axis=1)
    emb = np.empty((total, config.embed_dim))
    emb[speech] = synthetic_embed(
        labels[speech], profiles, config.noise_sigma, int(noise_seq.generate_state(1)[0])
    )
    # non-speech frames carry arbitrary unit vectors; the VAD must drop them
    junk = np.random.default_rng(junk_seq).standard_normal((int((~speech).sum()), config.embed_dim))
    emb[~speech] = junk / np.linalg.norm(junk, axis=1, keepdims=True) if junk.size else junk

    entries = sorted(((names[s], on / fr, off / fr) for s, on, off in turns), key=lambda e: (e[1], e[0]))
    plan = SessionPlan(config.duration_seconds, entries, config.num_speakers)
    return Session(plan, labels, emb, _vad_from_labels(labels, fr), profiles)


# ---------------------------------------------------------------------------
# training samples
# ---------------------------------------------------------------------------

@dataclass
class TrainingSample:
    e_left: np.ndarray
    y_left: np.ndarray
    e_right: np.ndarray
    y_right: np.ndarray
    targets: np.ndarray
    replaced: bool
    speakers: List[int] = field(default_factory=list)  # pool index of each label column


def _fill(turns, total: int, columns: Sequence[int], pool, rng, dim: int) -> np.ndarray:
    emb = np.zeros((total, dim))
    for col, on, off in turns:
        stream = pool[columns[col]]
        start = int(rng.integers(0, len(stream)))
        idx = (start + np.arange(off - on)) % len(stream)
        emb[on:off] += stream[idx]
    return emb


def _normalize_overlaps(emb: np.ndarray, labels: np.ndarray) -> np.ndarray:
    multi = labels.sum(axis=1) >= 2
    emb[multi] /= np.linalg.norm(emb[multi], axis=1, keepdims=True)
    return emb


def make_training_sample(
    pool: Sequence[np.ndarray],
    seed: int,
    num_slots: int = 4,
    half_seconds: float = 16.0,
    replace_prob: float = 0.5,
    target_overlap_ratio: float = 0.35,
    frame_rate: float = FRAME_RATE_HZ,
) -> TrainingSample:
    """Build one silence-free split sample from single-speaker streams.

    A ``2 * half_seconds`` label layout with 2..``num_slots`` speakers is
    filled with contiguous stretches of each speaker's stream and split in
    half.  With probability ``replace_prob`` the left half is swapped for a
    freshly laid-out signal holding 3 or 4 speakers.  ``targets`` are the
    label-weighted means of the left half.
    """
    if len(pool) < num_slots:
        raise ValueError(f"pool has {len(pool)} speakers, need at least {num_slots}")
    if num_slots < 3:
        raise ValueError("num_slots must be >= 3 for the replacement branch")
    rng = np.random.default_rng(seed)
    half = int(round(half_seconds * frame_rate))
    dim = np.asarray(pool[0]).shape[1]
    min_len, max_len = int(np.ceil(frame_rate - 1e-9)), int(np.floor(4.0 * frame_rate + 1e-9))
    columns = [int(i) for i in rng.choice(len(pool), size=num_slots, replace=False)]

    n_base = int(rng.integers(2, num_slots + 1))
    turns = _layout(2 * half, list(range(n_base)), rng, target_overlap_ratio, min_len, max_len, fill=True)
    labels = _rasterize(turns, 2 * half, num_slots)
    emb = _normalize_overlaps(_fill(turns, 2 * half, columns, pool, rng, dim), labels)
    e_left, y_left = emb[:half], labels[:half]
    e_right, y_right = emb[half:], labels[half:]

    replaced = bool(rng.random() < replace_prob)
    if replaced:
        n_rep = int(rng.integers(3, min(4, num_slots) + 1))
        cols = sorted(int(c) for c in rng.choice(num_slots, size=n_rep, replace=False))
        rep_turns = _layout(
            half, cols, rng, target_overlap_ratio, min_len, max_len, introduce_all_first=True, fill=True
        )
        y_left = _rasterize(rep_turns, half, num_slots)
        e_left = _normalize_overlaps(_fill(rep_turns, half, columns, pool, rng, dim), y_left)

    return TrainingSample(
        e_left, y_left, e_right, y_right, aggregate_targets(e_left, y_left), replaced, columns
    )
