"""Block-wise online inference.

Silence is removed first with an oracle VAD; everything afterwards runs on
the resulting *speech clock*.  The first block (``k`` shifts) initialises the
buffer, then every shift of new speech is scored inside a window of the
latest ``k`` shifts and only the newest shift is committed.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .frontend import FRAME_RATE_HZ
from .tseb import Tseb

logger = logging.getLogger(__name__)

_EPS = 1e-9


@dataclass(frozen=True)
class BlockConfig:
    """Block length ``b`` and shift ``s`` in seconds; ``b`` must equal ``k * s``."""

    block_seconds: float = 16.0
    shift_seconds: float = 2.0

    def __post_init__(self):
        if not (self.block_seconds > 0 and self.shift_seconds > 0):
            raise ValueError("block and shift must be positive")
        ratio = self.block_seconds / self.shift_seconds
        if abs(ratio - round(ratio)) > _EPS or round(ratio) < 1:
            raise ValueError(
                f"block {self.block_seconds}s is not a whole multiple of shift {self.shift_seconds}s"
            )

    @property
    def k(self) -> int:
        return int(round(self.block_seconds / self.shift_seconds))

    def shift_frames(self, frame_rate: float = FRAME_RATE_HZ) -> int:
        f = self.shift_seconds * frame_rate
        if abs(f - round(f)) > _EPS:
            raise ValueError(
                f"shift {self.shift_seconds}s is {f:g} frames at {frame_rate:g} Hz, not a whole number"
            )
        return int(round(f))

    def block_frames(self, frame_rate: float = FRAME_RATE_HZ) -> int:
        return self.k * self.shift_frames(frame_rate)


@dataclass(frozen=True)
class Thresholds:
    t_init: float = 0.5
    t_low: float = 0.4
    t_up: float = 0.7
    t_d: float = 0.5

    def __post_init__(self):
        for name in ("t_init", "t_low", "t_up", "t_d"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} outside (0, 1)")
        if not self.t_low <= self.t_d <= self.t_up:
            raise ValueError("thresholds must satisfy t_low <= t_d <= t_up")


@dataclass(frozen=True)
class PipelineConfig:
    block: BlockConfig = BlockConfig()
    thresholds: Thresholds = Thresholds()
    capacity: int = 4
    frame_rate: float = FRAME_RATE_HZ
    # fewest below-t_low frames in the newest shift that may open a slot
    min_new_frames: int = 3
    # skip every buffer change after initialisation (diagnostics only)
    freeze_updates: bool = False

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if self.min_new_frames < 1:
            raise ValueError("min_new_frames must be >= 1")
        self.block.shift_frames(self.frame_rate)

    @property
    def shift_frames(self) -> int:
        return self.block.shift_frames(self.frame_rate)

    @property
    def block_frames(self) -> int:
        return self.block.block_frames(self.frame_rate)


# ---------------------------------------------------------------------------
# VAD and the speech clock
# ---------------------------------------------------------------------------

VadSegments = List[Tuple[float, float]]


def validate_vad(vad: Sequence[Tuple[float, float]]) -> VadSegments:
    segs = [(float(a), float(b)) for a, b in vad]
    if not segs:
        raise ValueError("no speech: VAD is empty")
    prev_off = -np.inf
    for on, off in segs:
        if not off > on:
            raise ValueError(f"VAD interval ({on}, {off}) has offset <= onset")
        if on < prev_off:
            raise ValueError(f"VAD interval ({on}, {off}) overlaps or is out of order")
        prev_off = off
    return segs


def read_vad(path: Union[str, Path]) -> VadSegments:
    segs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'onset offset'")
        segs.append((float(fields[0]), float(fields[1])))
    return validate_vad(segs)


def write_vad(vad: Sequence[Tuple[float, float]], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(f"{on:.3f} {off:.3f}\n" for on, off in vad))


@dataclass(frozen=True)
class TimelineMap:
    """Speech-clock frame index <-> original-timeline seconds.

    Interval ``j`` of the VAD owns speech frames
    ``starts[j] .. starts[j] + lengths[j] - 1``; speech frame ``i`` inside it
    begins at ``onsets[j] + (i - starts[j]) / frame_rate`` seconds.
    """

    frame_rate: float
    onsets: np.ndarray
    offsets: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    original_frames: np.ndarray  # speech frame -> original frame index

    @property
    def num_frames(self) -> int:
        return int(self.lengths.sum())

    def _interval(self, speech_frame: float) -> int:
        j = int(np.searchsorted(self.starts, speech_frame, side="right")) - 1
        return max(j, 0)

    def frame_to_seconds(self, i: int) -> float:
        j = self._interval(i)
        return float(self.onsets[j] + (i - self.starts[j]) / self.frame_rate)

    def speech_to_original(self, seconds: float) -> float:
        pos = seconds * self.frame_rate
        j = self._interval(pos)
        return float(min(self.onsets[j] + (pos - self.starts[j]) / self.frame_rate, self.offsets[j]))

    def to_speech_frame(self, original_frame: int) -> Optional[int]:
        i = int(np.searchsorted(self.original_frames, original_frame))
        if i < len(self.original_frames) and self.original_frames[i] == original_frame:
            return i
        return None


def remove_silence(stream: np.ndarray, vad: Sequence[Tuple[float, float]], frame_rate: float = FRAME_RATE_HZ):
    """Keep the frames whose centre lies inside a VAD interval.

    ``stream`` is any array whose first axis is the original frame clock
    (labels or embeddings).  Returns ``(speech_stream, TimelineMap)``.
    """
    vad = validate_vad(vad)
    stream = np.asarray(stream)
    total = stream.shape[0]
    if vad[-1][1] > total / frame_rate + 1.0 / frame_rate:
        raise ValueError(f"VAD ends at {vad[-1][1]}s but the stream covers {total / frame_rate}s")
    centres = (np.arange(total) + 0.5) / frame_rate
    kept, starts, lengths = [], [], []
    n = 0
    for on, off in vad:
        idx = np.flatnonzero((centres >= on) & (centres < off))
        starts.append(n)
        lengths.append(idx.size)
        kept.append(idx)
        n += idx.size
    if n == 0:
        raise ValueError("no speech: VAD selects no frames")
    frames = np.concatenate(kept)
    timeline = TimelineMap(
        frame_rate=frame_rate,
        onsets=np.array([on for on, _ in vad]),
        offsets=np.array([off for _, off in vad]),
        starts=np.array(starts),
        lengths=np.array(lengths),
        original_frames=frames,
    )
    return stream[frames], timeline


# ---------------------------------------------------------------------------
# thresholding
# ---------------------------------------------------------------------------

def detect_new_speaker_frames(posteriors: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of frames where every slot is strictly below ``threshold``."""
    posteriors = np.asarray(posteriors)
    return np.flatnonzero(posteriors.max(axis=1) < threshold)


def binarize_for_update(posteriors: np.ndarray, t_up: float) -> np.ndarray:
    """Strict ``> t_up`` decisions with overlapped frames (>= 2 ones) zeroed."""
    d = (np.asarray(posteriors) > t_up).astype(np.int8)
    d[d.sum(axis=1) >= 2] = 0
    return d


# ---------------------------------------------------------------------------
# state machine
# ---------------------------------------------------------------------------

@dataclass
class PipelineStats:
    commits: List[int] = field(default_factory=list)  # frames committed per call, init first
    reinference: List[int] = field(default_factory=list)  # per post-init block
    occupancy: List[int] = field(default_factory=list)  # occupied slots after each step
    new_speakers: List[Tuple[int, int]] = field(default_factory=list)  # (speech frame, slot)


@dataclass
class PipelineState:
    buffer: Optional[Tseb] = None
    committed: List[np.ndarray] = field(default_factory=list)
    frames_consumed: int = 0
    initialized: bool = False
    stats: PipelineStats = field(default_factory=PipelineStats)

    def decisions(self, capacity: int) -> np.ndarray:
        if not self.committed:
            return np.zeros((0, capacity), dtype=np.int8)
        return np.concatenate(self.committed)

    def _commit(self, rows: np.ndarray) -> None:
        self.committed.append(rows.astype(np.int8))
        self.frames_consumed += len(rows)
        self.stats.commits.append(len(rows))
        self.stats.occupancy.append(self.buffer.num_occupied)


def _keep_occupied(old: Tseb, new: Tseb) -> Tseb:
    # a rebuild must not silently free a slot that already holds a speaker
    lost = old.occupied & ~new.occupied
    if not lost.any():
        return new
    means, counts = new.means.copy(), new.counts.copy()
    means[lost], counts[lost] = old.means[lost], old.counts[lost]
    return Tseb(means, counts)


def initialize_first_block(
    embeddings: np.ndarray,
    detector,
    config: PipelineConfig = PipelineConfig(),
    stats: Optional[PipelineStats] = None,
) -> Tseb:
    """Grow the buffer over the first block, one shift at a time.

    The first shift is taken to be a single speaker and seeds slot 0.  Each
    later pass scores the whole prefix seen so far, opens a slot for frames
    below ``t_init`` everywhere, and rebuilds the buffer from scratch over the
    prefix.  With fewer than ``k`` whole shifts available only those are used;
    with less than one shift the whole input seeds slot 0.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = len(embeddings)
    if n == 0:
        raise ValueError("no speech frames to initialise from")
    F, th = config.shift_frames, config.thresholds
    passes = min(config.block.k, n // F)
    first = F if passes >= 1 else n

    seed = np.zeros((first, config.capacity), dtype=np.int8)
    seed[:, 0] = 1
    buf = Tseb.empty(config.capacity, embeddings.shape[1]).update(embeddings[:first], seed)
    detector.assign_slot(0, np.arange(first))

    for kp in range(2, passes + 1):
        window = embeddings[: kp * F]
        post = detector.detect(window, buf.targets(), 0)
        new = detect_new_speaker_frames(post, th.t_init)
        if new.size >= config.min_new_frames:
            slot = buf.assign_new_speaker()
            if slot is not None:
                post = post.copy()
                post[new, slot] = 1.0
                detector.assign_slot(slot, new)
                if stats is not None:
                    stats.new_speakers.append((int(new[0]), slot))
        rebuilt = Tseb.from_labels(window, binarize_for_update(post, th.t_up))
        buf = _keep_occupied(buf, rebuilt)
        if stats is not None:
            stats.occupancy.append(buf.num_occupied)
    return buf


def process_block(
    state: PipelineState,
    block: np.ndarray,
    detector,
    config: PipelineConfig = PipelineConfig(),
    start: int = 0,
    new_frames: Optional[int] = None,
) -> Tuple[PipelineState, np.ndarray]:
    """Score one block, maybe open a slot, update the buffer, commit the newest frames.

    ``block`` ends at the newest frame; its last ``new_frames`` rows (one
    shift by default) are the only ones updated into the buffer and
    committed.  ``start`` is the speech-clock index of ``block[0]``.

    When frames below ``t_low`` in the newest shift open a slot, the block is
    scored a second time against a tentative buffer seeded with them.  The
    real buffer is then updated once, from the pre-block state, so no frame is
    counted twice.
    """
    if not state.initialized:
        raise RuntimeError("pipeline state is not initialised")
    th = config.thresholds
    block = np.asarray(block, dtype=np.float64)
    L = len(block)
    m = config.shift_frames if new_frames is None else new_frames
    if not 0 < m <= L:
        raise ValueError(f"cannot commit {m} frames from a {L}-frame block")
    newest = slice(L - m, L)
    buf = state.buffer

    post = detector.detect(block, buf.targets(), start)
    reinferred = 0
    forced_slot, forced = None, None
    if not config.freeze_updates:
        new = detect_new_speaker_frames(post, th.t_low)
        recent = new[new >= L - m]
        if recent.size >= config.min_new_frames:
            slot = buf.assign_new_speaker()
            if slot is None:
                logger.debug("buffer full, ignoring %d unknown frames at %d", recent.size, start + L - m)
            else:
                post = post.copy()
                post[new, slot] = 1.0
                detector.assign_slot(slot, start + recent)
                tentative = buf.update(block[newest], binarize_for_update(post[newest], th.t_up))
                post = detector.detect(block, tentative.targets(), start)
                reinferred = 1
                forced_slot, forced = slot, new
                state.stats.new_speakers.append((int(start + recent[0]), slot))

        upd = post[newest]
        if forced_slot is not None:
            # seeding frames stay with the slot they opened
            upd = upd.copy()
            upd[forced[forced >= L - m] - (L - m), forced_slot] = 1.0
        buf = buf.update(block[newest], binarize_for_update(upd, th.t_up))

    state.buffer = buf
    state.stats.reinference.append(reinferred)
    commit = post[newest] > th.t_d
    state._commit(commit)
    return state, commit


class SessionResult(NamedTuple):
    decisions: np.ndarray  # speech frames x capacity, 0/1
    timeline: TimelineMap
    buffer: Tseb
    stats: PipelineStats


def run_session(
    stream: np.ndarray,
    vad: Sequence[Tuple[float, float]],
    detector,
    config: PipelineConfig = PipelineConfig(),
    on_block: Optional[Callable[[int, Tseb], None]] = None,
    speech_only: bool = False,
) -> SessionResult:
    """Diarize one session end to end.

    ``stream`` is the original-clock embedding matrix unless ``speech_only``
    is set, in which case it is already silence-free and ``vad`` is only used
    to build the timeline map.  ``on_block(i, buffer)`` is called after the
    initialisation (``i = 0``) and after every processed block.
    """
    if speech_only:
        n_orig = int(np.ceil(max(off for _, off in vad) * config.frame_rate))
        _, timeline = remove_silence(np.zeros((n_orig, 1)), vad, config.frame_rate)
        speech = np.asarray(stream, dtype=np.float64)
        if len(speech) != timeline.num_frames:
            raise ValueError(f"{len(speech)} speech frames but the VAD covers {timeline.num_frames}")
    else:
        speech, timeline = remove_silence(stream, vad, config.frame_rate)
    S = len(speech)
    F, B = config.shift_frames, config.block_frames

    state = PipelineState()
    n_init = min(B, (S // F) * F) or S
    state.buffer = initialize_first_block(speech[:n_init], detector, config, state.stats)
    state.initialized = True
    post = detector.detect(speech[:n_init], state.buffer.targets(), 0)
    state._commit(post > config.thresholds.t_d)
    if on_block is not None:
        on_block(0, state.buffer)

    block_index = 0
    while state.frames_consumed < S:
        done = state.frames_consumed
        m = min(F, S - done)
        lo = max(0, done - (B - F))
        process_block(state, speech[lo : done + m], detector, config, start=lo, new_frames=m)
        block_index += 1
        if on_block is not None:
            on_block(block_index, state.buffer)

    return SessionResult(state.decisions(config.capacity), timeline, state.buffer, state.stats)


def frames_to_segments(decisions: np.ndarray, timeline: TimelineMap) -> Dict[int, List[Tuple[float, float]]]:
    """Runs of ones per slot, mapped back to original-timeline seconds.

    A run crossing a removed silence gap is split at the gap; pieces closer
    than one frame are merged.
    """
    decisions = np.asarray(decisions).astype(bool)
    fr = timeline.frame_rate
    out: Dict[int, List[Tuple[float, float]]] = {}
    for slot in range(decisions.shape[1]):
        col = decisions[:, slot].astype(np.int8)
        edges = np.diff(np.concatenate([[0], col, [0]]))
        run_starts = np.flatnonzero(edges == 1)
        run_ends = np.flatnonzero(edges == -1)
        segs: List[Tuple[float, float]] = []
        for a, b in zip(run_starts, run_ends):
            for j in range(len(timeline.starts)):
                lo = max(a, timeline.starts[j])
                hi = min(b, timeline.starts[j] + timeline.lengths[j])
                if hi <= lo:
                    continue
                on = timeline.onsets[j] + (lo - timeline.starts[j]) / fr
                off = min(timeline.offsets[j], timeline.onsets[j] + (hi - timeline.starts[j]) / fr)
                if segs and on - segs[-1][1] < 1.0 / fr - _EPS:
                    segs[-1] = (segs[-1][0], off)
                else:
                    segs.append((float(on), float(off)))
        if segs:
            out[slot] = segs
    return out


def dump_decisions(decisions: np.ndarray, path: Union[str, Path]) -> None:
    rows = np.asarray(decisions).astype(np.int8)
    with open(path, "w") as fh:
        for i, row in enumerate(rows):
            fh.write(f"{i} " + " ".join(str(int(v)) for v in row) + "\n")
