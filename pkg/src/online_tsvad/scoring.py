"""RTTM I/O, speaker mapping and diarization error rate.

DER is computed on exact interval arithmetic: the timeline is cut at every
segment and collar boundary, and each elementary piece is scored with the
speaker counts at its midpoint.  Overlapped speech counts once per speaker.
"""
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

_NA = "<NA>"


@dataclass(frozen=True)
class RttmSegment:
    file_id: str
    onset: float
    duration: float
    speaker: str

    @property
    def offset(self) -> float:
        return self.onset + self.duration


class RttmError(ValueError):
    pass


def read_rttm(text: str) -> List[RttmSegment]:
    segments = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 10 or fields[0] != "SPEAKER":
            raise RttmError(f"line {lineno}: expected 10 fields starting with SPEAKER: {line!r}")
        try:
            onset, duration = float(fields[3]), float(fields[4])
        except ValueError:
            raise RttmError(f"line {lineno}: bad onset/duration: {line!r}") from None
        if onset < 0:
            raise RttmError(f"line {lineno}: negative onset {onset}")
        if not duration > 0:
            raise RttmError(f"line {lineno}: non-positive duration {duration}")
        segments.append(RttmSegment(fields[1], onset, duration, fields[7]))
    return segments


def write_rttm(segments: Iterable[RttmSegment]) -> str:
    lines = []
    for s in segments:
        if s.duration <= 0 or s.onset < 0:
            raise RttmError(f"invalid segment {s}")
        lines.append(
            f"SPEAKER {s.file_id} 1 {s.onset:.6f} {s.duration:.6f} {_NA} {_NA} {s.speaker} {_NA} {_NA}"
        )
    return "".join(line + "\n" for line in lines)


def load_rttm(path: Union[str, Path]) -> List[RttmSegment]:
    try:
        return read_rttm(Path(path).read_text())
    except RttmError as exc:
        raise RttmError(f"{path}: {exc}") from None


def segments_by_speaker(segments: Iterable[RttmSegment]) -> Dict[str, List[Tuple[float, float]]]:
    """Per-speaker sorted, merged ``(onset, offset)`` lists."""
    raw: Dict[str, List[Tuple[float, float]]] = defaultdict(list)
    for s in segments:
        raw[s.speaker].append((s.onset, s.offset))
    merged = {}
    for spk, segs in raw.items():
        segs.sort()
        out = [list(segs[0])]
        for on, off in segs[1:]:
            if on <= out[-1][1]:
                out[-1][1] = max(out[-1][1], off)
            else:
                out.append([on, off])
        merged[spk] = [(a, b) for a, b in out]
    return merged


def _overlap(a: Sequence[Tuple[float, float]], b: Sequence[Tuple[float, float]]) -> float:
    total = 0.0
    i = j = 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def optimal_mapping(ref: Iterable[RttmSegment], hyp: Iterable[RttmSegment]) -> Dict[str, Optional[str]]:
    """One-to-one hyp -> ref speaker mapping maximising total co-occurrence.

    Hypothesis speakers left unpaired, or paired with zero overlap, map to
    ``None``.
    """
    ref_s, hyp_s = segments_by_speaker(ref), segments_by_speaker(hyp)
    ref_ids, hyp_ids = sorted(ref_s), sorted(hyp_s)
    mapping: Dict[str, Optional[str]] = {h: None for h in hyp_ids}
    if not ref_ids or not hyp_ids:
        return mapping
    cooc = np.array([[_overlap(hyp_s[h], ref_s[r]) for r in ref_ids] for h in hyp_ids])
    rows, cols = linear_sum_assignment(cooc, maximize=True)
    for i, j in zip(rows, cols):
        if cooc[i, j] > 0:
            mapping[hyp_ids[i]] = ref_ids[j]
    return mapping


@dataclass(frozen=True)
class DerReport:
    miss: float  # fractions of scored reference speech
    false_alarm: float
    confusion: float
    der: float
    scored_speech: float  # seconds

    @property
    def error_seconds(self) -> float:
        return self.der * self.scored_speech


def der(
    ref: Sequence[RttmSegment],
    hyp: Sequence[RttmSegment],
    collar: float = 0.25,
    mapping: Optional[Mapping[str, Optional[str]]] = None,
) -> DerReport:
    """Diarization error rate with a +/- ``collar`` no-score zone around every reference boundary."""
    if collar < 0:
        raise ValueError("collar must be non-negative")
    ref_s, hyp_s = segments_by_speaker(ref), segments_by_speaker(hyp)
    if not ref_s:
        raise ValueError("nothing to score: empty reference")
    if mapping is None:
        mapping = optimal_mapping(ref, hyp)

    ref_ids = sorted(ref_s)
    hyp_ids = sorted(hyp_s)
    bounds = sorted({t for segs in ref_s.values() for seg in segs for t in seg})
    cuts = set(bounds)
    for segs in hyp_s.values():
        for on, off in segs:
            cuts.update((on, off))
    if collar > 0:
        for b in bounds:
            cuts.update((b - collar, b + collar))
    cuts = np.array(sorted(cuts))
    lo, hi = cuts[:-1], cuts[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    mid = 0.5 * (lo + hi)
    width = hi - lo

    scored = np.ones(mid.shape, dtype=bool)
    if collar > 0:
        b = np.array(bounds)
        idx = np.searchsorted(b, mid)
        near = np.full(mid.shape, np.inf)
        for cand in (idx - 1, idx):
            ok = (cand >= 0) & (cand < len(b))
            near[ok] = np.minimum(near[ok], np.abs(mid[ok] - b[cand[ok]]))
        scored = near >= collar

    def activity(segs):
        on = np.array([s[0] for s in segs])
        off = np.array([s[1] for s in segs])
        i = np.searchsorted(on, mid, side="right") - 1
        return (i >= 0) & (mid < off[np.maximum(i, 0)])

    ref_act = {r: activity(ref_s[r]) for r in ref_ids}
    hyp_act = {h: activity(hyp_s[h]) for h in hyp_ids}
    n_ref = sum(ref_act.values()) if ref_ids else np.zeros(mid.shape)
    n_hyp = sum(hyp_act.values()) if hyp_ids else np.zeros(mid.shape)
    n_ref = np.asarray(n_ref, dtype=np.int64)
    n_hyp = np.asarray(n_hyp, dtype=np.int64)
    n_correct = np.zeros(mid.shape, dtype=np.int64)
    for h, r in mapping.items():
        if r is not None and h in hyp_act and r in ref_act:
            n_correct += hyp_act[h] & ref_act[r]

    w = width * scored
    total = float(np.sum(w * n_ref))
    if total <= 0:
        raise ValueError("nothing to score: collar removes all reference speech")
    miss = float(np.sum(w * np.maximum(0, n_ref - n_hyp)))
    fa = float(np.sum(w * np.maximum(0, n_hyp - n_ref)))
    conf = float(np.sum(w * (np.minimum(n_ref, n_hyp) - n_correct)))
    m, f, c = miss / total, fa / total, conf / total
    return DerReport(m, f, c, m + f + c, total)


def total_report(reports: Iterable[DerReport]) -> DerReport:
    """Time-weighted pooling of several files."""
    reports = list(reports)
    total = sum(r.scored_speech for r in reports)
    if total <= 0:
        raise ValueError("nothing to score")
    m = sum(r.miss * r.scored_speech for r in reports) / total
    f = sum(r.false_alarm * r.scored_speech for r in reports) / total
    c = sum(r.confusion * r.scored_speech for r in reports) / total
    return DerReport(m, f, c, m + f + c, total)


CSV_HEADER = "file,miss,fa,confusion,der,scored_seconds"


def report_csv_row(file_id: str, r: DerReport) -> str:
    return f"{file_id},{r.miss:.6f},{r.false_alarm:.6f},{r.confusion:.6f},{r.der:.6f},{r.scored_speech:.3f}"


def format_table(rows: Mapping[str, DerReport], speaker_counts: Mapping[str, int]) -> str:
    """DER (%) per speaker-count group plus the pooled total."""
    groups: Dict[int, List[DerReport]] = defaultdict(list)
    for fid, r in rows.items():
        groups[speaker_counts[fid]].append(r)
    lines = [f"{'group':<8}{'files':>6}{'miss%':>9}{'fa%':>9}{'conf%':>9}{'DER%':>9}"]
    for n in sorted(groups):
        t = total_report(groups[n])
        lines.append(f"{f'{n} spk':<8}{len(groups[n]):>6}{100 * t.miss:>9.2f}{100 * t.false_alarm:>9.2f}"
                     f"{100 * t.confusion:>9.2f}{100 * t.der:>9.2f}")
    if rows:
        t = total_report(rows.values())
        lines.append(f"{'total':<8}{len(rows):>6}{100 * t.miss:>9.2f}{100 * t.false_alarm:>9.2f}"
                     f"{100 * t.confusion:>9.2f}{100 * t.der:>9.2f}")
    return "\n".join(lines)
