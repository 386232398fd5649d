"""Command-line experiment runner: ``gen``, ``run``, ``sweep`` and ``score``.

Corpus layout written by ``gen`` (one set of files per session id)::

    <id>.rttm       ground truth
    <id>.vad        oracle VAD, ``onset offset`` per line
    <id>.profiles   speaker centroids, ``speaker_id v_1 ... v_D`` per line
    <id>.emb.npy    original-clock frame embeddings
    sessions.tsv    id, speaker count, measured overlap ratio
"""
import argparse
import logging
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig, dump_config, load_config
from .detector import make_detector
from .frontend import write_profiles
from .pipeline import (
    BlockConfig,
    PipelineConfig,
    PipelineStats,
    dump_decisions,
    frames_to_segments,
    read_vad,
    remove_silence,
    run_session,
    write_vad,
)
from .scoring import (
    CSV_HEADER,
    DerReport,
    RttmSegment,
    der,
    format_table,
    load_rttm,
    report_csv_row,
    segments_by_speaker,
    total_report,
    write_rttm,
)
from .simulator import overlap_ratio, simulate_session
from .tseb import dump_snapshot

logger = logging.getLogger("online_tsvad")


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def plan_to_rttm(file_id: str, entries) -> List[RttmSegment]:
    return [RttmSegment(file_id, on, off - on, spk) for spk, on, off in entries]


def generate_corpus(cfg: ExperimentConfig, out_dir: Path) -> List[Tuple[str, int, float]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(cfg.num_sessions):
        sid = cfg.session_id(i)
        sim = cfg.session_sim(i)
        session = simulate_session(sim, sid)
        (out_dir / f"{sid}.rttm").write_text(write_rttm(plan_to_rttm(sid, session.plan.entries)))
        write_vad(session.vad, out_dir / f"{sid}.vad")
        write_profiles(session.profiles, out_dir / f"{sid}.profiles")
        np.save(out_dir / f"{sid}.emb.npy", session.embeddings)
        rows.append((sid, sim.num_speakers, overlap_ratio(session.labels)))
    with open(out_dir / "sessions.tsv", "w") as fh:
        fh.write("id\tspeakers\toverlap_ratio\n")
        for sid, n, r in rows:
            fh.write(f"{sid}\t{n}\t{r:.4f}\n")
    (out_dir / "config.txt").write_text(dump_config(cfg))
    return rows


def list_sessions(corpus: Path) -> List[str]:
    ids = sorted(p.name[: -len(".rttm")] for p in Path(corpus).glob("*.rttm"))
    if not ids:
        raise FileNotFoundError(f"no sessions (*.rttm) in {corpus}")
    return ids


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def rasterize_rttm(segments: Sequence[RttmSegment], num_frames: int, frame_rate: float) -> Tuple[np.ndarray, List[str]]:
    """Frame-centre rasterisation of reference segments (for the oracle detector)."""
    by_spk = segments_by_speaker(segments)
    names = sorted(by_spk)
    centres = (np.arange(num_frames) + 0.5) / frame_rate
    labels = np.zeros((num_frames, len(names)), dtype=np.int8)
    for j, name in enumerate(names):
        for on, off in by_spk[name]:
            labels[(centres >= on) & (centres < off), j] = 1
    return labels, names


@dataclass
class SessionOutcome:
    sid: str
    num_speakers: int = 0
    report: Optional[DerReport] = None
    hyp: List[RttmSegment] = field(default_factory=list)
    stats: Optional[PipelineStats] = None
    speech_frames: int = 0
    error: Optional[str] = None


def run_one(sid: str, corpus: Path, cfg: ExperimentConfig, pcfg: PipelineConfig,
            tseb_dump: Optional[Path] = None, decisions_dump: Optional[Path] = None) -> SessionOutcome:
    out = SessionOutcome(sid)
    try:
        ref = load_rttm(corpus / f"{sid}.rttm")
        vad = read_vad(corpus / f"{sid}.vad")
        emb = np.load(corpus / f"{sid}.emb.npy")
        out.num_speakers = len({s.speaker for s in ref})
        labels = None
        if cfg.detector == "oracle":
            raw, _ = rasterize_rttm(ref, len(emb), pcfg.frame_rate)
            labels, _ = remove_silence(raw, vad, pcfg.frame_rate)
        seed = int(np.random.SeedSequence([cfg.seed, zlib.crc32(sid.encode())]).generate_state(1)[0])
        detector = make_detector(cfg.detector, cfg.detector_config, labels, pcfg.capacity, seed)

        snaps = open(tseb_dump, "w") if tseb_dump else None
        try:
            cb = (lambda i, buf: dump_snapshot(buf, i, snaps)) if snaps else None
            result = run_session(emb, vad, detector, pcfg, on_block=cb)
        finally:
            if snaps:
                snaps.close()
        if decisions_dump:
            dump_decisions(result.decisions, decisions_dump)
        segs = frames_to_segments(result.decisions, result.timeline)
        out.hyp = [RttmSegment(sid, on, off - on, f"spk{slot}") for slot, ss in segs.items() for on, off in ss]
        out.report = der(ref, out.hyp, cfg.collar)
        out.stats = result.stats
        out.speech_frames = result.timeline.num_frames
    except Exception as exc:  # one bad session must not sink the corpus
        logger.exception("session %s failed", sid)
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _run_one_star(args):
    return run_one(*args)


@dataclass
class RunResult:
    outcomes: List[SessionOutcome]
    total: Optional[DerReport]

    @property
    def failed(self) -> List[SessionOutcome]:
        return [o for o in self.outcomes if o.error]


def run_corpus(cfg: ExperimentConfig, corpus: Path, out_dir: Path, block: Optional[BlockConfig] = None,
               dump_tseb: bool = False, dump_frames: bool = False) -> RunResult:
    corpus, out_dir = Path(corpus), Path(out_dir)
    pcfg = cfg.pipeline(block)
    hyp_dir = out_dir / "hyp"
    hyp_dir.mkdir(parents=True, exist_ok=True)
    for sub, on in (("tseb", dump_tseb), ("decisions", dump_frames)):
        if on:
            (out_dir / sub).mkdir(exist_ok=True)
    jobs = []
    for sid in list_sessions(corpus):
        jobs.append((sid, corpus, cfg, pcfg,
                     out_dir / "tseb" / f"{sid}.txt" if dump_tseb else None,
                     out_dir / "decisions" / f"{sid}.txt" if dump_frames else None))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            outcomes = list(pool.map(_run_one_star, jobs))
    else:
        outcomes = [run_one(*j) for j in jobs]
    outcomes.sort(key=lambda o: o.sid)

    ok = [o for o in outcomes if o.report is not None]
    for o in ok:
        (hyp_dir / f"{o.sid}.rttm").write_text(write_rttm(o.hyp))
    total = total_report(o.report for o in ok) if ok else None
    lines = [CSV_HEADER] + [report_csv_row(o.sid, o.report) for o in ok]
    if total is not None:
        lines.append(report_csv_row("TOTAL", total))
    (out_dir / "der.csv").write_text("\n".join(lines) + "\n")

    by_n: Dict[int, List[DerReport]] = {}
    for o in ok:
        by_n.setdefault(o.num_speakers, []).append(o.report)
    lines = ["speakers,files,miss,fa,confusion,der,scored_seconds"]
    for n in sorted(by_n):
        t = total_report(by_n[n])
        lines.append(f"{n},{len(by_n[n])},{t.miss:.6f},{t.false_alarm:.6f},{t.confusion:.6f},{t.der:.6f},{t.scored_speech:.3f}")
    (out_dir / "der_by_speakers.csv").write_text("\n".join(lines) + "\n")
    if ok:
        table = format_table({o.sid: o.report for o in ok}, {o.sid: o.num_speakers for o in ok})
        (out_dir / "summary.txt").write_text(table + "\n")
    if any(o.error for o in outcomes):
        (out_dir / "errors.txt").write_text("".join(f"{o.sid}\t{o.error}\n" for o in outcomes if o.error))
    return RunResult(outcomes, total)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def valid_pairs(b_values: Sequence[float], s_values: Sequence[float], frame_rate: float):
    """Split a ``b x s`` grid into usable pairs and ``(b, s, reason)`` rejects."""
    good, bad = [], []
    for b in b_values:
        for s in s_values:
            try:
                BlockConfig(b, s).shift_frames(frame_rate)
            except ValueError as exc:
                bad.append((b, s, str(exc)))
            else:
                good.append((b, s))
    return good, bad


def sweep(cfg: ExperimentConfig, corpus: Path, out_dir: Path, b_values: Sequence[float], s_values: Sequence[float]):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    good, bad = valid_pairs(b_values, s_values, cfg.frontend.frame_rate_hz)
    for b, s, reason in bad:
        logger.warning("skipping b=%g s=%g: %s", b, s, reason)
    rows = []
    failed = False
    for b, s in good:
        res = run_corpus(cfg, corpus, out_dir / f"b{b:g}_s{s:g}", BlockConfig(b, s))
        failed |= bool(res.failed)
        rows.append((b, s, res.total.der if res.total else float("nan")))
    text = "b,s,der\n" + "".join(f"{b:g},{s:g},{d:.6f}\n" for b, s, d in rows)
    (out_dir / "sweep.csv").write_text(text)
    return rows, bad, failed


def shift_trend(rows) -> List[str]:
    """For each block size, say whether DER falls as the shift shrinks."""
    notes = []
    for b in sorted({r[0] for r in rows}):
        pts = sorted((s, d) for bb, s, d in rows if bb == b)
        if len(pts) < 2:
            continue
        ders = [d for _, d in pts]
        trend = all(x <= y + 1e-12 for x, y in zip(ders, ders[1:]))
        notes.append(f"b={b:g} DER by shift: " + ", ".join(f"s={s:g} {100 * d:.2f}%" for s, d in pts)
                     + (" (smaller s never worse)" if trend else " (not monotone in s)"))
    return notes


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def _pairs(ref: Path, hyp: Path) -> List[Tuple[str, Path, Path]]:
    if ref.is_dir():
        out = []
        for r in sorted(ref.glob("*.rttm")):
            h = hyp / r.name
            if not h.exists():
                raise FileNotFoundError(f"no hypothesis for {r.name} in {hyp}")
            out.append((r.stem, r, h))
        return out
    return [(ref.stem, ref, hyp)]


def score_files(ref: Path, hyp: Path, collar: float) -> Dict[str, DerReport]:
    return {fid: der(load_rttm(r), load_rttm(h), collar) for fid, r, h in _pairs(Path(ref), Path(hyp))}


# ---------------------------------------------------------------------------
# argparse
# ---------------------------------------------------------------------------

def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--block-size", type=float, dest="block_size", help="block length b in seconds")
    common.add_argument("--block-shift", type=float, dest="block_shift", help="block shift s in seconds")
    common.add_argument("--detector", choices=["cosine", "oracle"])
    common.add_argument("--collar", type=float, help="forgiveness collar in seconds (default 0.25)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--jobs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="online-tsvad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="simulate a session corpus")
    g.add_argument("--num-sessions", type=int, dest="num_sessions")
    g.add_argument("--overlap", type=float)
    g.add_argument("--duration", type=float)
    g.add_argument("--noise-sigma", type=float, dest="noise_sigma")

    r = sub.add_parser("run", parents=[common], help="diarize a corpus and score it")
    r.add_argument("--sessions", type=Path, required=True, help="corpus directory written by gen")
    r.add_argument("--dump-tseb", action="store_true", help="write per-block buffer snapshots")
    r.add_argument("--dump-decisions", action="store_true", help="write per-frame decision matrices")

    s = sub.add_parser("sweep", parents=[common], help="DER over a grid of block sizes and shifts")
    s.add_argument("--sessions", type=Path, help="corpus directory (generated into OUT/corpus if omitted)")
    s.add_argument("--b", type=_floats, default=[8, 16, 24, 32], help="comma-separated block sizes")
    s.add_argument("--s", type=_floats, default=[1, 2, 4, 8], help="comma-separated block shifts")

    sc = sub.add_parser("score", help="score hypothesis RTTM against reference RTTM")
    sc.add_argument("--ref", type=Path, required=True, help="reference RTTM file or directory")
    sc.add_argument("--hyp", type=Path, required=True, help="hypothesis RTTM file or directory")
    sc.add_argument("--collar", type=float, default=0.25)
    sc.add_argument("--out", type=Path, help="write CSV here instead of stdout")
    return p


_OVERRIDE_KEYS = ("seed", "block_size", "block_shift", "detector", "collar", "jobs",
                  "num_sessions", "overlap", "duration", "noise_sigma")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "score":
        reports = score_files(args.ref, args.hyp, args.collar)
        lines = [CSV_HEADER] + [report_csv_row(fid, r) for fid, r in reports.items()]
        if len(reports) > 1:
            lines.append(report_csv_row("TOTAL", total_report(reports.values())))
        text = "\n".join(lines) + "\n"
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
        return 0

    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if getattr(args, k, None) is not None}
    if args.out is not None:
        overrides["out"] = args.out
    try:
        cfg = load_config(args.config, overrides)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = cfg.output_dir

    if args.command == "gen":
        try:
            rows = generate_corpus(cfg, out)
        except OSError as exc:
            print(f"error: cannot write corpus to {out}: {exc}", file=sys.stderr)
            return 1
        for sid, n, ratio in rows:
            print(f"{sid}\t{n} spk\toverlap {ratio:.3f}")
        return 0

    if args.command == "run":
        res = run_corpus(cfg, args.sessions, out, dump_tseb=args.dump_tseb, dump_frames=args.dump_decisions)
        if (out / "summary.txt").exists():
            print((out / "summary.txt").read_text(), end="")
        for o in res.failed:
            print(f"FAILED {o.sid}: {o.error}", file=sys.stderr)
        return 1 if res.failed else 0

    if args.command == "sweep":
        corpus = args.sessions
        if corpus is None:
            corpus = out / "corpus"
            generate_corpus(cfg, corpus)
        rows, _, failed = sweep(cfg, corpus, out, args.b, args.s)
        print((out / "sweep.csv").read_text(), end="")
        for note in shift_trend(rows):
            print(note)
        return 1 if failed else 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
