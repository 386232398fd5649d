"""Experiment configuration: flat ``key = value`` files with flag overrides.

Precedence is command-line flags > config file > built-in defaults.
"""
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .detector import DetectorConfig
from .frontend import FrontEndConfig
from .pipeline import BlockConfig, PipelineConfig, Thresholds
from .simulator import SimConfig


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = SimConfig()
    block: BlockConfig = BlockConfig()
    thresholds: Thresholds = Thresholds()
    detector: str = "cosine"
    detector_config: DetectorConfig = DetectorConfig()
    frontend: FrontEndConfig = FrontEndConfig()
    num_sessions: int = 10
    speaker_counts: Tuple[int, ...] = (2, 3, 4)
    seed: int = 0
    collar: float = 0.25
    capacity: int = 4
    min_new_frames: int = 3
    jobs: int = 1
    output_dir: Path = Path("out")

    def __post_init__(self):
        if self.num_sessions < 1:
            raise ValueError("num_sessions must be >= 1")
        if self.detector not in ("cosine", "oracle"):
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.sim.embed_dim != self.frontend.embed_dim:
            raise ValueError("sim.embed_dim and frontend.embed_dim disagree")

    def session_id(self, i: int) -> str:
        return f"sess{i:03d}"

    def session_sim(self, i: int) -> SimConfig:
        """Simulation settings of session ``i``: speaker count cycles, seed derived."""
        seed = int(np.random.SeedSequence([self.seed, i]).generate_state(1)[0])
        return replace(self.sim, num_speakers=self.speaker_counts[i % len(self.speaker_counts)], seed=seed)

    def pipeline(self, block: Optional[BlockConfig] = None) -> PipelineConfig:
        return PipelineConfig(
            block=block or self.block,
            thresholds=self.thresholds,
            capacity=self.capacity,
            frame_rate=self.frontend.frame_rate_hz,
            min_new_frames=self.min_new_frames,
        )


def _ints(v: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in str(v).replace(" ", "").split(",") if x)


# file key -> (section, field, parser); section None means a top-level field
KEYS: Dict[str, Tuple[Optional[str], str, Any]] = {
    "seed": (None, "seed", int),
    "num_sessions": (None, "num_sessions", int),
    "speakers": (None, "speaker_counts", _ints),
    "collar": (None, "collar", float),
    "capacity": (None, "capacity", int),
    "min_new_frames": (None, "min_new_frames", int),
    "jobs": (None, "jobs", int),
    "out": (None, "output_dir", Path),
    "detector": (None, "detector", str),
    "duration": ("sim", "duration_seconds", float),
    "overlap": ("sim", "target_overlap_ratio", float),
    "min_utt": ("sim", "min_utterance_seconds", float),
    "max_utt": ("sim", "max_utterance_seconds", float),
    "max_cos": ("sim", "max_centroid_cos", float),
    "noise_sigma": ("sim", "noise_sigma", float),
    "first_solo": ("sim", "first_solo_seconds", float),
    "pause_prob": ("sim", "pause_prob", float),
    "max_pause": ("sim", "max_pause_seconds", float),
    "embed_dim": ("sim", "embed_dim", int),
    "block_size": ("block", "block_seconds", float),
    "block_shift": ("block", "shift_seconds", float),
    "t_init": ("thresholds", "t_init", float),
    "t_low": ("thresholds", "t_low", float),
    "t_up": ("thresholds", "t_up", float),
    "t_d": ("thresholds", "t_d", float),
    "scale": ("detector_config", "scale", float),
    "offset": ("detector_config", "offset", float),
    "flip_prob": ("detector_config", "oracle_flip_prob", float),
    "projection_seed": ("frontend", "projection_seed", int),
}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def apply_overrides(cfg: ExperimentConfig, values: Mapping[str, Any]) -> ExperimentConfig:
    top: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {}
    for key, raw in values.items():
        if raw is None:
            continue
        section, name, parse = KEYS[key]
        value = parse(raw)
        if section is None:
            top[name] = value
        else:
            sections.setdefault(section, {})[name] = value
    if "embed_dim" in values and values["embed_dim"] is not None:
        sections.setdefault("frontend", {})["embed_dim"] = int(values["embed_dim"])
    for section, changes in sections.items():
        top[section] = replace(getattr(cfg, section), **changes)
    return replace(cfg, **top)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text(), str(path)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, (section, name, _) in KEYS.items():
        obj = cfg if section is None else getattr(cfg, section)
        value = getattr(obj, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
