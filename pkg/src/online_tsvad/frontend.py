"""Frame-level embedding front-end.

Two routes produce a ``T x D`` frame embedding matrix:

* the feature-map route: :func:`gsp_per_frame` pools a ``C x bins x T``
  feature map into per-frame mean/std statistics, and :func:`project` applies
  a fixed bias-free linear layer;
* the synthetic route: :func:`synthetic_embed` emits embeddings straight from
  a binary activity matrix and per-speaker centroids.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

FRAME_RATE_HZ = 12.5  # 10 ms feature hop x 8 downsampling


@dataclass(frozen=True)
class FrontEndConfig:
    embed_dim: int = 128
    frame_rate_hz: float = FRAME_RATE_HZ
    projection_seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if not self.frame_rate_hz > 0:
            raise ValueError("frame_rate_hz must be positive")


@dataclass
class SpeakerProfile:
    id: str
    centroid: np.ndarray

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        norm = np.linalg.norm(self.centroid)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"centroid of {self.id!r} is not unit norm ({norm})")


def gsp_per_frame(feature_map: np.ndarray) -> np.ndarray:
    """Statistics pooling applied independently to every frame.

    Args:
        feature_map: array of shape ``(channels, bins, frames)``.

    Returns:
        ``(frames, 2 * channels)`` array; the first ``channels`` columns are
        per-channel means over bins, the last ``channels`` are population
        standard deviations.
    """
    fmap = np.asarray(feature_map, dtype=np.float64)
    if fmap.ndim != 3:
        raise ValueError(f"expected a 3-d feature map, got shape {fmap.shape}")
    channels, bins, frames = fmap.shape
    if frames < 1 or channels < 1:
        raise ValueError("feature map must have at least one channel and one frame")
    if bins < 2:
        raise ValueError("degenerate feature map: need at least 2 bins for std")
    if not np.all(np.isfinite(fmap)):
        raise ValueError("feature map contains non-finite values")
    mean = fmap.mean(axis=1)  # channels x frames
    # shifting by one bin keeps constant frames at exactly zero spread
    std = (fmap - fmap[:, :1, :]).std(axis=1)
    return np.concatenate([mean, std], axis=0).T


def projection_matrix(in_dim: int, config: FrontEndConfig) -> np.ndarray:
    rng = np.random.default_rng(config.projection_seed)
    return rng.standard_normal((in_dim, config.embed_dim)) / np.sqrt(in_dim)


def project(gsp_rows: np.ndarray, config: FrontEndConfig) -> np.ndarray:
    """Bias-free linear layer from pooled statistics to frame embeddings."""
    rows = np.asarray(gsp_rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("gsp_rows must be 2-d")
    return rows @ projection_matrix(rows.shape[1], config)


def synthetic_embed(
    labels: np.ndarray,
    profiles: Sequence[SpeakerProfile],
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Emit unit-norm frame embeddings from ground-truth activity.

    Frame ``t`` is the normalised sum of the centroids active at ``t`` plus
    isotropic Gaussian noise (per-component std ``noise_sigma``), normalised
    again.  Column ``n`` of ``labels`` belongs to ``profiles[n]``.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("labels must be a frames x speakers matrix")
    if labels.shape[1] != len(profiles):
        raise ValueError(f"{labels.shape[1]} label columns but {len(profiles)} profiles")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    active = labels.astype(bool)
    silent = np.flatnonzero(~active.any(axis=1))
    if silent.size:
        raise ValueError(f"silence frame reached front-end (frame {silent[0]})")

    centroids = np.stack([p.centroid for p in profiles])
    emb = active.astype(np.float64) @ centroids
    multi = active.sum(axis=1) > 1
    emb[multi] /= np.linalg.norm(emb[multi], axis=1, keepdims=True)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        emb = emb + noise_sigma * rng.standard_normal(emb.shape)
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return emb


def write_profiles(profiles: Sequence[SpeakerProfile], path: Union[str, Path]) -> None:
    lines = []
    for p in profiles:
        if any(c.isspace() for c in p.id):
            raise ValueError(f"speaker id {p.id!r} contains whitespace")
        lines.append(p.id + " " + " ".join(repr(float(v)) for v in p.centroid))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_profiles(path: Union[str, Path]) -> List[SpeakerProfile]:
    profiles = []
    dim = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        try:
            vec = np.array([float(v) for v in fields[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad float ({exc})") from None
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise ValueError(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
        profiles.append(SpeakerProfile(fields[0], vec))
    return profiles
