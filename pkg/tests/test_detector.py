import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from online_tsvad.detector import (
    DetectorConfig,
    OracleDetector,
    cosine_detect,
    make_detector,
    oracle_detect,
)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_identical_embedding_gives_logistic_six():
    e = np.array([[0.6, 0.8, 0.0]])
    p = cosine_detect(e, e.copy())
    assert p[0, 0] == pytest.approx(sigmoid(6.0), rel=1e-12)
    assert p[0, 0] == pytest.approx(0.9975, abs=1e-4)


def test_empty_slot_and_orthogonal_target():
    e = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    targets = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    p = cosine_detect(e, targets)
    np.testing.assert_allclose(p, sigmoid(-4.0), rtol=1e-12)
    assert sigmoid(-4.0) == pytest.approx(0.0180, abs=1e-4)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(0.01, 100))
def test_bounded_and_scale_invariant(seed, a, b):
    rng = np.random.default_rng(seed)
    e, g = rng.standard_normal((10, 6)), rng.standard_normal((3, 6))
    p = cosine_detect(e, g)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(cosine_detect(a * e, b * g), p, rtol=1e-9)


def test_monotone_in_cosine():
    g = np.array([[1.0, 0.0]])
    angles = np.linspace(np.pi, 0, 50)
    e = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    p = cosine_detect(e, g)[:, 0]
    assert np.all(np.diff(p) >= 0)


def test_dim_mismatch():
    with pytest.raises(ValueError):
        cosine_detect(np.ones((2, 3)), np.ones((1, 4)))


def test_oracle_reproduces_labels():
    rng = np.random.default_rng(0)
    labels = (rng.random((40, 3)) < 0.5).astype(int)
    slot_map = {0: 2, 1: 0, 2: 3}
    p = oracle_detect(labels, slot_map, 4)
    dec = (p > 0.5).astype(int)
    for spk, slot in slot_map.items():
        assert np.array_equal(dec[:, slot], labels[:, spk])
    assert np.all(dec[:, 1] == 0)


def test_oracle_unmapped_speaker_is_all_low():
    labels = np.array([[1, 0], [0, 1], [0, 1]])
    p = oracle_detect(labels, {0: 0}, 4)
    assert np.all(p[1:] == 0.05)


def test_oracle_deterministic_and_noninjective():
    labels = np.ones((20, 2), dtype=int)
    cfg = DetectorConfig(oracle_flip_prob=0.3)
    assert np.array_equal(oracle_detect(labels, {0: 0, 1: 1}, 4, cfg, 9), oracle_detect(labels, {0: 0, 1: 1}, 4, cfg, 9))
    assert np.array_equal(oracle_detect(labels, {0: 0}, 4, seed=1), oracle_detect(labels, {0: 0}, 4, seed=2))
    with pytest.raises(ValueError, match="injective"):
        oracle_detect(labels, {0: 1, 1: 1}, 4)


def test_oracle_detector_binds_majority_speaker():
    labels = np.zeros((30, 3), dtype=int)
    labels[:10, 2] = 1
    labels[10:30, 0] = 1
    det = OracleDetector(labels, 4)
    assert det.assign_slot(0, np.arange(10)) == 2
    assert det.assign_slot(1, np.arange(8, 20)) == 0
    p = det.detect(np.zeros((30, 5)), np.zeros((4, 5)), 0)
    assert np.all(p[:10, 0] == 0.95) and np.all(p[10:, 1] == 0.95)


def test_make_detector():
    assert make_detector("cosine").name == "cosine"
    with pytest.raises(ValueError):
        make_detector("oracle")
    with pytest.raises(ValueError):
        make_detector("lstm")


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(scale=0)
    with pytest.raises(ValueError):
        DetectorConfig(oracle_flip_prob=1.0)
