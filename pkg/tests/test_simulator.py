import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_mean_targets
from online_tsvad.simulator import (
    SimConfig,
    make_training_sample,
    overlap_ratio,
    sample_centroids,
    simulate_session,
)

FR = 12.5


def test_overlap_ratio_examples():
    assert overlap_ratio(np.ones((20, 1))) == 0.0
    assert overlap_ratio(np.ones((20, 2))) == 1.0
    y = np.zeros((10, 2), dtype=int)
    y[0:5, 0] = 1
    y[2:8, 1] = 1  # speech 0..7, overlap 2..4
    assert overlap_ratio(y) == 0.375
    with pytest.raises(ValueError):
        overlap_ratio(np.zeros((5, 2)))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(num_speakers=5)
    with pytest.raises(ValueError):
        SimConfig(target_overlap_ratio=1.0)
    with pytest.raises(ValueError):
        SimConfig(min_utterance_seconds=3, max_utterance_seconds=2)


def test_infeasible_overlap_target():
    with pytest.raises(ValueError, match="infeasible"):
        simulate_session(SimConfig(target_overlap_ratio=0.95))


def test_zero_overlap_has_no_overlap():
    s = simulate_session(SimConfig(target_overlap_ratio=0.0, duration_seconds=120, seed=3))
    assert s.labels.sum(axis=1).max() == 1


@pytest.mark.parametrize("n", [2, 3, 4])
def test_overlap_near_target(n):
    for seed in range(3):
        s = simulate_session(SimConfig(num_speakers=n, seed=seed))
        assert abs(overlap_ratio(s.labels) - 0.35) <= 0.05


def test_deterministic():
    a = simulate_session(SimConfig(seed=11, noise_sigma=0.05))
    b = simulate_session(SimConfig(seed=11, noise_sigma=0.05))
    assert a.plan == b.plan
    assert np.array_equal(a.embeddings, b.embeddings)
    c = simulate_session(SimConfig(seed=12))
    assert a.plan != c.plan


def test_centroids_respect_cosine_bound():
    c = sample_centroids(4, 128, 0.2, np.random.default_rng(0))
    g = c @ c.T
    assert np.allclose(np.diag(g), 1.0)
    assert (g[~np.eye(4, dtype=bool)] <= 0.2).all()
    with pytest.raises(ValueError):
        sample_centroids(4, 2, -0.9, np.random.default_rng(0), max_tries=100)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 4), st.sampled_from([0.0, 0.2, 0.35]))
def test_session_structure(seed, n, target):
    cfg = SimConfig(num_speakers=n, seed=seed, duration_seconds=90, target_overlap_ratio=target)
    s = simulate_session(cfg)
    total = int(np.floor(90 * FR))
    assert s.labels.shape == (total, n) and s.embeddings.shape[0] == total
    # every utterance within bounds, never past the end
    for spk, on, off in s.plan.entries:
        assert 0 <= on < off <= 90
        assert 1.0 - 1e-9 <= off - on <= 8.0 + 1e-9
    # per-speaker turns do not overlap
    for spk in s.plan.speakers():
        segs = sorted((on, off) for sp, on, off in s.plan.entries if sp == spk)
        assert all(a[1] <= b[0] for a, b in zip(segs, segs[1:]))
    # first shift holds exactly one speaker
    first = s.labels[:25]
    assert np.count_nonzero(first.any(axis=0)) == 1 and first.sum(axis=1).max() == 1
    # each speaker's first appearance is alone for at least one shift
    for col in range(n):
        t0 = int(np.flatnonzero(s.labels[:, col])[0])
        assert (s.labels[t0:t0 + 25].sum(axis=1) == 1).all()
    # VAD is the union of active regions
    speech = s.labels.any(axis=1)
    centres = (np.arange(total) + 0.5) / FR
    in_vad = np.zeros(total, bool)
    for a, b in s.vad:
        in_vad |= (centres >= a) & (centres < b)
    assert np.array_equal(in_vad, speech)


def test_embeddings_are_centroids_without_noise():
    s = simulate_session(SimConfig(seed=4, duration_seconds=60))
    solo = s.labels.sum(axis=1) == 1
    spk = s.labels[solo].argmax(axis=1)
    cents = np.stack([p.centroid for p in s.profiles])
    assert np.array_equal(s.embeddings[solo], cents[spk])


# -- training samples ------------------------------------------------------

def _pool(n=6, frames=400, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        v = rng.standard_normal((frames, dim))
        out.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    return out


def test_training_sample_shapes_and_targets():
    pool = _pool()
    for seed in range(20):
        s = make_training_sample(pool, seed)
        assert s.e_left.shape == (200, 16) and s.e_right.shape == (200, 16)
        assert s.y_left.any(axis=1).all() and s.y_right.any(axis=1).all()
        np.testing.assert_allclose(s.targets, brute_mean_targets(s.e_left, s.y_left), atol=1e-12)
        for n in np.flatnonzero(~s.y_left.any(axis=0)):
            assert not s.targets[n].any()


def test_training_sample_replacement_speakers():
    pool = _pool()
    seen = 0
    for seed in range(60):
        s = make_training_sample(pool, seed)
        if s.replaced:
            seen += 1
            assert np.count_nonzero(s.y_left.any(axis=0)) in (3, 4)
    assert seen > 10


def test_training_sample_deterministic_and_pool_check():
    pool = _pool()
    a, b = make_training_sample(pool, 5), make_training_sample(pool, 5)
    assert np.array_equal(a.e_left, b.e_left) and a.replaced == b.replaced
    with pytest.raises(ValueError, match="pool"):
        make_training_sample(pool[:3], 0)
