import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from online_tsvad.frontend import (
    FrontEndConfig,
    SpeakerProfile,
    gsp_per_frame,
    project,
    read_profiles,
    synthetic_embed,
    write_profiles,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_gsp_constant_map():
    out = gsp_per_frame(np.full((2, 4, 3), 5.0))
    np.testing.assert_array_equal(out, np.tile([5.0, 5.0, 0.0, 0.0], (3, 1)))


def test_gsp_mean_and_population_std():
    fmap = np.zeros((2, 4, 2))
    fmap[0, :, 0] = [1, 2, 3, 4]
    out = gsp_per_frame(fmap)
    mean = (1 + 2 + 3 + 4) / 4
    std = np.sqrt(sum((x - mean) ** 2 for x in [1, 2, 3, 4]) / 4)
    assert out[0, 0] == pytest.approx(2.5)
    assert out[0, 2] == pytest.approx(std)
    assert std == pytest.approx(1.118034, abs=1e-6)


def test_gsp_width_is_twice_channels():
    assert gsp_per_frame(np.random.default_rng(0).random((256, 10, 5))).shape == (5, 512)


def test_gsp_rejects_single_bin():
    with pytest.raises(ValueError, match="degenerate"):
        gsp_per_frame(np.ones((3, 1, 4)))


@given(st.integers(1, 6), st.integers(2, 5), st.integers(1, 5), st.floats(-100, 100))
def test_gsp_frame_constant_has_zero_std(c, bins, frames, value):
    out = gsp_per_frame(np.full((c, bins, frames), value))
    assert out.shape == (frames, 2 * c)
    assert np.all(out[:, c:] == 0.0)


def test_project_zero_and_determinism():
    cfg = FrontEndConfig(embed_dim=16, projection_seed=3)
    assert np.all(project(np.zeros((4, 10)), cfg) == 0)
    x = np.random.default_rng(1).random((5, 10))
    assert np.array_equal(project(x, cfg), project(x, cfg))
    np.testing.assert_allclose(project(2 * x, cfg), 2 * project(x, cfg), rtol=1e-12)


@settings(max_examples=30)
@given(
    arrays(np.float64, (6, 8), elements=st.floats(-10, 10)),
    arrays(np.float64, (6, 8), elements=st.floats(-10, 10)),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_project_is_linear(x, y, a, b):
    cfg = FrontEndConfig(embed_dim=4)
    lhs = project(a * x + b * y, cfg)
    rhs = a * project(x, cfg) + b * project(y, cfg)
    scale = max(1.0, np.abs(lhs).max(), np.abs(rhs).max())
    assert np.abs(lhs - rhs).max() <= 1e-9 * scale


def test_synthetic_single_speaker_is_centroid():
    c = unit([1, 2, 3, 4])
    out = synthetic_embed(np.ones((7, 1)), [SpeakerProfile("a", c)])
    assert np.array_equal(out, np.tile(c, (7, 1)))


def test_synthetic_two_orthogonal_speakers():
    c1, c2 = np.eye(4)[0], np.eye(4)[1]
    out = synthetic_embed(np.array([[1, 1]]), [SpeakerProfile("a", c1), SpeakerProfile("b", c2)])
    np.testing.assert_allclose(out[0], (c1 + c2) / np.sqrt(2), atol=1e-15)


def test_synthetic_rejects_silence():
    with pytest.raises(ValueError, match="silence frame"):
        synthetic_embed(np.array([[1], [0]]), [SpeakerProfile("a", unit([1, 0]))])


def test_synthetic_unit_norm_and_reproducible():
    rng = np.random.default_rng(2)
    profiles = [SpeakerProfile(str(i), unit(rng.standard_normal(32))) for i in range(3)]
    labels = (rng.random((200, 3)) < 0.5).astype(int)
    labels[labels.sum(axis=1) == 0, 0] = 1
    a = synthetic_embed(labels, profiles, 0.1, seed=5)
    b = synthetic_embed(labels, profiles, 0.1, seed=5)
    assert np.array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-9)


def test_profile_table_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    profiles = [SpeakerProfile(f"spk{i}", unit(rng.standard_normal(8))) for i in range(3)]
    write_profiles(profiles, tmp_path / "p.txt")
    back = read_profiles(tmp_path / "p.txt")
    assert [p.id for p in back] == ["spk0", "spk1", "spk2"]
    for p, q in zip(profiles, back):
        assert np.array_equal(p.centroid, q.centroid)
    assert (tmp_path / "p.txt").read_text().splitlines()[0].split()[0] == "spk0"


def test_profile_requires_unit_norm():
    with pytest.raises(ValueError):
        SpeakerProfile("x", [1.0, 1.0])
