import math

import numpy as np
import pytest

from convbeam.errors import InvalidParam, LengthMismatch, SampleRateMismatch
from convbeam.simulator import (
    RoomImpulseResponse,
    make_scene,
    read_manifest,
    read_scene,
    render_scene,
    speech_like,
    synth_array_rirs,
    synth_rir,
    write_scene,
)


def schroeder_rt60(h, fs, lo_db=-5.0, hi_db=-35.0):
    """RT60 from a line fit to the backward-integrated energy decay curve."""
    edc = np.cumsum((h**2)[::-1])[::-1]
    edc_db = 10 * np.log10(edc / edc[0] + 1e-300)
    idx = np.flatnonzero((edc_db <= lo_db) & (edc_db >= hi_db))
    slope = np.polyfit(idx / fs, edc_db[idx], 1)[0]
    return -60.0 / slope


def direct_convolve(x, h, n):
    out = np.zeros(n)
    for i in range(n):
        for k in range(len(h)):
            if 0 <= i - k < len(x):
                out[i] += h[k] * x[i - k]
    return out


def test_anechoic_rir_is_single_tap():
    rir = synth_rir(0.0, delay_base=7)
    assert np.count_nonzero(rir.taps) == 1 and rir.taps[7] == 1.0
    assert rir.direct_index == 7


@pytest.mark.parametrize("rt60", [0.2, 0.3, 0.6])
@pytest.mark.parametrize("seed", [0, 1])
def test_schroeder_decay(rt60, seed):
    rir = synth_rir(rt60, seed=seed)
    assert abs(schroeder_rt60(rir.taps, 16000) - rt60) <= 0.2 * rt60


def test_rir_determinism():
    np.testing.assert_array_equal(synth_rir(0.4, seed=9).taps, synth_rir(0.4, seed=9).taps)
    assert not np.array_equal(synth_rir(0.4, seed=9).taps, synth_rir(0.4, seed=10).taps)


def test_rir_drr():
    rir = synth_rir(0.3, drr_db=6.0, delay_base=4)
    refl = rir.taps[5:]
    assert 10 * math.log10(1.0 / np.sum(refl**2)) == pytest.approx(6.0, abs=1e-9)


def test_rir_rejects_negative():
    with pytest.raises(InvalidParam):
        synth_rir(-0.1)


def test_early_late_split():
    rir = synth_rir(0.3, delay_base=10)
    np.testing.assert_array_equal(rir.early() + rir.late(), rir.taps)
    assert rir.split_index == 10 + 800
    assert not np.any(rir.late()[:810]) and not np.any(rir.early()[810:])


def test_array_rirs_share_tail_and_direct_paths():
    rirs = synth_array_rirs(0.3, [40, 42, 44], [0.0, 0.08, 0.16], seed=3)
    assert [r.direct_index for r in rirs] == [40, 42, 44]
    for r in rirs:
        assert abs(schroeder_rt60(r.taps, 16000) - 0.3) <= 0.06


def test_single_tap_render_is_delayed_source():
    rng = np.random.default_rng(0)
    s = rng.standard_normal(500)
    scene = render_scene(s[None], [[synth_rir(0.0, delay_base=0), synth_rir(0.0, delay_base=3)]])
    np.testing.assert_array_equal(scene.mixture[0], s)
    np.testing.assert_array_equal(scene.mixture[1, 3:], s[:-3])
    assert not np.any(scene.mixture[1, :3])


def test_convolution_matches_direct_oracle():
    rng = np.random.default_rng(1)
    s = rng.standard_normal((1, 300))
    rir = RoomImpulseResponse(rng.standard_normal(40), early_boundary_ms=1.0)
    scene = render_scene(s, [[rir]])
    np.testing.assert_allclose(scene.mixture[0], direct_convolve(s[0], rir.taps, 300), atol=1e-10)


def test_additivity():
    rng = np.random.default_rng(2)
    s = rng.standard_normal((2, 2000))
    rirs = [synth_array_rirs(0.2, [0, 2], [0, 0.08], n_reflections=200, seed=k) for k in range(2)]
    both = render_scene(s, rirs, snr_db=15.0, seed=5)
    parts = [render_scene(s[j : j + 1], rirs[j : j + 1]) for j in range(2)]
    np.testing.assert_allclose(both.mixture - both.noise, parts[0].mixture + parts[1].mixture, atol=1e-10)


def test_snr_is_exact():
    scene = make_scene(n_sources=2, rt60=0.3, snr_db=10.0, seed=0, duration=1.0)
    measured = 10 * math.log10(np.sum(scene.images.sum(axis=0) ** 2) / np.sum(scene.noise**2))
    assert measured == pytest.approx(10.0, abs=0.1)


def test_decomposition():
    scene = make_scene(n_sources=3, n_channels=3, rt60=0.5, snr_db=20.0, seed=2, duration=1.0)
    total = scene.early_images.sum(axis=0) + scene.late_images.sum(axis=0) + scene.noise
    assert np.max(np.abs(scene.mixture - total)) <= 1e-10


def test_scene_determinism_and_channel_nesting():
    a = make_scene(n_sources=2, n_channels=2, seed=4, duration=0.5)
    b = make_scene(n_sources=2, n_channels=2, seed=4, duration=0.5)
    np.testing.assert_array_equal(a.mixture, b.mixture)
    wide = make_scene(n_sources=2, n_channels=4, seed=4, duration=0.5, snr_db=math.inf)
    narrow = make_scene(n_sources=2, n_channels=2, seed=4, duration=0.5, snr_db=math.inf)
    np.testing.assert_allclose(wide.images[:, :2], narrow.images, atol=1e-12)


def test_render_errors():
    with pytest.raises(LengthMismatch):
        render_scene(np.zeros((2, 10)), [[synth_rir(0.0)]])
    with pytest.raises(SampleRateMismatch):
        render_scene(np.zeros((1, 10)), [[synth_rir(0.0), synth_rir(0.0, sample_rate=8000)]])


def test_speech_like_unit_rms():
    x = speech_like(16000, seed=3)
    assert np.sqrt(np.mean(x**2)) == pytest.approx(1.0)
    np.testing.assert_array_equal(x, speech_like(16000, seed=3))


def test_scene_round_trip(tmp_path):
    scene = make_scene(n_sources=2, n_channels=2, rt60=0.3, snr_db=20.0, seed=6, duration=0.5)
    write_scene(scene, tmp_path / "s")
    manifest = read_manifest(tmp_path / "s" / "scene.txt")
    assert manifest["format"] == "convbeam-scene-1"
    back = read_scene(tmp_path / "s")
    assert back.n_sources == 2 and back.n_channels == 2
    # components are stored as float32
    np.testing.assert_allclose(back.mixture, scene.mixture, atol=1e-6)
    np.testing.assert_allclose(back.early_images, scene.early_images, atol=1e-6)
    np.testing.assert_allclose(back.late_images, scene.late_images, atol=1e-6)
    np.testing.assert_allclose(back.noise, scene.noise, atol=1e-6)
    assert back.rt60 == pytest.approx(0.3) and back.snr_db == pytest.approx(20.0)
