import numpy as np
import pytest

from hetsed.features import (
    AudioClip,
    LOG_FLOOR,
    extract_log_mel,
    load_wav,
    log_mel,
    mel_filterbank,
    num_frames,
    pad_or_trim,
    stft_magnitude,
)

SR = 16000


def clip_of(samples, clip_id="t"):
    return AudioClip(samples=np.asarray(samples, dtype=np.float64), sample_rate=SR, clip_id=clip_id)


def test_num_frames_paper_parameters():
    assert num_frames(160000, 2048, 256) == 618
    assert num_frames(160000, 2048, 160) == 988
    assert num_frames(2048, 2048, 256) == 1


def test_num_frames_errors():
    with pytest.raises(ValueError):
        num_frames(2047, 2048, 256)
    with pytest.raises(ValueError):
        num_frames(4096, 2048, 0)


def test_pad_or_trim():
    short = pad_or_trim(clip_of(np.ones(8 * SR)))
    assert short.samples.size == 10 * SR
    assert np.all(short.samples[8 * SR :] == 0.0)
    exact = pad_or_trim(clip_of(np.ones(10 * SR)))
    assert exact.samples.size == 10 * SR and np.all(exact.samples == 1.0)
    long = pad_or_trim(clip_of(np.arange(12 * SR, dtype=np.float64)))
    assert long.samples.size == 10 * SR
    assert long.samples[-1] == 10 * SR - 1


def test_stft_zero_clip_is_zero():
    spec = stft_magnitude(clip_of(np.zeros(3 * SR)), hop=256)
    assert spec.shape == (num_frames(3 * SR, 2048, 256), 1025)
    assert np.all(spec == 0.0)


def test_stft_sine_peaks_at_bin_center():
    for k in (32, 100, 500):
        freq = k * SR / 2048
        t = np.arange(2 * SR) / SR
        spec = stft_magnitude(clip_of(np.sin(2 * np.pi * freq * t)), hop=256)
        interior = spec[2:-2]
        assert np.all(np.argmax(interior, axis=1) == k), f"bin {k} not the peak"


def test_stft_frame_count_matches_num_frames():
    for hop in (160, 256):
        n = 37 * 1024
        spec = stft_magnitude(clip_of(np.random.default_rng(0).normal(size=n)), hop=hop)
        assert spec.shape[0] == num_frames(n, 2048, hop)


def test_stft_warns_on_nonstandard_hop():
    with pytest.warns(UserWarning, match="hop"):
        stft_magnitude(clip_of(np.zeros(SR)), hop=128)


def test_mel_filterbank_shape_and_support():
    fb = mel_filterbank()
    assert fb.shape == (128, 1025)
    assert np.all(fb >= 0.0)
    assert np.all(fb.sum(axis=1) > 0.0)
    # each row's support is one contiguous band
    for row in fb:
        active = np.flatnonzero(row > 0)
        assert active.size > 0
        assert np.all(np.diff(active) == 1)


def test_mel_filterbank_peaks_strictly_increase():
    fb = mel_filterbank()
    peaks = np.argmax(fb, axis=1)
    assert np.all(np.diff(peaks) > 0)


def test_mel_filterbank_range_errors():
    with pytest.raises(ValueError):
        mel_filterbank(f_range=(0.0, 9000.0))
    with pytest.raises(ValueError):
        mel_filterbank(n_mels=1)


def test_log_mel_floor_and_homogeneity():
    zero = stft_magnitude(clip_of(np.zeros(SR)), hop=256)
    fb = mel_filterbank()
    mel = log_mel(zero, fb, frame_period=256 / SR)
    assert np.allclose(mel.values, np.log(LOG_FLOOR))

    rng = np.random.default_rng(3)
    audio = rng.normal(size=SR)
    m1 = log_mel(stft_magnitude(clip_of(audio), hop=256), fb, 256 / SR)
    m2 = log_mel(stft_magnitude(clip_of(2.0 * audio), hop=256), fb, 256 / SR)
    above_floor = m1.values > np.log(LOG_FLOOR) + 1e-6
    assert np.allclose(m2.values[above_floor] - m1.values[above_floor], np.log(4.0), atol=1e-9)


def test_log_mel_monotone_in_power():
    fb = mel_filterbank()
    rng = np.random.default_rng(4)
    spec = np.abs(rng.normal(size=(5, 1025)))
    bigger = spec * 1.5
    a = log_mel(spec, fb, 0.016).values
    b = log_mel(bigger, fb, 0.016).values
    assert np.all(b >= a)


def test_amplification_never_decreases_log_mel():
    rng = np.random.default_rng(5)
    audio = rng.normal(size=2 * SR)
    a = extract_log_mel(clip_of(audio), hop=256).values
    b = extract_log_mel(clip_of(3.0 * audio), hop=256).values
    assert np.all(b >= a - 1e-12)


def test_extract_log_mel_deterministic_bytes():
    rng = np.random.default_rng(6)
    audio = rng.normal(size=SR)
    a = extract_log_mel(clip_of(audio), hop=160)
    b = extract_log_mel(clip_of(audio.copy()), hop=160)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.frame_period == 160 / SR


def test_extract_log_mel_rejects_wrong_rate():
    clip = AudioClip(np.zeros(44100), 44100, "bad")
    with pytest.raises(ValueError, match="16000"):
        extract_log_mel(clip, hop=256)


def test_load_wav_pcm16_and_float32(tmp_path):
    from scipy.io import wavfile

    rng = np.random.default_rng(7)
    audio = np.clip(rng.normal(scale=0.1, size=SR), -1, 1)

    p16 = tmp_path / "a.wav"
    wavfile.write(p16, SR, (audio * 32767).astype(np.int16))
    c16 = load_wav(p16)
    assert c16.clip_id == "a"
    assert np.max(np.abs(c16.samples - audio)) < 1e-3

    p32 = tmp_path / "b.wav"
    wavfile.write(p32, SR, audio.astype(np.float32))
    c32 = load_wav(p32)
    assert np.max(np.abs(c32.samples - audio)) < 1e-6


def test_load_wav_rejects_wrong_rate(tmp_path):
    from scipy.io import wavfile

    path = tmp_path / "c.wav"
    wavfile.write(path, 8000, np.zeros(100, dtype=np.int16))
    with pytest.raises(ValueError, match="16000"):
        load_wav(path)
