"""Waveform recovery tests: dB undo, DCT inversion, NNLS, Griffin-Lim, pathways."""

import numpy as np
import pytest

from speechleak import dsp, reconstruct
from speechleak.dsp import FeatureGrid, FeatureKind, FrontendConfig
from speechleak.metrics import stoi
from speechleak.reconstruct import GriffinLimConfig, StatsMode


def test_db_to_power_values():
    assert reconstruct.db_to_power(np.array(0.0)) == 1.0
    assert np.allclose(reconstruct.db_to_power(np.array([10.0, -10.0])), [10.0, 0.1])


def test_db_round_trip_above_floor(rng):
    power = 10.0 ** rng.uniform(-8.0, 2.0, size=(32, 32))
    back = reconstruct.db_to_power(dsp.power_to_db(power))
    assert np.allclose(back, power, rtol=1e-9)


def test_mfcc_to_mel_full_round_trip(speech_wave):
    import scipy.fft
    from types import SimpleNamespace

    cfg = FrontendConfig()
    power = dsp.stft_power(dsp.preemphasize(speech_wave, cfg.preemph_coeff), cfg)
    fb = dsp.build_mel_filterbank(128, 2048)
    mel_power = np.maximum(fb @ power, cfg.power_floor)
    mel_db = dsp.power_to_db(mel_power)
    coeffs = scipy.fft.dct(mel_db, type=2, axis=0, norm="ortho")  # all 128, no CMVN
    full = SimpleNamespace(values=coeffs, kind=FeatureKind.MFCC_CMVN)
    recovered = reconstruct.mfcc_to_mel(full, StatsMode.IDENTITY)
    assert np.allclose(recovered, mel_power, rtol=1e-6)


def test_mfcc_to_mel_truncated_preserves_envelope(speech_wave):
    grid, stats = dsp.mfcc_cmvn(speech_wave)
    power = dsp.stft_power(dsp.preemphasize(speech_wave, 0.97), FrontendConfig())
    fb = dsp.build_mel_filterbank(128, 2048)
    true_db = dsp.power_to_db(fb @ power)
    recovered_db = dsp.power_to_db(reconstruct.mfcc_to_mel(grid, StatsMode.ORACLE, stats))
    err = float(np.mean((recovered_db - true_db) ** 2))
    assert err > 0.0
    corr = np.corrcoef(recovered_db.ravel(), true_db.ravel())[0, 1]
    # pilot-measured threshold: 32 of 128 coefficients keep the envelope
    assert corr > 0.9


def test_mfcc_to_mel_identity_zero_grid():
    grid = FeatureGrid(np.zeros((32, 32)), FeatureKind.MFCC_CMVN)
    mel_power = reconstruct.mfcc_to_mel(grid, StatsMode.IDENTITY)
    assert mel_power.shape == (128, 32)
    assert np.allclose(mel_power, 1.0, atol=1e-12)  # 0 dB everywhere


def test_mfcc_to_mel_requires_stats_for_oracle():
    grid = FeatureGrid(np.zeros((32, 32)), FeatureKind.MFCC_CMVN)
    with pytest.raises(ValueError):
        reconstruct.mfcc_to_mel(grid, StatsMode.ORACLE, None)
    with pytest.raises(ValueError):
        reconstruct.mfcc_to_mel(
            FeatureGrid(np.zeros((32, 32)), FeatureKind.MEL_DB), StatsMode.IDENTITY
        )


def test_nnls_zero_target():
    fb = dsp.build_mel_filterbank(32, 2048)
    mags = reconstruct.nnls_mel_to_stft(np.zeros((32, 8)), fb)
    assert np.array_equal(mags, np.zeros((1025, 8)))


def test_nnls_constructed_solution(rng):
    fb = dsp.build_mel_filterbank(32, 2048)
    truth = rng.uniform(0.0, 1.0, size=(1025, 8))
    target = fb @ truth
    mags, residuals = reconstruct.nnls_mel_to_stft(target, fb, return_residuals=True)
    assert np.all(np.diff(residuals) <= 1e-10 * residuals[0])
    assert residuals[-1] / np.linalg.norm(target) < 1e-3
    assert np.all(mags >= 0.0)


def test_nnls_output_nonnegative(rng):
    fb = dsp.build_mel_filterbank(32, 2048)
    target = rng.standard_normal((32, 8))  # negative entries allowed in input
    mags = reconstruct.nnls_mel_to_stft(target, fb, iterations=50)
    assert np.all(mags >= 0.0)


def test_griffin_lim_zero_magnitudes():
    wave = reconstruct.griffin_lim(np.zeros((1025, 32)))
    assert wave.shape == (16000,)
    assert np.all(wave == 0.0)


def test_griffin_lim_spectral_convergence_monotone(speech_wave):
    cfg = FrontendConfig()
    mag = np.sqrt(dsp.stft_power(dsp.preemphasize(speech_wave, 0.97), cfg))
    _, conv = reconstruct.griffin_lim(mag, cfg, return_convergence=True)
    assert conv.size == GriffinLimConfig().n_iter
    assert np.all(np.diff(conv) <= 1e-10)


def test_griffin_lim_pure_tone_peak():
    cfg = FrontendConfig()
    k = 200
    mag = np.zeros((1025, 32))
    mag[k, :] = 1.0
    wave = reconstruct.griffin_lim(mag, cfg)
    spectrum = np.abs(np.fft.rfft(wave * np.hanning(wave.size)))
    peak_hz = np.argmax(spectrum) * 16000.0 / wave.size
    tone_hz = k * 16000.0 / 2048.0
    assert abs(peak_hz - tone_hz) < 16000.0 / 2048.0


def test_griffin_lim_validates_input():
    with pytest.raises(ValueError):
        reconstruct.griffin_lim(np.zeros((100, 32)))
    with pytest.raises(ValueError):
        reconstruct.griffin_lim(-np.ones((1025, 32)))
    with pytest.raises(ValueError):
        GriffinLimConfig(n_iter=0)


def test_mel_to_waveform_ground_truth_intelligible(speech_wave):
    grid = dsp.mel_spectrogram_db(speech_wave)
    wave = reconstruct.mel_to_waveform(grid)
    assert wave.shape == (16000,)
    # one-sample check near the feature-inversion band; the batch mean
    # is enforced by the acceptance suite
    assert stoi(speech_wave, wave) > 0.65


def test_mel_to_waveform_zero_grid_near_silence():
    grid = FeatureGrid(np.full((32, 32), -100.0), FeatureKind.MEL_DB)
    wave = reconstruct.mel_to_waveform(grid)
    assert wave.shape == (16000,)
    assert np.max(np.abs(wave)) < 1e-3


def test_mel_to_waveform_rejects_mfcc_grid():
    grid = FeatureGrid(np.zeros((32, 32)), FeatureKind.MFCC_CMVN)
    with pytest.raises(ValueError):
        reconstruct.mel_to_waveform(grid)


def test_mfcc_to_waveform_oracle_intelligible(speech_wave):
    grid, stats = dsp.mfcc_cmvn(speech_wave)
    wave = reconstruct.mfcc_to_waveform(grid, StatsMode.ORACLE, stats)
    assert wave.shape == (16000,)
    assert stoi(speech_wave, wave) > 0.6


def test_mfcc_to_waveform_identity_zero_grid():
    grid = FeatureGrid(np.zeros((32, 32)), FeatureKind.MFCC_CMVN)
    wave = reconstruct.mfcc_to_waveform(grid, StatsMode.IDENTITY)
    assert wave.shape == (16000,)
    assert np.all(np.isfinite(wave))


def test_raw_power_mel_pathway(speech_wave):
    cfg = FrontendConfig(log_mel=False)
    grid = dsp.mel_spectrogram_db(speech_wave, cfg)
    wave = reconstruct.mel_to_waveform(grid, cfg)
    assert wave.shape == (16000,)
    assert np.all(np.isfinite(wave))
