#!/usr/bin/env python3
"""Regenerates tests/fixtures/mfcc: three 16 kHz WAV clips and reference MFCC
matrices computed with librosa's mel filterbank, numpy's real FFT and scipy's
orthonormal DCT-II. Run from the repository root:

    python3 scripts/make_mfcc_fixtures.py
"""
import os

import librosa
import numpy as np
import scipy.fft
import scipy.io.wavfile
import scipy.signal

SR = 16000
WIN = 400
HOP = 160
N_FFT = 512
N_MELS = 26
N_COEFFS = 13
PREEMPH = 0.97
LOG_FLOOR = 1e-10

OUT = os.path.join("tests", "fixtures", "mfcc")


def reference_mfcc(samples):
    emph = np.append(samples[0], samples[1:] - PREEMPH * samples[:-1])
    n_frames = 1 + (len(emph) - WIN) // HOP
    window = scipy.signal.get_window("hann", WIN, fftbins=True)
    frames = np.stack([emph[i * HOP:i * HOP + WIN] * window for i in range(n_frames)])
    mag = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1))
    mel = librosa.filters.mel(sr=SR, n_fft=N_FFT, n_mels=N_MELS, fmin=0.0,
                              fmax=SR / 2, htk=True, norm=None, dtype=np.float64)
    energies = mag @ mel.T
    log_mel = np.log(np.maximum(energies, LOG_FLOOR))
    return scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, :N_COEFFS]


def speech_like(duration, rng):
    """Glottal pulse train through three formant resonators, plus breath noise."""
    n = int(duration * SR)
    t = np.arange(n) / SR
    f0 = 120 + 25 * np.sin(2 * np.pi * 3 * t)
    phase = np.cumsum(f0 / SR)
    pulses = (np.diff(np.floor(phase), prepend=0) > 0).astype(float)
    signal = pulses
    for formant, bw in ((700, 90), (1220, 110), (2600, 160)):
        r = np.exp(-np.pi * bw / SR)
        theta = 2 * np.pi * formant / SR
        signal = scipy.signal.lfilter([1 - r], [1, -2 * r * np.cos(theta), r * r], signal)
    envelope = np.clip(np.sin(np.pi * t / duration) * 1.5, 0, 1)
    signal = signal * envelope + 0.01 * rng.standard_normal(n)
    return 0.6 * signal / np.max(np.abs(signal))


def write_case(name, samples):
    pcm = np.round(np.clip(samples, -1, 1) * 32767).astype(np.int16)
    path = os.path.join(OUT, name + ".wav")
    scipy.io.wavfile.write(path, SR, pcm)
    _, read_back = scipy.io.wavfile.read(path)
    decoded = read_back.astype(np.float64) / 32768.0
    coeffs = reference_mfcc(decoded)
    np.savetxt(os.path.join(OUT, name + ".ref.tsv"), coeffs, delimiter="\t", fmt="%.17g")
    print(f"{name}: {coeffs.shape[0]} frames")


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(20240611)
    t = np.arange(SR) / SR
    write_case("silence", np.zeros(SR))
    write_case("sine440", 0.5 * np.sin(2 * np.pi * 440 * t))
    write_case("speech", speech_like(0.8, rng))


if __name__ == "__main__":
    main()
