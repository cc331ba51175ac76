#pragma once

// Mel-frequency cepstral coefficients from raw PCM:
//   pre-emphasis -> framing -> Hann window -> |DFT| -> mel filterbank -> log -> DCT-II (orthonormal)

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "malign/dataset.hpp"
#include "malign/error.hpp"
#include "malign/wav.hpp"

namespace malign {

struct MfccConfig {
  std::size_t n_coeffs = 13;
  std::size_t n_mels = 26;
  double window_seconds = 0.025;
  double hop_seconds = 0.010;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  std::uint32_t sample_rate = 16000;

  std::size_t window_samples() const { return static_cast<std::size_t>(std::lround(window_seconds * sample_rate)); }
  std::size_t hop_samples() const { return static_cast<std::size_t>(std::lround(hop_seconds * sample_rate)); }
};

struct MfccSequence {
  std::vector<std::vector<double>> frames;
  std::size_t n_coeffs = 0;
  double frame_hop = 0.0;
  double frame_len = 0.0;

  bool operator==(const MfccSequence&) const = default;
};

// floor((n - window) / hop) + 1 for n >= window, else 0.
constexpr std::size_t mfcc_frame_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
  return n_samples < window ? 0 : (n_samples - window) / hop + 1;
}

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters on the DFT bin frequencies, peak 1, edges at consecutive
// mel-spaced centre frequencies. Row m holds filter m over n_fft/2 + 1 bins.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels, std::size_t n_fft, double sample_rate,
                                                       double low_hz, double high_hz) {
  const std::size_t n_bins = n_fft / 2 + 1;
  const double low_mel = hz_to_mel(low_hz);
  const double high_mel = hz_to_mel(high_hz);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(low_mel + (high_mel - low_mel) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  std::vector<std::vector<double>> bank(n_mels, std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < n_mels; ++m) {
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = sample_rate * static_cast<double>(k) / static_cast<double>(n_fft);
      const double rising = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double falling = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      bank[m][k] = std::max(0.0, std::min(rising, falling));
    }
  }
  return bank;
}

// Orthonormal DCT-II basis truncated to the first n_out rows.
inline std::vector<std::vector<double>> dct2_matrix(std::size_t n_out, std::size_t n_in) {
  std::vector<std::vector<double>> basis(n_out, std::vector<double>(n_in));
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      basis[k][i] = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return basis;
}

// Precomputes window, filterbank and DCT for one configuration; compute() is
// const and may be called concurrently.
class MfccExtractor {
 public:
  explicit MfccExtractor(const MfccConfig& config = {}) : config_(config) {
    window_ = config.window_samples();
    hop_ = config.hop_samples();
    if (config.n_coeffs == 0 || config.n_coeffs > config.n_mels) {
      throw std::invalid_argument("n_coeffs must be in 1..n_mels");
    }
    if (hop_ == 0 || window_ < hop_) throw std::invalid_argument("MFCC window must be >= hop > 0");
    if (config.high_hz <= config.low_hz || config.high_hz > config.sample_rate / 2.0) {
      throw std::invalid_argument("mel band edges must satisfy 0 <= low < high <= Nyquist");
    }
    n_fft_ = 1;
    while (n_fft_ < window_) n_fft_ <<= 1;
    hann_.resize(window_);
    for (std::size_t n = 0; n < window_; ++n) {
      hann_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(window_));
    }
    filters_ = mel_filterbank(config.n_mels, n_fft_, config.sample_rate, config.low_hz, config.high_hz);
    dct_ = dct2_matrix(config.n_coeffs, config.n_mels);
  }

  const MfccConfig& config() const { return config_; }
  std::size_t window() const { return window_; }
  std::size_t hop() const { return hop_; }
  std::size_t fft_size() const { return n_fft_; }

  MfccSequence compute(const AudioClip& clip) const {
    if (clip.sample_rate != config_.sample_rate) {
      throw ValidationError("unsupported sample rate " + std::to_string(clip.sample_rate) + " Hz (need " +
                            std::to_string(config_.sample_rate) + ")");
    }
    if (clip.samples.empty()) throw ValidationError("empty audio clip");
    if (clip.samples.size() < window_) throw ValidationError("audio clip shorter than one analysis window");
    for (double s : clip.samples) {
      if (!std::isfinite(s) || std::abs(s) > 1.0) throw ValidationError("audio samples must be finite and in [-1, 1]");
    }

    std::vector<double> emphasized(clip.samples.size());
    emphasized[0] = clip.samples[0];
    for (std::size_t i = 1; i < clip.samples.size(); ++i) {
      emphasized[i] = clip.samples[i] - config_.preemphasis * clip.samples[i - 1];
    }

    MfccSequence seq;
    seq.n_coeffs = config_.n_coeffs;
    seq.frame_hop = static_cast<double>(hop_) / config_.sample_rate;
    seq.frame_len = static_cast<double>(window_) / config_.sample_rate;
    const std::size_t n_frames = mfcc_frame_count(clip.samples.size(), window_, hop_);
    seq.frames.reserve(n_frames);

    std::vector<std::complex<double>> spectrum(n_fft_);
    std::vector<double> magnitude(n_fft_ / 2 + 1);
    std::vector<double> log_mel(config_.n_mels);
    for (std::size_t f = 0; f < n_frames; ++f) {
      const std::size_t start = f * hop_;
      std::fill(spectrum.begin(), spectrum.end(), std::complex<double>{});
      for (std::size_t n = 0; n < window_; ++n) spectrum[n] = emphasized[start + n] * hann_[n];
      fft(spectrum);
      for (std::size_t k = 0; k < magnitude.size(); ++k) magnitude[k] = std::abs(spectrum[k]);
      for (std::size_t m = 0; m < config_.n_mels; ++m) {
        double energy = 0.0;
        for (std::size_t k = 0; k < magnitude.size(); ++k) energy += filters_[m][k] * magnitude[k];
        log_mel[m] = std::log(std::max(energy, config_.log_floor));
      }
      std::vector<double> coeffs(config_.n_coeffs, 0.0);
      for (std::size_t k = 0; k < config_.n_coeffs; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < config_.n_mels; ++m) acc += dct_[k][m] * log_mel[m];
        coeffs[k] = acc;
      }
      seq.frames.push_back(std::move(coeffs));
    }
    return seq;
  }

 private:
  MfccConfig config_;
  std::size_t window_ = 0;
  std::size_t hop_ = 0;
  std::size_t n_fft_ = 0;
  std::vector<double> hann_;
  std::vector<std::vector<double>> filters_;
  std::vector<std::vector<double>> dct_;
};

inline MfccSequence extract_mfcc(const AudioClip& clip, const MfccConfig& config = {}) {
  return MfccExtractor(config).compute(clip);
}

// Per-coefficient mean across frames.
inline std::vector<double> mean_pool(const MfccSequence& seq) {
  if (seq.frames.empty()) throw std::invalid_argument("mean_pool of an empty sequence");
  std::vector<double> mean(seq.frames.front().size(), 0.0);
  for (const auto& frame : seq.frames) {
    if (frame.size() != mean.size()) throw std::invalid_argument("ragged MFCC sequence");
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += frame[k];
  }
  for (double& m : mean) m /= static_cast<double>(seq.frames.size());
  return mean;
}

inline FeatureSequence to_feature_sequence(const MfccSequence& seq) {
  FeatureSequence out;
  out.n_frames = seq.frames.size();
  out.n_coeffs = seq.n_coeffs;
  out.values.reserve(out.n_frames * out.n_coeffs);
  for (const auto& frame : seq.frames) {
    for (double v : frame) out.values.push_back(static_cast<float>(v));
  }
  return out;
}

}  // namespace malign
