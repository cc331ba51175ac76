#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "malign/mfcc.hpp"
#include "malign/rng.hpp"
#include "malign/wav.hpp"
#include "support/mfcc_fixture.hpp"
#include "support/oracles.hpp"

using namespace malign;

namespace {

AudioClip tone(std::size_t n, double freq, double amp = 0.5) {
  AudioClip clip;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = amp * std::sin(2 * std::numbers::pi * freq * double(i) / 16000.0);
  return clip;
}

}  // namespace

TEST(Mfcc, OneSecondGivesNinetyEightFrames) {
  const auto seq = extract_mfcc(tone(16000, 440));
  EXPECT_EQ(seq.frames.size(), 98u);
  EXPECT_EQ(seq.n_coeffs, 13u);
  EXPECT_DOUBLE_EQ(seq.frame_hop, 0.01);
  EXPECT_DOUBLE_EQ(seq.frame_len, 0.025);
  for (const auto& f : seq.frames) EXPECT_EQ(f.size(), 13u);
}

TEST(Mfcc, SilenceFramesAreIdentical) {
  AudioClip clip;
  clip.samples.assign(8000, 0.0);
  const auto seq = extract_mfcc(clip);
  for (const auto& f : seq.frames) EXPECT_EQ(f, seq.frames.front());
  // log floor everywhere: only the 0th coefficient is nonzero
  EXPECT_NEAR(seq.frames[0][0], std::log(1e-10) * std::sqrt(26.0), 1e-9);
  for (std::size_t k = 1; k < 13; ++k) EXPECT_NEAR(seq.frames[0][k], 0.0, 1e-9);
}

TEST(Mfcc, MatchesIndependentReference) {
  for (const char* name : {"silence", "sine440", "speech"}) {
    const auto c = fixture::compare_mfcc_fixture(MALIGN_FIXTURE_DIR "/mfcc", name);
    EXPECT_EQ(c.frames, c.reference_frames) << name;
    EXPECT_GT(c.coefficients, 0u) << name;
    EXPECT_EQ(c.within, c.coefficients) << name << " max relative error " << c.max_relative_error;
  }
}

TEST(Mfcc, FrameCountFormulaOnRandomLengths) {
  Rng rng(17);
  const MfccExtractor extractor;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 400 + rng.uniform_index(6000);
    const auto seq = extractor.compute(tone(n, 300));
    EXPECT_EQ(seq.frames.size(), (n - 400) / 160 + 1) << n;
  }
}

TEST(Mfcc, AmplitudeScalingOnlyMovesC0) {
  const auto clip = read_wav(MALIGN_FIXTURE_DIR "/mfcc/speech.wav");
  AudioClip quiet = clip;
  for (auto& s : quiet.samples) s *= 0.25;
  const auto a = extract_mfcc(clip);
  const auto b = extract_mfcc(quiet);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    EXPECT_NEAR(b.frames[f][0] - a.frames[f][0], std::log(0.25) * std::sqrt(26.0), 1e-6);
    for (std::size_t k = 1; k < 13; ++k) {
      EXPECT_LE(std::abs(a.frames[f][k] - b.frames[f][k]), 1e-6 * std::max(std::abs(a.frames[f][k]), 1e-3));
    }
  }
}

TEST(Mfcc, Deterministic) {
  const auto clip = read_wav(MALIGN_FIXTURE_DIR "/mfcc/speech.wav");
  EXPECT_EQ(extract_mfcc(clip), extract_mfcc(clip));
}

TEST(Mfcc, Errors) {
  EXPECT_THROW(extract_mfcc(tone(399, 440)), ValidationError);
  AudioClip wrong_rate = tone(16000, 440);
  wrong_rate.sample_rate = 8000;
  EXPECT_THROW(extract_mfcc(wrong_rate), ValidationError);
  EXPECT_THROW(extract_mfcc(AudioClip{}), ValidationError);
  MfccConfig too_many;
  too_many.n_coeffs = 27;
  EXPECT_THROW(MfccExtractor{too_many}, std::invalid_argument);
  MfccConfig short_window;
  short_window.window_seconds = 0.005;
  EXPECT_THROW(MfccExtractor{short_window}, std::invalid_argument);
  AudioClip loud = tone(1000, 440);
  loud.samples[10] = 1.5;
  EXPECT_THROW(extract_mfcc(loud), ValidationError);
}

TEST(MelScale, HtkFormulaRoundTrips) {
  EXPECT_NEAR(hz_to_mel(1000.0), 1000.0, 0.05);
  for (double hz : {0.0, 125.0, 4000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
}

TEST(Dct, OrthonormalRows) {
  const auto d = dct2_matrix(26, 26);
  for (std::size_t i = 0; i < 26; ++i)
    for (std::size_t j = 0; j < 26; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < 26; ++k) dot += d[i][k] * d[j][k];
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
}

TEST(MeanPool, Examples) {
  MfccSequence s;
  s.frames = {{1, 2}, {3, 4}};
  EXPECT_EQ(mean_pool(s), (std::vector<double>{2, 3}));
  s.frames = {{5, -1}};
  EXPECT_EQ(mean_pool(s), (std::vector<double>{5, -1}));
  s.frames.clear();
  EXPECT_THROW(mean_pool(s), std::invalid_argument);
}

TEST(MeanPool, MatchesColumnMeans) {
  Rng rng(4);
  MfccSequence s;
  for (int f = 0; f < 98; ++f) {
    std::vector<double> frame(13);
    for (auto& v : frame) v = rng.normal() * 10;
    s.frames.push_back(frame);
  }
  const auto pooled = mean_pool(s);
  for (std::size_t k = 0; k < 13; ++k) {
    double sum = 0;
    for (const auto& f : s.frames) sum += f[k];
    EXPECT_NEAR(pooled[k], sum / 98.0, 1e-12);
  }
}

TEST(Wav, RoundTripAndStereoDownmix) {
  const auto dir = oracle::scratch_dir("wav");
  const auto clip = tone(1600, 440, 0.7);
  write_wav((dir / "a.wav").string(), clip);
  const auto back = read_wav((dir / "a.wav").string());
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  EXPECT_EQ(back.sample_rate, 16000u);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 16000);

  // Hand-built stereo file: left +0.5, right -0.25 -> mean 0.125.
  std::ofstream out(dir / "s.wav", std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t frames = 4;
  out.write("RIFF", 4);
  u32(36 + frames * 4);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(2);
  u32(16000);
  u32(16000 * 4);
  u16(4);
  u16(16);
  out.write("data", 4);
  u32(frames * 4);
  for (std::uint32_t i = 0; i < frames; ++i) {
    u16(static_cast<std::uint16_t>(16384));
    u16(static_cast<std::uint16_t>(-8192));
  }
  out.close();
  const auto stereo = read_wav((dir / "s.wav").string());
  ASSERT_EQ(stereo.samples.size(), frames);
  EXPECT_DOUBLE_EQ(stereo.samples[0], 0.125);
}

TEST(Wav, RejectsNonWav) {
  const auto dir = oracle::scratch_dir("notwav");
  std::ofstream(dir / "x.wav") << "not a wav file at all, definitely";
  EXPECT_THROW(read_wav((dir / "x.wav").string()), Error);
  EXPECT_THROW(read_wav((dir / "missing.wav").string()), IoError);
}
