#pragma once

// Compares MFCCs of the checked-in clips with reference matrices produced
// offline by an independent implementation (scripts/make_mfcc_fixtures.py).

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "malign/mfcc.hpp"
#include "malign/wav.hpp"

namespace fixture {

// Below this magnitude a coefficient is compared absolutely; the reference
// values for a pure tone or silence include exact zeros up to rounding.
inline constexpr double kMfccAbsoluteFloor = 1e-9;
inline constexpr double kMfccRelativeTolerance = 1e-3;

struct MfccComparison {
  std::size_t frames = 0;
  std::size_t reference_frames = 0;
  std::size_t coefficients = 0;
  std::size_t within = 0;
  double max_relative_error = 0.0;
};

inline std::vector<std::vector<double>> read_reference(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    for (double v; ss >> v;) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MfccComparison compare_mfcc_fixture(const std::string& dir, const std::string& name) {
  const auto clip = malign::read_wav(dir + "/" + name + ".wav");
  const auto seq = malign::extract_mfcc(clip);
  const auto ref = read_reference(dir + "/" + name + ".ref.tsv");
  MfccComparison c;
  c.frames = seq.frames.size();
  c.reference_frames = ref.size();
  if (c.frames != c.reference_frames) return c;
  for (std::size_t f = 0; f < ref.size(); ++f) {
    for (std::size_t k = 0; k < ref[f].size() && k < seq.frames[f].size(); ++k) {
      const double err =
          std::abs(seq.frames[f][k] - ref[f][k]) / std::max(std::abs(ref[f][k]), kMfccAbsoluteFloor);
      ++c.coefficients;
      c.within += err <= kMfccRelativeTolerance || std::abs(seq.frames[f][k] - ref[f][k]) <= kMfccAbsoluteFloor;
      c.max_relative_error = std::max(c.max_relative_error, err);
    }
  }
  return c;
}

}  // namespace fixture
