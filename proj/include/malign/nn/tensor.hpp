#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "malign/rng.hpp"

namespace malign::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;
template <typename Scalar>
using VectorMap = Eigen::Map<Vector<Scalar>>;
template <typename Scalar>
using ConstVectorMap = Eigen::Map<const Vector<Scalar>>;

// Flat parameter / gradient storage. Eigen's vectorised reductions over a Map
// depend on the base address alignment, so a plain std::vector would make
// results vary from one allocation to the next.
template <typename Scalar>
using ParamVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

// Fills with U(-limit, limit).
template <typename Scalar>
void fill_uniform(std::span<Scalar> values, double limit, Rng& rng) {
  for (auto& v : values) v = static_cast<Scalar>(rng.uniform(-limit, limit));
}

template <typename Scalar>
bool all_finite(std::span<const Scalar> values) {
  for (const auto& v : values) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <typename To, typename From>
std::vector<To> convert(std::span<const From> values) {
  std::vector<To> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<To>(values[i]);
  return out;
}

}  // namespace malign::nn
