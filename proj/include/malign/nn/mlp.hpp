#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "malign/nn/tensor.hpp"

namespace malign::nn {

// Two ReLU hidden layers and a linear output:
//   y = W3 relu(W2 relu(W1 x + b1) + b2) + b3
struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden1 = 2048;
  std::size_t hidden2 = 1536;
  std::size_t output = 1024;

  std::size_t parameter_count() const {
    return hidden1 * input + hidden1 + hidden2 * hidden1 + hidden2 + output * hidden2 + output;
  }
  bool operator==(const MlpShape&) const = default;
};

// Parameters live in one flat buffer (W1 b1 W2 b2 W3 b3, column-major); the
// accessors return Eigen views into it so optimizers and checkpoints can treat
// the network as a single span.
template <typename Scalar>
class Mlp {
 public:
  using Mat = Matrix<Scalar>;

  struct Cache {
    Mat input;
    Mat z1, a1, z2, a2;
  };

  Mlp() = default;
  explicit Mlp(const MlpShape& shape) : shape_(shape), theta_(shape.parameter_count(), Scalar(0)) {}

  // He-uniform for the ReLU layers, LeCun-uniform for the linear output, zero biases.
  static Mlp random(const MlpShape& shape, Rng& rng) {
    Mlp net(shape);
    fill_uniform(net.span_of(0, shape.hidden1 * shape.input), std::sqrt(6.0 / shape.input), rng);
    fill_uniform(net.span_of(net.w2_offset(), shape.hidden2 * shape.hidden1), std::sqrt(6.0 / shape.hidden1), rng);
    fill_uniform(net.span_of(net.w3_offset(), shape.output * shape.hidden2), std::sqrt(3.0 / shape.hidden2), rng);
    return net;
  }

  const MlpShape& shape() const { return shape_; }
  std::size_t input_dim() const { return shape_.input; }
  std::size_t output_dim() const { return shape_.output; }

  std::span<Scalar> parameters() { return theta_; }
  std::span<const Scalar> parameters() const { return theta_; }

  MatrixMap<Scalar> w1() { return {theta_.data(), rows1(), cols1()}; }
  VectorMap<Scalar> b1() { return {theta_.data() + b1_offset(), rows1()}; }
  MatrixMap<Scalar> w2() { return {theta_.data() + w2_offset(), rows2(), cols2()}; }
  VectorMap<Scalar> b2() { return {theta_.data() + b2_offset(), rows2()}; }
  MatrixMap<Scalar> w3() { return {theta_.data() + w3_offset(), rows3(), cols3()}; }
  VectorMap<Scalar> b3() { return {theta_.data() + b3_offset(), rows3()}; }
  ConstMatrixMap<Scalar> w1() const { return {theta_.data(), rows1(), cols1()}; }
  ConstVectorMap<Scalar> b1() const { return {theta_.data() + b1_offset(), rows1()}; }
  ConstMatrixMap<Scalar> w2() const { return {theta_.data() + w2_offset(), rows2(), cols2()}; }
  ConstVectorMap<Scalar> b2() const { return {theta_.data() + b2_offset(), rows2()}; }
  ConstMatrixMap<Scalar> w3() const { return {theta_.data() + w3_offset(), rows3(), cols3()}; }
  ConstVectorMap<Scalar> b3() const { return {theta_.data() + b3_offset(), rows3()}; }

  // x holds one input per column. Returns output_dim x batch.
  Mat forward(const Mat& x, Cache* cache = nullptr) const {
    if (static_cast<std::size_t>(x.rows()) != shape_.input) {
      throw std::invalid_argument("MLP input dimension mismatch: got " + std::to_string(x.rows()) + ", expected " +
                                  std::to_string(shape_.input));
    }
    if (!x.allFinite()) throw std::invalid_argument("non-finite MLP input");
    Mat z1 = (w1() * x).colwise() + b1();
    Mat a1 = z1.cwiseMax(Scalar(0));
    Mat z2 = (w2() * a1).colwise() + b2();
    Mat a2 = z2.cwiseMax(Scalar(0));
    Mat y = (w3() * a2).colwise() + b3();
    if (cache) {
      cache->input = x;
      cache->z1 = std::move(z1);
      cache->a1 = std::move(a1);
      cache->z2 = std::move(z2);
      cache->a2 = std::move(a2);
    }
    return y;
  }

  // Accumulates dL/dtheta into grad (same layout as parameters()) and returns dL/dx.
  Mat backward(const Cache& cache, const Mat& grad_out, std::span<Scalar> grad) const {
    if (grad.size() != theta_.size()) throw std::invalid_argument("MLP gradient buffer size mismatch");
    if (static_cast<std::size_t>(cache.input.rows()) != shape_.input ||
        static_cast<std::size_t>(cache.a2.rows()) != shape_.hidden2 ||
        static_cast<std::size_t>(grad_out.rows()) != shape_.output || cache.input.cols() != grad_out.cols()) {
      throw std::invalid_argument("MLP cache does not match parameters or upstream gradient");
    }
    MatrixMap<Scalar> gw1(grad.data(), rows1(), cols1());
    VectorMap<Scalar> gb1(grad.data() + b1_offset(), rows1());
    MatrixMap<Scalar> gw2(grad.data() + w2_offset(), rows2(), cols2());
    VectorMap<Scalar> gb2(grad.data() + b2_offset(), rows2());
    MatrixMap<Scalar> gw3(grad.data() + w3_offset(), rows3(), cols3());
    VectorMap<Scalar> gb3(grad.data() + b3_offset(), rows3());

    gw3.noalias() += grad_out * cache.a2.transpose();
    gb3 += grad_out.rowwise().sum();
    Mat d2 = (w3().transpose() * grad_out).cwiseProduct(relu_mask(cache.z2));
    gw2.noalias() += d2 * cache.a1.transpose();
    gb2 += d2.rowwise().sum();
    Mat d1 = (w2().transpose() * d2).cwiseProduct(relu_mask(cache.z1));
    gw1.noalias() += d1 * cache.input.transpose();
    gb1 += d1.rowwise().sum();
    return w1().transpose() * d1;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(shape_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < theta_.size(); ++i) dst[i] = static_cast<Other>(theta_[i]);
    return out;
  }

  bool operator==(const Mlp&) const = default;

 private:
  static Mat relu_mask(const Mat& z) { return (z.array() > Scalar(0)).template cast<Scalar>().matrix(); }

  std::span<Scalar> span_of(std::size_t offset, std::size_t count) { return std::span(theta_).subspan(offset, count); }

  Eigen::Index rows1() const { return static_cast<Eigen::Index>(shape_.hidden1); }
  Eigen::Index cols1() const { return static_cast<Eigen::Index>(shape_.input); }
  Eigen::Index rows2() const { return static_cast<Eigen::Index>(shape_.hidden2); }
  Eigen::Index cols2() const { return static_cast<Eigen::Index>(shape_.hidden1); }
  Eigen::Index rows3() const { return static_cast<Eigen::Index>(shape_.output); }
  Eigen::Index cols3() const { return static_cast<Eigen::Index>(shape_.hidden2); }
  std::size_t b1_offset() const { return shape_.hidden1 * shape_.input; }
  std::size_t w2_offset() const { return b1_offset() + shape_.hidden1; }
  std::size_t b2_offset() const { return w2_offset() + shape_.hidden2 * shape_.hidden1; }
  std::size_t w3_offset() const { return b2_offset() + shape_.hidden2; }
  std::size_t b3_offset() const { return w3_offset() + shape_.output * shape_.hidden2; }

  MlpShape shape_{};
  ParamVector<Scalar> theta_;
};

}  // namespace malign::nn
