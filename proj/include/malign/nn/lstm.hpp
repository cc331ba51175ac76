#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "malign/nn/tensor.hpp"

namespace malign::nn {

// Single-layer LSTM over a frame sequence. The last `tail` hidden states are
// concatenated oldest-to-newest (zero blocks in front when the sequence is
// shorter than `tail`) and fed to a linear projection.
struct LstmShape {
  std::size_t input = 13;
  std::size_t hidden = 64;
  std::size_t tail = 32;
  std::size_t output = 1024;

  std::size_t concat_dim() const { return hidden * tail; }
  std::size_t parameter_count() const {
    return 4 * hidden * input + 4 * hidden * hidden + 4 * hidden + output * concat_dim() + output;
  }
  bool operator==(const LstmShape&) const = default;
};

// Flat layout: Wx (4H x D), Wh (4H x H), b (4H), Wo (out x H*tail), bo (out).
// Gate blocks are stacked in the order input, forget, cell candidate, output.
template <typename Scalar>
class Lstm {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;

  struct Cache {
    Mat input;   // D x T
    Mat gates;   // 4H x T, post-activation
    Mat cell;    // H x T
    Mat hidden;  // H x T
    Vec concat;  // H*tail
  };

  Lstm() = default;
  explicit Lstm(const LstmShape& shape) : shape_(shape), theta_(shape.parameter_count(), Scalar(0)) {}

  // Recurrent weights U(-1/sqrt(H), 1/sqrt(H)); projection LeCun-uniform; zero biases.
  static Lstm random(const LstmShape& shape, Rng& rng) {
    Lstm net(shape);
    const double k = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
    fill_uniform(std::span(net.theta_).subspan(0, net.b_offset()), k, rng);
    fill_uniform(std::span(net.theta_).subspan(net.wo_offset(), shape.output * shape.concat_dim()),
                 std::sqrt(3.0 / static_cast<double>(shape.concat_dim())), rng);
    return net;
  }

  const LstmShape& shape() const { return shape_; }
  std::size_t input_dim() const { return shape_.input; }
  std::size_t output_dim() const { return shape_.output; }

  std::span<Scalar> parameters() { return theta_; }
  std::span<const Scalar> parameters() const { return theta_; }

  MatrixMap<Scalar> wx() { return {theta_.data(), gate_rows(), in_cols()}; }
  MatrixMap<Scalar> wh() { return {theta_.data() + wh_offset(), gate_rows(), hid()}; }
  VectorMap<Scalar> b() { return {theta_.data() + b_offset(), gate_rows()}; }
  MatrixMap<Scalar> wo() { return {theta_.data() + wo_offset(), out_rows(), concat_cols()}; }
  VectorMap<Scalar> bo() { return {theta_.data() + bo_offset(), out_rows()}; }
  ConstMatrixMap<Scalar> wx() const { return {theta_.data(), gate_rows(), in_cols()}; }
  ConstMatrixMap<Scalar> wh() const { return {theta_.data() + wh_offset(), gate_rows(), hid()}; }
  ConstVectorMap<Scalar> b() const { return {theta_.data() + b_offset(), gate_rows()}; }
  ConstMatrixMap<Scalar> wo() const { return {theta_.data() + wo_offset(), out_rows(), concat_cols()}; }
  ConstVectorMap<Scalar> bo() const { return {theta_.data() + bo_offset(), out_rows()}; }

  // x is D x T (one frame per column). Returns the output_dim projection.
  Vec forward(const Mat& x, Cache* cache = nullptr) const {
    if (x.cols() == 0) throw std::invalid_argument("LSTM input sequence is empty");
    if (static_cast<std::size_t>(x.rows()) != shape_.input) {
      throw std::invalid_argument("LSTM frame dimension mismatch: got " + std::to_string(x.rows()) + ", expected " +
                                  std::to_string(shape_.input));
    }
    if (!x.allFinite()) throw std::invalid_argument("non-finite LSTM input");
    const Eigen::Index h = hid();
    const Eigen::Index steps = x.cols();
    Mat pre = (wx() * x).colwise() + b();
    Mat gates(4 * h, steps), cell(h, steps), hidden(h, steps);
    Vec h_prev = Vec::Zero(h), c_prev = Vec::Zero(h);
    for (Eigen::Index t = 0; t < steps; ++t) {
      Vec a = pre.col(t) + wh() * h_prev;
      auto gate = gates.col(t);
      gate.segment(0, h) = sigmoid(a.segment(0, h));
      gate.segment(h, h) = sigmoid(a.segment(h, h));
      gate.segment(2 * h, h) = a.segment(2 * h, h).array().tanh().matrix();
      gate.segment(3 * h, h) = sigmoid(a.segment(3 * h, h));
      cell.col(t) = gate.segment(h, h).cwiseProduct(c_prev) + gate.segment(0, h).cwiseProduct(gate.segment(2 * h, h));
      hidden.col(t) = gate.segment(3 * h, h).cwiseProduct(cell.col(t).array().tanh().matrix());
      h_prev = hidden.col(t);
      c_prev = cell.col(t);
    }
    Vec concat = Vec::Zero(concat_cols());
    const auto tail = static_cast<Eigen::Index>(shape_.tail);
    for (Eigen::Index k = 0; k < tail; ++k) {
      const Eigen::Index t = steps - tail + k;
      if (t >= 0) concat.segment(k * h, h) = hidden.col(t);
    }
    Vec y = wo() * concat + bo();
    if (cache) {
      cache->input = x;
      cache->gates = std::move(gates);
      cache->cell = std::move(cell);
      cache->hidden = std::move(hidden);
      cache->concat = std::move(concat);
    }
    return y;
  }

  // Backpropagation through time. Accumulates into grad; returns dL/dx (D x T).
  Mat backward(const Cache& cache, const Vec& grad_out, std::span<Scalar> grad) const {
    if (grad.size() != theta_.size()) throw std::invalid_argument("LSTM gradient buffer size mismatch");
    const Eigen::Index h = hid();
    const Eigen::Index steps = cache.input.cols();
    if (static_cast<std::size_t>(cache.input.rows()) != shape_.input || cache.hidden.rows() != h ||
        cache.hidden.cols() != steps || cache.concat.size() != concat_cols() ||
        static_cast<std::size_t>(grad_out.size()) != shape_.output) {
      throw std::invalid_argument("LSTM cache does not match parameters or upstream gradient");
    }
    MatrixMap<Scalar> gwx(grad.data(), gate_rows(), in_cols());
    MatrixMap<Scalar> gwh(grad.data() + wh_offset(), gate_rows(), h);
    VectorMap<Scalar> gb(grad.data() + b_offset(), gate_rows());
    MatrixMap<Scalar> gwo(grad.data() + wo_offset(), out_rows(), concat_cols());
    VectorMap<Scalar> gbo(grad.data() + bo_offset(), out_rows());

    gwo.noalias() += grad_out * cache.concat.transpose();
    gbo += grad_out;
    const Vec dconcat = wo().transpose() * grad_out;

    const auto tail = static_cast<Eigen::Index>(shape_.tail);
    Mat dpre(4 * h, steps);
    Vec dh_next = Vec::Zero(h), dc_next = Vec::Zero(h);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      Vec dh = dh_next;
      const Eigen::Index k = t - (steps - tail);
      if (k >= 0) dh += dconcat.segment(k * h, h);
      const auto gate = cache.gates.col(t);
      const auto i = gate.segment(0, h).array();
      const auto f = gate.segment(h, h).array();
      const auto g = gate.segment(2 * h, h).array();
      const auto o = gate.segment(3 * h, h).array();
      const Vec tanh_c = cache.cell.col(t).array().tanh().matrix();
      const Vec c_prev = t > 0 ? Vec(cache.cell.col(t - 1)) : Vec::Zero(h);

      const auto d_o = dh.array() * tanh_c.array();
      const Vec dc = dc_next.array() + dh.array() * o * (Scalar(1) - tanh_c.array().square());
      auto da = dpre.col(t);
      da.segment(0, h) = (dc.array() * g * i * (Scalar(1) - i)).matrix();
      da.segment(h, h) = (dc.array() * c_prev.array() * f * (Scalar(1) - f)).matrix();
      da.segment(2 * h, h) = (dc.array() * i * (Scalar(1) - g.square())).matrix();
      da.segment(3 * h, h) = (d_o * o * (Scalar(1) - o)).matrix();
      dc_next = dc.array() * f;
      dh_next = wh().transpose() * da;
      if (t > 0) gwh.noalias() += da * cache.hidden.col(t - 1).transpose();
    }
    gwx.noalias() += dpre * cache.input.transpose();
    gb += dpre.rowwise().sum();
    return wx().transpose() * dpre;
  }

  template <typename Other>
  Lstm<Other> cast() const {
    Lstm<Other> out(shape_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < theta_.size(); ++i) dst[i] = static_cast<Other>(theta_[i]);
    return out;
  }

  bool operator==(const Lstm&) const = default;

 private:
  template <typename Derived>
  static Vec sigmoid(const Eigen::MatrixBase<Derived>& a) {
    return (Scalar(1) / (Scalar(1) + (-a.array()).exp())).matrix();
  }

  Eigen::Index hid() const { return static_cast<Eigen::Index>(shape_.hidden); }
  Eigen::Index gate_rows() const { return 4 * hid(); }
  Eigen::Index in_cols() const { return static_cast<Eigen::Index>(shape_.input); }
  Eigen::Index out_rows() const { return static_cast<Eigen::Index>(shape_.output); }
  Eigen::Index concat_cols() const { return static_cast<Eigen::Index>(shape_.concat_dim()); }
  std::size_t wh_offset() const { return 4 * shape_.hidden * shape_.input; }
  std::size_t b_offset() const { return wh_offset() + 4 * shape_.hidden * shape_.hidden; }
  std::size_t wo_offset() const { return b_offset() + 4 * shape_.hidden; }
  std::size_t bo_offset() const { return wo_offset() + shape_.output * shape_.concat_dim(); }

  LstmShape shape_{};
  ParamVector<Scalar> theta_;
};

}  // namespace malign::nn
