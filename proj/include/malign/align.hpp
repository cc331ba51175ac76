#pragma once

// Manifold alignment with a cross-modal triplet loss. One encoder per modality
// projects records into a shared space; each triplet member is routed through
// the encoder of its own modality.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "malign/dataset.hpp"
#include "malign/error.hpp"
#include "malign/log.hpp"
#include "malign/nn/adam.hpp"
#include "malign/nn/lstm.hpp"
#include "malign/nn/mlp.hpp"
#include "malign/rng.hpp"

namespace malign {

namespace detail {

inline std::atomic<bool>& zero_norm_warned() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void warn_zero_norm() {
  if (!zero_norm_warned().exchange(true)) {
    log_warning("cosine distance of a zero-norm vector is defined as 1 (further occurrences not logged)");
  }
}

}  // namespace detail

// Re-arms the once-per-run zero-norm warning.
inline void reset_zero_norm_warning() { detail::zero_norm_warned().store(false); }

// 1 - cos(u, v), clamped to [0, 2]. Zero-norm input yields 1. Accumulates in double.
template <typename T>
double cosine_distance(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_distance dimension mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = static_cast<double>(u[i]);
    const double b = static_cast<double>(v[i]);
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) {
    detail::warn_zero_norm();
    return 1.0;
  }
  return std::clamp(1.0 - dot / (std::sqrt(uu) * std::sqrt(vv)), 0.0, 2.0);
}

template <typename T>
double cosine_distance(const std::vector<T>& u, const std::vector<T>& v) {
  return cosine_distance(std::span<const T>(u), std::span<const T>(v));
}

// Cosine distance divided by 2, in [0, 1].
template <typename T>
double normalized_distance(std::span<const T> u, std::span<const T> v) {
  return cosine_distance(u, v) / 2.0;
}

template <typename T>
double normalized_distance(const std::vector<T>& u, const std::vector<T>& v) {
  return cosine_distance(u, v) / 2.0;
}

// Adds scale * d(distance)/du and d/dv. Zero-norm input contributes nothing.
template <typename T>
double cosine_distance_backward(std::span<const T> u, std::span<const T> v, double scale, std::span<double> grad_u,
                                std::span<double> grad_v) {
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    uu += static_cast<double>(u[i]) * static_cast<double>(u[i]);
    vv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  }
  if (uu == 0.0 || vv == 0.0) {
    detail::warn_zero_norm();
    return 1.0;
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  const double sim = dot / (nu * nv);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = static_cast<double>(u[i]);
    const double b = static_cast<double>(v[i]);
    grad_u[i] -= scale * (b / (nu * nv) - sim * a / uu);
    grad_v[i] -= scale * (a / (nu * nv) - sim * b / vv);
  }
  return std::clamp(1.0 - sim, 0.0, 2.0);
}

// max(d(a, p) - d(a, n) + margin, 0) under cosine distance.
template <typename T>
double triplet_loss(std::span<const T> anchor, std::span<const T> positive, std::span<const T> negative,
                    double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw std::invalid_argument("triplet_loss dimension mismatch");
  }
  return std::max(cosine_distance(anchor, positive) - cosine_distance(anchor, negative) + margin, 0.0);
}

template <typename T>
double triplet_loss(const std::vector<T>& a, const std::vector<T>& p, const std::vector<T>& n, double margin) {
  return triplet_loss(std::span<const T>(a), std::span<const T>(p), std::span<const T>(n), margin);
}

// ---------------------------------------------------------------------------
// Triplet sampling

struct TripletMember {
  std::size_t record = 0;
  Modality modality = Modality::language;
  bool operator==(const TripletMember&) const = default;
};

struct Triplet {
  TripletMember anchor, positive, negative;
  bool operator==(const Triplet&) const = default;
};

enum class AnchorSampling { per_class, per_record };

// Training records grouped by class (sorted labels) and modality.
struct ClassPools {
  std::vector<std::string> classes;
  std::vector<std::array<std::vector<std::size_t>, 2>> by_modality;
  std::vector<std::size_t> class_of_record;  // parallel to `records`
  std::vector<std::size_t> records;

  const std::vector<std::size_t>& pool(std::size_t cls, Modality m) const {
    return by_modality[cls][static_cast<std::size_t>(m)];
  }
};

inline ClassPools build_class_pools(const Dataset& dataset, std::span<const std::size_t> records) {
  std::map<std::string, std::array<std::vector<std::size_t>, 2>> grouped;
  for (std::size_t i : records) {
    const auto& r = dataset[i];
    grouped[r.class_label][static_cast<std::size_t>(r.modality)].push_back(i);
  }
  ClassPools pools;
  std::map<std::string, std::size_t> class_index;
  for (auto& [label, members] : grouped) {
    class_index[label] = pools.classes.size();
    pools.classes.push_back(label);
    pools.by_modality.push_back(std::move(members));
  }
  for (std::size_t i : records) {
    pools.records.push_back(i);
    pools.class_of_record.push_back(class_index[dataset[i].class_label]);
  }
  return pools;
}

inline constexpr int kModalityRetries = 8;

// Each member's modality is a fair coin; a member whose class has no record of
// the drawn modality redraws the coin (bounded), after which the triplet is skipped.
inline std::vector<Triplet> sample_triplets(const Dataset& dataset, std::span<const std::size_t> train_records,
                                            std::size_t count, std::uint64_t seed,
                                            AnchorSampling anchor_sampling = AnchorSampling::per_class) {
  const ClassPools pools = build_class_pools(dataset, train_records);
  if (pools.classes.size() < 2) throw ValidationError("triplet sampling needs at least two classes");
  Rng rng(seed);
  std::vector<Triplet> out;
  out.reserve(count);
  std::size_t skipped = 0;

  auto draw_member = [&](std::size_t cls) -> std::optional<TripletMember> {
    for (int attempt = 0; attempt <= kModalityRetries; ++attempt) {
      const Modality m = rng.coin() ? Modality::language : Modality::vision;
      const auto& pool = pools.pool(cls, m);
      if (!pool.empty()) return TripletMember{pool[rng.uniform_index(pool.size())], m};
    }
    return std::nullopt;
  };

  const std::size_t n_classes = pools.classes.size();
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t anchor_class;
    if (anchor_sampling == AnchorSampling::per_class) {
      anchor_class = rng.uniform_index(n_classes);
    } else {
      anchor_class = pools.class_of_record[rng.uniform_index(pools.records.size())];
    }
    std::size_t negative_class = rng.uniform_index(n_classes - 1);
    if (negative_class >= anchor_class) ++negative_class;
    const auto a = draw_member(anchor_class);
    const auto p = draw_member(anchor_class);
    const auto n = draw_member(negative_class);
    if (!a || !p || !n) {
      ++skipped;
      continue;
    }
    out.push_back({*a, *p, *n});
  }
  if (skipped) log_warning("sample_triplets skipped " + std::to_string(skipped) + " triplet(s) with empty pools");
  return out;
}

// ---------------------------------------------------------------------------
// Manifold

enum class LanguageArchitecture { mlp, lstm };

template <typename Scalar>
using LanguageEncoder = std::variant<nn::Mlp<Scalar>, nn::Lstm<Scalar>>;

template <typename Scalar>
struct Manifold {
  LanguageEncoder<Scalar> language;
  nn::Mlp<Scalar> vision;

  LanguageArchitecture language_architecture() const {
    return std::holds_alternative<nn::Mlp<Scalar>>(language) ? LanguageArchitecture::mlp : LanguageArchitecture::lstm;
  }
  std::size_t output_dim() const { return vision.output_dim(); }

  std::span<Scalar> language_parameters() {
    return std::visit([](auto& enc) { return enc.parameters(); }, language);
  }
  std::span<const Scalar> language_parameters() const {
    return std::visit([](const auto& enc) -> std::span<const Scalar> { return enc.parameters(); }, language);
  }

  void validate() const {
    const std::size_t lang_out = std::visit([](const auto& enc) { return enc.output_dim(); }, language);
    if (lang_out != vision.output_dim()) throw std::invalid_argument("encoders disagree on the manifold dimension");
  }

  template <typename Other>
  Manifold<Other> cast() const {
    Manifold<Other> out;
    out.language = std::visit([](const auto& enc) -> LanguageEncoder<Other> { return enc.template cast<Other>(); },
                              language);
    out.vision = vision.template cast<Other>();
    return out;
  }

  bool operator==(const Manifold&) const = default;
};

namespace detail {

template <typename Scalar>
nn::Matrix<Scalar> gather_vectors(const Dataset& dataset, std::span<const std::size_t> records, std::size_t dim) {
  nn::Matrix<Scalar> x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(records.size()));
  for (std::size_t c = 0; c < records.size(); ++c) {
    const auto& v = dataset[records[c]].vector;
    if (v.size() != dim) {
      throw std::invalid_argument("record '" + dataset[records[c]].record_id + "' has dimension " +
                                  std::to_string(v.size()) + ", encoder expects " + std::to_string(dim));
    }
    for (std::size_t r = 0; r < dim; ++r) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<Scalar>(v[r]);
  }
  return x;
}

template <typename Scalar>
nn::Matrix<Scalar> sequence_matrix(const EmbeddingRecord& record) {
  if (!record.sequence) {
    throw ValidationError("record '" + record.record_id + "' has no frame sequence (required by the LSTM encoder)");
  }
  const auto& s = *record.sequence;
  nn::Matrix<Scalar> x(static_cast<Eigen::Index>(s.n_coeffs), static_cast<Eigen::Index>(s.n_frames));
  for (std::size_t t = 0; t < s.n_frames; ++t) {
    for (std::size_t k = 0; k < s.n_coeffs; ++k) {
      x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = static_cast<Scalar>(s.values[t * s.n_coeffs + k]);
    }
  }
  return x;
}

inline std::uint64_t hash_bits(std::uint64_t h, bool bit) {
  h ^= bit ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL;
  return mix_seed(h);
}

template <typename Scalar>
std::uint64_t relu_branch(std::uint64_t h, const typename nn::Mlp<Scalar>::Cache& cache) {
  for (Eigen::Index i = 0; i < cache.z1.size(); ++i) h = hash_bits(h, cache.z1.data()[i] > Scalar(0));
  for (Eigen::Index i = 0; i < cache.z2.size(); ++i) h = hash_bits(h, cache.z2.data()[i] > Scalar(0));
  return h;
}

// Forward pass of one encoder over a list of records, keeping what backward needs.
template <typename Scalar>
struct EncoderPass {
  nn::Matrix<Scalar> output;
  typename nn::Mlp<Scalar>::Cache mlp_cache;
  std::vector<typename nn::Lstm<Scalar>::Cache> lstm_caches;
};

template <typename Scalar>
EncoderPass<Scalar> run_encoder(const nn::Mlp<Scalar>& net, const Dataset& dataset,
                                std::span<const std::size_t> records, bool keep_cache) {
  EncoderPass<Scalar> pass;
  pass.output = net.forward(gather_vectors<Scalar>(dataset, records, net.input_dim()),
                            keep_cache ? &pass.mlp_cache : nullptr);
  return pass;
}

template <typename Scalar>
EncoderPass<Scalar> run_encoder(const nn::Lstm<Scalar>& net, const Dataset& dataset,
                                std::span<const std::size_t> records, bool keep_cache) {
  EncoderPass<Scalar> pass;
  pass.output.resize(static_cast<Eigen::Index>(net.output_dim()), static_cast<Eigen::Index>(records.size()));
  if (keep_cache) pass.lstm_caches.resize(records.size());
  for (std::size_t c = 0; c < records.size(); ++c) {
    pass.output.col(static_cast<Eigen::Index>(c)) =
        net.forward(sequence_matrix<Scalar>(dataset[records[c]]), keep_cache ? &pass.lstm_caches[c] : nullptr);
  }
  return pass;
}

template <typename Scalar>
void backward_encoder(const nn::Mlp<Scalar>& net, const EncoderPass<Scalar>& pass, const nn::Matrix<Scalar>& grad_out,
                      std::span<Scalar> grad) {
  net.backward(pass.mlp_cache, grad_out, grad);
}

template <typename Scalar>
void backward_encoder(const nn::Lstm<Scalar>& net, const EncoderPass<Scalar>& pass, const nn::Matrix<Scalar>& grad_out,
                      std::span<Scalar> grad) {
  for (std::size_t c = 0; c < pass.lstm_caches.size(); ++c) {
    net.backward(pass.lstm_caches[c], grad_out.col(static_cast<Eigen::Index>(c)), grad);
  }
}

template <typename Scalar>
std::uint64_t encoder_branch(const nn::Mlp<Scalar>&, const EncoderPass<Scalar>& pass, std::uint64_t h) {
  return relu_branch<Scalar>(h, pass.mlp_cache);
}

template <typename Scalar>
std::uint64_t encoder_branch(const nn::Lstm<Scalar>&, const EncoderPass<Scalar>&, std::uint64_t h) {
  return h;  // smooth
}

}  // namespace detail

// Projects records into the manifold; one column per record.
template <typename Scalar>
nn::Matrix<Scalar> project_all(const Manifold<Scalar>& manifold, const Dataset& dataset,
                               std::span<const std::size_t> records) {
  std::vector<std::size_t> lang, vis;
  for (std::size_t i : records) (dataset[i].modality == Modality::language ? lang : vis).push_back(i);
  nn::Matrix<Scalar> out(static_cast<Eigen::Index>(manifold.output_dim()), static_cast<Eigen::Index>(records.size()));
  nn::Matrix<Scalar> lang_out, vis_out;
  if (!lang.empty()) {
    lang_out = std::visit([&](const auto& enc) { return detail::run_encoder(enc, dataset, lang, false).output; },
                          manifold.language);
  }
  if (!vis.empty()) vis_out = detail::run_encoder(manifold.vision, dataset, vis, false).output;
  std::size_t li = 0, vi = 0;
  for (std::size_t c = 0; c < records.size(); ++c) {
    const bool is_lang = dataset[records[c]].modality == Modality::language;
    out.col(static_cast<Eigen::Index>(c)) =
        is_lang ? lang_out.col(static_cast<Eigen::Index>(li++)) : vis_out.col(static_cast<Eigen::Index>(vi++));
  }
  return out;
}

template <typename Scalar>
std::vector<Scalar> project(const Manifold<Scalar>& manifold, const Dataset& dataset, std::size_t record) {
  const std::array<std::size_t, 1> one = {record};
  const auto m = project_all(manifold, dataset, std::span<const std::size_t>(one));
  return std::vector<Scalar>(m.data(), m.data() + m.size());
}

// Mean triplet loss over a batch and its exact gradient with respect to both
// encoders' flat parameter vectors. `branch` fingerprints the ReLU and hinge
// activity so finite-difference checks can detect kink crossings.
template <typename Scalar>
struct BatchGradient {
  double loss = 0.0;
  nn::ParamVector<Scalar> language;
  nn::ParamVector<Scalar> vision;
  std::size_t language_members = 0;
  std::size_t vision_members = 0;
  std::uint64_t branch = 0;
};

template <typename Scalar>
BatchGradient<Scalar> triplet_batch_gradient(const Manifold<Scalar>& manifold, const Dataset& dataset,
                                             std::span<const Triplet> batch, double margin, bool want_gradient = true) {
  BatchGradient<Scalar> result;
  if (batch.empty()) return result;
  // Column of each member inside its modality's encoder batch.
  std::vector<std::size_t> lang_records, vis_records;
  std::vector<std::array<std::size_t, 3>> column(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const std::array<const TripletMember*, 3> members = {&batch[j].anchor, &batch[j].positive, &batch[j].negative};
    for (std::size_t r = 0; r < 3; ++r) {
      auto& target = members[r]->modality == Modality::language ? lang_records : vis_records;
      column[j][r] = target.size();
      target.push_back(members[r]->record);
    }
  }
  detail::EncoderPass<Scalar> lang_pass, vis_pass;
  if (!lang_records.empty()) {
    lang_pass = std::visit(
        [&](const auto& enc) { return detail::run_encoder(enc, dataset, lang_records, want_gradient); },
        manifold.language);
  }
  if (!vis_records.empty()) vis_pass = detail::run_encoder(manifold.vision, dataset, vis_records, want_gradient);

  const auto dim = static_cast<Eigen::Index>(manifold.output_dim());
  nn::Matrix<double> lang_grad = nn::Matrix<double>::Zero(dim, static_cast<Eigen::Index>(lang_records.size()));
  nn::Matrix<double> vis_grad = nn::Matrix<double>::Zero(dim, static_cast<Eigen::Index>(vis_records.size()));
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::uint64_t branch = 0x51ed270b2c6f4a1dULL;
  double total = 0.0;

  for (std::size_t j = 0; j < batch.size(); ++j) {
    const std::array<const TripletMember*, 3> members = {&batch[j].anchor, &batch[j].positive, &batch[j].negative};
    std::array<std::span<const Scalar>, 3> proj;
    std::array<std::span<double>, 3> grads;
    for (std::size_t r = 0; r < 3; ++r) {
      const bool is_lang = members[r]->modality == Modality::language;
      const auto& out = is_lang ? lang_pass.output : vis_pass.output;
      auto& g = is_lang ? lang_grad : vis_grad;
      const auto col = static_cast<Eigen::Index>(column[j][r]);
      proj[r] = std::span<const Scalar>(out.data() + col * dim, static_cast<std::size_t>(dim));
      grads[r] = std::span<double>(g.data() + col * dim, static_cast<std::size_t>(dim));
    }
    const double d_ap = cosine_distance(proj[0], proj[1]);
    const double d_an = cosine_distance(proj[0], proj[2]);
    const double hinge = d_ap - d_an + margin;
    const bool active = hinge > 0.0 || std::isnan(hinge);  // NaN must reach the loss
    branch = detail::hash_bits(branch, active);
    if (!active) continue;
    total += hinge;
    if (!want_gradient) continue;
    // Every member owns its own column, so the gradient spans never alias.
    cosine_distance_backward(proj[0], proj[1], scale, grads[0], grads[1]);
    cosine_distance_backward(proj[0], proj[2], -scale, grads[0], grads[2]);
  }
  result.loss = total * scale;
  result.language_members = lang_records.size();
  result.vision_members = vis_records.size();

  if (!lang_records.empty()) {
    branch = std::visit([&](const auto& enc) { return detail::encoder_branch(enc, lang_pass, branch); },
                        manifold.language);
  }
  if (!vis_records.empty()) branch = detail::encoder_branch(manifold.vision, vis_pass, branch);
  result.branch = branch;
  if (!want_gradient) return result;

  result.language.assign(manifold.language_parameters().size(), Scalar(0));
  result.vision.assign(manifold.vision.parameters().size(), Scalar(0));
  if (!lang_records.empty()) {
    const nn::Matrix<Scalar> g = lang_grad.template cast<Scalar>();
    std::visit([&](const auto& enc) { detail::backward_encoder(enc, lang_pass, g, std::span<Scalar>(result.language)); },
               manifold.language);
  }
  if (!vis_records.empty()) {
    const nn::Matrix<Scalar> g = vis_grad.template cast<Scalar>();
    detail::backward_encoder(manifold.vision, vis_pass, g, std::span<Scalar>(result.vision));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double margin = 0.4;
  std::size_t epochs = 300;
  double learning_rate = 1e-3;
  std::size_t lr_step_epochs = 100;
  double lr_divisor = 10.0;
  std::size_t batch_size = 64;
  std::optional<std::size_t> triplets_per_epoch;  // default: number of training language records
  AnchorSampling anchor_sampling = AnchorSampling::per_class;
  std::uint64_t seed = 0;
  LanguageArchitecture language_architecture = LanguageArchitecture::mlp;
  std::size_t hidden1 = 2048;
  std::size_t hidden2 = 1536;
  std::size_t output_dim = 1024;
  std::size_t lstm_hidden = 64;
  std::size_t lstm_tail = 32;
  nn::AdamConfig adam{};

  nn::StepSchedule schedule() const { return {learning_rate, lr_step_epochs, lr_divisor}; }

  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw ValidationError("margin must be a finite value >= 0");
    if (epochs == 0) throw ValidationError("epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (lr_step_epochs == 0) throw ValidationError("lr step must be >= 1 epoch");
    if (hidden1 == 0 || hidden2 == 0 || output_dim == 0 || lstm_hidden == 0 || lstm_tail == 0) {
      throw ValidationError("layer sizes must be positive");
    }
    if (triplets_per_epoch && *triplets_per_epoch == 0) throw ValidationError("triplets per epoch must be >= 1");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  std::size_t triplets = 0;
  bool operator==(const EpochStats&) const = default;
};

template <typename Scalar>
struct TrainResult {
  Manifold<Scalar> manifold;
  std::vector<EpochStats> history;
};

template <typename Scalar>
Manifold<Scalar> init_manifold(const Dataset& dataset, const TrainConfig& config) {
  const auto vision_dim = dataset.dim(Modality::vision);
  if (!vision_dim) throw ValidationError("dataset has no vision records");
  Manifold<Scalar> m;
  Rng vision_rng(derive_seed(config.seed, "init/vision"));
  m.vision = nn::Mlp<Scalar>::random({*vision_dim, config.hidden1, config.hidden2, config.output_dim}, vision_rng);
  Rng lang_rng(derive_seed(config.seed, "init/language"));
  if (config.language_architecture == LanguageArchitecture::mlp) {
    const auto lang_dim = dataset.dim(Modality::language);
    if (!lang_dim) throw ValidationError("dataset has no language records");
    m.language = nn::Mlp<Scalar>::random({*lang_dim, config.hidden1, config.hidden2, config.output_dim}, lang_rng);
  } else {
    const auto coeffs = dataset.sequence_coeffs();
    if (!coeffs) throw ValidationError("LSTM language encoder requires frame sequences");
    m.language = nn::Lstm<Scalar>::random({*coeffs, config.lstm_hidden, config.lstm_tail, config.output_dim}, lang_rng);
  }
  return m;
}

// Runs `epochs` passes; each pass samples triplets_per_epoch fresh triplets and
// takes one Adam step per batch on both encoders.
template <typename Scalar = float>
TrainResult<Scalar> train(const Dataset& dataset, std::span<const std::size_t> train_records, const TrainConfig& config,
                          std::optional<Manifold<Scalar>> initial = std::nullopt,
                          const std::function<void(const EpochStats&, const Manifold<Scalar>&)>& on_epoch = {}) {
  config.validate();
  reset_zero_norm_warning();
  TrainResult<Scalar> result;
  result.manifold = initial ? std::move(*initial) : init_manifold<Scalar>(dataset, config);
  result.manifold.validate();

  std::size_t language_train = 0;
  for (std::size_t i : train_records) language_train += dataset[i].modality == Modality::language;
  const std::size_t per_epoch = config.triplets_per_epoch.value_or(std::max<std::size_t>(language_train, 1));

  auto& manifold = result.manifold;
  nn::AdamState<Scalar> lang_state(manifold.language_parameters().size());
  nn::AdamState<Scalar> vis_state(manifold.vision.parameters().size());
  const auto schedule = config.schedule();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = schedule.at(epoch);
    const auto triplets =
        sample_triplets(dataset, train_records, per_epoch, derive_seed(config.seed, epoch), config.anchor_sampling);
    double loss_sum = 0.0;
    for (std::size_t start = 0, batch_no = 0; start < triplets.size(); start += config.batch_size, ++batch_no) {
      const auto batch = std::span(triplets).subspan(start, std::min(config.batch_size, triplets.size() - start));
      auto step = triplet_batch_gradient(manifold, dataset, batch, config.margin);
      if (!std::isfinite(step.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no) + " (triplets " + std::to_string(start) + ".." +
                            std::to_string(start + batch.size() - 1) + ")");
      }
      if (!nn::all_finite<Scalar>(step.language) || !nn::all_finite<Scalar>(step.vision)) {
        throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no));
      }
      loss_sum += step.loss * static_cast<double>(batch.size());
      if (step.language_members) {
        nn::adam_step(manifold.language_parameters(), std::span<const Scalar>(step.language), lang_state, lr,
                      config.adam);
      }
      if (step.vision_members) {
        nn::adam_step(manifold.vision.parameters(), std::span<const Scalar>(step.vision), vis_state, lr, config.adam);
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = lr;
    stats.triplets = triplets.size();
    stats.mean_loss = triplets.empty() ? 0.0 : loss_sum / static_cast<double>(triplets.size());
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats, manifold);
  }
  return result;
}

// Trains on the records tagged `train`.
template <typename Scalar = float>
TrainResult<Scalar> train(const Dataset& dataset, const TrainConfig& config) {
  const auto records = dataset.indices_where(SplitTag::train);
  if (records.empty()) throw ValidationError("dataset has no training records");
  return train<Scalar>(dataset, records, config);
}

}  // namespace malign
