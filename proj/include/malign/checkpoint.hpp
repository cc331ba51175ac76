#pragma once

// Manifold checkpoint container (little-endian):
//   8 bytes   magic "MALIGNCK"
//   u32       format version
//   u64       metadata length, then UTF-8 JSON metadata (architectures, shapes,
//             training config echo, seed, code version)
//   u64 + f32 language encoder parameters
//   u64 + f32 vision encoder parameters

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "malign/align.hpp"
#include "malign/binary_io.hpp"
#include "malign/error.hpp"
#include "malign/version.hpp"

namespace malign {

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'L', 'I', 'G', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string_view to_string(AnchorSampling a) { return a == AnchorSampling::per_class ? "class" : "record"; }
inline std::string_view to_string(LanguageArchitecture a) { return a == LanguageArchitecture::mlp ? "mlp" : "lstm"; }

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["margin"] = c.margin;
  j["distance"] = "cosine";
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["lr_step_epochs"] = c.lr_step_epochs;
  j["lr_divisor"] = c.lr_divisor;
  nlohmann::ordered_json schedule = nlohmann::ordered_json::array();
  const auto sched = c.schedule();
  for (std::size_t e = 0; e < c.epochs; e += c.lr_step_epochs) {
    schedule.push_back({{"from_epoch", e}, {"learning_rate", sched.at(e)}});
  }
  j["lr_schedule"] = schedule;
  j["batch_size"] = c.batch_size;
  j["triplets_per_epoch"] = c.triplets_per_epoch ? nlohmann::ordered_json(*c.triplets_per_epoch)
                                                 : nlohmann::ordered_json("language-train-count");
  j["anchor_sampling"] = to_string(c.anchor_sampling);
  j["seed"] = c.seed;
  j["language_encoder"] = to_string(c.language_architecture);
  j["hidden"] = {c.hidden1, c.hidden2};
  j["output_dim"] = c.output_dim;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lstm_tail"] = c.lstm_tail;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
  return j;
}

namespace detail {

inline nlohmann::ordered_json shape_json(const nn::MlpShape& s) {
  return {{"architecture", "mlp"}, {"input", s.input}, {"hidden1", s.hidden1}, {"hidden2", s.hidden2}, {"output", s.output}};
}

inline nlohmann::ordered_json shape_json(const nn::LstmShape& s) {
  return {{"architecture", "lstm"}, {"input", s.input}, {"hidden", s.hidden}, {"tail", s.tail}, {"output", s.output}};
}

inline void write_payload(std::ostream& out, std::span<const float> values) {
  binary::write_u64(out, values.size());
  binary::write_f32(out, values);
}

inline std::vector<float> read_payload(std::istream& in, std::size_t expected) {
  const auto n = binary::read_u64(in);
  if (n != expected) throw IoError("checkpoint payload size does not match its declared shape");
  std::vector<float> values(n);
  binary::read_f32(in, values);
  return values;
}

}  // namespace detail

struct Checkpoint {
  Manifold<float> manifold;
  nlohmann::ordered_json metadata;
};

// `extra` is merged into the metadata (config echo, seeds, provenance).
inline void save_checkpoint(const std::string& path, const Manifold<float>& manifold,
                            const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  manifold.validate();
  nlohmann::ordered_json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["code_version"] = kVersion;
  meta["output_dim"] = manifold.output_dim();
  meta["language"] = std::visit([](const auto& enc) { return detail::shape_json(enc.shape()); }, manifold.language);
  meta["vision"] = detail::shape_json(manifold.vision.shape());
  for (const auto& [key, value] : extra.items()) meta[key] = value;
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  binary::write_u32(out, kCheckpointVersion);
  binary::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::write_payload(out, manifold.language_parameters());
  detail::write_payload(out, manifold.vision.parameters());
  if (!out) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw IoError("not a manifold checkpoint: " + path);
  }
  const auto version = binary::read_u32(in);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto length = binary::read_u64(in);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw IoError("truncated checkpoint metadata");

  Checkpoint ck;
  try {
    ck.metadata = nlohmann::ordered_json::parse(text);
    const auto& lang = ck.metadata.at("language");
    const auto& vis = ck.metadata.at("vision");
    if (lang.at("architecture") == "mlp") {
      nn::Mlp<float> net({lang.at("input"), lang.at("hidden1"), lang.at("hidden2"), lang.at("output")});
      auto values = detail::read_payload(in, net.parameters().size());
      std::copy(values.begin(), values.end(), net.parameters().begin());
      ck.manifold.language = std::move(net);
    } else if (lang.at("architecture") == "lstm") {
      nn::Lstm<float> net({lang.at("input"), lang.at("hidden"), lang.at("tail"), lang.at("output")});
      auto values = detail::read_payload(in, net.parameters().size());
      std::copy(values.begin(), values.end(), net.parameters().begin());
      ck.manifold.language = std::move(net);
    } else {
      throw IoError("unknown language architecture in checkpoint");
    }
    nn::Mlp<float> vision({vis.at("input"), vis.at("hidden1"), vis.at("hidden2"), vis.at("output")});
    auto values = detail::read_payload(in, vision.parameters().size());
    std::copy(values.begin(), values.end(), vision.parameters().begin());
    ck.manifold.vision = std::move(vision);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  ck.manifold.validate();
  return ck;
}

}  // namespace malign
