#pragma once

// Synthetic paired datasets for demos and tests.
//
// Each object draws a latent point z = class_mean + instance_spread * e in a
// small shared space; its language and vision vectors are fixed random linear
// images of z plus independent noise. Both modalities are therefore
// class-conditional Gaussians that agree on instance identity.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "malign/dataset.hpp"
#include "malign/rng.hpp"

namespace malign {

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t objects_per_class = 40;
  std::size_t descriptions_per_object = 1;
  std::size_t language_dim = 64;
  std::size_t vision_dim = 96;
  std::size_t latent_dim = 8;
  double class_spread = 1.0;
  double instance_spread = 0.5;
  double noise = 0.05;
  bool class_structure = true;  // false: every vector is i.i.d. N(0, 1)
  std::size_t speakers = 0;     // 0: language records carry no speaker_id
  std::size_t sequence_frames = 0;  // > 0: attach language frame sequences
  std::size_t sequence_coeffs = 13;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string padded(const char* prefix, std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, v);
  return buf;
}

inline std::vector<double> gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  std::vector<double> m(rows * cols);
  for (auto& v : m) v = rng.normal() * scale;
  return m;
}

inline std::vector<float> linear_image(const std::vector<double>& map, std::span<const double> z, std::size_t rows,
                                       double noise, Rng& rng) {
  std::vector<float> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) acc += map[r * z.size() + k] * z[k];
    out[r] = static_cast<float>(acc + noise * rng.normal());
  }
  return out;
}

}  // namespace detail

inline std::string synthetic_class_label(std::size_t c) { return detail::padded("class", c, 2); }

inline Dataset make_synthetic(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  const std::size_t k = spec.latent_dim;
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(k));
  const auto lang_map = detail::gaussian_matrix(rng, spec.language_dim, k, map_scale);
  const auto vis_map = detail::gaussian_matrix(rng, spec.vision_dim, k, map_scale);
  std::vector<std::vector<double>> frame_maps;
  for (std::size_t t = 0; t < spec.sequence_frames; ++t) {
    frame_maps.push_back(detail::gaussian_matrix(rng, spec.sequence_coeffs, k, map_scale));
  }

  std::vector<EmbeddingRecord> records;
  std::size_t utterance = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<double> mean(k);
    for (auto& v : mean) v = spec.class_spread * rng.normal();
    const std::string label = synthetic_class_label(c);
    for (std::size_t o = 0; o < spec.objects_per_class; ++o) {
      const std::string object = label + "-" + detail::padded("obj", o, 3);
      std::vector<double> z(k);
      for (std::size_t i = 0; i < k; ++i) z[i] = mean[i] + spec.instance_spread * rng.normal();

      auto iid = [&](std::size_t dim) {
        std::vector<float> v(dim);
        for (auto& x : v) x = static_cast<float>(rng.normal());
        return v;
      };

      EmbeddingRecord vision;
      vision.record_id = "v-" + object;
      vision.modality = Modality::vision;
      vision.class_label = label;
      vision.object_id = object;
      vision.vector = spec.class_structure ? detail::linear_image(vis_map, z, spec.vision_dim, spec.noise, rng)
                                           : iid(spec.vision_dim);
      records.push_back(std::move(vision));

      for (std::size_t d = 0; d < spec.descriptions_per_object; ++d) {
        EmbeddingRecord lang;
        lang.record_id = "l-" + object + "-" + std::to_string(d);
        lang.modality = Modality::language;
        lang.class_label = label;
        lang.object_id = object;
        if (spec.speakers) lang.speaker_id = detail::padded("spk", utterance % spec.speakers, 3);
        lang.vector = spec.class_structure ? detail::linear_image(lang_map, z, spec.language_dim, spec.noise, rng)
                                           : iid(spec.language_dim);
        if (spec.sequence_frames) {
          FeatureSequence seq;
          seq.n_frames = spec.sequence_frames;
          seq.n_coeffs = spec.sequence_coeffs;
          for (const auto& map : frame_maps) {
            auto frame = detail::linear_image(map, z, spec.sequence_coeffs, spec.noise, rng);
            seq.values.insert(seq.values.end(), frame.begin(), frame.end());
          }
          lang.sequence = std::move(seq);
        }
        records.push_back(std::move(lang));
        ++utterance;
      }
    }
  }
  return Dataset(std::move(records));
}

// Random trait rows for every speaker in the dataset.
inline TraitTable make_synthetic_traits(const Dataset& dataset, std::uint64_t seed) {
  TraitTable table;
  for (const auto& r : dataset.records()) {
    if (!r.speaker_id || table.contains(*r.speaker_id)) continue;
    Rng rng(derive_seed(seed, *r.speaker_id));
    SpeakerTraits t;
    t.speaker_id = *r.speaker_id;
    t.gender = static_cast<Gender>(rng.uniform_index(3));
    t.accent = rng.coin();
    t.creak = rng.coin();
    t.hoarseness = rng.coin();
    t.muffledness = 1 + static_cast<int>(rng.uniform_index(4));
    t.volume = 1 + static_cast<int>(rng.uniform_index(4));
    t.background_noise = 1 + static_cast<int>(rng.uniform_index(4));
    table.emplace(t.speaker_id, t);
  }
  return table;
}

}  // namespace malign
