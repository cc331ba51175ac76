#pragma once

// Embedding records, speaker traits, file formats and split construction.
//
// On-disk layout:
//   manifest    tab-separated text, header row, one record per line:
//               record_id modality class_label object_id speaker_id split vector_offset vector_dim
//   vectors     contiguous little-endian float32; a record owns
//               [vector_offset, vector_offset + vector_dim) in element units
//   sequences   optional sidecar for frame sequences (LSTM path): an index table
//               record_id vector_offset n_frames n_coeffs plus a float32 payload,
//               frames stored row-major
//   traits      tab-separated, keyed by speaker_id, seven trait columns

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "malign/binary_io.hpp"
#include "malign/error.hpp"
#include "malign/rng.hpp"

namespace malign {

enum class Modality { vision, language };
enum class SplitTag { train, val, test, unassigned };

inline constexpr std::array<Modality, 2> kModalities = {Modality::vision, Modality::language};

inline std::string_view to_string(Modality m) {
  return m == Modality::vision ? "vision" : "language";
}

inline std::string_view to_string(SplitTag s) {
  switch (s) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline std::optional<Modality> parse_modality(std::string_view text) {
  if (text == "vision") return Modality::vision;
  if (text == "language") return Modality::language;
  return std::nullopt;
}

inline std::optional<SplitTag> parse_split(std::string_view text) {
  if (text == "train") return SplitTag::train;
  if (text == "val") return SplitTag::val;
  if (text == "test") return SplitTag::test;
  if (text == "unassigned" || text.empty()) return SplitTag::unassigned;
  return std::nullopt;
}

// Frame sequence in row-major order (n_frames rows of n_coeffs).
struct FeatureSequence {
  std::size_t n_frames = 0;
  std::size_t n_coeffs = 0;
  std::vector<float> values;

  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(values).subspan(t * n_coeffs, n_coeffs);
  }
  bool operator==(const FeatureSequence&) const = default;
};

struct EmbeddingRecord {
  std::string record_id;
  Modality modality = Modality::language;
  std::string class_label;
  std::string object_id;
  std::optional<std::string> speaker_id;
  SplitTag split = SplitTag::unassigned;
  std::vector<float> vector;
  std::optional<FeatureSequence> sequence;

  bool operator==(const EmbeddingRecord&) const = default;
};

// Immutable, validated collection of records.
class Dataset {
 public:
  Dataset() = default;

  // Validates every record invariant; throws ValidationError on the first violation.
  explicit Dataset(std::vector<EmbeddingRecord> records) : records_(std::move(records)) {
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.record_id.empty()) throw ValidationError("record " + std::to_string(i) + " has an empty record_id");
      if (!index_.emplace(r.record_id, i).second) {
        throw ValidationError("duplicate record_id '" + r.record_id + "'");
      }
      if (r.class_label.empty()) throw ValidationError("record '" + r.record_id + "' has an empty class_label");
      if (r.modality == Modality::vision && r.speaker_id) {
        throw ValidationError("vision record '" + r.record_id + "' carries a speaker_id");
      }
      auto& dim = dims_[static_cast<std::size_t>(r.modality)];
      if (!dim) {
        dim = r.vector.size();
      } else if (*dim != r.vector.size()) {
        throw ValidationError("modality dimension mismatch for '" + r.record_id + "': " +
                              std::to_string(r.vector.size()) + " vs " + std::to_string(*dim));
      }
      if (r.sequence) {
        const auto& s = *r.sequence;
        if (s.values.size() != s.n_frames * s.n_coeffs || s.n_frames == 0) {
          throw ValidationError("malformed frame sequence for '" + r.record_id + "'");
        }
        if (!seq_coeffs_) {
          seq_coeffs_ = s.n_coeffs;
        } else if (*seq_coeffs_ != s.n_coeffs) {
          throw ValidationError("sequence coefficient count mismatch for '" + r.record_id + "'");
        }
      }
    }
  }

  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_.at(i); }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::optional<std::size_t> find(std::string_view record_id) const {
    auto it = index_.find(std::string(record_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Declared dimension of a modality; nullopt when the dataset has no such records.
  std::optional<std::size_t> dim(Modality m) const { return dims_[static_cast<std::size_t>(m)]; }
  std::optional<std::size_t> sequence_coeffs() const { return seq_coeffs_; }

  std::vector<std::size_t> indices_where(SplitTag split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].split == split) out.push_back(i);
    }
    return out;
  }

 private:
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  std::array<std::optional<std::size_t>, 2> dims_{};
  std::optional<std::size_t> seq_coeffs_;
};

// New dataset holding the selected records (in the given order).
inline Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<EmbeddingRecord> records;
  records.reserve(indices.size());
  for (std::size_t i : indices) records.push_back(dataset[i]);
  return Dataset(std::move(records));
}

// ---------------------------------------------------------------------------
// Text table helpers

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = '\t') {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) return std::nullopt;
  return value;
}

inline void check_field(std::string_view field, std::string_view what) {
  if (field.find_first_of("\t\n\r") != std::string_view::npos) {
    throw ValidationError(std::string(what) + " contains a tab or newline: '" + std::string(field) + "'");
  }
}

inline std::string location(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no);
}

}  // namespace detail

inline constexpr std::array<std::string_view, 8> kManifestColumns = {
    "record_id", "modality", "class_label", "object_id",
    "speaker_id", "split", "vector_offset", "vector_dim"};

inline constexpr std::array<std::string_view, 4> kSequenceColumns = {
    "record_id", "vector_offset", "n_frames", "n_coeffs"};

// Reads a manifest and its vector container. Offsets are element indices.
inline Dataset load_dataset(const std::string& manifest_path, const std::string& vectors_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  const std::vector<float> payload = binary::read_f32_file(vectors_path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty manifest: " + manifest_path);
  ++line_no;
  {
    const auto header = detail::split_fields(detail::strip_cr(line));
    if (header.size() != kManifestColumns.size() ||
        !std::equal(header.begin(), header.end(), kManifestColumns.begin())) {
      throw ValidationError(detail::location(manifest_path, line_no) + ": malformed manifest header");
    }
  }

  std::vector<EmbeddingRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::strip_cr(line);
    if (text.empty()) continue;
    const auto where = detail::location(manifest_path, line_no);
    const auto f = detail::split_fields(text);
    if (f.size() != kManifestColumns.size()) {
      throw ValidationError(where + ": malformed manifest row (expected 8 fields, got " +
                            std::to_string(f.size()) + ")");
    }
    EmbeddingRecord r;
    r.record_id = std::string(f[0]);
    const auto modality = parse_modality(f[1]);
    if (!modality) throw ValidationError(where + ": malformed manifest row (unknown modality '" + std::string(f[1]) + "')");
    r.modality = *modality;
    r.class_label = std::string(f[2]);
    r.object_id = std::string(f[3]);
    if (!f[4].empty()) r.speaker_id = std::string(f[4]);
    const auto split = parse_split(f[5]);
    if (!split) throw ValidationError(where + ": malformed manifest row (unknown split '" + std::string(f[5]) + "')");
    r.split = *split;
    const auto offset = detail::parse_number<std::uint64_t>(f[6]);
    const auto dim = detail::parse_number<std::uint64_t>(f[7]);
    if (!offset || !dim) throw ValidationError(where + ": malformed manifest row (bad offset or dim)");
    if (*offset > payload.size() || *dim > payload.size() - *offset) {
      throw ValidationError(where + ": vector out of bounds (offset " + std::to_string(*offset) + ", dim " +
                            std::to_string(*dim) + ", container holds " + std::to_string(payload.size()) +
                            " floats)");
    }
    r.vector.assign(payload.begin() + static_cast<std::ptrdiff_t>(*offset),
                    payload.begin() + static_cast<std::ptrdiff_t>(*offset + *dim));
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

// Writes manifest + vectors; offsets are assigned in record order.
inline void write_dataset(const Dataset& dataset, const std::string& manifest_path,
                          const std::string& vectors_path) {
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + manifest_path);
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) {
    out << (i ? "\t" : "") << kManifestColumns[i];
  }
  out << '\n';
  std::vector<float> payload;
  for (const auto& r : dataset.records()) {
    detail::check_field(r.record_id, "record_id");
    detail::check_field(r.class_label, "class_label");
    detail::check_field(r.object_id, "object_id");
    if (r.speaker_id) detail::check_field(*r.speaker_id, "speaker_id");
    out << r.record_id << '\t' << to_string(r.modality) << '\t' << r.class_label << '\t' << r.object_id << '\t'
        << r.speaker_id.value_or("") << '\t' << to_string(r.split) << '\t' << payload.size() << '\t'
        << r.vector.size() << '\n';
    payload.insert(payload.end(), r.vector.begin(), r.vector.end());
  }
  if (!out) throw IoError("write failed: " + manifest_path);
  binary::write_f32_file(vectors_path, payload);
}

// Returns a copy of the dataset with frame sequences attached from a sidecar.
inline Dataset attach_sequences(const Dataset& dataset, const std::string& index_path,
                                const std::string& payload_path) {
  std::ifstream in(index_path);
  if (!in) throw IoError("cannot open sequence index: " + index_path);
  const std::vector<float> payload = binary::read_f32_file(payload_path);
  std::vector<EmbeddingRecord> records = dataset.records();

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty sequence index: " + index_path);
  ++line_no;
  {
    const auto header = detail::split_fields(detail::strip_cr(line));
    if (header.size() != kSequenceColumns.size() ||
        !std::equal(header.begin(), header.end(), kSequenceColumns.begin())) {
      throw ValidationError(detail::location(index_path, line_no) + ": malformed sequence index header");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::strip_cr(line);
    if (text.empty()) continue;
    const auto where = detail::location(index_path, line_no);
    const auto f = detail::split_fields(text);
    if (f.size() != kSequenceColumns.size()) throw ValidationError(where + ": malformed sequence index row");
    const auto idx = dataset.find(f[0]);
    if (!idx) throw ValidationError(where + ": unknown record_id '" + std::string(f[0]) + "'");
    const auto offset = detail::parse_number<std::uint64_t>(f[1]);
    const auto frames = detail::parse_number<std::uint64_t>(f[2]);
    const auto coeffs = detail::parse_number<std::uint64_t>(f[3]);
    if (!offset || !frames || !coeffs) throw ValidationError(where + ": malformed sequence index row");
    const std::uint64_t count = *frames * *coeffs;
    if (*offset > payload.size() || count > payload.size() - *offset) {
      throw ValidationError(where + ": sequence out of bounds");
    }
    FeatureSequence seq;
    seq.n_frames = *frames;
    seq.n_coeffs = *coeffs;
    seq.values.assign(payload.begin() + static_cast<std::ptrdiff_t>(*offset),
                      payload.begin() + static_cast<std::ptrdiff_t>(*offset + count));
    records[*idx].sequence = std::move(seq);
  }
  return Dataset(std::move(records));
}

inline void write_sequences(const Dataset& dataset, const std::string& index_path,
                            const std::string& payload_path) {
  std::ofstream out(index_path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + index_path);
  for (std::size_t i = 0; i < kSequenceColumns.size(); ++i) out << (i ? "\t" : "") << kSequenceColumns[i];
  out << '\n';
  std::vector<float> payload;
  for (const auto& r : dataset.records()) {
    if (!r.sequence) continue;
    out << r.record_id << '\t' << payload.size() << '\t' << r.sequence->n_frames << '\t' << r.sequence->n_coeffs
        << '\n';
    payload.insert(payload.end(), r.sequence->values.begin(), r.sequence->values.end());
  }
  if (!out) throw IoError("write failed: " + index_path);
  binary::write_f32_file(payload_path, payload);
}

// Source table accepted by ingestion: the first six manifest columns followed by
// the vector values inline, one column per element. The header row names the
// six metadata columns; any further header cells are ignored.
inline std::vector<EmbeddingRecord> read_source_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open source table: " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty source table: " + path);
  ++line_no;
  {
    const auto header = detail::split_fields(detail::strip_cr(line));
    if (header.size() < 6 || !std::equal(header.begin(), header.begin() + 6, kManifestColumns.begin())) {
      throw ValidationError(detail::location(path, line_no) + ": malformed source table header");
    }
  }
  std::vector<EmbeddingRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::strip_cr(line);
    if (text.empty()) continue;
    const auto where = detail::location(path, line_no);
    const auto f = detail::split_fields(text);
    if (f.size() < 7) throw ValidationError(where + ": malformed source row (no vector values)");
    EmbeddingRecord r;
    r.record_id = std::string(f[0]);
    const auto modality = parse_modality(f[1]);
    const auto split = parse_split(f[5]);
    if (!modality || !split) throw ValidationError(where + ": malformed source row (modality or split)");
    r.modality = *modality;
    r.class_label = std::string(f[2]);
    r.object_id = std::string(f[3]);
    if (!f[4].empty()) r.speaker_id = std::string(f[4]);
    r.split = *split;
    r.vector.reserve(f.size() - 6);
    for (std::size_t i = 6; i < f.size(); ++i) {
      const auto v = detail::parse_number<float>(f[i]);
      if (!v || !std::isfinite(*v)) throw ValidationError(where + ": malformed vector value '" + std::string(f[i]) + "'");
      r.vector.push_back(*v);
    }
    records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Speaker traits

enum class Gender { man, woman, undetermined };

struct SpeakerTraits {
  std::string speaker_id;
  Gender gender = Gender::undetermined;
  bool accent = false;
  bool creak = false;
  bool hoarseness = false;
  int muffledness = 1;       // 1..4
  int volume = 2;            // 1..4, 2 is average
  int background_noise = 1;  // 1..4, 1 is average

  bool operator==(const SpeakerTraits&) const = default;
};

using TraitTable = std::map<std::string, SpeakerTraits>;

inline constexpr std::array<std::string_view, 8> kTraitColumns = {
    "speaker_id", "gender", "accent", "creak", "hoarseness", "muffledness", "volume", "background_noise"};

inline std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::man: return "man";
    case Gender::woman: return "woman";
    case Gender::undetermined: return "undetermined";
  }
  return "undetermined";
}

inline TraitTable load_traits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open traits file: " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty traits file: " + path);
  ++line_no;
  {
    const auto header = detail::split_fields(detail::strip_cr(line));
    if (header.size() != kTraitColumns.size() ||
        !std::equal(header.begin(), header.end(), kTraitColumns.begin())) {
      throw ValidationError(detail::location(path, line_no) + ": malformed traits header");
    }
  }
  TraitTable table;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::strip_cr(line);
    if (text.empty()) continue;
    const auto where = detail::location(path, line_no);
    const auto f = detail::split_fields(text);
    if (f.size() != kTraitColumns.size()) throw ValidationError(where + ": malformed traits row");
    SpeakerTraits t;
    t.speaker_id = std::string(f[0]);
    if (f[1] == "man") {
      t.gender = Gender::man;
    } else if (f[1] == "woman") {
      t.gender = Gender::woman;
    } else if (f[1] == "undetermined") {
      t.gender = Gender::undetermined;
    } else {
      throw ValidationError(where + ": unknown gender '" + std::string(f[1]) + "'");
    }
    auto binary_trait = [&](std::string_view v, std::string_view name) {
      if (v == "0") return false;
      if (v == "1") return true;
      throw ValidationError(where + ": " + std::string(name) + " must be 0 or 1");
    };
    auto ordinal = [&](std::string_view v, std::string_view name) {
      const auto n = detail::parse_number<int>(v);
      if (!n || *n < 1 || *n > 4) throw ValidationError(where + ": " + std::string(name) + " must be in 1..4");
      return *n;
    };
    t.accent = binary_trait(f[2], "accent");
    t.creak = binary_trait(f[3], "creak");
    t.hoarseness = binary_trait(f[4], "hoarseness");
    t.muffledness = ordinal(f[5], "muffledness");
    t.volume = ordinal(f[6], "volume");
    t.background_noise = ordinal(f[7], "background_noise");
    if (!table.emplace(t.speaker_id, t).second) {
      throw ValidationError(where + ": duplicate trait row for speaker '" + t.speaker_id + "'");
    }
  }
  return table;
}

inline void write_traits(const TraitTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < kTraitColumns.size(); ++i) out << (i ? "\t" : "") << kTraitColumns[i];
  out << '\n';
  for (const auto& [id, t] : table) {
    out << id << '\t' << to_string(t.gender) << '\t' << int(t.accent) << '\t' << int(t.creak) << '\t'
        << int(t.hoarseness) << '\t' << t.muffledness << '\t' << t.volume << '\t' << t.background_noise << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splits

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  bool operator==(const DatasetSplit&) const = default;
};

// Hamilton apportionment of n items over the given weights. Equal remainders go
// to the lower index.
inline std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(n) * weights[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += counts[i];
    remainders.emplace_back(quota - std::floor(quota), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n && k < remainders.size(); ++k, ++assigned) {
    ++counts[remainders[k].second];
  }
  return counts;
}

// Class-stratified split. Records sharing (class_label, object_id) move together
// so a description and its paired percept never straddle splits. Every class
// keeps at least one unit in train.
inline DatasetSplit make_split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  const std::array<double, 3> weights = {ratios.train, ratios.val, ratios.test};
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("split ratios must be positive");
  }
  if (std::abs(weights[0] + weights[1] + weights[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }

  // class -> object -> record indices; ordered maps keep the result independent of record order.
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> units;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    units[r.class_label][r.object_id].push_back(i);
  }

  DatasetSplit split;
  split.seed = seed;
  std::array<std::vector<std::size_t>*, 3> targets = {&split.train, &split.val, &split.test};
  for (auto& [label, objects] : units) {
    if (objects.size() < 2) {
      throw ValidationError("class '" + label + "' has a single record; cannot stratify");
    }
    std::vector<const std::vector<std::size_t>*> class_units;
    for (const auto& [object, members] : objects) class_units.push_back(&members);
    Rng rng(derive_seed(seed, label));
    rng.shuffle(std::span(class_units));

    auto counts = largest_remainder(class_units.size(), weights);
    if (counts[0] == 0) {
      auto donor = counts[1] >= counts[2] ? 1 : 2;
      --counts[donor];
      ++counts[0];
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k, ++pos) {
        targets[s]->insert(targets[s]->end(), class_units[pos]->begin(), class_units[pos]->end());
      }
    }
  }
  for (auto* t : targets) std::sort(t->begin(), t->end());
  return split;
}

// Copy of the dataset with split tags rewritten from the split (others unassigned).
inline Dataset apply_split(const Dataset& dataset, const DatasetSplit& split) {
  std::vector<EmbeddingRecord> records = dataset.records();
  for (auto& r : records) r.split = SplitTag::unassigned;
  for (std::size_t i : split.train) records.at(i).split = SplitTag::train;
  for (std::size_t i : split.val) records.at(i).split = SplitTag::val;
  for (std::size_t i : split.test) records.at(i).split = SplitTag::test;
  return Dataset(std::move(records));
}

// ---------------------------------------------------------------------------
// Per-user selection

struct UserFilter {
  std::size_t min_examples_per_class = 2;
  std::size_t min_classes = 5;
};

struct UserRecords {
  std::string speaker_id;
  std::vector<std::string> classes;  // sorted, each with >= min_examples_per_class records
  std::vector<std::size_t> records;  // retained language records, dataset order

  bool operator==(const UserRecords&) const = default;
};

// Speakers with enough examples per class in enough classes; within each kept
// speaker only the qualifying classes are retained. Sorted by speaker_id.
inline std::vector<UserRecords> filter_users_for_study(const Dataset& dataset, const UserFilter& filter = {}) {
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> by_speaker;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    if (r.modality != Modality::language || !r.speaker_id) continue;
    by_speaker[*r.speaker_id][r.class_label].push_back(i);
  }
  std::vector<UserRecords> users;
  for (const auto& [speaker, classes] : by_speaker) {
    UserRecords user;
    user.speaker_id = speaker;
    for (const auto& [label, records] : classes) {
      if (records.size() < filter.min_examples_per_class) continue;
      user.classes.push_back(label);
      user.records.insert(user.records.end(), records.begin(), records.end());
    }
    if (user.classes.size() < filter.min_classes) continue;
    std::sort(user.records.begin(), user.records.end());
    users.push_back(std::move(user));
  }
  return users;
}

struct RecordSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class: largest-remainder allocation of train_fraction / (1 - train_fraction),
// with at least one test record whenever the class has two or more records.
// Seeds depend only on (seed, class) so identical data yields identical splits
// regardless of whose records they are.
inline RecordSplit stratified_train_test(const Dataset& dataset, std::span<const std::size_t> records,
                                         double train_fraction, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i : records) by_class[dataset[i].class_label].push_back(i);
  RecordSplit out;
  const std::array<double, 2> weights = {train_fraction, 1.0 - train_fraction};
  for (auto& [label, members] : by_class) {
    Rng rng(derive_seed(seed, label));
    rng.shuffle(std::span(members));
    auto counts = largest_remainder(members.size(), weights);
    if (members.size() >= 2 && counts[1] == 0) {
      --counts[0];
      ++counts[1];
    }
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(counts[0]));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(counts[0]), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline constexpr double kUserTrainFraction = 2.0 / 3.0;

inline RecordSplit per_user_split(const Dataset& dataset, const UserRecords& user, std::uint64_t seed) {
  return stratified_train_test(dataset, user.records, kUserTrainFraction, seed);
}

// Vision records whose object_id matches one of the given language records.
inline std::vector<std::size_t> paired_vision(const Dataset& dataset, std::span<const std::size_t> language) {
  std::set<std::pair<std::string, std::string>> wanted;
  for (std::size_t i : language) wanted.emplace(dataset[i].class_label, dataset[i].object_id);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    if (r.modality == Modality::vision && wanted.contains({r.class_label, r.object_id})) out.push_back(i);
  }
  return out;
}

}  // namespace malign
