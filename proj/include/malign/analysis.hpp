#pragma once

// Speaker-trait studies: one manifold per eligible speaker with Pearson
// correlation of per-speaker MRR against annotated traits, and group splits
// that train one manifold per trait group on equal-sized data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "malign/align.hpp"
#include "malign/dataset.hpp"
#include "malign/error.hpp"
#include "malign/eval.hpp"
#include "malign/log.hpp"

namespace malign {

// Population Pearson correlation. nullopt when either input has zero variance.
// Sums are taken about the first element (shifted-data form). Results within a
// few ulps of +-1 are snapped, so exactly (anti)linear data reports exactly +-1.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson inputs differ in length");
  if (x.size() < 2) throw std::invalid_argument("pearson needs at least two observations");
  const double kx = x[0], ky = y[0];
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - kx, dy = y[i] - ky;
    sx += dx;
    sy += dy;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double n = static_cast<double>(x.size());
  const double cxx = n * sxx - sx * sx;
  const double cyy = n * syy - sy * sy;
  const double cxy = n * sxy - sx * sy;
  if (!(cxx > 0.0) || !(cyy > 0.0)) return std::nullopt;
  const double r = cxy / std::sqrt(cxx * cyy);
  constexpr double kSnap = 16 * std::numeric_limits<double>::epsilon();
  if (std::abs(r) >= 1.0 - kSnap) return r > 0 ? 1.0 : -1.0;
  return r;
}

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(std::span<const double>(x), std::span<const double>(y));
}

// ---------------------------------------------------------------------------
// Per-user study

struct StudyConfig {
  TrainConfig train;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;  // evaluation sampling
  UserFilter filter;
};

struct UserStudyResult {
  std::string speaker_id;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_examples = 0;  // retained language records (train + test)
  std::size_t n_classes = 0;
  MrrSummary triplet;
  MrrSummary subset;
  SpeakerTraits traits;
};

struct UserStudy {
  std::vector<UserStudyResult> results;
  std::vector<std::string> excluded;  // eligible speakers that could not be studied
};

// One fresh manifold per eligible speaker, trained on that speaker's training
// descriptions plus their paired percepts. Candidates for retrieval are the
// percepts paired with any of the speaker's retained descriptions. Every user
// shares the same training seed, so identical data gives identical results.
inline UserStudy per_user_study(const Dataset& dataset, const TraitTable& traits, const StudyConfig& config) {
  UserStudy study;
  for (const auto& user : filter_users_for_study(dataset, config.filter)) {
    auto trait = traits.find(user.speaker_id);
    if (trait == traits.end()) {
      log_warning("speaker '" + user.speaker_id + "' has no trait row; excluded from the user study");
      study.excluded.push_back(user.speaker_id);
      continue;
    }
    const auto split = per_user_split(dataset, user, config.train.seed);
    std::set<std::string> train_classes;
    for (std::size_t i : split.train) train_classes.insert(dataset[i].class_label);
    std::vector<std::size_t> train_records = split.train;
    const auto train_vision = paired_vision(dataset, split.train);
    train_records.insert(train_records.end(), train_vision.begin(), train_vision.end());
    EvalScope scope{split.test, paired_vision(dataset, user.records)};
    if (train_classes.size() < config.filter.min_classes || train_vision.empty() || scope.candidates.empty()) {
      log_warning("speaker '" + user.speaker_id + "' has fewer than " + std::to_string(config.filter.min_classes) +
                  " trainable classes with paired percepts; excluded");
      study.excluded.push_back(user.speaker_id);
      continue;
    }
    std::sort(train_records.begin(), train_records.end());
    const auto trained = train<float>(dataset, train_records, config.train);
    const ProjectionTable table(trained.manifold, dataset, scope);

    UserStudyResult r;
    r.speaker_id = user.speaker_id;
    r.n_train = split.train.size();
    r.n_test = split.test.size();
    r.n_examples = user.records.size();
    r.n_classes = user.classes.size();
    r.triplet = retrieval_mrr(table, dataset, scope, RetrievalProtocol::triplet, config.repeats,
                              derive_seed(config.seed, "triplet"));
    r.subset = retrieval_mrr(table, dataset, scope, RetrievalProtocol::subset, config.repeats,
                             derive_seed(config.seed, "subset"));
    r.traits = trait->second;
    study.results.push_back(std::move(r));
  }
  return study;
}

enum class StudyMetric { triplet_mrr, subset_mrr };

inline std::string_view to_string(StudyMetric m) { return m == StudyMetric::triplet_mrr ? "triplet_mrr" : "subset_mrr"; }

struct TraitCorrelation {
  std::string trait;
  std::optional<double> r;  // nullopt: undefined (a constant column)
  std::size_t n = 0;
  std::size_t excluded = 0;  // users left out of this trait (undetermined gender)
};

// Correlates the chosen MRR with each trait. Binary traits are {0, 1},
// ordinals are their raw 1..4 value, gender is man = 0 / woman = 1 with
// undetermined users excluded, and "examples" is the retained example count.
// Hoarseness is not correlated.
inline std::vector<TraitCorrelation> trait_correlations(std::span<const UserStudyResult> results, StudyMetric metric) {
  if (results.size() < 2) throw std::invalid_argument("trait correlation needs at least two users");
  auto score = [&](const UserStudyResult& u) {
    return metric == StudyMetric::triplet_mrr ? u.triplet.mean : u.subset.mean;
  };
  using Encoder = std::function<std::optional<double>(const UserStudyResult&)>;
  const std::vector<std::pair<std::string, Encoder>> columns = {
      {"examples", [](const auto& u) { return std::optional<double>(static_cast<double>(u.n_examples)); }},
      {"accent", [](const auto& u) { return std::optional<double>(u.traits.accent ? 1.0 : 0.0); }},
      {"gender",
       [](const auto& u) -> std::optional<double> {
         if (u.traits.gender == Gender::undetermined) return std::nullopt;
         return u.traits.gender == Gender::woman ? 1.0 : 0.0;
       }},
      {"creak", [](const auto& u) { return std::optional<double>(u.traits.creak ? 1.0 : 0.0); }},
      {"muffledness", [](const auto& u) { return std::optional<double>(u.traits.muffledness); }},
      {"volume", [](const auto& u) { return std::optional<double>(u.traits.volume); }},
      {"background_noise", [](const auto& u) { return std::optional<double>(u.traits.background_noise); }},
  };
  std::vector<TraitCorrelation> table;
  for (const auto& [name, encode] : columns) {
    std::vector<double> xs, ys;
    TraitCorrelation row;
    row.trait = name;
    for (const auto& u : results) {
      const auto x = encode(u);
      if (!x) {
        ++row.excluded;
        continue;
      }
      xs.push_back(*x);
      ys.push_back(score(u));
    }
    row.n = xs.size();
    if (xs.size() >= 2) row.r = pearson(xs, ys);
    table.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Group study

struct GroupDefinition {
  std::string name;
  std::function<bool(const SpeakerTraits&)> member;
};

struct Grouping {
  std::string trait;
  std::vector<GroupDefinition> groups;
};

inline const std::vector<std::string>& grouping_traits() {
  static const std::vector<std::string> names = {"accent", "creak", "gender", "volume", "background_noise",
                                                 "muffledness"};
  return names;
}

// volume low={1} medium={2,3} high={4}; background noise low={1,2} high={3,4};
// muffledness low={1,2} high={3}; accent and creak binary; gender man / woman.
inline Grouping default_grouping(const std::string& trait) {
  if (trait == "accent") {
    return {trait, {{"non-accent", [](const auto& t) { return !t.accent; }},
                    {"accent", [](const auto& t) { return t.accent; }}}};
  }
  if (trait == "creak") {
    return {trait, {{"no-creak", [](const auto& t) { return !t.creak; }},
                    {"creak", [](const auto& t) { return t.creak; }}}};
  }
  if (trait == "gender") {
    return {trait, {{"man", [](const auto& t) { return t.gender == Gender::man; }},
                    {"woman", [](const auto& t) { return t.gender == Gender::woman; }}}};
  }
  if (trait == "volume") {
    return {trait, {{"low", [](const auto& t) { return t.volume == 1; }},
                    {"medium", [](const auto& t) { return t.volume == 2 || t.volume == 3; }},
                    {"high", [](const auto& t) { return t.volume == 4; }}}};
  }
  if (trait == "background_noise") {
    return {trait, {{"low", [](const auto& t) { return t.background_noise <= 2; }},
                    {"high", [](const auto& t) { return t.background_noise >= 3; }}}};
  }
  if (trait == "muffledness") {
    return {trait, {{"low", [](const auto& t) { return t.muffledness <= 2; }},
                    {"high", [](const auto& t) { return t.muffledness == 3; }}}};
  }
  throw ValidationError("unknown grouping trait '" + trait + "'");
}

struct GroupStudyConfig {
  TrainConfig train;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::size_t min_classes = 5;
};

struct GroupSplit {
  std::string trait;
  std::vector<std::string> names;
  std::vector<std::size_t> speakers;  // per group
  std::vector<std::vector<std::size_t>> train;
  std::vector<std::vector<std::size_t>> test;
  std::vector<std::size_t> dropped_test;  // test records removed because their class left training
};

// Throws std::logic_error when any equal-count or coverage invariant fails.
inline void verify_group_split(const Dataset& dataset, const GroupSplit& split) {
  std::set<std::size_t> seen;
  for (std::size_t g = 0; g < split.train.size(); ++g) {
    if (split.train[g].size() != split.train.front().size() || split.test[g].size() != split.test.front().size()) {
      throw std::logic_error("group split counts are not equal across groups");
    }
    std::set<std::string> train_classes;
    for (std::size_t i : split.train[g]) {
      train_classes.insert(dataset[i].class_label);
      if (!seen.insert(i).second) throw std::logic_error("group split reuses a record");
    }
    for (std::size_t i : split.test[g]) {
      if (!train_classes.contains(dataset[i].class_label)) throw std::logic_error("test class unseen in training");
      if (!seen.insert(i).second) throw std::logic_error("group split reuses a record");
    }
  }
}

namespace detail {

// Class-stratified sample of `target` records (largest-remainder quota per class).
inline std::vector<std::size_t> stratified_sample(const Dataset& dataset, std::span<const std::size_t> records,
                                                  std::size_t target, std::uint64_t seed) {
  if (target >= records.size()) return {records.begin(), records.end()};
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i : records) by_class[dataset[i].class_label].push_back(i);
  std::vector<double> weights;
  for (const auto& [label, members] : by_class) weights.push_back(static_cast<double>(members.size()));
  const auto quota = largest_remainder(target, weights);
  std::vector<std::size_t> out;
  std::size_t k = 0;
  for (auto& [label, members] : by_class) {
    Rng rng(derive_seed(seed, label));
    rng.shuffle(std::span(members));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[k++]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Assembles equal-sized train and test sets per group. Larger groups are
// downsampled (class-stratified); test records whose class no longer appears in
// the group's training set are dropped before the test sizes are equalized.
inline GroupSplit build_group_split(const Dataset& dataset, const TraitTable& traits, const Grouping& grouping,
                                    const GroupStudyConfig& config) {
  GroupSplit split;
  split.trait = grouping.trait;
  const std::size_t n_groups = grouping.groups.size();
  std::vector<std::vector<std::size_t>> members(n_groups);
  std::vector<std::set<std::string>> speakers(n_groups);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    if (r.modality != Modality::language || !r.speaker_id) continue;
    auto t = traits.find(*r.speaker_id);
    if (t == traits.end()) continue;
    for (std::size_t g = 0; g < n_groups; ++g) {
      if (grouping.groups[g].member(t->second)) {
        members[g].push_back(i);
        speakers[g].insert(*r.speaker_id);
        break;
      }
    }
  }
  std::vector<RecordSplit> raw(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    split.names.push_back(grouping.groups[g].name);
    split.speakers.push_back(speakers[g].size());
    if (members[g].empty()) throw ValidationError("group '" + grouping.groups[g].name + "' is empty");
    raw[g] = stratified_train_test(dataset, members[g], config.train_fraction, derive_seed(config.seed, "group/split"));
  }

  std::size_t n_train = SIZE_MAX;
  for (const auto& r : raw) n_train = std::min(n_train, r.train.size());
  std::vector<std::vector<std::size_t>> eligible_test(n_groups);
  split.dropped_test.assign(n_groups, 0);
  for (std::size_t g = 0; g < n_groups; ++g) {
    split.train.push_back(detail::stratified_sample(dataset, raw[g].train, n_train, derive_seed(config.seed, "group/train")));
    std::set<std::string> classes;
    for (std::size_t i : split.train[g]) classes.insert(dataset[i].class_label);
    if (classes.size() < config.min_classes) {
      throw ValidationError("group '" + split.names[g] + "' covers only " + std::to_string(classes.size()) +
                            " classes in training (need " + std::to_string(config.min_classes) + ")");
    }
    for (std::size_t i : raw[g].test) {
      if (classes.contains(dataset[i].class_label)) {
        eligible_test[g].push_back(i);
      } else {
        ++split.dropped_test[g];
      }
    }
    if (split.dropped_test[g]) {
      log_info("group '" + split.names[g] + "': dropped " + std::to_string(split.dropped_test[g]) +
               " test record(s) of classes absent from training");
    }
  }
  std::size_t n_test = SIZE_MAX;
  for (const auto& t : eligible_test) n_test = std::min(n_test, t.size());
  if (n_test == 0) throw ValidationError("a group has no usable test records");
  for (std::size_t g = 0; g < n_groups; ++g) {
    split.test.push_back(detail::stratified_sample(dataset, eligible_test[g], n_test, derive_seed(config.seed, "group/test")));
  }
  verify_group_split(dataset, split);
  return split;
}

struct GroupResult {
  std::string name;
  std::size_t speakers = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t dropped_test = 0;
  MrrSummary triplet;
  MrrSummary subset;
};

struct GroupStudyResult {
  std::string trait;
  std::vector<GroupResult> groups;
};

inline GroupStudyResult group_study(const Dataset& dataset, const TraitTable& traits, const Grouping& grouping,
                                    const GroupStudyConfig& config) {
  const auto split = build_group_split(dataset, traits, grouping, config);
  GroupStudyResult out;
  out.trait = grouping.trait;
  for (std::size_t g = 0; g < split.train.size(); ++g) {
    std::vector<std::size_t> train_records = split.train[g];
    const auto vision = paired_vision(dataset, split.train[g]);
    train_records.insert(train_records.end(), vision.begin(), vision.end());
    std::sort(train_records.begin(), train_records.end());
    std::vector<std::size_t> group_language = split.train[g];
    group_language.insert(group_language.end(), split.test[g].begin(), split.test[g].end());
    const EvalScope scope{split.test[g], paired_vision(dataset, group_language)};

    const auto trained = train<float>(dataset, train_records, config.train);
    const ProjectionTable table(trained.manifold, dataset, scope);
    GroupResult r;
    r.name = split.names[g];
    r.speakers = split.speakers[g];
    r.n_train = split.train[g].size();
    r.n_test = split.test[g].size();
    r.dropped_test = split.dropped_test[g];
    r.triplet = retrieval_mrr(table, dataset, scope, RetrievalProtocol::triplet, config.repeats,
                              derive_seed(config.seed, "triplet"));
    r.subset = retrieval_mrr(table, dataset, scope, RetrievalProtocol::subset, config.repeats,
                             derive_seed(config.seed, "subset"));
    out.groups.push_back(std::move(r));
  }
  return out;
}

}  // namespace malign
