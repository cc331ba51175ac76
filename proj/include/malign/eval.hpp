#pragma once

// Retrieval and threshold-classification evaluation over a trained manifold.
//
// Retrieval: each language query ranks a small candidate set of vision records
// by cosine distance (ties broken by record_id) and scores 1/rank of its own
// paired percept. The triplet protocol uses {target, same-class other object,
// other-class object}; the subset protocol uses the target plus one object from
// each of four distinct other classes.
//
// Threshold classification: for each query, every same-class percept is a
// positive and an equal number of other-class percepts are sampled as
// negatives; a pair is predicted positive when its normalized distance
// (cosine distance / 2) is <= t.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "malign/align.hpp"
#include "malign/dataset.hpp"
#include "malign/error.hpp"
#include "malign/rng.hpp"

namespace malign {

// (1/M) * sum(1 / rank_i). Ranks are 1-based.
inline double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr of an empty rank list");
  double sum = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("ranks are 1-based");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(ranks.size());
}

inline double mrr(const std::vector<std::size_t>& ranks) { return mrr(std::span<const std::size_t>(ranks)); }

// Queries are language records; candidates are the vision records they may retrieve.
struct EvalScope {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> candidates;
};

inline EvalScope scope_for_split(const Dataset& dataset, SplitTag split) {
  EvalScope scope;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].split != split) continue;
    (dataset[i].modality == Modality::language ? scope.queries : scope.candidates).push_back(i);
  }
  return scope;
}

// Manifold coordinates of every record in a scope, computed once.
class ProjectionTable {
 public:
  template <typename Scalar>
  ProjectionTable(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalScope& scope) {
    std::vector<std::size_t> records = scope.queries;
    records.insert(records.end(), scope.candidates.begin(), scope.candidates.end());
    std::sort(records.begin(), records.end());
    records.erase(std::unique(records.begin(), records.end()), records.end());
    const auto projected = project_all(manifold, dataset, records);
    dim_ = static_cast<std::size_t>(projected.rows());
    values_.resize(static_cast<std::size_t>(projected.size()));
    for (Eigen::Index i = 0; i < projected.size(); ++i) values_[static_cast<std::size_t>(i)] = static_cast<double>(projected.data()[i]);
    for (std::size_t c = 0; c < records.size(); ++c) column_.emplace(records[c], c);
  }

  // Builds a table from externally supplied points (one row per record).
  ProjectionTable(std::span<const std::size_t> records, const std::vector<std::vector<double>>& points) {
    dim_ = points.empty() ? 0 : points.front().size();
    for (std::size_t c = 0; c < records.size(); ++c) {
      column_.emplace(records[c], c);
      values_.insert(values_.end(), points[c].begin(), points[c].end());
    }
  }

  std::span<const double> operator[](std::size_t record) const {
    return std::span<const double>(values_).subspan(column_.at(record) * dim_, dim_);
  }

  double distance(std::size_t a, std::size_t b) const { return cosine_distance((*this)[a], (*this)[b]); }

 private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::unordered_map<std::size_t, std::size_t> column_;
};

// ---------------------------------------------------------------------------
// Retrieval

enum class RetrievalProtocol { triplet, subset };

inline std::size_t candidate_count(RetrievalProtocol p) { return p == RetrievalProtocol::triplet ? 3 : 5; }

struct MrrSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over repeats
  std::vector<double> per_repeat;
  std::size_t queries = 0;  // evaluated queries per repeat
  std::size_t skipped = 0;  // queries without a valid candidate set
};

namespace detail {

struct CandidateIndex {
  std::vector<std::string> classes;                 // classes with at least one candidate
  std::map<std::string, std::size_t> class_index;
  std::vector<std::vector<std::size_t>> by_class;   // candidate records per class
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_object;

  CandidateIndex(const Dataset& dataset, std::span<const std::size_t> candidates) {
    std::map<std::string, std::vector<std::size_t>> grouped;
    for (std::size_t i : candidates) {
      grouped[dataset[i].class_label].push_back(i);
      by_object[{dataset[i].class_label, dataset[i].object_id}].push_back(i);
    }
    for (auto& [label, members] : grouped) {
      class_index[label] = classes.size();
      classes.push_back(label);
      by_class.push_back(std::move(members));
    }
  }

  std::optional<std::size_t> find_class(const std::string& label) const {
    auto it = class_index.find(label);
    if (it == class_index.end()) return std::nullopt;
    return it->second;
  }
};

// 1-based position of `target` after sorting by (distance, record_id).
inline std::size_t rank_of(const Dataset& dataset, const ProjectionTable& table, std::size_t query,
                           std::span<const std::size_t> candidates, std::size_t target) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t c : candidates) scored.emplace_back(table.distance(query, c), c);
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return dataset[a.second].record_id < dataset[b.second].record_id;
  });
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (scored[k].second == target) return k + 1;
  }
  throw std::logic_error("target missing from candidate set");
}

// Draws a candidate set for one query, target first; empty when impossible.
inline std::vector<std::size_t> draw_candidates(const Dataset& dataset, const CandidateIndex& index,
                                                std::size_t query, RetrievalProtocol protocol, Rng& rng) {
  const auto& q = dataset[query];
  const auto cls = index.find_class(q.class_label);
  auto obj = index.by_object.find({q.class_label, q.object_id});
  if (!cls || obj == index.by_object.end()) return {};
  const auto& targets = obj->second;
  const std::size_t target = targets[rng.uniform_index(targets.size())];
  std::vector<std::size_t> chosen = {target};

  std::vector<std::size_t> other_classes;
  for (std::size_t c = 0; c < index.classes.size(); ++c) {
    if (c != *cls) other_classes.push_back(c);
  }

  if (protocol == RetrievalProtocol::triplet) {
    const auto& same = index.by_class[*cls];
    std::vector<std::size_t> distractors;
    for (std::size_t c : same) {
      if (dataset[c].object_id != q.object_id) distractors.push_back(c);
    }
    if (distractors.empty()) {
      for (std::size_t c : same) {
        if (c != target) distractors.push_back(c);
      }
    }
    if (distractors.empty() || other_classes.empty()) return {};
    chosen.push_back(distractors[rng.uniform_index(distractors.size())]);
    const auto& pool = index.by_class[other_classes[rng.uniform_index(other_classes.size())]];
    chosen.push_back(pool[rng.uniform_index(pool.size())]);
  } else {
    if (other_classes.size() < 4) return {};
    for (std::size_t k = 0; k < 4; ++k) {
      std::swap(other_classes[k], other_classes[k + rng.uniform_index(other_classes.size() - k)]);
      const auto& pool = index.by_class[other_classes[k]];
      chosen.push_back(pool[rng.uniform_index(pool.size())]);
    }
  }
  return chosen;
}

inline void summarize(MrrSummary& s) {
  s.mean = std::accumulate(s.per_repeat.begin(), s.per_repeat.end(), 0.0) / static_cast<double>(s.per_repeat.size());
  double var = 0.0;
  for (double v : s.per_repeat) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(s.per_repeat.size()));
}

}  // namespace detail

// Retrieval MRR over `repeats` independent candidate draws.
inline MrrSummary retrieval_mrr(const ProjectionTable& table, const Dataset& dataset, const EvalScope& scope,
                                RetrievalProtocol protocol, std::size_t repeats, std::uint64_t seed) {
  if (scope.queries.empty()) throw ValidationError("retrieval evaluation needs at least one query");
  if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
  const detail::CandidateIndex index(dataset, scope.candidates);
  MrrSummary summary;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    Rng rng(derive_seed(seed, rep));
    std::vector<std::size_t> ranks;
    std::size_t skipped = 0;
    for (std::size_t q : scope.queries) {
      const auto candidates = detail::draw_candidates(dataset, index, q, protocol, rng);
      if (candidates.empty()) {
        ++skipped;
        continue;
      }
      ranks.push_back(detail::rank_of(dataset, table, q, candidates, candidates.front()));
    }
    if (ranks.empty()) throw ValidationError("no query has a complete candidate set");
    summary.per_repeat.push_back(mrr(ranks));
    summary.queries = ranks.size();
    summary.skipped = skipped;
  }
  detail::summarize(summary);
  return summary;
}

template <typename Scalar>
MrrSummary triplet_mrr_eval(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalScope& scope,
                            std::size_t repeats, std::uint64_t seed) {
  const ProjectionTable table(manifold, dataset, scope);
  return retrieval_mrr(table, dataset, scope, RetrievalProtocol::triplet, repeats, seed);
}

template <typename Scalar>
MrrSummary subset_mrr_eval(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalScope& scope,
                           std::size_t repeats, std::uint64_t seed) {
  const ProjectionTable table(manifold, dataset, scope);
  return retrieval_mrr(table, dataset, scope, RetrievalProtocol::subset, repeats, seed);
}

// ---------------------------------------------------------------------------
// Threshold classification

struct ScoredPair {
  double score = 0.0;  // normalized distance in [0, 1]
  bool positive = false;
  std::size_t query = 0;
  std::size_t candidate = 0;
};

struct ThresholdPairs {
  std::vector<ScoredPair> pairs;
  std::size_t skipped = 0;  // queries whose class has no percept in scope
};

inline ThresholdPairs build_threshold_pairs(const ProjectionTable& table, const Dataset& dataset,
                                            const EvalScope& scope, std::uint64_t seed) {
  const detail::CandidateIndex index(dataset, scope.candidates);
  Rng rng(seed);
  ThresholdPairs out;
  for (std::size_t q : scope.queries) {
    const auto cls = index.find_class(dataset[q].class_label);
    if (!cls) {
      ++out.skipped;
      continue;
    }
    const auto& positives = index.by_class[*cls];
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < index.classes.size(); ++c) {
      if (c != *cls) others.insert(others.end(), index.by_class[c].begin(), index.by_class[c].end());
    }
    const std::size_t n_neg = std::min(positives.size(), others.size());
    for (std::size_t k = 0; k < n_neg; ++k) {
      std::swap(others[k], others[k + rng.uniform_index(others.size() - k)]);
    }
    for (std::size_t c : positives) out.pairs.push_back({table.distance(q, c) / 2.0, true, q, c});
    for (std::size_t k = 0; k < n_neg; ++k) {
      out.pairs.push_back({table.distance(q, others[k]) / 2.0, false, q, others[k]});
    }
  }
  return out;
}

struct Classification {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-averaged precision / recall / F1 with "positive iff score <= t".
inline Classification classify(std::span<const ScoredPair> pairs, double threshold) {
  Classification c;
  c.threshold = threshold;
  for (const auto& p : pairs) {
    const bool predicted = p.score <= threshold;
    if (predicted && p.positive) ++c.tp;
    else if (predicted) ++c.fp;
    else if (p.positive) ++c.fn;
    else ++c.tn;
  }
  c.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  c.f1 = c.tp ? 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn) : 0.0;
  return c;
}

inline constexpr std::size_t kThresholdGridSteps = 100;

struct ThresholdTuning {
  double threshold = 0.0;
  double f1 = 0.0;
  std::vector<Classification> grid;  // t = 0.00, 0.01, ..., 1.00
};

// Argmax of F1 over the 0.01 grid; ties resolve to the smallest t.
inline ThresholdTuning tune_threshold(std::span<const ScoredPair> pairs) {
  ThresholdTuning tuning;
  tuning.f1 = -1.0;
  for (std::size_t i = 0; i <= kThresholdGridSteps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(kThresholdGridSteps);
    auto c = classify(pairs, t);
    if (c.f1 > tuning.f1) {
      tuning.f1 = c.f1;
      tuning.threshold = t;
    }
    tuning.grid.push_back(c);
  }
  return tuning;
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by threshold, hence by fpr
  double auc = 0.0;
};

// Sweeps the threshold over every observed score; trapezoid-rule AUC, so tied
// positive/negative scores contribute one half.
inline RocCurve roc_curve(std::span<const ScoredPair> pairs) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& p : pairs) (p.positive ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("ROC needs both positive and negative pairs");
  std::vector<const ScoredPair*> sorted;
  sorted.reserve(pairs.size());
  for (const auto& p : pairs) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->score < b->score; });

  RocCurve curve;
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double score = sorted[i]->score;
    for (; i < sorted.size() && sorted[i]->score == score; ++i) (sorted[i]->positive ? tp : fp)++;
    curve.points.push_back(
        {score, static_cast<double>(fp) / static_cast<double>(n_neg), static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return curve;
}

// Manifold-level conveniences.
template <typename Scalar>
Classification threshold_eval(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalScope& scope,
                              double threshold, std::uint64_t seed) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must be in [0, 1]");
  const ProjectionTable table(manifold, dataset, scope);
  const auto pairs = build_threshold_pairs(table, dataset, scope, seed);
  return classify(pairs.pairs, threshold);
}

template <typename Scalar>
ThresholdTuning tune_threshold(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalScope& validation,
                               std::uint64_t seed) {
  if (validation.queries.empty()) throw ValidationError("threshold tuning needs validation queries");
  const ProjectionTable table(manifold, dataset, validation);
  const auto pairs = build_threshold_pairs(table, dataset, validation, seed);
  return tune_threshold(pairs.pairs);
}

template <typename Scalar>
RocCurve roc_curve(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalScope& scope,
                   std::uint64_t seed) {
  const ProjectionTable table(manifold, dataset, scope);
  const auto pairs = build_threshold_pairs(table, dataset, scope, seed);
  return roc_curve(pairs.pairs);
}

// ---------------------------------------------------------------------------
// Full report

struct EvalOptions {
  SplitTag test_split = SplitTag::test;
  SplitTag validation_split = SplitTag::val;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
};

struct EvalReport {
  MrrSummary triplet;
  MrrSummary subset;
  ThresholdTuning tuning;       // on validation
  Classification test;          // at the tuned threshold
  RocCurve roc;                 // on the test split
  std::size_t threshold_skipped = 0;
  EvalOptions options;
};

template <typename Scalar>
EvalReport evaluate(const Manifold<Scalar>& manifold, const Dataset& dataset, const EvalOptions& options) {
  reset_zero_norm_warning();
  EvalReport report;
  report.options = options;
  const auto test = scope_for_split(dataset, options.test_split);
  const auto val = scope_for_split(dataset, options.validation_split);
  const ProjectionTable test_table(manifold, dataset, test);
  report.triplet = retrieval_mrr(test_table, dataset, test, RetrievalProtocol::triplet, options.repeats,
                                 derive_seed(options.seed, "triplet"));
  report.subset = retrieval_mrr(test_table, dataset, test, RetrievalProtocol::subset, options.repeats,
                                derive_seed(options.seed, "subset"));
  report.tuning = tune_threshold(manifold, dataset, val, derive_seed(options.seed, "pairs/val"));
  const auto test_pairs = build_threshold_pairs(test_table, dataset, test, derive_seed(options.seed, "pairs/test"));
  report.threshold_skipped = test_pairs.skipped;
  report.test = classify(test_pairs.pairs, report.tuning.threshold);
  report.roc = roc_curve(test_pairs.pairs);
  return report;
}

}  // namespace malign
