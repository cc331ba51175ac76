#pragma once

// Report emitters: JSON for the structured reports, tab-separated tables for
// curves and study results. Numbers are printed with a fixed format so reruns
// produce byte-identical files.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "malign/analysis.hpp"
#include "malign/checkpoint.hpp"
#include "malign/error.hpp"
#include "malign/eval.hpp"
#include "malign/version.hpp"

namespace malign {

using Json = nlohmann::ordered_json;

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// Header block every report carries.
inline Json run_header(const std::string& command, const Json& config, const Json& seeds) {
  Json j;
  j["code_version"] = kVersion;
  j["command"] = command;
  j["seeds"] = seeds;
  j["config"] = config;
  return j;
}

inline Json to_json(const MrrSummary& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"per_repeat", s.per_repeat}, {"queries", s.queries},
          {"skipped", s.skipped}};
}

inline Json to_json(const Classification& c) {
  return {{"threshold", c.threshold}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
          {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline Json to_json(const EvalReport& r) {
  Json j;
  j["triplet_mrr"] = to_json(r.triplet);
  j["subset_mrr"] = to_json(r.subset);
  j["tuned_threshold"] = r.tuning.threshold;
  j["validation_f1"] = r.tuning.f1;
  j["f1"] = r.test.f1;
  j["test_classification"] = to_json(r.test);
  j["auc"] = r.roc.auc;
  Json points = Json::array();
  for (const auto& p : r.roc.points) points.push_back({p.fpr, p.tpr});
  j["roc_points"] = points;
  j["threshold_queries_skipped"] = r.threshold_skipped;
  j["repeats"] = r.options.repeats;
  j["test_split"] = to_string(r.options.test_split);
  j["validation_split"] = to_string(r.options.validation_split);
  return j;
}

namespace detail {

inline std::string tsv_row(std::initializer_list<std::string> cells) {
  std::string line;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) line += '\t';
    line += c;
    first = false;
  }
  return line + "\n";
}

inline std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : "undefined"; }

}  // namespace detail

inline std::string roc_tsv(const RocCurve& roc) {
  std::string out = detail::tsv_row({"threshold", "fpr", "tpr"});
  for (const auto& p : roc.points) {
    out += detail::tsv_row({format_number(p.threshold), format_number(p.fpr), format_number(p.tpr)});
  }
  return out;
}

inline std::string threshold_grid_tsv(const ThresholdTuning& tuning) {
  std::string out = detail::tsv_row({"threshold", "precision", "recall", "f1"});
  for (const auto& c : tuning.grid) {
    out += detail::tsv_row(
        {format_number(c.threshold), format_number(c.precision), format_number(c.recall), format_number(c.f1)});
  }
  return out;
}

inline std::string loss_curve_tsv(const std::vector<EpochStats>& history) {
  std::string out = detail::tsv_row({"epoch", "learning_rate", "mean_loss", "triplets"});
  for (const auto& s : history) {
    out += detail::tsv_row({std::to_string(s.epoch), format_number(s.learning_rate), format_number(s.mean_loss),
                            std::to_string(s.triplets)});
  }
  return out;
}

struct F1Point {
  std::size_t epoch = 0;
  double threshold = 0.0;
  double f1 = 0.0;
};

inline std::string f1_curve_tsv(const std::vector<F1Point>& points) {
  std::string out = detail::tsv_row({"epoch", "threshold", "validation_f1"});
  for (const auto& p : points) {
    out += detail::tsv_row({std::to_string(p.epoch), format_number(p.threshold), format_number(p.f1)});
  }
  return out;
}

inline std::string user_results_tsv(const std::vector<UserStudyResult>& results) {
  std::string out = detail::tsv_row({"speaker_id", "n_train", "n_test", "n_examples", "n_classes", "triplet_mrr",
                                     "triplet_std", "subset_mrr", "subset_std", "gender", "accent", "creak",
                                     "hoarseness", "muffledness", "volume", "background_noise"});
  for (const auto& r : results) {
    const auto& t = r.traits;
    out += detail::tsv_row({r.speaker_id, std::to_string(r.n_train), std::to_string(r.n_test),
                            std::to_string(r.n_examples), std::to_string(r.n_classes), format_number(r.triplet.mean),
                            format_number(r.triplet.stddev), format_number(r.subset.mean),
                            format_number(r.subset.stddev), std::string(to_string(t.gender)),
                            std::to_string(int(t.accent)), std::to_string(int(t.creak)),
                            std::to_string(int(t.hoarseness)), std::to_string(t.muffledness),
                            std::to_string(t.volume), std::to_string(t.background_noise)});
  }
  return out;
}

inline std::string correlation_tsv(const std::vector<TraitCorrelation>& table) {
  std::string out = detail::tsv_row({"trait", "r", "n", "excluded"});
  for (const auto& row : table) {
    out += detail::tsv_row(
        {row.trait, detail::optional_number(row.r), std::to_string(row.n), std::to_string(row.excluded)});
  }
  return out;
}

// Comment header lines carry the per-group counts so the equal-size control is
// visible without reading the rows.
inline std::string group_tsv(const GroupStudyResult& study) {
  std::string out = "# trait\t" + study.trait + "\n";
  if (!study.groups.empty()) {
    out += "# train_per_group\t" + std::to_string(study.groups.front().n_train) + "\n";
    out += "# test_per_group\t" + std::to_string(study.groups.front().n_test) + "\n";
  }
  out += detail::tsv_row({"group", "speakers", "n_train", "n_test", "dropped_test", "triplet_mrr", "triplet_std",
                          "subset_mrr", "subset_std"});
  for (const auto& g : study.groups) {
    out += detail::tsv_row({g.name, std::to_string(g.speakers), std::to_string(g.n_train), std::to_string(g.n_test),
                            std::to_string(g.dropped_test), format_number(g.triplet.mean),
                            format_number(g.triplet.stddev), format_number(g.subset.mean),
                            format_number(g.subset.stddev)});
  }
  return out;
}

inline Json to_json(const GroupStudyResult& study) {
  Json j;
  j["trait"] = study.trait;
  Json groups = Json::array();
  for (const auto& g : study.groups) {
    groups.push_back({{"group", g.name}, {"speakers", g.speakers}, {"n_train", g.n_train}, {"n_test", g.n_test},
                      {"dropped_test", g.dropped_test}, {"triplet_mrr", to_json(g.triplet)},
                      {"subset_mrr", to_json(g.subset)}});
  }
  j["groups"] = groups;
  return j;
}

}  // namespace malign
