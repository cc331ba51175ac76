// malign: ingest, train, evaluate and run speaker-trait studies from the shell.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 training, 4 I/O.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "malign/analysis.hpp"
#include "malign/checkpoint.hpp"
#include "malign/dataset.hpp"
#include "malign/eval.hpp"
#include "malign/log.hpp"
#include "malign/mfcc.hpp"
#include "malign/report.hpp"
#include "malign/version.hpp"
#include "malign/wav.hpp"

namespace fs = std::filesystem;
using namespace malign;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kTraining = 3, kIo = 4 };

struct DataArgs {
  std::string manifest;
  std::string vectors;
  std::string sequence_index;
  std::string sequence_data;

  void add(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "Dataset manifest (TSV)")->required();
    cmd->add_option("--vectors", vectors, "Float32 vector container")->required();
    cmd->add_option("--sequence-index", sequence_index, "Frame-sequence sidecar index");
    cmd->add_option("--sequence-data", sequence_data, "Frame-sequence sidecar payload");
  }

  Dataset load() const {
    auto dataset = load_dataset(manifest, vectors);
    if (!sequence_index.empty() || !sequence_data.empty()) {
      if (sequence_index.empty() || sequence_data.empty()) {
        throw ValidationError("--sequence-index and --sequence-data go together");
      }
      dataset = attach_sequences(dataset, sequence_index, sequence_data);
    }
    return dataset;
  }

  Json echo() const {
    return {{"manifest", manifest}, {"vectors", vectors}, {"sequence_index", sequence_index},
            {"sequence_data", sequence_data}};
  }
};

struct TrainArgs {
  TrainConfig config;
  std::string anchor = "class";
  std::string encoder = "mlp";
  std::size_t triplets_per_epoch = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--margin", config.margin, "Triplet margin")->capture_default_str();
    cmd->add_option("--lr", config.learning_rate, "Initial learning rate")->capture_default_str();
    cmd->add_option("--lr-step", config.lr_step_epochs, "Epochs between learning-rate drops")->capture_default_str();
    cmd->add_option("--lr-divisor", config.lr_divisor, "Learning-rate divisor per drop")->capture_default_str();
    cmd->add_option("--batch-size", config.batch_size, "Triplets per Adam step")->capture_default_str();
    cmd->add_option("--triplets-per-epoch", triplets_per_epoch, "Default: training language records");
    cmd->add_option("--anchor-sampling", anchor, "class or record")
        ->check(CLI::IsMember({"class", "record"}))
        ->capture_default_str();
    cmd->add_option("--language-encoder", encoder, "mlp or lstm")
        ->check(CLI::IsMember({"mlp", "lstm"}))
        ->capture_default_str();
    cmd->add_option("--hidden1", config.hidden1)->capture_default_str();
    cmd->add_option("--hidden2", config.hidden2)->capture_default_str();
    cmd->add_option("--output-dim", config.output_dim)->capture_default_str();
    cmd->add_option("--lstm-hidden", config.lstm_hidden)->capture_default_str();
    cmd->add_option("--lstm-tail", config.lstm_tail)->capture_default_str();
    cmd->add_option("--seed", config.seed, "Training seed")->capture_default_str();
  }

  TrainConfig resolve() const {
    TrainConfig c = config;
    c.anchor_sampling = anchor == "record" ? AnchorSampling::per_record : AnchorSampling::per_class;
    c.language_architecture = encoder == "lstm" ? LanguageArchitecture::lstm : LanguageArchitecture::mlp;
    if (triplets_per_epoch) c.triplets_per_epoch = triplets_per_epoch;
    c.validate();
    return c;
  }
};

struct OutputArgs {
  std::string dir;

  void add(CLI::App* cmd) {
    cmd->add_option("--output-dir", dir, "Output directory (default: $MALIGN_OUTPUT_DIR or .)");
  }

  std::string path(const std::string& name) const {
    std::string root = dir;
    if (root.empty()) {
      const char* env = std::getenv("MALIGN_OUTPUT_DIR");
      root = env && *env ? env : ".";
    }
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create output directory " + root + ": " + ec.message());
    return (fs::path(root) / name).string();
  }
};

SplitTag split_arg(const std::string& name) {
  const auto s = parse_split(name);
  if (!s || *s == SplitTag::unassigned) throw ValidationError("unknown split '" + name + "'");
  return *s;
}

// ---------------------------------------------------------------------------
// ingest

// Audio table: the six metadata manifest columns plus a `wav` column whose path
// is resolved against --audio-dir.
std::vector<std::pair<EmbeddingRecord, std::string>> read_audio_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open audio table: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty audio table: " + path);
  const auto header = detail::split_fields(detail::strip_cr(line));
  if (header.size() != 7 || !std::equal(header.begin(), header.begin() + 6, kManifestColumns.begin()) ||
      header[6] != "wav") {
    throw ValidationError(path + ":1: audio table header must be the six metadata columns then 'wav'");
  }
  std::vector<std::pair<EmbeddingRecord, std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::strip_cr(line);
    if (text.empty()) continue;
    const auto f = detail::split_fields(text);
    const auto modality = f.size() == 7 ? parse_modality(f[1]) : std::nullopt;
    const auto split = f.size() == 7 ? parse_split(f[5]) : std::nullopt;
    if (!modality || !split || *modality != Modality::language) {
      throw ValidationError(detail::location(path, line_no) + ": malformed audio row");
    }
    EmbeddingRecord r;
    r.record_id = std::string(f[0]);
    r.modality = *modality;
    r.class_label = std::string(f[2]);
    r.object_id = std::string(f[3]);
    if (!f[4].empty()) r.speaker_id = std::string(f[4]);
    r.split = *split;
    rows.emplace_back(std::move(r), std::string(f[6]));
  }
  return rows;
}

void print_summary(const Dataset& d) {
  std::map<std::string, std::size_t> per_modality, per_class, per_speaker, per_split;
  for (const auto& r : d.records()) {
    ++per_modality[std::string(to_string(r.modality))];
    ++per_class[r.class_label];
    if (r.speaker_id) ++per_speaker[*r.speaker_id];
    ++per_split[std::string(to_string(r.split))];
  }
  std::cout << "records\t" << d.size() << "\n";
  for (const auto& [m, n] : per_modality) {
    std::cout << "modality\t" << m << "\t" << n << "\tdim\t" << d.dim(*parse_modality(m)).value_or(0) << "\n";
  }
  for (const auto& [s, n] : per_split) std::cout << "split\t" << s << "\t" << n << "\n";
  std::cout << "classes\t" << per_class.size() << "\n";
  for (const auto& [c, n] : per_class) std::cout << "class\t" << c << "\t" << n << "\n";
  std::cout << "speakers\t" << per_speaker.size() << "\n";
  for (const auto& [s, n] : per_speaker) std::cout << "speaker\t" << s << "\t" << n << "\n";
}

struct IngestArgs {
  std::vector<std::string> sources;
  std::string audio_table;
  std::string audio_dir = ".";
  std::string featurize;
  bool sequences = false;
  std::int64_t split_seed = -1;
  std::vector<double> ratios = {0.8, 0.1, 0.1};
  MfccConfig mfcc;
};

int cmd_ingest(const IngestArgs& a, const OutputArgs& out) {
  std::vector<EmbeddingRecord> records;
  for (const auto& s : a.sources) {
    auto rows = read_source_table(s);
    records.insert(records.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  if (!a.audio_table.empty()) {
    if (a.featurize != "mfcc") throw ValidationError("--audio-table requires --featurize mfcc");
    const MfccExtractor extractor(a.mfcc);
    for (auto& [record, wav] : read_audio_table(a.audio_table)) {
      const auto clip = read_wav((fs::path(a.audio_dir) / wav).string());
      MfccSequence seq;
      try {
        seq = extractor.compute(clip);
      } catch (const std::invalid_argument& e) {
        throw ValidationError(wav + ": " + e.what());
      }
      const auto pooled = mean_pool(seq);
      record.vector.assign(pooled.begin(), pooled.end());
      if (a.sequences) record.sequence = to_feature_sequence(seq);
      records.push_back(std::move(record));
    }
  }
  if (records.empty()) throw ValidationError("nothing to ingest: give --source and/or --audio-table");
  Dataset dataset(std::move(records));
  if (a.split_seed >= 0) {
    if (a.ratios.size() != 3) throw ValidationError("--ratios takes three values");
    const auto split = make_split(dataset, {a.ratios[0], a.ratios[1], a.ratios[2]},
                                  static_cast<std::uint64_t>(a.split_seed));
    dataset = apply_split(dataset, split);
  }
  write_dataset(dataset, out.path("manifest.tsv"), out.path("vectors.f32"));
  bool any_sequence = false;
  for (const auto& r : dataset.records()) any_sequence |= r.sequence.has_value();
  if (any_sequence) write_sequences(dataset, out.path("sequences.tsv"), out.path("sequences.f32"));
  print_summary(dataset);
  return kOk;
}

// ---------------------------------------------------------------------------
// train / eval

int cmd_train(const DataArgs& data, const TrainArgs& targs, std::size_t f1_every, const OutputArgs& out) {
  const auto config = targs.resolve();
  const auto dataset = data.load();
  const auto train_records = dataset.indices_where(SplitTag::train);
  if (train_records.empty()) throw ValidationError("dataset has no training records; assign a split at ingest");
  const auto val = scope_for_split(dataset, SplitTag::val);
  const bool track_f1 = f1_every > 0 && !val.queries.empty() && !val.candidates.empty();
  const auto f1_seed = derive_seed(config.seed, "f1-curve");

  std::vector<F1Point> f1_points;
  auto on_epoch = [&](const EpochStats& stats, const Manifold<float>& m) {
    log_info("epoch " + std::to_string(stats.epoch) + " lr " + format_number(stats.learning_rate) + " loss " +
             format_number(stats.mean_loss));
    const bool last = stats.epoch + 1 == config.epochs;
    if (track_f1 && (stats.epoch % f1_every == 0 || last)) {
      const auto tuning = tune_threshold(m, dataset, val, f1_seed);
      f1_points.push_back({stats.epoch, tuning.threshold, tuning.f1});
    }
  };
  const auto result = train<float>(dataset, train_records, config, std::nullopt, on_epoch);

  const Json seeds = {{"train", config.seed}, {"f1_curve", f1_seed}};
  Json header = run_header("train", {{"train", to_json(config)}, {"data", data.echo()}, {"f1_every", f1_every}}, seeds);
  save_checkpoint(out.path("checkpoint.bin"), result.manifold, header);
  write_text(out.path("loss_curve.tsv"), loss_curve_tsv(result.history));
  if (track_f1) write_text(out.path("f1_curve.tsv"), f1_curve_tsv(f1_points));
  header["final_loss"] = result.history.back().mean_loss;
  header["train_records"] = train_records.size();
  write_json(out.path("train_report.json"), header);
  std::cout << "final_loss\t" << format_number(result.history.back().mean_loss) << "\n";
  return kOk;
}

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string split = "test";
  std::string validation_split = "val";

  void add(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoints, "Trained manifold (eval: repeat once per training run)")
        ->required();
    cmd->add_option("--repeats", repeats, "Candidate re-draws")->capture_default_str();
    cmd->add_option("--seed", seed, "Evaluation sampling seed")->capture_default_str();
    cmd->add_option("--split", split, "Evaluation split")->capture_default_str();
    cmd->add_option("--validation-split", validation_split, "Threshold tuning split")->capture_default_str();
  }

  const std::string& single_checkpoint() const {
    if (checkpoints.size() != 1) throw ValidationError("this command takes exactly one --checkpoint");
    return checkpoints.front();
  }

  Json echo() const {
    return {{"checkpoints", checkpoints}, {"repeats", repeats}, {"split", split}, {"validation_split", validation_split}};
  }
};

// Mean and population std of one metric over independently trained runs.
Json run_spread(const std::vector<double>& values) {
  double mean = 0.0, var = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  for (double v : values) var += (v - mean) * (v - mean);
  return {{"mean", mean}, {"std", std::sqrt(var / static_cast<double>(values.size()))}, {"per_run", values}};
}

// One report per checkpoint. With several checkpoints (one per training seed)
// the across-run spread is reported next to each run's candidate-resampling spread.
int cmd_eval(const DataArgs& data, const EvalArgs& e, const OutputArgs& out) {
  if (e.repeats == 0) throw ValidationError("--repeats must be >= 1");
  const auto dataset = data.load();
  EvalOptions options;
  options.test_split = split_arg(e.split);
  options.validation_split = split_arg(e.validation_split);
  options.repeats = e.repeats;
  options.seed = e.seed;

  Json runs = Json::array(), train_seeds = Json::array(), checkpoint_meta = Json::array();
  std::vector<double> triplet, subset, f1, auc, threshold;
  for (std::size_t k = 0; k < e.checkpoints.size(); ++k) {
    const auto ck = load_checkpoint(e.checkpoints[k]);
    const auto report = evaluate(ck.manifold, dataset, options);
    runs.push_back(to_json(report));
    train_seeds.push_back(ck.metadata.value("seeds", Json::object()));
    checkpoint_meta.push_back(ck.metadata);
    triplet.push_back(report.triplet.mean);
    subset.push_back(report.subset.mean);
    f1.push_back(report.test.f1);
    auc.push_back(report.roc.auc);
    threshold.push_back(report.tuning.threshold);
    const std::string suffix = e.checkpoints.size() == 1 ? "" : "_run" + std::to_string(k);
    write_text(out.path("roc" + suffix + ".tsv"), roc_tsv(report.roc));
    write_text(out.path("threshold_grid" + suffix + ".tsv"), threshold_grid_tsv(report.tuning));
    std::cout << "run\t" << k << "\ntriplet_mrr\t" << format_number(report.triplet.mean) << "\t"
              << format_number(report.triplet.stddev) << "\nsubset_mrr\t" << format_number(report.subset.mean)
              << "\t" << format_number(report.subset.stddev) << "\nthreshold\t"
              << format_number(report.tuning.threshold) << "\nf1\t" << format_number(report.test.f1) << "\nauc\t"
              << format_number(report.roc.auc) << "\n";
  }

  const Json seeds = {{"eval", e.seed},
                      {"triplet", derive_seed(e.seed, "triplet")},
                      {"subset", derive_seed(e.seed, "subset")},
                      {"pairs_validation", derive_seed(e.seed, "pairs/val")},
                      {"pairs_test", derive_seed(e.seed, "pairs/test")},
                      {"train", train_seeds}};
  Json j = run_header("eval", {{"eval", e.echo()}, {"data", data.echo()}, {"checkpoints", checkpoint_meta}}, seeds);
  j["runs"] = e.checkpoints.size();
  j["report"] = runs.front();
  if (e.checkpoints.size() > 1) {
    j["per_run"] = runs;
    j["across_runs"] = {{"triplet_mrr", run_spread(triplet)}, {"subset_mrr", run_spread(subset)},
                        {"f1", run_spread(f1)},           {"auc", run_spread(auc)},
                        {"tuned_threshold", run_spread(threshold)}};
    std::cout << "across_runs\ttriplet_mrr\t" << format_number(j["across_runs"]["triplet_mrr"]["mean"].get<double>()) << "\t"
              << format_number(j["across_runs"]["triplet_mrr"]["std"].get<double>()) << "\nacross_runs\tsubset_mrr\t"
              << format_number(j["across_runs"]["subset_mrr"]["mean"].get<double>()) << "\t"
              << format_number(j["across_runs"]["subset_mrr"]["std"].get<double>()) << "\n";
  }
  write_json(out.path("eval_report.json"), j);
  return kOk;
}

int cmd_tune(const DataArgs& data, const EvalArgs& e, const OutputArgs& out) {
  const auto dataset = data.load();
  const auto ck = load_checkpoint(e.single_checkpoint());
  const auto seed = derive_seed(e.seed, "pairs/val");
  const auto tuning = tune_threshold(ck.manifold, dataset, scope_for_split(dataset, split_arg(e.validation_split)), seed);
  Json j = run_header("tune-threshold", {{"eval", e.echo()}, {"data", data.echo()}}, {{"eval", e.seed}, {"pairs", seed}});
  j["threshold"] = tuning.threshold;
  j["f1"] = tuning.f1;
  write_json(out.path("threshold.json"), j);
  write_text(out.path("threshold_grid.tsv"), threshold_grid_tsv(tuning));
  std::cout << "threshold\t" << format_number(tuning.threshold) << "\nf1\t" << format_number(tuning.f1) << "\n";
  return kOk;
}

int cmd_roc(const DataArgs& data, const EvalArgs& e, const OutputArgs& out) {
  const auto dataset = data.load();
  const auto ck = load_checkpoint(e.single_checkpoint());
  const auto seed = derive_seed(e.seed, "pairs/test");
  const auto roc = roc_curve(ck.manifold, dataset, scope_for_split(dataset, split_arg(e.split)), seed);
  Json j = run_header("roc", {{"eval", e.echo()}, {"data", data.echo()}}, {{"eval", e.seed}, {"pairs", seed}});
  j["auc"] = roc.auc;
  j["points"] = roc.points.size();
  write_json(out.path("roc.json"), j);
  write_text(out.path("roc.tsv"), roc_tsv(roc));
  std::cout << "auc\t" << format_number(roc.auc) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// studies

int cmd_user_study(const DataArgs& data, const TrainArgs& targs, const std::string& traits_path,
                   std::size_t repeats, std::uint64_t eval_seed, const UserFilter& filter, const OutputArgs& out) {
  StudyConfig config;
  config.train = targs.resolve();
  config.repeats = repeats;
  config.seed = eval_seed;
  config.filter = filter;
  const auto dataset = data.load();
  const auto traits = load_traits(traits_path);
  const auto study = per_user_study(dataset, traits, config);

  Json j = run_header("user-study",
                      {{"train", to_json(config.train)},
                       {"data", data.echo()},
                       {"traits", traits_path},
                       {"repeats", repeats},
                       {"min_examples_per_class", filter.min_examples_per_class},
                       {"min_classes", filter.min_classes},
                       {"user_train_fraction", kUserTrainFraction}},
                      {{"train", config.train.seed}, {"eval", eval_seed}});
  j["users"] = study.results.size();
  j["excluded"] = study.excluded;
  write_text(out.path("user_results.tsv"), user_results_tsv(study.results));
  if (study.results.size() >= 2) {
    for (auto metric : {StudyMetric::subset_mrr, StudyMetric::triplet_mrr}) {
      const auto table = trait_correlations(study.results, metric);
      write_text(out.path("correlations_" + std::string(to_string(metric)) + ".tsv"), correlation_tsv(table));
      Json rows = Json::array();
      for (const auto& row : table) {
        rows.push_back({{"trait", row.trait}, {"r", row.r ? Json(*row.r) : Json("undefined")}, {"n", row.n},
                        {"excluded", row.excluded}});
      }
      j["correlations"][std::string(to_string(metric))] = rows;
    }
  } else {
    log_warning("fewer than two eligible users; correlations skipped");
  }
  write_json(out.path("user_study.json"), j);
  std::cout << "users\t" << study.results.size() << "\nexcluded\t" << study.excluded.size() << "\n";
  return kOk;
}

int cmd_group_study(const DataArgs& data, const TrainArgs& targs, const std::string& traits_path,
                    const std::vector<std::string>& trait_names, std::size_t repeats, std::uint64_t eval_seed,
                    double train_fraction, const OutputArgs& out) {
  GroupStudyConfig config;
  config.train = targs.resolve();
  config.repeats = repeats;
  config.seed = eval_seed;
  config.train_fraction = train_fraction;
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("--train-fraction must be in (0, 1)");
  const auto dataset = data.load();
  const auto traits = load_traits(traits_path);

  Json j = run_header("group-study",
                      {{"train", to_json(config.train)},
                       {"data", data.echo()},
                       {"traits", traits_path},
                       {"repeats", repeats},
                       {"train_fraction", train_fraction},
                       {"min_classes", config.min_classes}},
                      {{"train", config.train.seed}, {"eval", eval_seed}});
  Json studies = Json::array();
  for (const auto& name : trait_names) {
    const auto result = group_study(dataset, traits, default_grouping(name), config);
    write_text(out.path("groups_" + name + ".tsv"), group_tsv(result));
    studies.push_back(to_json(result));
    for (const auto& g : result.groups) {
      std::cout << name << "\t" << g.name << "\t" << g.n_train << "\t" << g.n_test << "\t"
                << format_number(g.triplet.mean) << "\t" << format_number(g.subset.mean) << "\n";
    }
  }
  j["studies"] = studies;
  write_json(out.path("group_study.json"), j);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal manifold alignment toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  OutputArgs out;

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Build a manifest and vector container");
  c_ingest->add_option("--source", ingest.sources, "Source table(s) with inline vectors");
  c_ingest->add_option("--audio-table", ingest.audio_table, "Audio table (metadata + wav path)")
      ;
  c_ingest->add_option("--audio-dir", ingest.audio_dir, "Directory the wav paths are relative to")
      ->check(CLI::ExistingDirectory);
  c_ingest->add_option("--featurize", ingest.featurize, "Audio featurizer")->check(CLI::IsMember({"mfcc"}));
  c_ingest->add_flag("--sequences", ingest.sequences, "Also write per-frame MFCC sequences (LSTM input)");
  c_ingest->add_option("--split-seed", ingest.split_seed, "Assign a stratified split with this seed");
  c_ingest->add_option("--ratios", ingest.ratios, "train val test ratios")->expected(3);
  c_ingest->add_option("--n-mfcc", ingest.mfcc.n_coeffs)->capture_default_str();
  c_ingest->add_option("--n-mels", ingest.mfcc.n_mels)->capture_default_str();
  c_ingest->add_option("--window", ingest.mfcc.window_seconds, "seconds")->capture_default_str();
  c_ingest->add_option("--hop", ingest.mfcc.hop_seconds, "seconds")->capture_default_str();
  out.add(c_ingest);

  DataArgs data;
  TrainArgs targs;
  std::size_t f1_every = 10;
  auto* c_train = app.add_subcommand("train", "Train a manifold");
  data.add(c_train);
  targs.add(c_train);
  c_train->add_option("--f1-every", f1_every, "Validation F1 curve interval in epochs (0: off)")
      ->capture_default_str();
  out.add(c_train);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "MRR, threshold F1 and ROC for a checkpoint");
  auto* c_tune = app.add_subcommand("tune-threshold", "Tune the distance threshold on the validation split");
  auto* c_roc = app.add_subcommand("roc", "ROC points and AUC");
  for (auto* c : {c_eval, c_tune, c_roc}) {
    data.add(c);
    eval.add(c);
    out.add(c);
  }

  std::string traits_path;
  std::size_t study_repeats = 5;
  std::uint64_t study_seed = 0;
  UserFilter filter;
  auto* c_user = app.add_subcommand("user-study", "Per-user models and trait correlations");
  auto* c_group = app.add_subcommand("group-study", "Equal-size trait group models");
  for (auto* c : {c_user, c_group}) {
    data.add(c);
    targs.add(c);
    c->add_option("--traits", traits_path, "Speaker trait table")->required();
    c->add_option("--repeats", study_repeats, "Candidate re-draws")->capture_default_str();
    c->add_option("--eval-seed", study_seed, "Evaluation sampling seed")->capture_default_str();
    out.add(c);
  }
  c_user->add_option("--min-examples-per-class", filter.min_examples_per_class)->capture_default_str();
  c_user->add_option("--min-classes", filter.min_classes)->capture_default_str();
  std::vector<std::string> group_traits = grouping_traits();
  double train_fraction = 0.8;
  c_group->add_option("--trait", group_traits, "Traits to group by (default: all)")
      ->check(CLI::IsMember(grouping_traits()));
  c_group->add_option("--train-fraction", train_fraction)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  set_log_level(quiet ? LogLevel::error : verbose ? LogLevel::info : LogLevel::warning);

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, out);
    if (c_train->parsed()) return cmd_train(data, targs, f1_every, out);
    if (c_eval->parsed()) return cmd_eval(data, eval, out);
    if (c_tune->parsed()) return cmd_tune(data, eval, out);
    if (c_roc->parsed()) return cmd_roc(data, eval, out);
    if (c_user->parsed()) {
      return cmd_user_study(data, targs, traits_path, study_repeats, study_seed, filter, out);
    }
    if (c_group->parsed()) {
      return cmd_group_study(data, targs, traits_path, group_traits, study_repeats, study_seed, train_fraction, out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kTraining;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
