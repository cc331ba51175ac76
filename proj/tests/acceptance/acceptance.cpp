// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "malign/analysis.hpp"
#include "malign/checkpoint.hpp"
#include "malign/eval.hpp"
#include "malign/log.hpp"
#include "malign/mfcc.hpp"
#include "malign/report.hpp"
#include "malign/synthetic.hpp"
#include "support/cohort.hpp"
#include "support/gradient_fixture.hpp"
#include "support/mfcc_fixture.hpp"
#include "support/oracles.hpp"

using namespace malign;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kRandomMrrTolerance = 0.03;
constexpr double kTripletChance = 11.0 / 18.0;   // (1 + 1/2 + 1/3) / 3
constexpr double kSubsetChance = 137.0 / 300.0;  // (1 + ... + 1/5) / 5
constexpr double kDegenerateF1Tolerance = 1e-9;
constexpr std::size_t kGradientSeeds = 20;
constexpr double kGradientPassFraction = 0.99;
constexpr double kOracleTolerance = 1e-12;
constexpr double kGroupMrrGap = 0.05;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return format_number(v); }

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

EvalScope whole_scope(const Dataset& d) {
  EvalScope s;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i].modality == Modality::language ? s.queries : s.candidates).push_back(i);
  return s;
}

// Unstructured data (every vector i.i.d.) through a freshly initialised manifold.
struct RandomBaseline {
  Dataset dataset;
  EvalScope scope;
  std::unique_ptr<ProjectionTable> table;

  RandomBaseline() {
    SyntheticSpec spec;
    spec.classes = 10;
    spec.objects_per_class = 60;
    spec.class_structure = false;
    spec.seed = 101;
    dataset = make_synthetic(spec);
    scope = whole_scope(dataset);
    TrainConfig config;
    config.seed = 102;
    const auto manifold = init_manifold<float>(dataset, config);
    table = std::make_unique<ProjectionTable>(manifold, dataset, scope);
  }
};

Outcome criterion_random_baseline(const RandomBaseline& rb) {
  const auto t = retrieval_mrr(*rb.table, rb.dataset, rb.scope, RetrievalProtocol::triplet, 5, 103);
  const auto s = retrieval_mrr(*rb.table, rb.dataset, rb.scope, RetrievalProtocol::subset, 5, 104);
  Outcome o;
  o.pass = t.queries >= 500 && s.queries >= 500 && std::abs(t.mean - kTripletChance) <= kRandomMrrTolerance &&
           std::abs(s.mean - kSubsetChance) <= kRandomMrrTolerance;
  o.detail = "queries=" + std::to_string(t.queries) + " triplet=" + fmt(t.mean) + " subset=" + fmt(s.mean);
  return o;
}

Outcome criterion_degenerate_f1(const RandomBaseline& rb) {
  const auto pairs = build_threshold_pairs(*rb.table, rb.dataset, rb.scope, 105);
  const auto c = classify(pairs.pairs, 1.0);
  Outcome o;
  o.pass = std::abs(c.f1 - 2.0 / 3.0) <= kDegenerateF1Tolerance;
  o.detail = "pairs=" + std::to_string(pairs.pairs.size()) + " f1=" + fmt(c.f1);
  return o;
}

Outcome criterion_gradients() {
  std::size_t checked = 0, passed = 0, excluded = 0;
  double worst = 0;
  for (auto arch : {LanguageArchitecture::mlp, LanguageArchitecture::lstm}) {
    for (std::uint64_t seed = 1; seed <= kGradientSeeds; ++seed) {
      const auto r = fixture::check_triplet_gradient(arch, seed);
      for (const auto* rep : {&r.language, &r.vision}) {
        checked += rep->checked;
        passed += rep->passed;
        excluded += rep->excluded;
        worst = std::max(worst, rep->max_relative_error);
      }
    }
  }
  Outcome o;
  const double fraction = double(passed) / double(checked);
  o.pass = checked > 0 && fraction >= kGradientPassFraction;
  o.detail = "coords=" + std::to_string(checked) + " pass=" + fmt(fraction) +
             " kink_excluded=" + std::to_string(excluded) + " max_rel=" + fmt(worst);
  return o;
}

Outcome criterion_convergence() {
  SyntheticSpec spec;  // 10 classes x 40 objects, dims 64 / 96
  spec.instance_spread = 0.6;
  spec.seed = 1;
  auto d = make_synthetic(spec);
  d = apply_split(d, make_split(d, {}, 7));
  TrainConfig config;
  config.epochs = 60;
  config.lr_step_epochs = 20;
  config.seed = 3;
  const auto trained = train<float>(d, config);
  EvalOptions options;
  options.seed = 5;
  const auto r = evaluate(trained.manifold, d, options);
  Outcome o;
  o.pass = r.subset.mean >= 0.95 && r.triplet.mean >= 0.90 && r.test.f1 >= 0.90 && r.roc.auc >= 0.95;
  o.detail = "subset=" + fmt(r.subset.mean) + " triplet=" + fmt(r.triplet.mean) + " f1=" + fmt(r.test.f1) +
             " auc=" + fmt(r.roc.auc) + " final_loss=" + fmt(trained.history.back().mean_loss);
  return o;
}

Outcome criterion_metric_oracles() {
  Rng rng(201);
  double auc_err = 0, mrr_err = 0, pearson_err = 0;
  bool exact = true;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> pos(1 + rng.uniform_index(40)), neg(1 + rng.uniform_index(40));
    for (auto& s : pos) s = double(rng.uniform_index(50)) / 50;
    for (auto& s : neg) s = double(rng.uniform_index(50)) / 50;
    std::vector<ScoredPair> pairs;
    for (double s : pos) pairs.push_back({s, true});
    for (double s : neg) pairs.push_back({s, false});
    auc_err = std::max(auc_err, std::abs(roc_curve(pairs).auc - oracle::pairwise_auc(pos, neg)));

    std::vector<std::size_t> ranks(1 + rng.uniform_index(100));
    for (auto& r : ranks) r = 1 + rng.uniform_index(5);
    mrr_err = std::max(mrr_err, std::abs(mrr(ranks) - oracle::direct_mrr(ranks)));

    std::vector<double> x(3 + rng.uniform_index(50)), y(x.size()), lin(x.size()), anti(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal() * 10;
      y[i] = x[i] + rng.normal();
      lin[i] = 2.5 * x[i] - 7;
      anti[i] = -0.5 * x[i] + 3;
    }
    pearson_err = std::max(pearson_err, std::abs(*pearson(x, y) - oracle::two_pass_pearson(x, y)));
    exact = exact && *pearson(x, lin) == 1.0 && *pearson(x, anti) == -1.0;
  }
  Outcome o;
  o.pass = auc_err <= kOracleTolerance && mrr_err <= kOracleTolerance && pearson_err <= kOracleTolerance && exact;
  o.detail = "auc_err=" + fmt(auc_err) + " mrr_err=" + fmt(mrr_err) + " pearson_err=" + fmt(pearson_err) +
             " exact_pm1=" + (exact ? "yes" : "no");
  return o;
}

Outcome criterion_lr_schedule() {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.objects_per_class = 2;
  spec.language_dim = 3;
  spec.vision_dim = 3;
  const auto d = make_synthetic(spec);
  TrainConfig config;  // default schedule: 300 epochs, /10 every 100
  config.hidden1 = 4;
  config.hidden2 = 4;
  config.output_dim = 2;
  config.triplets_per_epoch = 1;
  const auto r = train<float>(d, iota_indices(d.size()), config);
  bool ok = r.history.size() == 300;
  std::size_t bad = 0;
  for (const auto& s : r.history) {
    const double want = s.epoch < 100 ? 1e-3 : s.epoch < 200 ? 1e-4 : 1e-5;
    if (std::abs(s.learning_rate - want) > 1e-3 * want) ++bad;
  }
  Outcome o;
  o.pass = ok && bad == 0;
  o.detail = "epochs=" + std::to_string(r.history.size()) + " lr[0]=" + fmt(r.history[0].learning_rate) +
             " lr[100]=" + fmt(r.history[100].learning_rate) + " lr[200]=" + fmt(r.history[200].learning_rate) +
             " mismatches=" + std::to_string(bad);
  return o;
}

Outcome criterion_mfcc() {
  Outcome o;
  o.pass = true;
  for (const char* name : {"silence", "sine440", "speech"}) {
    const auto c = fixture::compare_mfcc_fixture(std::string(MALIGN_FIXTURE_DIR) + "/mfcc", name);
    const bool ok = c.frames == c.reference_frames && c.coefficients > 0 && c.within == c.coefficients;
    o.pass = o.pass && ok;
    o.detail += std::string(name) + "=" + std::to_string(c.within) + "/" + std::to_string(c.coefficients) +
                "(max_rel " + fmt(c.max_relative_error) + ") ";
  }
  Rng rng(301);
  std::size_t frame_mismatch = 0;
  const MfccExtractor extractor;
  for (int t = 0; t < 100; ++t) {
    AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples.resize(400 + rng.uniform_index(16000));
    for (auto& s : clip.samples) s = float(rng.uniform(-0.5, 0.5));
    const auto seq = extractor.compute(clip);
    if (seq.frames.size() != (clip.samples.size() - 400) / 160 + 1) ++frame_mismatch;
  }
  o.pass = o.pass && frame_mismatch == 0;
  o.detail += "frame_count_mismatches=" + std::to_string(frame_mismatch) + "/100";
  return o;
}

Outcome criterion_traits() {
  Outcome o;
  // Accent speakers' utterances are drowned in noise.
  fixture::CohortSpec spec;
  spec.accent_noise = 2.0;
  spec.seed = 401;
  const auto noisy = fixture::make_cohort(spec);
  StudyConfig study_config;
  study_config.train = fixture::cohort_train_config();
  study_config.seed = 402;
  const auto study = per_user_study(noisy.dataset, noisy.traits, study_config);
  std::optional<double> accent_r;
  if (study.results.size() >= 2) {
    for (const auto& row : trait_correlations(study.results, StudyMetric::subset_mrr))
      if (row.trait == "accent") accent_r = row.r;
  }

  // Planted example-count effect: MRR rises linearly with the example count.
  std::vector<UserStudyResult> planted = study.results;
  for (std::size_t i = 0; i < planted.size(); ++i) {
    planted[i].n_examples = 10 + 3 * i;
    planted[i].subset.mean = 0.4 + 0.02 * double(planted[i].n_examples);
  }
  std::optional<double> examples_r;
  if (planted.size() >= 2) {
    for (const auto& row : trait_correlations(planted, StudyMetric::subset_mrr))
      if (row.trait == "examples") examples_r = row.r;
  }

  // Two identically distributed groups: creak is independent of everything.
  fixture::CohortSpec clean_spec;
  clean_spec.seed = 403;
  const auto clean = fixture::make_cohort(clean_spec);
  GroupStudyConfig group_config;
  group_config.train = fixture::cohort_train_config();
  group_config.seed = 404;
  const auto grouping = default_grouping("creak");
  bool verified = true;
  try {
    verify_group_split(clean.dataset, build_group_split(clean.dataset, clean.traits, grouping, group_config));
  } catch (const std::logic_error&) {
    verified = false;
  }
  const auto groups = group_study(clean.dataset, clean.traits, grouping, group_config);
  const double gap = std::abs(groups.groups[0].subset.mean - groups.groups[1].subset.mean);
  const bool equal = groups.groups[0].n_train == groups.groups[1].n_train &&
                     groups.groups[0].n_test == groups.groups[1].n_test;

  o.pass = study.results.size() == spec.speakers && accent_r && *accent_r < 0 && examples_r && *examples_r > 0.99 &&
           verified && equal && gap < kGroupMrrGap;
  o.detail = "users=" + std::to_string(study.results.size()) +
             " r_accent=" + (accent_r ? fmt(*accent_r) : "undefined") +
             " r_examples=" + (examples_r ? fmt(*examples_r) : "undefined") + " group_gap=" + fmt(gap) +
             " train/test=" + std::to_string(groups.groups[0].n_train) + "/" + std::to_string(groups.groups[0].n_test) +
             " equal_counts=" + (equal && verified ? "yes" : "no");
  return o;
}

// Every stage writes its files into `dir`.
void run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  // ingest
  SyntheticSpec spec;
  spec.classes = 6;
  spec.objects_per_class = 20;
  spec.descriptions_per_object = 2;
  spec.language_dim = 12;
  spec.vision_dim = 10;
  spec.speakers = 6;
  spec.sequence_frames = 5;
  spec.sequence_coeffs = 4;
  spec.seed = 501;
  auto d = make_synthetic(spec);
  d = apply_split(d, make_split(d, {}, 502));
  write_dataset(d, (dir / "manifest.tsv").string(), (dir / "vectors.f32").string());
  write_sequences(d, (dir / "sequences.tsv").string(), (dir / "sequences.f32").string());
  const auto traits = make_synthetic_traits(d, 503);
  write_traits(traits, (dir / "traits.tsv").string());

  // mfcc
  AudioClip clip;
  clip.sample_rate = 16000;
  Rng rng(504);
  clip.samples.resize(6000);
  for (auto& s : clip.samples) s = float(0.2 * rng.normal());
  std::ostringstream mfcc_text;
  for (const auto& f : extract_mfcc(clip).frames) {
    for (double v : f) mfcc_text << fmt(v) << '\t';
    mfcc_text << '\n';
  }
  write_text((dir / "mfcc.tsv").string(), mfcc_text.str());

  // train (MLP and LSTM)
  TrainConfig config;
  config.epochs = 4;
  config.lr_step_epochs = 2;
  config.hidden1 = 32;
  config.hidden2 = 24;
  config.output_dim = 16;
  config.batch_size = 16;
  config.seed = 505;
  const auto trained = train<float>(d, config);
  save_checkpoint((dir / "checkpoint.bin").string(), trained.manifold, {{"train", to_json(config)}});
  write_text((dir / "loss_curve.tsv").string(), loss_curve_tsv(trained.history));
  auto lstm_config = config;
  lstm_config.language_architecture = LanguageArchitecture::lstm;
  lstm_config.lstm_hidden = 6;
  lstm_config.lstm_tail = 3;
  const auto lstm = train<float>(d, lstm_config);
  save_checkpoint((dir / "checkpoint_lstm.bin").string(), lstm.manifold);

  // eval
  EvalOptions options;
  options.seed = 506;
  const auto report = evaluate(load_checkpoint((dir / "checkpoint.bin").string()).manifold, d, options);
  write_json((dir / "eval_report.json").string(), to_json(report));
  write_text((dir / "roc.tsv").string(), roc_tsv(report.roc));
  write_text((dir / "threshold_grid.tsv").string(), threshold_grid_tsv(report.tuning));

  // studies
  StudyConfig study_config;
  study_config.train = config;
  study_config.seed = 507;
  study_config.filter.min_examples_per_class = 2;
  const auto study = per_user_study(d, traits, study_config);
  write_text((dir / "user_results.tsv").string(), user_results_tsv(study.results));
  if (study.results.size() >= 2) {
    write_text((dir / "correlations.tsv").string(),
               correlation_tsv(trait_correlations(study.results, StudyMetric::subset_mrr)));
  }
  GroupStudyConfig group_config;
  group_config.train = config;
  group_config.seed = 508;
  for (const auto& trait : {"accent", "creak"}) {
    try {
      write_text((dir / ("groups_" + std::string(trait) + ".tsv")).string(),
                 group_tsv(group_study(d, traits, default_grouping(trait), group_config)));
    } catch (const ValidationError& e) {
      write_text((dir / ("groups_" + std::string(trait) + ".tsv")).string(), std::string("# ") + e.what() + "\n");
    }
  }
}

Outcome criterion_determinism() {
  const auto root = oracle::scratch_dir("acceptance-determinism");
  run_pipeline(root / "a");
  run_pipeline(root / "b");
  std::size_t files = 0, identical = 0;
  std::string differing;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    ++files;
    const auto name = entry.path().filename();
    if (fs::exists(root / "b" / name) && oracle::read_file(entry.path()) == oracle::read_file(root / "b" / name)) {
      ++identical;
    } else {
      differing += " " + name.string();
    }
  }
  Outcome o;
  o.pass = files >= 15 && identical == files;
  o.detail = "identical=" + std::to_string(identical) + "/" + std::to_string(files) + differing;
  return o;
}

}  // namespace

int main() {
  set_log_level(LogLevel::error);
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("criterion %d %-26s %s  %s  (%.1fs)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  std::unique_ptr<RandomBaseline> rb;
  report(1, "random-baseline-mrr", [&] {
    rb = std::make_unique<RandomBaseline>();
    return criterion_random_baseline(*rb);
  });
  report(2, "degenerate-threshold-f1", [&] {
    if (!rb) return Outcome{false, "baseline setup failed"};
    return criterion_degenerate_f1(*rb);
  });
  report(3, "gradient-oracle", criterion_gradients);
  report(4, "synthetic-convergence", criterion_convergence);
  report(5, "metric-oracles", criterion_metric_oracles);
  report(6, "learning-rate-schedule", criterion_lr_schedule);
  report(7, "mfcc-conformance", criterion_mfcc);
  report(8, "trait-study-machinery", criterion_traits);
  report(9, "determinism", criterion_determinism);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
