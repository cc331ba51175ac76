#include <gtest/gtest.h>

#include "malign/checkpoint.hpp"
#include "malign/report.hpp"
#include "malign/synthetic.hpp"
#include "support/oracles.hpp"

using namespace malign;

namespace {

Dataset small_dataset(bool sequences = false) {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.objects_per_class = 2;
  spec.language_dim = 5;
  spec.vision_dim = 4;
  if (sequences) {
    spec.sequence_frames = 4;
    spec.sequence_coeffs = 3;
  }
  return make_synthetic(spec);
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden1 = 6;
  c.hidden2 = 5;
  c.output_dim = 4;
  c.lstm_hidden = 3;
  c.lstm_tail = 2;
  return c;
}

}  // namespace

TEST(Checkpoint, MlpRoundTripIsExact) {
  const auto dir = oracle::scratch_dir("checkpoint-mlp");
  const auto d = small_dataset();
  const auto m = init_manifold<float>(d, small_config());
  save_checkpoint((dir / "m.bin").string(), m, {{"note", "x"}});
  const auto ck = load_checkpoint((dir / "m.bin").string());
  EXPECT_EQ(ck.manifold, m);
  EXPECT_EQ(ck.metadata.at("note"), "x");
  EXPECT_EQ(ck.metadata.at("output_dim"), 4);
}

TEST(Checkpoint, LstmRoundTripIsExact) {
  const auto dir = oracle::scratch_dir("checkpoint-lstm");
  const auto d = small_dataset(true);
  auto config = small_config();
  config.language_architecture = LanguageArchitecture::lstm;
  const auto m = init_manifold<float>(d, config);
  save_checkpoint((dir / "m.bin").string(), m);
  const auto ck = load_checkpoint((dir / "m.bin").string());
  EXPECT_EQ(ck.manifold, m);
  EXPECT_EQ(ck.manifold.language_architecture(), LanguageArchitecture::lstm);
}

TEST(Checkpoint, MetadataEchoesTheTrainingConfig) {
  const auto j = to_json(TrainConfig{});
  EXPECT_EQ(j.at("margin"), 0.4);
  EXPECT_EQ(j.at("distance"), "cosine");
  EXPECT_EQ(j.at("epochs"), 300);
  ASSERT_EQ(j.at("lr_schedule").size(), 3u);
  EXPECT_EQ(j.at("lr_schedule")[1].at("from_epoch"), 100);
  EXPECT_NEAR(j.at("lr_schedule")[2].at("learning_rate").get<double>(), 1e-5, 1e-20);
  EXPECT_EQ(j.at("hidden"), Json::array({2048, 1536}));
  EXPECT_EQ(j.at("output_dim"), 1024);
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  const auto dir = oracle::scratch_dir("checkpoint-bad");
  write_text((dir / "foreign.bin").string(), "NOTACKPTxxxxxxxxxxxxxxxx");
  EXPECT_THROW(load_checkpoint((dir / "foreign.bin").string()), IoError);
  EXPECT_THROW(load_checkpoint((dir / "missing.bin").string()), IoError);

  const auto m = init_manifold<float>(small_dataset(), small_config());
  save_checkpoint((dir / "m.bin").string(), m);
  auto bytes = oracle::read_file(dir / "m.bin");
  bytes.resize(bytes.size() - 7);
  write_text((dir / "short.bin").string(), bytes);
  EXPECT_THROW(load_checkpoint((dir / "short.bin").string()), IoError);
}

TEST(Report, NumbersAndTables) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.3333333333");
  EXPECT_EQ(format_number(1e-5), "1e-05");

  std::vector<EpochStats> history = {{0, 1e-3, 0.25, 10}, {1, 1e-3, 0.125, 10}};
  EXPECT_EQ(loss_curve_tsv(history), "epoch\tlearning_rate\tmean_loss\ttriplets\n0\t0.001\t0.25\t10\n1\t0.001\t0.125\t10\n");

  std::vector<TraitCorrelation> corr = {{"accent", -0.5, 10, 0}, {"volume", std::nullopt, 10, 0}};
  EXPECT_EQ(correlation_tsv(corr), "trait\tr\tn\texcluded\naccent\t-0.5\t10\t0\nvolume\tundefined\t10\t0\n");
}

TEST(Report, GroupTableCarriesCounts) {
  GroupStudyResult study;
  study.trait = "creak";
  study.groups.resize(2);
  study.groups[0].name = "no-creak";
  study.groups[1].name = "creak";
  for (auto& g : study.groups) {
    g.n_train = 40;
    g.n_test = 9;
  }
  const auto text = group_tsv(study);
  EXPECT_EQ(text.rfind("# trait\tcreak\n# train_per_group\t40\n# test_per_group\t9\n", 0), 0u) << text;
  EXPECT_NE(text.find("\ncreak\t0\t40\t9\t"), std::string::npos);
}

TEST(Report, EvalJsonFields) {
  EvalReport r;
  r.triplet.per_repeat = {0.5};
  const auto j = to_json(r);
  for (const char* key : {"triplet_mrr", "subset_mrr", "tuned_threshold", "f1", "auc", "roc_points", "repeats"})
    EXPECT_TRUE(j.contains(key)) << key;
  const auto h = run_header("eval", {{"k", 1}}, {{"seed", 2}});
  EXPECT_EQ(h.at("code_version"), kVersion);
  EXPECT_EQ(h.at("command"), "eval");
}
