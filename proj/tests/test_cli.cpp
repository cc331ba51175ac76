#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "malign/dataset.hpp"
#include "malign/wav.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MALIGN_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

int synth(const fs::path& dir, const std::string& extra = "") {
  const std::string cmd = std::string(MALIGN_SYNTH_PATH) + " --output-dir " + dir.string() +
                          " --classes 6 --objects-per-class 20 --language-dim 8 --vision-dim 10 " + extra +
                          " > /dev/null";
  return std::system(cmd.c_str());
}

std::string data_args(const fs::path& dir) {
  return "--manifest " + (dir / "manifest.tsv").string() + " --vectors " + (dir / "vectors.f32").string();
}

const std::string kSmallNet = " --hidden1 16 --hidden2 16 --output-dim 8 --batch-size 8 ";

}  // namespace

TEST(Cli, IngestSourceTable) {
  const auto dir = oracle::scratch_dir("cli-ingest");
  {
    std::ofstream src(dir / "src.tsv");
    src << "record_id\tmodality\tclass_label\tobject_id\tspeaker_id\tsplit\n"
        << "v1\tvision\tapple\tapple_1\t\ttrain\t0.1\t0.2\t0.3\n"
        << "l1\tlanguage\tapple\tapple_1\tspk1\ttrain\t1\t2\n"
        << "l2\tlanguage\tbowl\tbowl_1\tspk1\ttest\t3\t4\n";
  }
  const auto r = run("ingest --source " + (dir / "src.tsv").string() + " --output-dir " + (dir / "out").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("records\t3"), std::string::npos) << r.out;
  const auto d = malign::load_dataset((dir / "out/manifest.tsv").string(), (dir / "out/vectors.f32").string());
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dim(malign::Modality::vision), 3u);
  EXPECT_EQ(d.dim(malign::Modality::language), 2u);
}

TEST(Cli, IngestRejectsDuplicateIds) {
  const auto dir = oracle::scratch_dir("cli-dup");
  {
    std::ofstream src(dir / "src.tsv");
    src << "record_id\tmodality\tclass_label\tobject_id\tspeaker_id\tsplit\n"
        << "v1\tvision\tapple\tapple_1\t\ttrain\t0.1\n"
        << "v1\tvision\tapple\tapple_2\t\ttrain\t0.2\n";
  }
  EXPECT_EQ(run("ingest --source " + (dir / "src.tsv").string() + " --output-dir " + dir.string()).code, 2);
}

TEST(Cli, IngestAudioAsMfcc) {
  const auto dir = oracle::scratch_dir("cli-audio");
  std::ofstream table(dir / "audio.tsv");
  table << "record_id\tmodality\tclass_label\tobject_id\tspeaker_id\tsplit\twav\n";
  malign::Rng rng(1);
  for (int i = 0; i < 3; ++i) {
    malign::AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples.resize(8000 + 1000 * std::size_t(i));
    for (auto& s : clip.samples) s = static_cast<float>(0.1 * rng.normal());
    const std::string name = "clip" + std::to_string(i) + ".wav";
    malign::write_wav((dir / name).string(), clip);
    table << "l" << i << "\tlanguage\tc" << i << "\to" << i << "\tspk\ttrain\t" << name << "\n";
  }
  table.close();
  const auto r = run("ingest --audio-table " + (dir / "audio.tsv").string() + " --audio-dir " + dir.string() +
                     " --featurize mfcc --sequences --output-dir " + (dir / "out").string());
  ASSERT_EQ(r.code, 0);
  auto d = malign::load_dataset((dir / "out/manifest.tsv").string(), (dir / "out/vectors.f32").string());
  EXPECT_EQ(d.dim(malign::Modality::language), 13u);
  d = malign::attach_sequences(d, (dir / "out/sequences.tsv").string(), (dir / "out/sequences.f32").string());
  EXPECT_EQ(d[0].sequence->n_frames, 1u + (8000 - 400) / 160);
}

TEST(Cli, TrainIsFastAndReproducible) {
  const auto dir = oracle::scratch_dir("cli-train");
  ASSERT_EQ(synth(dir), 0);
  const auto start = std::chrono::steady_clock::now();
  const std::string args = "train " + data_args(dir) + kSmallNet + " --epochs 5 --seed 2 --f1-every 2 --output-dir ";
  ASSERT_EQ(run(args + (dir / "a").string()).code, 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
  ASSERT_EQ(run(args + (dir / "b").string()).code, 0);
  for (const char* f : {"loss_curve.tsv", "f1_curve.tsv", "checkpoint.bin"}) {
    EXPECT_EQ(oracle::read_file(dir / "a" / f), oracle::read_file(dir / "b" / f)) << f;
  }
  const auto report = nlohmann::json::parse(oracle::read_file(dir / "a/train_report.json"));
  EXPECT_EQ(report.at("config").at("train").at("margin"), 0.4);
  EXPECT_EQ(report.at("seeds").at("train"), 2);
}

TEST(Cli, EvalWritesTheReport) {
  const auto dir = oracle::scratch_dir("cli-eval");
  ASSERT_EQ(synth(dir), 0);
  ASSERT_EQ(run("train " + data_args(dir) + kSmallNet + " --epochs 2 --output-dir " + dir.string()).code, 0);
  const auto r = run("eval " + data_args(dir) + " --checkpoint " + (dir / "checkpoint.bin").string() +
                     " --repeats 3 --output-dir " + dir.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("run\t0\ntriplet_mrr\t", 0), 0u) << r.out;
  const auto j = nlohmann::json::parse(oracle::read_file(dir / "eval_report.json"));
  for (const char* key : {"code_version", "command", "seeds", "config", "report"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.at("report").at("triplet_mrr").at("per_repeat").size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "roc.tsv"));
  EXPECT_TRUE(fs::exists(dir / "threshold_grid.tsv"));

  // a second training seed: across-run spread next to the per-run resampling spread
  ASSERT_EQ(run("train " + data_args(dir) + kSmallNet + " --epochs 2 --seed 9 --output-dir " + (dir / "s9").string()).code, 0);
  const auto two = run("eval " + data_args(dir) + " --checkpoint " + (dir / "checkpoint.bin").string() +
                       " --checkpoint " + (dir / "s9/checkpoint.bin").string() + " --output-dir " + (dir / "two").string());
  ASSERT_EQ(two.code, 0);
  const auto jj = nlohmann::json::parse(oracle::read_file(dir / "two/eval_report.json"));
  EXPECT_EQ(jj.at("runs"), 2);
  EXPECT_EQ(jj.at("across_runs").at("subset_mrr").at("per_run").size(), 2u);
  EXPECT_EQ(jj.at("per_run")[1].at("triplet_mrr").at("per_repeat").size(), 5u);
  EXPECT_TRUE(fs::exists(dir / "two/roc_run1.tsv"));

  const std::string ck = " --checkpoint " + (dir / "checkpoint.bin").string() + " --output-dir " + dir.string();
  EXPECT_EQ(run("tune-threshold " + data_args(dir) + ck).code, 0);
  EXPECT_TRUE(fs::exists(dir / "threshold.json"));
  EXPECT_EQ(run("roc " + data_args(dir) + ck).code, 0);
  EXPECT_TRUE(fs::exists(dir / "roc.json"));
}

TEST(Cli, UserAndGroupStudies) {
  const auto dir = oracle::scratch_dir("cli-study");
  ASSERT_EQ(synth(dir, "--descriptions-per-object 4 --speakers 8 --split-seed -1"), 0);
  const std::string common = data_args(dir) + " --traits " + (dir / "traits.tsv").string() + kSmallNet +
                             " --epochs 3 --repeats 2 --output-dir " + dir.string();
  const auto u = run("user-study " + common);
  ASSERT_EQ(u.code, 0) << u.out;
  EXPECT_NE(u.out.find("users\t8"), std::string::npos) << u.out;
  const auto rows = oracle::read_file(dir / "user_results.tsv");
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 9);
  const auto corr = oracle::read_file(dir / "correlations_subset_mrr.tsv");
  EXPECT_NE(corr.find("\naccent\t"), std::string::npos);
  EXPECT_NE(corr.find("\nexamples\t"), std::string::npos);

  const auto g = run("group-study " + common + " --trait volume");
  ASSERT_EQ(g.code, 0);
  const auto text = oracle::read_file(dir / "groups_volume.tsv");
  EXPECT_EQ(text.rfind("# trait\tvolume\n# train_per_group\t", 0), 0u) << text;
}

TEST(Cli, ExitCodes) {
  const auto dir = oracle::scratch_dir("cli-exit");
  ASSERT_EQ(synth(dir), 0);
  EXPECT_EQ(run("eval " + data_args(dir) + " --checkpoint " + (dir / "nope.bin").string()).code, 4);
  EXPECT_EQ(run("train --manifest " + (dir / "nope.tsv").string() + " --vectors x").code, 4);
  EXPECT_EQ(run("train " + data_args(dir) + " --margin -1 --output-dir " + dir.string()).code, 2);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train --no-such-flag").code, 1);
  EXPECT_EQ(run("--version").code, 0);
}
