// Writes a synthetic paired dataset (manifest, vectors, traits) for trying the CLI.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "malign/dataset.hpp"
#include "malign/synthetic.hpp"

using namespace malign;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic paired language/vision dataset"};
  SyntheticSpec spec;
  std::string out_dir = ".";
  std::int64_t split_seed = 7;
  std::uint64_t trait_seed = 11;
  bool sequences = false;
  app.add_option("--classes", spec.classes)->capture_default_str();
  app.add_option("--objects-per-class", spec.objects_per_class)->capture_default_str();
  app.add_option("--descriptions-per-object", spec.descriptions_per_object)->capture_default_str();
  app.add_option("--language-dim", spec.language_dim)->capture_default_str();
  app.add_option("--vision-dim", spec.vision_dim)->capture_default_str();
  app.add_option("--latent-dim", spec.latent_dim)->capture_default_str();
  app.add_option("--instance-spread", spec.instance_spread)->capture_default_str();
  app.add_option("--noise", spec.noise)->capture_default_str();
  app.add_option("--speakers", spec.speakers, "0: no speaker ids")->capture_default_str();
  app.add_option("--seed", spec.seed)->capture_default_str();
  app.add_option("--split-seed", split_seed, "-1: leave records unassigned")->capture_default_str();
  app.add_option("--trait-seed", trait_seed)->capture_default_str();
  app.add_flag("--sequences", sequences, "Attach 20-frame language sequences");
  app.add_option("--output-dir", out_dir)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    if (sequences) spec.sequence_frames = 20;
    auto dataset = make_synthetic(spec);
    if (split_seed >= 0) dataset = apply_split(dataset, make_split(dataset, {}, static_cast<std::uint64_t>(split_seed)));
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_dataset(dataset, (dir / "manifest.tsv").string(), (dir / "vectors.f32").string());
    if (sequences) write_sequences(dataset, (dir / "sequences.tsv").string(), (dir / "sequences.f32").string());
    if (spec.speakers) write_traits(make_synthetic_traits(dataset, trait_seed), (dir / "traits.tsv").string());
    std::cout << "records\t" << dataset.size() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
