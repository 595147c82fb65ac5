// SPDX-License-Identifier: Apache-2.0
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "serdarts/cli/commands.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::cli {

namespace {

struct RunFlags {
  std::string config;
  std::string data;
  std::string out_dir;
  std::string genotype;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
  std::vector<std::size_t> folds;
  std::string baseline;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration (defaults for omitted keys)")->check(CLI::ExistingFile);
  cmd->add_option("--data", f.data, "SERC1 feature container");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
  cmd->add_option("--epochs", f.epochs, "Override the epoch count");
  cmd->add_option("--seed", f.seed, "Override the seed");
  cmd->add_option("--parallel", f.parallel, "Folds run concurrently");
  cmd->add_option("--folds", f.folds, "Fold ids to run");
}

RunConfig resolve(const RunFlags& f, bool search) {
  RunConfig cfg = f.config.empty() ? default_config() : load_config(f.config);
  if (!f.data.empty()) cfg.data_path = f.data;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.genotype.empty()) cfg.genotype_path = f.genotype;
  if (!f.baseline.empty()) cfg.model = f.baseline;
  if (f.epochs) (search ? cfg.search.epochs : cfg.train.epochs) = *f.epochs;
  if (f.seed) cfg.seed = *f.seed;
  if (f.parallel) cfg.folds.parallel = *f.parallel;
  if (!f.folds.empty()) cfg.folds.run = f.folds;
  cfg.search.weights.total_epochs = cfg.search.epochs;
  cfg.train.weights.total_epochs = cfg.train.epochs;
  cfg.validate();
  return cfg;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Differentiable architecture search for speech emotion recognition"};
  app.require_subcommand(1);

  auto* dataset = app.add_subcommand("dataset", "Build feature containers");
  dataset->require_subcommand(1);
  SynthOptions synth;
  auto* synth_cmd = dataset->add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--n", synth.synth.n, "Records")->capture_default_str();
  synth_cmd->add_option("--speakers", synth.synth.speakers, "Speakers")->capture_default_str();
  synth_cmd->add_option("--size", synth.synth.size, "Height and width")->capture_default_str();
  synth_cmd->add_option("--snr-db", synth.synth.snr_db, "Signal to noise ratio in dB")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output container")->required();

  PrepareOptions prepare;
  std::string prepare_config;
  auto* prepare_cmd = dataset->add_subcommand("prepare", "Extract features from labelled WAV files");
  prepare_cmd->add_option("--wav-dir", prepare.wav_dir, "Directory holding the WAV files")->required();
  prepare_cmd->add_option("--labels-csv", prepare.labels_csv, "CSV with columns path,label,speaker")->required();
  prepare_cmd->add_option("--out", prepare.out, "Output container")->required();
  prepare_cmd->add_option("--config", prepare_config, "JSON run configuration (features section)")
      ->check(CLI::ExistingFile);

  RunFlags search_flags;
  auto* search_cmd = app.add_subcommand("search", "Architecture search on every fold");
  add_run_flags(search_cmd, search_flags);

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train and test a model on every fold");
  add_run_flags(train_cmd, train_flags);
  train_cmd->add_option("--genotype", train_flags.genotype, "Genotype file or search output directory");
  train_cmd->add_option("--baseline", train_flags.baseline, "Train a baseline instead of the searched model")
      ->check(CLI::IsMember({"cnn", "cnn_lstm", "cnn_lstm_attention"}));

  std::string checkpoint, eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "Recompute test metrics from a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "SERC1 feature container")->required()->check(CLI::ExistingFile);

  auto* genotype_cmd = app.add_subcommand("genotype", "Genotype utilities");
  genotype_cmd->require_subcommand(1);
  std::string genotype_in, dot_out;
  auto* dot_cmd = genotype_cmd->add_subcommand("export-dot", "Render a genotype as Graphviz DOT");
  dot_cmd->add_option("--genotype,genotype", genotype_in, "Genotype file")->required()->check(CLI::ExistingFile);
  dot_cmd->add_option("--out", dot_out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth_cmd->parsed()) {
      const std::size_t n = dataset_synth(synth);
      std::cout << "wrote " << n << " records to " << synth.out.string() << '\n';
    } else if (prepare_cmd->parsed()) {
      if (!prepare_config.empty()) prepare.features = load_config(prepare_config).features;
      const std::size_t n = dataset_prepare(prepare, &std::cerr);
      std::cout << "wrote " << n << " records to " << prepare.out.string() << '\n';
    } else if (search_cmd->parsed()) {
      const auto report = run_search(resolve(search_flags, true), &std::cerr);
      std::cout << report.dump(2) << '\n';
    } else if (train_cmd->parsed()) {
      const auto report = run_train(resolve(train_flags, false), &std::cerr);
      std::cout << report.dump(2) << '\n';
    } else if (eval_cmd->parsed()) {
      const auto result = run_eval(checkpoint, eval_data);
      std::cout << result.dump(2) << '\n';
      if (result.contains("matches_stored") && !result["matches_stored"].get<bool>()) {
        std::cerr << "error: recomputed metrics differ from the stored ones\n";
        return 1;
      }
    } else if (dot_cmd->parsed()) {
      const std::string dot = genotype_dot(genotype_in);
      if (dot_out.empty()) {
        std::cout << dot;
      } else {
        std::ofstream out(dot_out, std::ios::trunc);
        out << dot;
        if (!out) throw Error("cannot write " + dot_out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace serdarts::cli
