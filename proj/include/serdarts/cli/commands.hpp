// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "serdarts/cli/config.hpp"
#include "serdarts/data/container.hpp"
#include "serdarts/data/synth.hpp"
#include "serdarts/optim/loop.hpp"

namespace serdarts::cli {

struct SynthOptions {
  data::SynthConfig synth;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct PrepareOptions {
  std::filesystem::path wav_dir;
  std::filesystem::path labels_csv;
  std::filesystem::path out;
  data::MfccConfig features;
};

/// Writes a synthetic SERC1 container; returns the record count.
std::size_t dataset_synth(const SynthOptions& opts);
/// pad/truncate -> MFCC -> time max-pool for every listed WAV; the container
/// is written only after every file converted. Returns the record count.
std::size_t dataset_prepare(const PrepareOptions& opts, std::ostream* log = nullptr);

/// Features [N x 1 x H x W] and labels of the selected records.
optim::LabelledData<float> to_labelled(const std::vector<data::SpectrogramRecord>& records,
                                       const std::vector<std::size_t>& indices);

/// FNV-1a of a file's bytes, 16 hex digits.
std::string file_fingerprint(const std::filesystem::path& path);

/// Mean and sample standard deviation (n - 1; 0 for one value).
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Architecture search per configured fold. Writes config.json, run.json,
/// fold{k}/metrics.jsonl, fold{k}/genotype.json, fold{k}/genotype.dot and
/// report.json under cfg.out_dir; returns the report.
nlohmann::ordered_json run_search(const RunConfig& cfg, std::ostream* log = nullptr);

/// Trains the configured model per fold on the fold's train split and
/// evaluates it on the held-out speakers. `cfg.model` selects the searched
/// model (genotype from cfg.genotype_path: a genotype file or a search
/// output directory) or a baseline. Writes config.json, run.json,
/// fold{k}/metrics.jsonl, fold{k}/model.ckpt and report.json.
nlohmann::ordered_json run_train(const RunConfig& cfg, std::ostream* log = nullptr);

/// Recomputes test-split metrics from a checkpoint and compares them with
/// the values stored at training time.
nlohmann::ordered_json run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data);

/// DOT text for a genotype file.
std::string genotype_dot(const std::filesystem::path& genotype);

/// Entry point of the command-line tool; returns the exit code.
int run_cli(int argc, char** argv);

}  // namespace serdarts::cli
