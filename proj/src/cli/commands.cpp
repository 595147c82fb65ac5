// SPDX-License-Identifier: Apache-2.0
#include "serdarts/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "serdarts/cell/genotype.hpp"
#include "serdarts/data/audio.hpp"
#include "serdarts/data/features.hpp"
#include "serdarts/data/folds.hpp"
#include "serdarts/models/checkpoint.hpp"
#include "serdarts/models/models.hpp"

namespace serdarts::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Stream shared by concurrently running folds.
class Log {
 public:
  explicit Log(std::ostream* out) : out_(out) {}
  void line(const std::string& text) {
    if (!out_) return;
    std::lock_guard lock(mutex_);
    *out_ << text << '\n' << std::flush;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

ordered_json metrics_json(const optim::EpochMetrics& m) {
  return {{"loss", m.loss}, {"wa", m.wa}, {"ua", m.ua}, {"examples", m.examples}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fold_dir_name(std::size_t fold) { return "fold" + std::to_string(fold); }

// Shared setup of search and train runs: data, folds and the run header.
struct RunSetup {
  std::vector<data::SpectrogramRecord> records;
  data::FoldPlan plan;
  std::string data_fingerprint;
  std::size_t height = 0, width = 0;
};

RunSetup prepare_run(const RunConfig& cfg, const std::string& command) {
  if (cfg.data_path.empty()) throw Error(command + ": no data container given (--data)");
  if (cfg.out_dir.empty()) throw Error(command + ": no output directory given (--out-dir)");
  RunSetup s;
  s.records = data::load_container(cfg.data_path);
  s.data_fingerprint = file_fingerprint(cfg.data_path);
  s.height = s.records.front().height;
  s.width = s.records.front().width;
  RngState fold_rng(cfg.seed);
  s.plan = data::make_folds(s.records, fold_rng, cfg.folds.search_fraction);
  data::validate_fold_plan(s.plan, s.records);

  fs::create_directories(cfg.out_dir);
  write_file(fs::path(cfg.out_dir) / "config.json", cfg.to_json().dump(2) + "\n");
  ordered_json header;
  header["command"] = command;
  header["config_fingerprint"] = cfg.fingerprint();
  header["reduction_indices"] = cfg.network.reduction_indices();
  std::set<std::string> speakers;
  for (const auto& r : s.records) speakers.insert(r.speaker);
  header["data"] = {{"path", cfg.data_path},
                    {"fingerprint", s.data_fingerprint},
                    {"records", s.records.size()},
                    {"speakers", speakers.size()},
                    {"height", s.height},
                    {"width", s.width}};
  header["folds"] = ordered_json::array();
  for (std::size_t f = 0; f < s.plan.folds.size(); ++f) {
    const auto& fold = s.plan.folds[f];
    header["folds"].push_back({{"fold", f},
                               {"test_speakers", fold.test_speakers},
                               {"test", fold.test.size()},
                               {"search", fold.search.size()},
                               {"train", fold.train.size()}});
  }
  header["defaults"] = default_config().to_json();
  write_file(fs::path(cfg.out_dir) / "run.json", header.dump(2) + "\n");
  return s;
}

// Runs `work(fold)` for every configured fold, `parallel` at a time. All
// folds run to completion; the first failure (in fold order) is rethrown
// with its fold id.
template <typename Work>
std::vector<ordered_json> run_folds(const RunConfig& cfg, Work work) {
  const auto& folds = cfg.folds.run;
  std::vector<ordered_json> results(folds.size());
  std::vector<std::string> errors(folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < folds.size(); i = next++) {
      try {
        results[i] = work(folds[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t threads = std::min(cfg.folds.parallel, folds.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < folds.size(); ++i)
    if (!errors[i].empty()) throw Error("fold " + std::to_string(folds[i]) + ": " + errors[i]);
  return results;
}

std::string alpha_record(std::size_t epoch, double entropy) {
  ordered_json j;
  j["epoch"] = epoch;
  j["phase"] = "alpha";
  j["entropy"] = entropy;
  return j.dump();
}

}  // namespace

std::string file_fingerprint(const fs::path& path) { return models::fnv1a_hex(read_file(path)); }

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) throw Error("mean of no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

optim::LabelledData<float> to_labelled(const std::vector<data::SpectrogramRecord>& records,
                                       const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw Error("empty split");
  const std::size_t h = records.front().height, w = records.front().width;
  optim::LabelledData<float> d;
  d.num_classes = data::kNumClasses;
  d.features = Tensor<float>({indices.size(), 1, h, w});
  auto dst = d.features.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& r = records.at(indices[i]);
    if (r.height != h || r.width != w) throw ShapeError("records differ in shape");
    std::copy(r.features.begin(), r.features.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * h * w));
    d.labels.push_back(r.label);
  }
  return d;
}

// ------------------------------------------------------------------ dataset

std::size_t dataset_synth(const SynthOptions& opts) {
  if (opts.out.empty()) throw Error("dataset synth: no output path given (--out)");
  RngState rng(opts.seed);
  const auto records = data::synth_dataset(opts.synth, rng);
  data::save_container(records, opts.out);
  return records.size();
}

std::size_t dataset_prepare(const PrepareOptions& opts, std::ostream* log) {
  if (opts.out.empty()) throw Error("dataset prepare: no output path given (--out)");
  if (opts.labels_csv.empty()) throw Error("dataset prepare: no label file given (--labels-csv)");
  if (!opts.wav_dir.empty()) {
    if (!fs::is_directory(opts.wav_dir)) throw Error("dataset prepare: " + opts.wav_dir.string() + " is not a directory");
    bool any = false;
    for (const auto& entry : fs::directory_iterator(opts.wav_dir)) {
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      any = any || (entry.is_regular_file() && ext == ".wav");
    }
    if (!any) throw Error("dataset prepare: no .wav files in " + opts.wav_dir.string());
  }
  const auto rows = data::read_labels_csv(opts.labels_csv, opts.wav_dir);
  data::MfccExtractor extractor(opts.features);
  std::vector<data::SpectrogramRecord> records;
  for (const auto& row : rows) {
    try {
      data::Utterance u = data::read_wav(row.path);
      u.label = row.label;
      u.speaker = row.speaker;
      const Tensor<float> pooled = data::downsample_time(
          extractor.mfcc(data::pad_or_truncate(u, opts.features.target_seconds)), opts.features.n_mels,
          opts.features.frames);
      data::SpectrogramRecord r;
      r.height = pooled.dim(0);
      r.width = pooled.dim(1);
      r.features.assign(pooled.data().begin(), pooled.data().end());
      r.label = u.label;
      r.speaker = u.speaker;
      records.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(row.path.string() + ": " + e.what());
    }
    if (log) *log << "prepared " << row.path.string() << '\n';
  }
  data::save_container(records, opts.out);
  return records.size();
}

// ------------------------------------------------------------------ search

ordered_json run_search(const RunConfig& cfg, std::ostream* out) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const RunSetup setup = prepare_run(cfg, "search");
  Log log(out);

  auto fold_result = run_folds(cfg, [&](std::size_t f) {
    const auto tf = std::chrono::steady_clock::now();
    const data::Fold& fold = setup.plan.folds[f];
    const fs::path dir = fs::path(cfg.out_dir) / fold_dir_name(f);
    fs::create_directories(dir);
    const auto search_split = to_labelled(setup.records, fold.search);
    const auto train_split = to_labelled(setup.records, fold.train);

    RngState rng = RngState(cfg.seed).fork(1000 + f);
    models::SearchModel<float> model(cfg.network, cfg.head, setup.height, setup.width, rng,
                                     cfg.search.alpha_init_scale);
    optim::Sgd<float> weight_opt(nn::parameters_of(model), cfg.search.weights);
    optim::Adam<float> alpha_opt(model.alphas(), cfg.search.alpha);
    optim::SearchLoopConfig loop{cfg.search.epochs, cfg.search.batch_size, cfg.search.grad_clip, cfg.seed};

    std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw Error("cannot write " + (dir / "metrics.jsonl").string());
    const double lr0 = optim::cosine_lr(cfg.search.weights, 0);
    const auto search0 = optim::probe_epoch(model, search_split, cfg.search.batch_size, rng);
    const auto train0 = optim::probe_epoch(model, train_split, cfg.search.batch_size, rng);
    const double entropy0 = model.alpha_entropy();
    metrics << optim::metrics_record(0, "search", search0, lr0) << '\n'
            << optim::metrics_record(0, "train", train0, lr0) << '\n'
            << alpha_record(0, entropy0) << '\n';

    optim::SearchEpochMetrics last{search0, train0, 0};
    for (std::size_t e = 1; e <= cfg.search.epochs; ++e) {
      const double lr = optim::cosine_lr(cfg.search.weights, e - 1);
      last = optim::search_epoch<float>(model, search_split, train_split, weight_opt, lr, alpha_opt, loop, rng);
      metrics << optim::metrics_record(e, "search", last.search, lr) << '\n'
              << optim::metrics_record(e, "train", last.train, lr) << '\n'
              << alpha_record(e, model.alpha_entropy()) << '\n'
              << std::flush;
      std::ostringstream msg;
      msg << "search fold " << f << " epoch " << e << "/" << cfg.search.epochs << " search loss " << last.search.loss
          << " train loss " << last.train.loss << " alpha entropy " << model.alpha_entropy();
      log.line(msg.str());
    }
    if (!metrics) throw Error("failed writing " + (dir / "metrics.jsonl").string());

    const cell::Genotype genotype = model.genotype();
    const std::string text = cell::export_genotype(genotype);
    write_file(dir / "genotype.json", text + "\n");
    write_file(dir / "genotype.dot", cell::export_dot(genotype));

    ordered_json r;
    r["fold"] = f;
    r["test_speakers"] = fold.test_speakers;
    r["search"] = metrics_json(last.search);
    r["train"] = metrics_json(last.train);
    r["initial_search_loss"] = search0.loss;
    r["alpha_entropy"] = {{"initial", entropy0}, {"final", model.alpha_entropy()}};
    r["genotype"] = ordered_json::parse(text);
    r["seconds"] = seconds_since(tf);
    return r;
  });

  ordered_json report;
  report["command"] = "search";
  report["config_fingerprint"] = cfg.fingerprint();
  report["data_fingerprint"] = setup.data_fingerprint;
  report["reduction_indices"] = cfg.network.reduction_indices();
  report["folds"] = fold_result;
  report["wall_clock_seconds"] = seconds_since(t0);
  write_file(fs::path(cfg.out_dir) / "report.json", report.dump(2) + "\n");
  return report;
}

// ------------------------------------------------------------------ train

namespace {

cell::Genotype genotype_for_fold(const RunConfig& cfg, std::size_t fold) {
  if (cfg.genotype_path.empty()) throw Error("train: the searched model needs --genotype");
  fs::path p = cfg.genotype_path;
  if (fs::is_directory(p)) p = p / fold_dir_name(fold) / "genotype.json";
  return cell::import_genotype(read_file(p));
}

}  // namespace

ordered_json run_train(const RunConfig& cfg, std::ostream* out) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const models::ModelKind kind = models::parse_model_kind(cfg.model);
  if (kind == models::ModelKind::darts && cfg.genotype_path.empty())
    throw Error("train: the searched model needs --genotype");
  const RunSetup setup = prepare_run(cfg, "train");
  Log log(out);

  auto fold_result = run_folds(cfg, [&](std::size_t f) {
    const auto tf = std::chrono::steady_clock::now();
    const data::Fold& fold = setup.plan.folds[f];
    const fs::path dir = fs::path(cfg.out_dir) / fold_dir_name(f);
    fs::create_directories(dir);
    const auto train_split = to_labelled(setup.records, fold.train);
    const auto test_split = to_labelled(setup.records, fold.test);

    models::ModelSpec spec;
    spec.kind = kind;
    spec.network = cfg.network;
    spec.head = cfg.head;
    spec.baseline = cfg.baseline;
    spec.height = setup.height;
    spec.width = setup.width;
    if (kind == models::ModelKind::darts) spec.genotype = genotype_for_fold(cfg, f);
    RngState rng = RngState(cfg.seed).fork(2000 + f);
    models::ModelBundle bundle = models::build_model(spec, rng);
    optim::Sgd<float> opt(nn::parameters_of(*bundle.model), cfg.train.weights);

    std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw Error("cannot write " + (dir / "metrics.jsonl").string());
    const double lr0 = optim::cosine_lr(cfg.train.weights, 0);
    metrics << optim::metrics_record(0, "train", optim::evaluate(*bundle.model, train_split, cfg.eval_batch_size), lr0)
            << '\n'
            << optim::metrics_record(0, "test", optim::evaluate(*bundle.model, test_split, cfg.eval_batch_size), lr0)
            << '\n';
    optim::EpochMetrics last_train;
    for (std::size_t e = 1; e <= cfg.train.epochs; ++e) {
      const double lr = optim::cosine_lr(cfg.train.weights, e - 1);
      last_train = optim::train_epoch(*bundle.model, train_split, opt, lr, cfg.train.batch_size, cfg.train.grad_clip, rng);
      metrics << optim::metrics_record(e, "train", last_train, lr) << '\n' << std::flush;
      std::ostringstream msg;
      msg << "train fold " << f << " epoch " << e << "/" << cfg.train.epochs << " loss " << last_train.loss << " wa "
          << last_train.wa;
      log.line(msg.str());
    }
    const auto test = optim::evaluate(*bundle.model, test_split, cfg.eval_batch_size);
    const double lr_end = optim::cosine_lr(cfg.train.weights, cfg.train.epochs);
    metrics << optim::metrics_record(cfg.train.epochs, "test", test, lr_end) << '\n';
    if (!metrics) throw Error("failed writing " + (dir / "metrics.jsonl").string());

    ordered_json meta;
    meta["fold"] = f;
    meta["seed"] = cfg.seed;
    meta["search_fraction"] = cfg.folds.search_fraction;
    meta["eval_batch_size"] = cfg.eval_batch_size;
    meta["data_fingerprint"] = setup.data_fingerprint;
    meta["config_fingerprint"] = cfg.fingerprint();
    meta["test"] = metrics_json(test);
    models::save_checkpoint(bundle, meta, dir / "model.ckpt");

    ordered_json r;
    r["fold"] = f;
    r["test_speakers"] = fold.test_speakers;
    r["loss"] = test.loss;
    r["wa"] = test.wa;
    r["ua"] = test.ua;
    r["train"] = metrics_json(last_train);
    r["parameter_count"] = bundle.parameter_count;
    r["model_fingerprint"] = bundle.fingerprint;
    if (spec.genotype) r["genotype"] = ordered_json::parse(cell::export_genotype(*spec.genotype));
    r["checkpoint"] = (dir / "model.ckpt").string();
    r["seconds"] = seconds_since(tf);
    return r;
  });

  ordered_json report;
  report["command"] = "train";
  report["model"] = cfg.model;
  report["config_fingerprint"] = cfg.fingerprint();
  report["data_fingerprint"] = setup.data_fingerprint;
  report["folds"] = fold_result;
  for (const char* key : {"wa", "ua", "loss"}) {
    std::vector<double> values;
    for (const auto& r : fold_result) values.push_back(r[key].get<double>());
    const auto [mean, sd] = mean_std(values);
    report["mean"][key] = mean;
    report["std"][key] = sd;
  }
  report["wall_clock_seconds"] = seconds_since(t0);
  write_file(fs::path(cfg.out_dir) / "report.json", report.dump(2) + "\n");
  return report;
}

// ------------------------------------------------------------------ eval

ordered_json run_eval(const fs::path& checkpoint, const fs::path& data_path) {
  models::LoadedCheckpoint loaded = models::load_checkpoint(checkpoint);
  const json& meta = loaded.metadata;
  std::size_t fold = 0, batch = 0;
  std::uint64_t seed = 0;
  double fraction = 0.0;
  std::string stored_fp;
  try {
    fold = meta.at("fold").get<std::size_t>();
    seed = meta.at("seed").get<std::uint64_t>();
    fraction = meta.at("search_fraction").get<double>();
    batch = meta.at("eval_batch_size").get<std::size_t>();
    stored_fp = meta.at("data_fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw Error("checkpoint " + checkpoint.string() + ": incomplete metadata: " + e.what());
  }
  const std::string data_fp = file_fingerprint(data_path);
  if (data_fp != stored_fp) {
    throw Error("fingerprint mismatch: checkpoint was trained on data " + stored_fp + ", " + data_path.string() +
                " is " + data_fp);
  }
  const auto records = data::load_container(data_path);
  RngState fold_rng(seed);
  const auto plan = data::make_folds(records, fold_rng, fraction);
  const auto test = optim::evaluate(*loaded.bundle.model, to_labelled(records, plan.folds.at(fold).test), batch);

  ordered_json r;
  r["fold"] = fold;
  r["loss"] = test.loss;
  r["wa"] = test.wa;
  r["ua"] = test.ua;
  r["examples"] = test.examples;
  if (meta.contains("test")) {
    const auto& stored = meta["test"];
    const double diff = std::max({std::abs(stored.at("wa").get<double>() - test.wa),
                                  std::abs(stored.at("ua").get<double>() - test.ua),
                                  std::abs(stored.at("loss").get<double>() - test.loss)});
    r["stored"] = {{"loss", stored.at("loss")}, {"wa", stored.at("wa")}, {"ua", stored.at("ua")}};
    r["max_abs_difference"] = diff;
    r["matches_stored"] = diff <= 1e-6;
  }
  return r;
}

std::string genotype_dot(const fs::path& genotype) { return cell::export_dot(cell::import_genotype(read_file(genotype))); }

}  // namespace serdarts::cli
