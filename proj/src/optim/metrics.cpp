// SPDX-License-Identifier: Apache-2.0
#include "serdarts/optim/metrics.hpp"

#include "json.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::optim {

ClassificationTally::ClassificationTally(std::size_t num_classes)
    : support_(num_classes, 0), correct_(num_classes, 0) {
  if (num_classes == 0) throw Error("classification tally needs at least one class");
}

void ClassificationTally::add(int label, int prediction) {
  if (label < 0 || static_cast<std::size_t>(label) >= support_.size()) {
    throw Error("label " + std::to_string(label) + " outside [0, " + std::to_string(support_.size()) + ")");
  }
  ++support_[static_cast<std::size_t>(label)];
  ++total_;
  if (label == prediction) {
    ++correct_[static_cast<std::size_t>(label)];
    ++hits_;
  }
}

void ClassificationTally::add(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw Error("labels and predictions differ in length");
  for (std::size_t i = 0; i < labels.size(); ++i) add(labels[i], predictions[i]);
}

double ClassificationTally::weighted_accuracy() const {
  return total_ == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(total_);
}

double ClassificationTally::unweighted_accuracy() const {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < support_.size(); ++k) {
    if (support_[k] == 0) continue;
    sum += static_cast<double>(correct_[k]) / static_cast<double>(support_[k]);
    ++present;
  }
  return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

namespace {

template <typename T>
std::vector<int> argmax_impl(std::span<const T> scores, std::size_t classes) {
  if (classes == 0 || scores.size() % classes != 0) {
    throw ShapeError("argmax_rows: " + std::to_string(scores.size()) + " scores do not split into rows of " +
                     std::to_string(classes));
  }
  std::vector<int> out(scores.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k)
      if (scores[r * classes + k] > scores[r * classes + best]) best = k;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

std::vector<int> argmax_rows(std::span<const float> scores, std::size_t classes) {
  return argmax_impl(scores, classes);
}
std::vector<int> argmax_rows(std::span<const double> scores, std::size_t classes) {
  return argmax_impl(scores, classes);
}

std::string metrics_record(std::size_t epoch, const std::string& phase, const EpochMetrics& m, double lr) {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["phase"] = phase;
  j["loss"] = m.loss;
  j["wa"] = m.wa;
  j["ua"] = m.ua;
  j["lr"] = lr;
  return j.dump();
}

}  // namespace serdarts::optim
