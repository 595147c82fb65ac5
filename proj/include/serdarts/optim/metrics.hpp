// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace serdarts::optim {

/// Running confusion counts for a K-class problem.
class ClassificationTally {
 public:
  explicit ClassificationTally(std::size_t num_classes);

  void add(int label, int prediction);
  void add(std::span<const int> labels, std::span<const int> predictions);

  std::size_t total() const { return total_; }
  std::size_t num_classes() const { return support_.size(); }
  /// Overall fraction correct.
  double weighted_accuracy() const;
  /// Mean recall over classes that occur in the labels.
  double unweighted_accuracy() const;

 private:
  std::vector<std::size_t> support_;
  std::vector<std::size_t> correct_;
  std::size_t total_ = 0;
  std::size_t hits_ = 0;
};

struct EpochMetrics {
  double loss = 0.0;  // example-weighted mean
  double wa = 0.0;
  double ua = 0.0;
  std::size_t examples = 0;
};

/// Row-wise argmax of [B x K] scores (first maximum wins).
std::vector<int> argmax_rows(std::span<const float> scores, std::size_t classes);
std::vector<int> argmax_rows(std::span<const double> scores, std::size_t classes);

/// One JSON-lines record: {"epoch","phase","loss","wa","ua","lr"}, no
/// trailing newline.
std::string metrics_record(std::size_t epoch, const std::string& phase, const EpochMetrics& m, double lr);

}  // namespace serdarts::optim
