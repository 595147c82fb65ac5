// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "serdarts/data/container.hpp"
#include "serdarts/rng.hpp"

namespace serdarts::data {

inline constexpr std::size_t kNumFolds = 5;

struct Fold {
  std::vector<std::string> test_speakers;
  std::vector<std::size_t> test;    // record indices
  std::vector<std::size_t> search;  // architecture split
  std::vector<std::size_t> train;   // weight split
};

struct FoldPlan {
  std::vector<Fold> folds;
};

/// Speaker-independent folds: distinct speakers (sorted) are shuffled and cut
/// into five groups whose sizes differ by at most one; each fold tests on one
/// group and splits the remaining records, shuffled, into round(0.7 n)
/// search and n - round(0.7 n) train records.
FoldPlan make_folds(const std::vector<SpectrogramRecord>& records, RngState& rng, double search_fraction = 0.7);

/// Throws unless every fold partitions the record set with the stated test speakers.
void validate_fold_plan(const FoldPlan& plan, const std::vector<SpectrogramRecord>& records);

}  // namespace serdarts::data
