// SPDX-License-Identifier: Apache-2.0
#include "serdarts/data/folds.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "serdarts/tensor.hpp"

namespace serdarts::data {

FoldPlan make_folds(const std::vector<SpectrogramRecord>& records, RngState& rng, double search_fraction) {
  if (!(search_fraction > 0.0 && search_fraction < 1.0)) throw Error("folds: search fraction must lie in (0, 1)");
  std::set<std::string> distinct;
  for (const auto& r : records) distinct.insert(r.speaker);
  if (distinct.size() < kNumFolds) {
    throw Error("folds: need at least " + std::to_string(kNumFolds) + " distinct speakers, got " +
                std::to_string(distinct.size()));
  }
  std::vector<std::string> speakers(distinct.begin(), distinct.end());
  rng.shuffle(speakers.begin(), speakers.end());

  FoldPlan plan;
  const std::size_t base = speakers.size() / kNumFolds, extra = speakers.size() % kNumFolds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < kNumFolds; ++f) {
    Fold fold;
    const std::size_t take = base + (f < extra ? 1 : 0);
    fold.test_speakers.assign(speakers.begin() + static_cast<std::ptrdiff_t>(pos),
                              speakers.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
    const std::set<std::string> held(fold.test_speakers.begin(), fold.test_speakers.end());
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < records.size(); ++i) (held.count(records[i].speaker) ? fold.test : rest).push_back(i);
    rng.shuffle(rest.begin(), rest.end());
    const auto n_search = static_cast<std::size_t>(std::llround(search_fraction * static_cast<double>(rest.size())));
    fold.search.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_search));
    fold.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_search), rest.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

void validate_fold_plan(const FoldPlan& plan, const std::vector<SpectrogramRecord>& records) {
  if (plan.folds.size() != kNumFolds) throw Error("folds: expected 5 folds");
  std::set<std::string> all_test;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const Fold& fold = plan.folds[f];
    const std::string where = "fold " + std::to_string(f) + ": ";
    const std::set<std::string> held(fold.test_speakers.begin(), fold.test_speakers.end());
    for (const auto& s : held)
      if (!all_test.insert(s).second) throw Error(where + "speaker " + s + " is tested in two folds");
    std::vector<int> seen(records.size(), 0);
    auto mark = [&](const std::vector<std::size_t>& idx, bool test) {
      for (std::size_t i : idx) {
        if (i >= records.size()) throw Error(where + "record index out of range");
        if (seen[i]++) throw Error(where + "record " + std::to_string(i) + " appears in two roles");
        if (held.count(records[i].speaker) != (test ? 1u : 0u)) {
          throw Error(where + "record " + std::to_string(i) + " is on the wrong side of the speaker split");
        }
      }
    };
    mark(fold.test, true);
    mark(fold.search, false);
    mark(fold.train, false);
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw Error(where + "some records are unassigned");
    const double rest = static_cast<double>(fold.search.size() + fold.train.size());
    if (std::abs(static_cast<double>(fold.search.size()) - 0.7 * rest) > 1.0) {
      throw Error(where + "search/train split is not 70/30 within one record");
    }
  }
}

}  // namespace serdarts::data
