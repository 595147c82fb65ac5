// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "serdarts/autograd.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts {

/// One probed coordinate of a gradient check.
struct GradProbe {
  std::size_t coord;
  double analytic;
  double numeric;

  /// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
  double relative_error() const {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
  }
};

/// Reverse-mode gradient of a scalar function next to central differences,
/// coordinate by coordinate, at 64-bit precision. Uses the symmetric
/// five-point stencil (truncation error O(eps^4)).
///
/// `f` is invoked with no arguments and must read `x` (and may read other
/// tensors). When `coords` is empty every coordinate of `x` is probed.
template <typename F>
std::vector<GradProbe> grad_check_report(F&& f, Tensor<double>& x, double eps,
                                         std::span<const std::size_t> coords = {}) {
  if (!(eps > 0.0)) throw Error("grad_check: step must be positive, got " + std::to_string(eps));
  if (!x.is_leaf()) throw Error("grad_check: probed tensor must be a leaf");

  // Restores the caller's tracking flag on every exit path.
  struct TrackedRestore {
    Tensor<double>& t;
    bool was;
    ~TrackedRestore() { t.set_tracked(was); }
  } restore{x, x.tracked()};
  x.set_tracked(true);
  x.zero_grad();
  {
    Tensor<double> loss = f();
    if (loss.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    if (!std::isfinite(loss.item())) throw Error("grad_check: function is non-finite at the base point");
    backward(loss);
  }
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  std::vector<std::size_t> probe(coords.begin(), coords.end());
  if (probe.empty()) {
    probe.resize(x.numel());
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
  }

  auto evaluate = [&]() {
    NoGradGuard guard;
    const double value = f().item();
    if (!std::isfinite(value)) throw Error("grad_check: function is non-finite at a probe point");
    return value;
  };

  std::vector<GradProbe> report;
  auto values = x.data();
  for (std::size_t c : probe) {
    if (c >= values.size()) throw Error("grad_check: probe coordinate out of range");
    const double original = values[c];
    auto at = [&](double offset) {
      values[c] = original + offset;
      return evaluate();
    };
    const double plus = at(eps), minus = at(-eps);
    const double plus2 = at(2 * eps), minus2 = at(-2 * eps);
    values[c] = original;
    report.push_back({c, analytic[c], (8.0 * (plus - minus) - (plus2 - minus2)) / (12.0 * eps)});
  }
  x.zero_grad();
  return report;
}

/// Max over the probed coordinates of GradProbe::relative_error().
template <typename F>
double grad_check(F&& f, Tensor<double>& x, double eps, std::span<const std::size_t> coords = {}) {
  double worst = 0.0;
  for (const auto& p : grad_check_report(std::forward<F>(f), x, eps, coords)) worst = std::max(worst, p.relative_error());
  return worst;
}

/// Filters `candidates` down to the coordinates of `x` whose whole stencil
/// (offsets +-eps, +-2 eps) takes the same ReLU / max-pool branches as the
/// unperturbed point, keeping at most `wanted`. A piecewise-smooth `f` is
/// differentiable along each returned coordinate across the stencil.
template <typename F>
std::vector<std::size_t> branch_stable_coords(F&& f, Tensor<double>& x, double eps,
                                              std::span<const std::size_t> candidates, std::size_t wanted) {
  NoGradGuard guard;
  auto digest = [&] {
    BranchTrace trace;
    f();
    return trace.digest();
  };
  const std::uint64_t base = digest();
  auto values = x.data();
  std::vector<std::size_t> out;
  for (std::size_t c : candidates) {
    if (out.size() == wanted) break;
    if (c >= values.size()) throw Error("branch_stable_coords: coordinate out of range");
    const double original = values[c];
    bool stable = true;
    for (double offset : {eps, -eps, 2 * eps, -2 * eps}) {
      values[c] = original + offset;
      if (digest() != base) {
        stable = false;
        break;
      }
    }
    values[c] = original;
    if (stable) out.push_back(c);
  }
  return out;
}

}  // namespace serdarts
