// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Arguments select
// criteria by number (default: all). Exit status is nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "serdarts/cell/genotype.hpp"
#include "serdarts/cell/network.hpp"
#include "serdarts/cli/commands.hpp"
#include "serdarts/data/audio.hpp"
#include "serdarts/data/container.hpp"
#include "serdarts/data/features.hpp"
#include "serdarts/data/folds.hpp"
#include "serdarts/data/synth.hpp"
#include "serdarts/grad_check.hpp"
#include "serdarts/models/models.hpp"
#include "serdarts/nn/layers.hpp"
#include "serdarts/nn/recurrent.hpp"
#include "serdarts/ops.hpp"
#include "serdarts/optim/loop.hpp"
#include "serdarts/search/mixed_op.hpp"

using namespace serdarts;
namespace fs = std::filesystem;
using search::OpKind;

namespace {

// ---------------------------------------------------------------- tolerances

constexpr double kGradEps = 1e-3;
constexpr double kGradTol = 1e-4;
constexpr int kGradTrials = 10;
constexpr double kGradCpuBudgetSeconds = 300.0;
constexpr double kStructuralZero = 1e-10;

constexpr double kOneHotLogit = 1e6;
constexpr double kMixedTol = 1e-5;
constexpr double kNodeSumTol = 1e-5;

constexpr double kEvalTol = 1e-6;

constexpr double kDartsTrainAccuracy = 0.95;
constexpr double kCnnTrainAccuracy = 0.90;
constexpr std::size_t kLearningEpochs = 300;
constexpr double kLearningBudgetSeconds = 15 * 60.0;

constexpr std::size_t kSearchEpochs = 50;
constexpr double kSearchLossReduction = 0.30;
constexpr std::size_t kSearchInputSize = 64;
constexpr std::size_t kSearchInitChannels = 4;

constexpr double kDctTol = 1e-6;
constexpr double kSoftmaxTol = 1e-6;

// ---------------------------------------------------------------- helpers

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects named sub-checks; the first failures are kept for the report.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok) {
      ++failed_;
      if (failures_.size() < 5) failures_.push_back(what);
    }
  }
  Outcome outcome(const std::string& summary) const {
    std::ostringstream s;
    s << summary << " (" << count_ - failed_ << "/" << count_ << " checks)";
    for (const auto& f : failures_) s << "; failed: " << f;
    return {failed_ == 0, s.str()};
  }

 private:
  std::size_t count_ = 0, failed_ = 0;
  std::vector<std::string> failures_;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

Tensor<double> random_tensor(Shape shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return worst;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

nn::ForwardContext eval_ctx() { return nn::ForwardContext{false, nullptr}; }

cell::Genotype reference_genotype() {
  cell::Genotype g;
  g.nodes = 4;
  g.normal = {{OpKind::sep_conv_3x3, 0, 2}, {OpKind::skip_connect, 1, 2}, {OpKind::dil_conv_3x3, 0, 3},
              {OpKind::max_pool_3x3, 2, 3}, {OpKind::sep_conv_5x5, 1, 4}, {OpKind::avg_pool_3x3, 3, 4},
              {OpKind::skip_connect, 2, 5}, {OpKind::dil_conv_5x5, 4, 5}};
  g.reduce = {{OpKind::max_pool_3x3, 0, 2}, {OpKind::sep_conv_3x3, 1, 2}, {OpKind::skip_connect, 1, 3},
              {OpKind::avg_pool_3x3, 2, 3}, {OpKind::dil_conv_3x3, 0, 4}, {OpKind::skip_connect, 2, 4},
              {OpKind::max_pool_3x3, 3, 5}, {OpKind::sep_conv_5x5, 4, 5}};
  g.concat = {2, 3, 4, 5};
  return g;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("serdarts_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

optim::LabelledData<float> all_records(const std::vector<data::SpectrogramRecord>& records) {
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return cli::to_labelled(records, idx);
}

// ---------------------------------------------------------------- 1

// Worst relative error per named primitive across all trials.
class GradLedger {
 public:
  void record(const std::string& name, double err) {
    auto it = std::find_if(rows_.begin(), rows_.end(), [&](const auto& r) { return r.first == name; });
    if (it == rows_.end()) {
      rows_.emplace_back(name, err);
    } else {
      it->second = std::max(it->second, err);
    }
  }
  double worst(std::string* name) const {
    double w = 0;
    for (const auto& [n, e] : rows_)
      if (e >= w) {
        w = e;
        *name = n;
      }
    return w;
  }
  std::size_t size() const { return rows_.size(); }
  std::vector<std::string> over(double tol) const {
    std::vector<std::string> out;
    for (const auto& [n, e] : rows_)
      if (!(e <= tol)) out.push_back(n + "=" + fmt(e));
    return out;
  }

 private:
  std::vector<std::pair<std::string, double>> rows_;
};

Outcome gradient_suite() {
  const std::clock_t c0 = std::clock();
  GradLedger ledger;
  RngState rng(101);
  auto check = [&](const std::string& name, auto&& f, Tensor<double>& x) {
    ledger.record(name, grad_check(f, x, kGradEps));
  };

  for (int trial = 0; trial < kGradTrials; ++trial) {
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng, 0.5, 1.5);
    auto m = random_tensor({4, 2}, rng);
    auto probe = random_tensor({3, 4}, rng);
    auto weights = random_tensor({2, 3}, rng);
    const std::vector<int> labels{0, 3, 1};
    check("add", [&] { return sum((a + b) * probe); }, a);
    check("sub", [&] { return sum((a - b) * probe); }, b);
    check("mul", [&] { return sum(a * b * probe); }, a);
    check("div", [&] { return sum(a / b * probe); }, b);
    check("scalar_affine", [&] { return sum(a * 2.5 + 1.0); }, a);
    check("sigmoid", [&] { return sum(sigmoid(a) * probe); }, a);
    check("tanh", [&] { return sum(tanh(a) * probe); }, a);
    check("exp", [&] { return sum(exp(a) * probe); }, a);
    check("log", [&] { return sum(log(b) * probe); }, b);
    check("neg", [&] { return sum(unary(UnaryOp::neg, a) * probe); }, a);
    {
      auto shifted = random_tensor({3, 4}, rng, 0.1, 1.0);
      for (std::size_t i = 0; i < shifted.numel(); i += 2) shifted.data()[i] = -shifted.data()[i];
      check("relu", [&] { return sum(relu(shifted) * probe); }, shifted);
    }
    check("matmul_lhs", [&] { return sum(tanh(matmul(a, m))); }, a);
    check("matmul_rhs", [&] { return sum(tanh(matmul(a, m))); }, m);
    check("transpose", [&] { return sum(transpose(a) * transpose(probe)); }, a);
    check("reshape", [&] { return sum(reshape(a, {2, 6}) * reshape(probe, {2, 6})); }, a);
    check("mean", [&] { return mean(a * probe); }, a);
    {
      auto cube = random_tensor({2, 3, 4, 5}, rng);
      auto w = random_tensor({5, 2, 4, 3}, rng);
      check("permute", [&] { return sum(permute(cube, {3, 0, 2, 1}) * w); }, cube);
    }
    check("softmax_rows", [&] { return sum(softmax(a, 1) * probe); }, a);
    check("softmax_cols", [&] { return sum(softmax(a, 0) * probe); }, a);
    check("log_softmax", [&] { return sum(log_softmax(a, 1) * probe); }, a);
    check("cross_entropy", [&] { return cross_entropy(a, labels); }, a);
    check("concat", [&] { return sum(concat<double>({a, b}, 1) * concat<double>({probe, probe}, 1)); }, a);
    check("slice", [&] { return sum(slice(a, 1, 1, 2) * slice(probe, 1, 0, 2)); }, a);
    check("sum_n", [&] { return sum(sum_n<double>({a, b, a}) * probe); }, a);
    check("weighted_sum_weights",
          [&] { return sum(weighted_sum<double>({a, Tensor<double>(), b}, softmax(weights, 1), 1) * probe); }, weights);
    check("weighted_sum_inputs",
          [&] { return sum(weighted_sum<double>({a, Tensor<double>(), b}, softmax(weights, 1), 0) * probe); }, a);

    auto x = random_tensor({2, 4, 5, 5}, rng);
    auto xprobe = random_tensor({2, 4, 5, 5}, rng);
    int geometry = 0;
    for (const auto& g : {nn::Conv2dGeometry::square(3, 1, 1), nn::Conv2dGeometry::square(3, 2, 1, 1, 4),
                          nn::Conv2dGeometry::square(5, 1, 4, 2, 4), nn::Conv2dGeometry::square(1, 1, 0),
                          nn::Conv2dGeometry::square(2, 2, 2, 1, 2)}) {
      auto w = random_tensor({4, 4 / g.groups, g.kernel_h, g.kernel_w}, rng);
      auto bias = random_tensor({4}, rng);
      Tensor<double> yprobe;
      {
        NoGradGuard guard;
        RngState pr(7);
        yprobe = random_tensor(nn::conv2d(x, w, bias, g).shape(), pr);
      }
      auto f = [&] { return sum(nn::conv2d(x, w, bias, g) * yprobe); };
      const std::string tag = "conv2d[" + std::to_string(geometry++) + "]";
      check(tag + ".input", f, x);
      check(tag + ".weight", f, w);
      check(tag + ".bias", f, bias);
    }
    {
      // Values spaced 0.05 apart keep max-pool winners fixed under probes.
      Tensor<double> xd({2, 4, 5, 5});
      std::vector<double> v(xd.numel());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i) - 1.0;
      rng.shuffle(v.begin(), v.end());
      std::copy(v.begin(), v.end(), xd.data().begin());
      auto pool = [&](const std::string& name, nn::PoolKind kind, nn::Pool2dGeometry g) {
        Tensor<double> pp;
        {
          NoGradGuard guard;
          RngState pr(8);
          pp = random_tensor(nn::pool2d(kind, xd, g).shape(), pr);
        }
        check(name, [&] { return sum(nn::pool2d(kind, xd, g) * pp); }, xd);
      };
      pool("max_pool_3x3_s1", nn::PoolKind::max, nn::Pool2dGeometry::square(3, 1, 1));
      pool("max_pool_3x3_s2", nn::PoolKind::max, nn::Pool2dGeometry::square(3, 2, 1));
      pool("avg_pool_3x3_s2", nn::PoolKind::avg, nn::Pool2dGeometry::square(3, 2, 1));
      pool("avg_pool_2x2_s2", nn::PoolKind::avg, nn::Pool2dGeometry::square(2, 2, 0));
    }
    {
      auto scale = random_tensor({4}, rng, 0.5, 1.5);
      auto shift = random_tensor({4}, rng);
      for (bool training : {true, false}) {
        nn::BatchNormState<double> state(4);
        state.running_mean = random_tensor({4}, rng);
        state.running_var = random_tensor({4}, rng, 0.5, 2.0);
        auto f = [&] { return sum(nn::batchnorm2d(x, scale, shift, state, training) * xprobe); };
        const std::string tag = training ? "batchnorm_train" : "batchnorm_eval";
        check(tag + ".scale", f, scale);
        check(tag + ".shift", f, shift);
        check(tag + ".input", f, x);
      }
    }
    {
      auto lx = random_tensor({3, 5}, rng);
      auto lw = random_tensor({2, 5}, rng);
      auto lb = random_tensor({2}, rng);
      auto lp = random_tensor({3, 2}, rng);
      auto f = [&] { return sum(tanh(nn::linear(lx, lw, lb)) * lp); };
      check("linear.input", f, lx);
      check("linear.weight", f, lw);
      check("linear.bias", f, lb);
    }
    check("dropout", [&] {
      RngState fixed(123);
      return sum(nn::dropout(x, 0.4, true, fixed) * xprobe);
    }, x);
    {
      Tensor<double> sp;
      {
        RngState pr(3);
        sp = random_tensor(nn::to_sequence(x).shape(), pr);
      }
      check("to_sequence", [&] { return sum(nn::to_sequence(x) * sp); }, x);
    }
    check("shift_one", [&] { return sum(nn::shift_one(x) * xprobe); }, x);
    {
      auto fp = reshape(xprobe, {2, 100});
      check("flatten", [&] { return sum(nn::flatten(x) * fp); }, x);
    }
    {
      auto tw = random_tensor({2, 3}, rng);
      auto ts = random_tensor({2, 3, 4}, rng);
      auto tp = random_tensor({2, 4}, rng);
      check("weighted_time_sum.weights", [&] { return sum(nn::weighted_time_sum(tw, ts) * tp); }, tw);
      check("weighted_time_sum.seq", [&] { return sum(nn::weighted_time_sum(tw, ts) * tp); }, ts);
    }
    {
      nn::Lstm<double> lstm(nn::LstmSpec{2, 3, trial % 2 == 1}, rng);
      auto ctx = eval_ctx();
      auto seq = random_tensor({2, 3, 2}, rng);
      auto sp = random_tensor({2, 3, lstm.spec().output_size()}, rng);
      auto f = [&] { return sum(lstm.forward(seq, ctx) * sp); };
      check("lstm.input", f, seq);
      for (std::size_t d = 0; d < (trial % 2 == 1 ? 2u : 1u); ++d) {
        check("lstm.input_weight", f, lstm.direction(d).input_weight);
        check("lstm.recurrent_weight", f, lstm.direction(d).recurrent_weight);
        check("lstm.bias", f, lstm.direction(d).bias);
      }
    }
    {
      nn::AttentionPool<double> attn(4, 5, rng);
      auto ctx = eval_ctx();
      auto seq = random_tensor({2, 3, 4}, rng);
      auto ap = random_tensor({2, 4}, rng);
      auto f = [&] { return sum(attn.forward(seq, ctx) * ap); };
      check("attention.seq", f, seq);
      check("attention.projection", f, attn.projection());
      check("attention.context", f, attn.context());
    }
    {
      const std::size_t stride = trial % 2 == 0 ? 1 : 2;
      search::MixedOp<double> mixed(2, stride, rng);
      auto mx = random_tensor({2, 2, 6, 6}, rng);
      auto alpha = random_tensor({search::kNumOps}, rng);
      const std::size_t extent = stride == 1 ? 6 : 3;
      auto mp = random_tensor({2, 2, extent, extent}, rng);
      check("mixed_op.alpha", [&] {
        auto ctx = eval_ctx();
        return sum(mixed.forward_alpha(mx, alpha, ctx) * mp);
      }, alpha);
    }
  }

  // Composed search network (C=4: normal, reduction, reduction, normal).
  // Probes keep their stencil on one smooth piece; structural zeros are
  // compared in absolute terms.
  std::size_t probed = 0, zero_mismatch = 0;
  double network_worst = 0;
  cell::NetworkConfig cfg;
  cfg.cells = 4;
  cfg.init_channels = 2;
  auto network_error = [&](const std::vector<GradProbe>& report) {
    for (const auto& p : report) {
      ++probed;
      if (std::abs(p.numeric) <= kStructuralZero) {
        if (std::abs(p.analytic) > kStructuralZero) ++zero_mismatch;
        continue;
      }
      network_worst = std::max(network_worst, p.relative_error());
    }
  };
  for (int trial = 0; trial < kGradTrials; ++trial) {
    cell::SearchNetwork<double> net(cfg, rng, 0.5);
    Tensor<double> x = random_tensor({2, 1, 16, 16}, rng);
    RngState pr(1000 + trial);
    Tensor<double> probe = random_tensor({2, net.output_channels(), 4, 4}, pr);
    auto f = [&] {
      nn::ForwardContext ctx{true, nullptr};
      return sum(net.forward(x, ctx) * probe);
    };
    auto stable = [&](Tensor<double>& t, std::size_t wanted) {
      std::vector<std::size_t> candidates;
      for (std::size_t k = 0; k < 8 * wanted; ++k) candidates.push_back(rng.uniform_index(t.numel()));
      return branch_stable_coords(f, t, kGradEps, candidates, wanted);
    };
    for (Tensor<double> target : net.alphas()) {
      auto coords = stable(target, 8);
      if (!coords.empty()) network_error(grad_check_report(f, target, kGradEps, coords));
    }
    std::vector<Tensor<double>> params;
    net.visit("", [&](const std::string&, Tensor<double>& t, nn::TensorRole role) {
      if (role == nn::TensorRole::parameter) params.push_back(t);
    });
    for (int pick = 0; pick < 4; ++pick) {
      Tensor<double> weight = params[rng.uniform_index(params.size())];
      auto coords = stable(weight, 2);
      if (!coords.empty()) network_error(grad_check_report(f, weight, kGradEps, coords));
    }
  }
  ledger.record("search_network", network_worst);

  const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  std::string worst_name;
  const double worst = ledger.worst(&worst_name);
  const auto over = ledger.over(kGradTol);
  const bool pass = over.empty() && zero_mismatch == 0 && probed >= 100 && cpu <= kGradCpuBudgetSeconds;
  std::ostringstream s;
  s << ledger.size() << " gradient targets x " << kGradTrials << " trials, worst rel err " << fmt(worst) << " ("
    << worst_name << ") <= " << kGradTol << "; network probes " << probed << ", structural-zero mismatches "
    << zero_mismatch << "; cpu " << fmt(cpu) << " s <= " << kGradCpuBudgetSeconds;
  for (const auto& o : over) s << "; over: " << o;
  return {pass, s.str()};
}

// ---------------------------------------------------------------- 2

Outcome mixing_and_derivation() {
  Checks c;
  RngState rng(202);
  double worst = 0;
  for (std::size_t stride : {1, 2}) {
    search::MixedOp<double> m(3, stride, rng);
    Tensor<double> x = random_tensor({2, 3, 8, 8}, rng);
    auto ctx = eval_ctx();
    for (OpKind kind : search::kAllOps) {
      Tensor<double> row({search::kNumOps}, -kOneHotLogit);
      row.data()[search::op_index(kind)] = kOneHotLogit;
      const double d = max_abs_diff(m.forward_alpha(x, row, ctx), m.candidate(kind).forward(x, ctx));
      worst = std::max(worst, d);
      c.expect(d <= kMixedTol, "one-hot " + std::string(search::op_name(kind)) + " stride " + std::to_string(stride));
    }
  }

  const std::size_t nodes = 4, edges = cell::CellTopology::edge_count(nodes);
  const cell::CellTopology topo(nodes);
  for (int trial = 0; trial < 20; ++trial) {
    // Two one-hot edges per node over small random logits elsewhere.
    Tensor<double> normal = random_tensor({edges, search::kNumOps}, rng, -0.5, 0.5);
    Tensor<double> reduce = random_tensor({edges, search::kNumOps}, rng, -0.5, 0.5);
    cell::Genotype expected;
    expected.nodes = nodes;
    for (std::size_t to = 2; to < nodes + 2; ++to) expected.concat.push_back(to);
    for (auto* table : {&normal, &reduce}) {
      auto& list = table == &normal ? expected.normal : expected.reduce;
      for (std::size_t to = 2; to < nodes + 2; ++to) {
        std::vector<std::size_t> sources(to);
        for (std::size_t i = 0; i < to; ++i) sources[i] = i;
        rng.shuffle(sources.begin(), sources.end());
        std::vector<std::size_t> chosen(sources.begin(), sources.begin() + 2);
        std::sort(chosen.begin(), chosen.end());
        for (std::size_t from : chosen) {
          const auto op = static_cast<OpKind>(rng.uniform_index(search::kNumOps - 1));  // any but none
          const std::size_t r = topo.edge_index(from, to);
          for (std::size_t k = 0; k < search::kNumOps; ++k)
            table->data()[r * search::kNumOps + k] = k == search::op_index(op) ? kOneHotLogit : -kOneHotLogit;
          list.push_back({op, from, to});
        }
      }
    }
    const cell::Genotype g = cell::derive_genotype(normal, reduce, nodes);
    c.expect(g == expected, "derivation picks the one-hot candidates, trial " + std::to_string(trial));

    // Per-row constant shifts leave the derived genotype unchanged.
    Tensor<double> n2 = random_tensor({edges, search::kNumOps}, rng, -2, 2);
    Tensor<double> r2 = random_tensor({edges, search::kNumOps}, rng, -2, 2);
    const cell::Genotype base = cell::derive_genotype(n2, r2, nodes);
    for (auto* t : {&n2, &r2})
      for (std::size_t r = 0; r < edges; ++r) {
        const double shift = std::ldexp(rng.uniform(-1.0, 1.0), 6);
        for (std::size_t k = 0; k < search::kNumOps; ++k) t->data()[r * search::kNumOps + k] += shift;
      }
    c.expect(cell::derive_genotype(n2, r2, nodes) == base, "row shift invariance, trial " + std::to_string(trial));
  }
  return c.outcome("one-hot mixing max diff " + fmt(worst) + " <= " + fmt(kMixedTol) +
                   "; derivation matches one-hot rows and is shift invariant over 20 trials");
}

// ---------------------------------------------------------------- 3

Outcome cell_structure() {
  Checks c;
  RngState rng(303);
  double worst = 0;
  auto ctx = eval_ctx();
  for (int trial = 0; trial < 5; ++trial) {
    const cell::CellPlan plan{3, 3, 3, false, false, 12};
    auto alpha = search::alpha_init<double>(rng, 14);
    for (auto& v : alpha.logits.data()) v = rng.normal(0.0, 1.0);
    cell::SearchCell<double> cell(cell::CellTopology(4), plan, alpha, rng);
    std::vector<Tensor<double>> states;
    for (int s = 0; s < 5; ++s) states.push_back(random_tensor({2, 3, 6, 6}, rng));
    const Tensor<double> weights = alpha.weights();
    for (std::size_t j = 0; j < 4; ++j) {
      const std::size_t preds = j + 2;
      std::vector<Tensor<double>> inputs(states.begin(), states.begin() + static_cast<std::ptrdiff_t>(preds));
      const Tensor<double> y = cell.node_output(j, inputs, weights, ctx);
      Tensor<double> expected(states[0].shape());
      for (std::size_t from = 0; from < preds; ++from) {
        const std::size_t row = cell::CellTopology::first_edge_into(j + 2) + from;
        double z = 0;
        for (std::size_t k = 0; k < search::kNumOps; ++k) z += std::exp(alpha.logits.at({row, k}));
        const auto outs = cell.edge_op(row).candidate_outputs(inputs[from], ctx);
        for (std::size_t k = 0; k < search::kNumOps; ++k) {
          const double w = std::exp(alpha.logits.at({row, k})) / z;
          for (std::size_t i = 0; i < expected.numel(); ++i) expected.data()[i] += w * outs[k].data()[i];
        }
      }
      const double d = max_abs_diff(y, expected);
      worst = std::max(worst, d);
      c.expect(d <= kNodeSumTol, "node " + std::to_string(j + 2) + " edge sum");
    }
  }

  cell::NetworkConfig cfg;
  cfg.cells = 4;
  cfg.init_channels = 2;
  cell::SearchNetwork<double> net(cfg, rng);
  Tensor<double> x = random_tensor({2, 1, 16, 16}, rng);
  Tensor<double> x2 = random_tensor({2, 1, 16, 16}, rng);
  NoGradGuard guard;
  const auto ys = net.states(x, ctx);  // stem, stem, y0..y3
  const auto ys2 = net.states(x2, ctx);
  for (std::size_t t = 1; t < 4; ++t) {
    const std::size_t slot = t + 2;
    c.expect(!bit_equal(ys[slot - 3], ys2[slot - 3]), "y_{t-3} perturbed at t=" + std::to_string(t));
    // The cell sees y_{t-2} and y_{t-1} only: a different y_{t-3} history
    // with the same two predecessors gives the same bits.
    const Tensor<double> again = net.forward_cell(t, ys[slot - 2], ys[slot - 1], ctx);
    c.expect(bit_equal(again, ys[slot]), "y_t unchanged at t=" + std::to_string(t));
    const Tensor<double> foreign = net.forward_cell(t, ys2[slot - 2], ys[slot - 1], ctx);
    c.expect(!bit_equal(foreign, ys[slot]), "y_{t-2} reaches y_t at t=" + std::to_string(t));
  }
  return c.outcome("node output vs explicit edge sum max diff " + fmt(worst) + " <= " + fmt(kNodeSumTol) +
                   "; y_t independent of y_{t-3} (exact) for C=4");
}

// ---------------------------------------------------------------- 4

Outcome shape_ledger() {
  Checks c;
  RngState rng(404);
  cell::NetworkConfig cfg;
  c.expect(cfg.cells == 4 && cfg.init_channels == 16, "defaults are C=4, 16 channels");
  c.expect(cfg.reduction_indices() == std::vector<std::size_t>{1, 2}, "reduction cells at 1 and 2");
  auto ctx = eval_ctx();
  NoGradGuard guard;
  Tensor<float> x({1, 1, 128, 128});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
  std::string shape;
  {
    cell::SearchNetwork<float> search(cfg, rng);
    const Tensor<float> y = search.forward(x, ctx);
    shape = shape_str(y.shape());
    c.expect(y.dim(2) == 32 && y.dim(3) == 32, "search output 32x32, got " + shape);
    cell::DiscreteNetwork<float> discrete(cfg, search.genotype(), rng);
    c.expect(discrete.forward(x, ctx).shape() == y.shape(), "discrete matches continuous at C=4");
  }
  for (std::size_t cells = 1; cells <= 6; ++cells) {
    cell::NetworkConfig small;
    small.cells = cells;
    small.init_channels = 2;
    cell::SearchNetwork<double> search(small, rng);
    cell::DiscreteNetwork<double> discrete(small, reference_genotype(), rng);
    for (std::size_t batch : {1, 2}) {
      Tensor<double> xs = random_tensor({batch, 1, 32, 32}, rng);
      const Tensor<double> a = search.forward(xs, ctx);
      const Tensor<double> b = discrete.forward(xs, ctx);
      c.expect(a.shape() == b.shape(), "C=" + std::to_string(cells) + " shapes " + shape_str(a.shape()) + " vs " +
                                           shape_str(b.shape()));
    }
  }
  return c.outcome("C=4 reductions at {1,2}, output " + shape + "; discrete = continuous shape for C in 1..6");
}

// ---------------------------------------------------------------- 5

Outcome determinism() {
  Checks c;
  const fs::path dir = scratch("determinism");
  cli::SynthOptions synth;
  synth.synth.n = 40;
  synth.synth.speakers = 5;
  synth.synth.size = 32;
  synth.seed = 5;
  synth.out = dir / "data.serc";
  cli::dataset_synth(synth);

  auto config = [&](const std::string& out) {
    cli::RunConfig cfg = cli::parse_config(nlohmann::json::parse(R"({
      "seed": 11,
      "network": {"cells": 4, "init_channels": 2, "nodes": 4},
      "head": {"lstm_units": 16, "dense_widths": [16, 4]},
      "search": {"epochs": 2, "batch_size": 8},
      "train": {"epochs": 2, "batch_size": 8}
    })"));
    cfg.data_path = synth.out.string();
    cfg.out_dir = (dir / out).string();
    return cfg;
  };
  cli::run_search(config("search_a"));
  cli::run_search(config("search_b"));
  std::size_t identical = 0;
  for (std::size_t f = 0; f < data::kNumFolds; ++f) {
    const std::string name = "fold" + std::to_string(f);
    const std::string a = slurp(dir / "search_a" / name / "genotype.json");
    const std::string b = slurp(dir / "search_b" / name / "genotype.json");
    const bool same = !a.empty() && a == b;
    identical += same;
    c.expect(same, "genotype bytes, " + name);
  }

  cli::RunConfig train = config("train");
  train.genotype_path = (dir / "search_a").string();
  const auto report = cli::run_train(train);
  double worst = 0;
  for (std::size_t f = 0; f < data::kNumFolds; ++f) {
    const fs::path ckpt = dir / "train" / ("fold" + std::to_string(f)) / "model.ckpt";
    for (int run = 0; run < 2; ++run) {
      const auto e = cli::run_eval(ckpt, synth.out);
      for (const char* key : {"wa", "ua"}) {
        const double d = std::abs(e[key].get<double>() - report["folds"][f][key].get<double>());
        worst = std::max(worst, d);
        c.expect(d <= kEvalTol, std::string(key) + " fold " + std::to_string(f));
      }
    }
  }
  return c.outcome(std::to_string(identical) + "/5 genotype files byte-identical across two searches; eval WA/UA " +
                   "max diff " + fmt(worst) + " <= " + fmt(kEvalTol));
}

// ---------------------------------------------------------------- 6

struct LearningResult {
  bool reached = false;
  std::size_t epochs = 0;
  double accuracy = 0;
  double seconds = 0;
};

// Trains on the whole set until eval-mode training accuracy reaches `target`.
LearningResult learn(models::ModelBundle& bundle, const optim::LabelledData<float>& data, double target,
                     RngState& rng) {
  optim::SgdConfig sgd;
  sgd.total_epochs = kLearningEpochs;
  optim::Sgd<float> opt(nn::parameters_of(*bundle.model), sgd);
  const auto t0 = std::chrono::steady_clock::now();
  LearningResult r;
  for (std::size_t e = 0; e < kLearningEpochs; ++e) {
    optim::train_epoch(*bundle.model, data, opt, optim::cosine_lr(sgd, e), 16, 5.0, rng);
    r.accuracy = optim::evaluate(*bundle.model, data, 16).wa;
    r.epochs = e + 1;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  learning: " << bundle.spec.to_json()["kind"].get<std::string>() << " epoch " << r.epochs
              << " train accuracy " << r.accuracy << " at " << fmt(r.seconds) << " s\n";
    if (r.accuracy >= target) {
      r.reached = true;
      break;
    }
    if (r.seconds > kLearningBudgetSeconds) break;
  }
  return r;
}

Outcome desk_scale_learning() {
  RngState data_rng(606);
  data::SynthConfig sc;  // n=64, 4 classes, 8 speakers, 128x128
  const auto records = data::synth_dataset(sc, data_rng);
  const auto data = all_records(records);

  RngState rng(607);
  models::ModelBundle darts = models::build_darts_model(reference_genotype(), cell::NetworkConfig{}, models::HeadSpec{}, rng);
  const LearningResult d = learn(darts, data, kDartsTrainAccuracy, rng);
  models::ModelBundle cnn = models::build_cnn_baseline(rng);
  const LearningResult b = learn(cnn, data, kCnnTrainAccuracy, rng);

  const bool pass = d.reached && d.seconds <= kLearningBudgetSeconds && b.reached && b.seconds <= kLearningBudgetSeconds;
  std::ostringstream s;
  s << "searched model with LSTM head: train accuracy " << fmt(d.accuracy) << " (>= " << kDartsTrainAccuracy
    << ") after " << d.epochs << " epochs, " << fmt(d.seconds) << " s; CNN baseline: " << fmt(b.accuracy)
    << " (>= " << kCnnTrainAccuracy << ") after " << b.epochs << " epochs, " << fmt(b.seconds)
    << " s; budget " << kLearningEpochs << " epochs / " << kLearningBudgetSeconds << " s each";
  return {pass, s.str()};
}

// ---------------------------------------------------------------- 7

Outcome search_progress() {
  const fs::path dir = scratch("search");
  cli::SynthOptions synth;
  synth.synth.size = kSearchInputSize;  // n=64, 4 classes, 8 speakers
  synth.seed = 7;
  synth.out = dir / "data.serc";
  cli::dataset_synth(synth);

  cli::RunConfig cfg = cli::default_config();
  cfg.network.init_channels = kSearchInitChannels;
  cfg.search.epochs = kSearchEpochs;
  cfg.search.weights.total_epochs = kSearchEpochs;
  cfg.folds.run = {0};
  cfg.data_path = synth.out.string();
  cfg.out_dir = (dir / "run").string();
  cli::run_search(cfg, &std::cerr);

  double loss0 = NAN, loss_end = NAN, h0 = NAN, h_end = NAN;
  std::ifstream metrics(dir / "run" / "fold0" / "metrics.jsonl");
  for (std::string line; std::getline(metrics, line);) {
    const auto j = nlohmann::json::parse(line);
    const std::size_t epoch = j["epoch"].get<std::size_t>();
    const std::string phase = j["phase"].get<std::string>();
    if (epoch != 0 && epoch != kSearchEpochs) continue;
    if (phase == "search") (epoch == 0 ? loss0 : loss_end) = j["loss"].get<double>();
    if (phase == "alpha") (epoch == 0 ? h0 : h_end) = j["entropy"].get<double>();
  }
  const double reduction = (loss0 - loss_end) / loss0;
  const bool pass = reduction >= kSearchLossReduction && h_end < h0;
  std::ostringstream s;
  s.precision(10);
  s << kSearchEpochs << "-epoch search (" << kSearchInputSize << "x" << kSearchInputSize << " synthetic, "
    << kSearchInitChannels << " initial channels, fold 0): search loss " << fmt(loss0) << " -> " << fmt(loss_end)
    << ", reduction " << fmt(reduction) << " >= " << kSearchLossReduction << "; alpha entropy " << h0 << " -> "
    << h_end;
  return {pass, s.str()};
}

// ---------------------------------------------------------------- 8

Outcome pipeline_exactness() {
  Checks c;
  RngState rng(808);
  data::Utterance u;
  u.sample_rate = 16000;
  u.waveform.resize(8 * 16000);
  for (std::size_t i = 0; i < u.waveform.size(); ++i)
    u.waveform[i] = 0.4 * std::sin(2 * M_PI * 300.0 * static_cast<double>(i) / 16000.0) + rng.normal(0.0, 0.05);
  const data::MfccExtractor extractor;
  const Tensor<float> pre = extractor.mfcc(data::pad_or_truncate(u));
  const Tensor<float> post = data::downsample_time(pre);
  c.expect(pre.shape() == Shape{128, 512}, "pre-pool " + shape_str(pre.shape()));
  c.expect(post.shape() == Shape{128, 128}, "post-pool " + shape_str(post.shape()));

  double dct_worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(128 * 16);
    for (auto& v : x) v = rng.normal(0.0, 10.0);
    const auto back = data::idct_ortho(data::dct_ortho(x, 128, 16), 128, 16);
    for (std::size_t i = 0; i < x.size(); ++i) dct_worst = std::max(dct_worst, std::abs(back[i] - x[i]));
  }
  c.expect(dct_worst <= kDctTol, "DCT round trip " + fmt(dct_worst));

  data::SynthConfig sc;
  RngState srng(809);
  const auto records = data::synth_dataset(sc, srng);
  const std::string bytes = data::encode_container(records);
  const auto decoded = data::decode_container(bytes);
  c.expect(decoded == records, "SERC1 decode equals the records");
  c.expect(data::encode_container(decoded) == bytes, "SERC1 re-encode is byte-identical");

  std::size_t folds_checked = 0;
  for (std::size_t speakers : {8, 10, 13}) {
    std::vector<data::SpectrogramRecord> recs;
    for (std::size_t i = 0; i < 11 * speakers + 3; ++i) {
      data::SpectrogramRecord r;
      r.height = r.width = 2;
      r.features = {0, 0, 0, 0};
      r.label = static_cast<int>(i % 4);
      // Every speaker appears; the rest are drawn at random.
      r.speaker = "s" + std::to_string(i < speakers ? i : rng.uniform_index(speakers));
      recs.push_back(std::move(r));
    }
    RngState frng(speakers);
    const auto plan = data::make_folds(recs, frng);
    std::vector<int> tested(recs.size(), 0);
    for (const auto& fold : plan.folds) {
      ++folds_checked;
      std::set<std::size_t> test(fold.test.begin(), fold.test.end()), srch(fold.search.begin(), fold.search.end()),
          train(fold.train.begin(), fold.train.end());
      bool disjoint = true;
      for (std::size_t i : srch) disjoint = disjoint && !test.count(i) && !train.count(i);
      for (std::size_t i : train) disjoint = disjoint && !test.count(i);
      c.expect(disjoint, "splits disjoint");
      c.expect(test.size() + srch.size() + train.size() == recs.size(), "splits cover every record");
      std::set<std::string> test_spk;
      for (std::size_t i : test) test_spk.insert(recs[i].speaker);
      bool speaker_clean = true;
      for (std::size_t i : srch) speaker_clean = speaker_clean && !test_spk.count(recs[i].speaker);
      for (std::size_t i : train) speaker_clean = speaker_clean && !test_spk.count(recs[i].speaker);
      c.expect(speaker_clean, "test speakers unseen in search/train");
      const double ideal = 0.7 * static_cast<double>(srch.size() + train.size());
      c.expect(std::abs(static_cast<double>(srch.size()) - ideal) <= 1.0, "70/30 within one utterance");
      for (std::size_t i : test) ++tested[i];
    }
    c.expect(std::all_of(tested.begin(), tested.end(), [](int k) { return k == 1; }), "each record tested once");
  }
  return c.outcome("8 s at 16 kHz -> " + shape_str(pre.shape()) + " -> " + shape_str(post.shape()) +
                   "; DCT round trip " + fmt(dct_worst) + " <= " + fmt(kDctTol) + "; SERC1 bit-exact; " +
                   std::to_string(folds_checked) + " folds exclusive and 70/30 within one");
}

// ---------------------------------------------------------------- 9

Outcome baseline_shapes() {
  Checks c;
  RngState rng(909);
  models::ModelBundle m = models::build_cnn_baseline(rng);
  auto& model = dynamic_cast<models::BaselineModel<float>&>(*m.model);
  auto ctx = eval_ctx();
  NoGradGuard guard;
  double worst = 0;
  for (std::size_t batch : {1, 5, 16}) {
    Tensor<float> x({batch, 1, 128, 128});
    for (auto& v : x.data()) v = static_cast<float>(rng.normal(0.0, 3.0));
    c.expect(model.conv_output(x, ctx).shape() == Shape{batch, 16, 66, 66}, "conv 66x66");
    c.expect(model.pooled(x, ctx).shape() == Shape{batch, 16, 33, 33}, "pool 33x33");
    const Tensor<float> logits = m.forward(x, ctx);
    c.expect(logits.shape() == Shape{batch, 4}, "logits B x 4");
    const auto p = models::predict_from_logits(logits);
    for (std::size_t b = 0; b < batch; ++b) {
      double total = 0;
      for (std::size_t k = 0; k < 4; ++k) total += p.probabilities.at({b, k});
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  c.expect(worst <= kSoftmaxTol, "softmax rows sum to one");
  return c.outcome("conv 16x66x66, pool 16x33x33, logits Bx4 for B in {1,5,16}; softmax row sum error " + fmt(worst) +
                   " <= " + fmt(kSoftmaxTol));
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "mixing and genotype derivation", mixing_and_derivation},
      {3, "cell structure", cell_structure},
      {4, "shape ledger", shape_ledger},
      {5, "determinism", determinism},
      {6, "desk-scale learning", desk_scale_learning},
      {7, "search progress", search_progress},
      {8, "pipeline exactness", pipeline_exactness},
      {9, "baseline shapes", baseline_shapes},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& cr : criteria) {
    if (!selected.empty() && !selected.count(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << cr.id << "] " << cr.name << ": " << o.detail << " ["
              << fmt(secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
