// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "serdarts/autograd.hpp"
#include "serdarts/grad_check.hpp"
#include "serdarts/ops.hpp"
#include "serdarts/rng.hpp"

using namespace serdarts;

namespace {

Tensor<double> random_tensor(Shape shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

constexpr double kGradTol = 1e-4;
constexpr double kEps = 1e-3;
constexpr int kTrials = 10;

}  // namespace

TEST_CASE("elementwise arithmetic") {
  Tensor<double> a({2}, {1, 2});
  Tensor<double> b({2}, {3, 4});
  CHECK(values(a + b) == std::vector<double>{4, 6});
  CHECK(values(Tensor<double>({2}, {2, 2}) * 0.0) == std::vector<double>{0, 0});
  CHECK(values(a - b) == std::vector<double>{-2, -2});
  CHECK(values(b / a) == std::vector<double>{3, 2});
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  Tensor<double> a({2}, 1.0), b({3}, 1.0);
  try {
    (void)(a + b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("add gradient is ones") {
  Tensor<double> a({2}, {1, 2});
  Tensor<double> b({2}, {5, 5});
  a.set_tracked(true);
  backward(sum(a + b));
  CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) == std::vector<double>{1, 1});
}

TEST_CASE("matmul") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> m({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(eye, m)) == values(m));
  CHECK(values(matmul(Tensor<double>({1, 2}, {1, 0}), Tensor<double>({2, 1}, {5, 7}))) == std::vector<double>{5});
  CHECK_THROWS_AS(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 3})), ShapeError);
}

TEST_CASE("softmax examples") {
  auto s = softmax(Tensor<double>({4}, 0.0), 0);
  for (double v : s.data()) CHECK(v == doctest::Approx(0.25));
  auto big = softmax(Tensor<double>({2}, {1e6, 0}), 0);
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(big.data()[1]));
  CHECK_THROWS(softmax(Tensor<double>({2}), 1));
  CHECK_THROWS(softmax(Tensor<double>({2, 0}), 1));
}

TEST_CASE("softmax rows sum to one for large magnitudes") {
  RngState rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({3, 5}, rng, -1e6, 1e6);
    auto s = softmax(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(s.at({r, c}) >= 0.0);
        total += s.at({r, c});
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("cross entropy") {
  std::vector<int> labels{0, 3};
  CHECK(cross_entropy(Tensor<double>({2, 4}, 0.0), labels).item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  Tensor<double> confident({1, 4}, {0, 1e6, 0, 0});
  std::vector<int> one{1};
  CHECK(cross_entropy(confident, one).item() == doctest::Approx(0.0));
  std::vector<int> bad{4};
  CHECK_THROWS(cross_entropy(Tensor<double>({1, 4}), bad));
  std::vector<int> negative{-1};
  CHECK_THROWS(cross_entropy(Tensor<double>({1, 4}), negative));
}

TEST_CASE("backward basics") {
  Tensor<double> w({2}, {1, 2});
  w.set_tracked(true);
  Tensor<double> unused({3}, 1.0);
  unused.set_tracked(true);
  backward(sum(w * w));
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{2, 4});
  // An unreached leaf reads as zeros.
  for (double g : unused.mutable_grad()) CHECK(g == 0.0);
  CHECK_THROWS(backward(w * w));
  CHECK_THROWS(backward(sum(Tensor<double>({2}, 1.0))));
}

TEST_CASE("gradients accumulate across uses and backward calls") {
  Tensor<double> w({1}, {3});
  w.set_tracked(true);
  backward(sum(w + w + w));
  CHECK(w.grad()[0] == 3.0);
  backward(sum(w * 2.0));
  CHECK(w.grad()[0] == 5.0);
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("loss tensor carries unit gradient after backward") {
  Tensor<double> w({2}, {1, 2});
  w.set_tracked(true);
  Tensor<double> loss = sum(w * w);
  backward(loss);
  REQUIRE(loss.has_grad());
  CHECK(loss.grad()[0] == 1.0);
}

TEST_CASE("tape is topologically ordered") {
  Tensor<double> a({2}, 1.0), b({2}, 2.0);
  a.set_tracked(true);
  b.set_tracked(true);
  auto c = a * b;
  auto d = c + a;
  auto loss = sum(d * c);
  const auto tape = Tape<double>::record(loss);
  const auto order = tape.entries();
  CHECK(order.back() == loss.node());
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const auto& input : order[i]->inputs) {
      if (!input->tracked) continue;
      bool earlier = false;
      for (std::size_t k = 0; k < i; ++k) earlier = earlier || order[k] == input.get();
      CHECK(earlier);
    }
  }
}

TEST_CASE("gradient linearity") {
  RngState rng(11);
  for (int trial = 0; trial < kTrials; ++trial) {
    auto x = random_tensor({3, 4}, rng);
    auto y = random_tensor({4, 2}, rng);
    x.set_tracked(true);
    auto loss_a = [&] { return sum(tanh(matmul(x, y))); };
    auto loss_b = [&] { return mean(x * x); };
    backward(loss_a());
    std::vector<double> ga(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(loss_b());
    std::vector<double> gb(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(loss_a() + loss_b());
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(x.grad()[i] - (ga[i] + gb[i])) <= 1e-12);
  }
}

TEST_CASE("grad_check contract") {
  Tensor<double> x({4}, {0.1, -0.2, 0.3, 0.4});
  CHECK(grad_check([&] { return sum(x); }, x, kEps) <= 1e-10);
  CHECK_THROWS(grad_check([&] { return sum(x); }, x, 0.0));
  CHECK_THROWS(grad_check([&] { return sum(log(x)); }, x, kEps));  // log of a negative probe
  CHECK(grad_check([&] { return sum(softmax(x, 0) * Tensor<double>({4}, {1, 2, 3, 4})); }, x, kEps) <= kGradTol);
  CHECK_FALSE(x.tracked());
}

TEST_CASE("primitive gradients match central differences") {
  RngState rng(2024);
  for (int trial = 0; trial < kTrials; ++trial) {
    CAPTURE(trial);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng, 0.5, 1.5);
    auto m = random_tensor({4, 2}, rng);
    auto probe = random_tensor({3, 4}, rng);
    auto weights = random_tensor({2, 3}, rng);
    const std::vector<int> labels{0, 3, 1};

    CHECK(grad_check([&] { return sum((a + b) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum((a - b) * probe); }, b, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(a * b * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(a / b * probe); }, b, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(a * 2.5 + 1.0); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(sigmoid(a) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(tanh(a) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(exp(a) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(log(b) * probe); }, b, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(unary(UnaryOp::neg, a) * probe); }, a, kEps) <= kGradTol);
    {
      // Keep ReLU probes away from the kink.
      auto shifted = random_tensor({3, 4}, rng, 0.1, 1.0);
      for (std::size_t i = 0; i < shifted.numel(); i += 2) shifted.data()[i] = -shifted.data()[i];
      CHECK(grad_check([&] { return sum(relu(shifted) * probe); }, shifted, kEps) <= kGradTol);
    }
    CHECK(grad_check([&] { return sum(tanh(matmul(a, m))); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(tanh(matmul(a, m))); }, m, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(transpose(a) * transpose(probe)); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(reshape(a, {2, 6}) * reshape(probe, {2, 6})); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return mean(a * probe); }, a, kEps) <= kGradTol);
    {
      auto cube = random_tensor({2, 3, 4, 5}, rng);
      auto weight = random_tensor({5, 2, 4, 3}, rng);
      CHECK(grad_check([&] { return sum(permute(cube, {3, 0, 2, 1}) * weight); }, cube, kEps) <= kGradTol);
    }
    CHECK(grad_check([&] { return sum(softmax(a, 1) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(softmax(a, 0) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(log_softmax(a, 1) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return cross_entropy(a, labels); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(concat<double>({a, b}, 1) * concat<double>({probe, probe}, 1)); }, a, kEps) <=
          kGradTol);
    CHECK(grad_check([&] { return sum(slice(a, 1, 1, 2) * slice(probe, 1, 0, 2)); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(sum_n<double>({a, b, a}) * probe); }, a, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(weighted_sum<double>({a, Tensor<double>(), b}, softmax(weights, 1), 1) * probe); },
                     weights, kEps) <= kGradTol);
    CHECK(grad_check([&] { return sum(weighted_sum<double>({a, Tensor<double>(), b}, softmax(weights, 1), 0) * probe); },
                     a, kEps) <= kGradTol);
  }
}

TEST_CASE("permute") {
  Tensor<double> x({2, 3, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<double>(i);
  Tensor<double> y = permute(x, {2, 0, 1});
  CHECK(y.shape() == Shape{4, 2, 3});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) CHECK(y.at({c, a, b}) == x.at({a, b, c}));
  CHECK(values(permute(permute(x, {2, 0, 1}), {1, 2, 0})) == values(x));
  CHECK(values(permute(x, {0, 1, 2})) == values(x));
  CHECK_THROWS_AS(permute(x, {0, 0, 1}), ShapeError);
  CHECK_THROWS_AS(permute(x, {0, 1}), ShapeError);
}

TEST_CASE("float and double agree on a forward pass") {
  RngState rng(3);
  auto a = random_tensor({2, 3}, rng);
  Tensor<float> af({2, 3});
  for (std::size_t i = 0; i < a.numel(); ++i) af.data()[i] = static_cast<float>(a.data()[i]);
  auto d = softmax(a, 1);
  auto f = softmax(af, 1);
  for (std::size_t i = 0; i < d.numel(); ++i) CHECK(f.data()[i] == doctest::Approx(d.data()[i]).epsilon(1e-5));
}

TEST_CASE("no-grad mode builds no graph") {
  Tensor<double> w({2}, 1.0);
  w.set_tracked(true);
  {
    NoGradGuard guard;
    auto y = w * w;
    CHECK_FALSE(y.tracked());
  }
  CHECK((w * w).tracked());
}

TEST_CASE("rng determinism and forks") {
  RngState a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    (void)c;
  }
  RngState d(42);
  RngState e(42);
  CHECK(d.fork(1).next_u64() == e.fork(1).next_u64());
  CHECK(RngState(42).fork(1).next_u64() != RngState(42).fork(2).next_u64());
  CHECK(RngState(42).next_u64() != RngState(43).next_u64());
}

TEST_CASE("tensor invariants") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(shape_numel(t.shape()) == t.data().size());
  CHECK_THROWS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}));
  t.set_tracked(true);
  CHECK(t.mutable_grad().size() == t.numel());
}
