#include <doctest.h>

#include <cmath>

#include "perinv/autodiff.hpp"
#include "perinv/errors.hpp"
#include "perinv/rng.hpp"
#include "perinv/tensor.hpp"

using namespace perinv;

namespace {

ParamVector two_blocks(std::vector<double> a, std::vector<double> b) {
  ParamLayout layout;
  layout.add("a", Shape{a.size()});
  layout.add("b", Shape{b.size()});
  a.insert(a.end(), b.begin(), b.end());
  return ParamVector(layout, a);
}

ParamVector random_params(const ParamLayout& layout, std::uint64_t seed) {
  Rng rng(seed);
  ParamVector p(layout);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.normal();
  return p;
}

}  // namespace

TEST_CASE("tensor construction validates shape") {
  CHECK_NOTHROW(Tensor(Shape{2, 3}, std::vector<double>(6, 1.0)));
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5, 1.0)), LayoutError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), LayoutError);
  const Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.row_size() == 3);
  CHECK(t.reshaped(Shape{3, 2}).values() == t.values());
  CHECK_THROWS(t.reshaped(Shape{4}));
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("param layout packs entries in order") {
  ParamLayout layout;
  layout.add("w", Shape{2, 3});
  layout.add("b", Shape{2});
  CHECK(layout.total_size() == 8);
  CHECK(layout.find("b").offset == 6);
  CHECK_THROWS(layout.find("missing"));
  CHECK_THROWS(layout.add("w", Shape{1}));
}

TEST_CASE("param vector arithmetic requires matching layouts") {
  auto a = two_blocks({1, 2}, {3});
  auto b = two_blocks({1, 1}, {1});
  CHECK((a + b).values() == std::vector<double>{2, 3, 4});
  CHECK((a - b).values() == std::vector<double>{0, 1, 2});
  CHECK((2.0 * a).values() == std::vector<double>{2, 4, 6});
  CHECK(squared_distance(a, b) == 5.0);
  CHECK(a.squared_norm() == 14.0);
  CHECK(a.max_abs() == 3.0);
  auto c = ParamVector::from_values({1, 2, 3});
  CHECK_THROWS_AS(a += c, LayoutError);
}

TEST_CASE("gradient of squared norm") {
  ad::Objective f = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(ad::square(p[0])); };
  const auto g = ad::grad(f, ParamVector::from_values({1.0, -2.0}));
  CHECK(g.values() == std::vector<double>{2.0, -4.0});
}

TEST_CASE("gradient of a constant objective is zero") {
  ad::Objective f = [](ad::Tape& t, std::span<const ad::Var>) { return t.constant(Tensor::scalar(3.0)); };
  const auto g = ad::grad(f, ParamVector::from_values({0.3, 0.7}));
  CHECK(g.values() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("finite differences on simple functions") {
  const ad::ScalarFunction sq = [](const ParamVector& p) { return p[0] * p[0]; };
  CHECK(ad::finite_diff_grad(sq, ParamVector::from_values({3.0}), 1e-4)[0] == doctest::Approx(6.0).epsilon(1e-6));
  const ad::ScalarFunction bil = [](const ParamVector& p) { return p[0] * p[1]; };
  const auto g = ad::finite_diff_grad(bil, ParamVector::from_values({2.0, 5.0}), 1e-4);
  CHECK(std::abs(g[0] - 5.0) <= 1e-6);
  CHECK(std::abs(g[1] - 2.0) <= 1e-6);
  CHECK_THROWS_AS(ad::finite_diff_grad(sq, ParamVector::from_values({1.0}), 0.0), PreconditionError);
}

TEST_CASE("every op agrees with finite differences") {
  ParamLayout layout;
  layout.add("x", Shape{3, 4});
  layout.add("w", Shape{2, 4});
  layout.add("b", Shape{2});
  layout.add("s", Shape{});
  const auto at = random_params(layout, 11);

  ad::Objective f = [](ad::Tape& t, std::span<const ad::Var> p) {
    ad::Var h = ad::linear(p[0], p[1], p[2]);                      // [3, 2]
    ad::Var r = ad::relu(ad::add_scalar(h, 0.1));
    ad::Var sm = ad::softmax_rows(ad::scale(h, 0.7));
    ad::Var ls = ad::log_softmax_rows(ad::sub(h, r));
    ad::Var prod = ad::mul(sm, p[3]);                              // scalar broadcast
    ad::Var weights = t.constant(Tensor(Shape{3, 2}, {0.5, -1, 2, 0.25, -0.75, 1.5}));
    ad::Var acc = ad::add(ad::dot(ls, weights), ad::mean(ad::square(prod)));
    return ad::add(acc, ad::sum(ad::mul(r, r)));
  };
  const auto g = ad::grad(f, at);
  const auto fd = ad::finite_diff_grad(ad::as_function(f), at, 1e-5);
  CHECK(ad::relative_error(g, fd) <= 1e-7);
}

TEST_CASE("value_and_grad matches evaluate") {
  ad::Objective f = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(ad::square(p[0])); };
  const auto at = ParamVector::from_values({1.5, -0.5});
  const auto vg = ad::value_and_grad(f, at);
  CHECK(vg.value == ad::evaluate(f, at));
  CHECK(vg.value == 2.5);
}

TEST_CASE("checked mode names the offending op") {
  ad::Objective f = [](ad::Tape& t, std::span<const ad::Var> p) {
    return ad::sum(ad::mul(p[0], t.constant(Tensor::scalar(1e308))));
  };
  try {
    ad::grad(f, ParamVector::from_values({10.0}));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.op() == "mul");
  }
  ad::set_checked_mode(false);
  CHECK_NOTHROW(ad::evaluate(f, ParamVector::from_values({10.0})));
  ad::set_checked_mode(true);
}

TEST_CASE("relative error measure") {
  const auto a = ParamVector::from_values({1.0, -3.0});
  const auto b = ParamVector::from_values({1.0, -2.0});
  CHECK(ad::relative_error(a, b) == doctest::Approx(0.25));
  const ParamVector empty;
  CHECK(ad::relative_error(empty, empty) == 0.0);
}

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(stream_seed("client0/train0", 1));
  Rng b(stream_seed("client0/train0", 1));
  Rng c(stream_seed("client1/train0", 1));
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  Rng r(5);
  double mean = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    mean += z / n;
    sq += z * z / n;
  }
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}
