#include <doctest.h>

#include <cmath>

#include "perinv/errors.hpp"
#include "perinv/model.hpp"
#include "perinv/objectives.hpp"
#include "perinv/rng.hpp"

using namespace perinv;

namespace {

Environment make_env(std::vector<double> x, std::size_t d, std::vector<int> y) {
  const std::size_t n = y.size();
  return Environment{"env", Tensor(Shape{n, d}, std::move(x)), std::move(y), {}};
}

// 1 -> 2 -> 2 net with hand-set weights.
ParamVector tiny_params(const ModelArch& arch) {
  ParamVector p(arch.layout());
  const std::vector<double> values{1.0, -2.0,  // hidden0.weight [2, 1]
                                   0.5, 0.5,   // hidden0.bias
                                   1.0, 3.0, -1.0, 2.0,  // classifier.weight [2, 2]
                                   0.1, -0.2};           // classifier.bias
  for (std::size_t i = 0; i < values.size(); ++i) p[i] = values[i];
  return p;
}

// Linear readout through an identity hidden layer: logits equal the 2-d input.
ModelArch identity_arch() { return ModelArch{2, {2}, 2, Activation::relu}; }

ParamVector identity_params() {
  ParamVector p(identity_arch().layout());
  const std::vector<double> values{1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0};
  for (std::size_t i = 0; i < values.size(); ++i) p[i] = values[i];
  return p;
}

}  // namespace

TEST_CASE("layout names and shapes") {
  const ModelArch arch;
  const auto layout = arch.layout();
  REQUIRE(layout.entries().size() == 6);
  CHECK(layout.entries()[0].name == "hidden0.weight");
  CHECK(layout.entries()[0].shape == Shape{390, 392});
  CHECK(layout.entries()[4].name == "classifier.weight");
  CHECK(layout.entries()[5].shape == Shape{2});
  CHECK_THROWS_AS((ModelArch{4, {}, 2, Activation::relu}.layout()), PreconditionError);
}

TEST_CASE("init is deterministic, bounded and has zero biases") {
  const ModelArch arch;
  const auto a = init_params(arch, 3);
  CHECK(a == init_params(arch, 3));
  CHECK_FALSE(a == init_params(arch, 4));
  const auto layout = arch.layout();
  for (const auto& e : layout.entries()) {
    const auto block = a.block(e);
    if (e.shape.size() == 1) {
      for (double v : block) CHECK(v == 0.0);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(e.shape[0] + e.shape[1]));
      double worst = 0.0;
      for (double v : block) worst = std::max(worst, std::abs(v));
      CHECK(worst <= bound);
      CHECK(worst > 0.9 * bound);
    }
  }
}

TEST_CASE("hand-computed forward pass") {
  const ModelArch arch{1, {2}, 2, Activation::relu};
  const auto logits = forward(tiny_params(arch), arch, Tensor(Shape{1, 1}, {1.0}));
  // hidden = relu([1.5, -1.5]) = [1.5, 0]; logits = [1.5 + 0.1, -1.5 - 0.2]
  CHECK(logits[0] == doctest::Approx(1.6));
  CHECK(logits[1] == doctest::Approx(-1.7));
}

TEST_CASE("zero parameters give zero logits and ln 2 risk") {
  const ModelArch arch{3, {4}, 2, Activation::relu};
  const ParamVector zero(arch.layout());
  const auto env = make_env({1, 2, 3, -1, 0, 5}, 3, {0, 1});
  const auto logits = forward(zero, arch, env.inputs);
  for (double v : logits.values()) CHECK(v == 0.0);
  CHECK(risk(zero, arch, env) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("batched forward equals row-wise forward") {
  const ModelArch arch{3, {5, 4}, 2, Activation::relu};
  const auto p = init_params(arch, 9);
  const Tensor x(Shape{2, 3}, {0.3, -1.0, 2.0, 1.5, 0.2, -0.7});
  const auto both = forward(p, arch, x);
  const auto first = forward(p, arch, Tensor(Shape{1, 3}, {0.3, -1.0, 2.0}));
  const auto second = forward(p, arch, Tensor(Shape{1, 3}, {1.5, 0.2, -0.7}));
  CHECK(both[0] == first[0]);
  CHECK(both[1] == first[1]);
  CHECK(both[2] == second[0]);
  CHECK(both[3] == second[1]);
}

TEST_CASE("risk of a single sample with margin 2") {
  const auto env = make_env({0.0, 2.0}, 2, {1});
  CHECK(risk(identity_params(), identity_arch(), env) == doctest::Approx(0.1269280110429726).epsilon(1e-14));
}

TEST_CASE("risk shrinks as the margin grows") {
  double last = INFINITY;
  for (double m : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    const auto env = make_env({m, 0.0, 0.0, m}, 2, {0, 1});
    const double r = risk(identity_params(), identity_arch(), env);
    CHECK(r < last);
    last = r;
  }
  CHECK(last < 1e-6);
}

TEST_CASE("accuracy with ties and known logits") {
  const ModelArch arch{3, {4}, 2, Activation::relu};
  const ParamVector zero(arch.layout());
  // Ties resolve to class 0, so accuracy is the class-0 fraction.
  CHECK(accuracy(zero, arch, make_env(std::vector<double>(12, 1.0), 3, {0, 1, 1, 1})) == 0.25);
  const Tensor logits(Shape{4, 2}, {2, 1, 0, 3, 1, 1, 5, -5});
  const std::vector<int> labels{0, 1, 1, 0};
  CHECK(accuracy_from_logits(logits, labels) == 0.75);
  const auto env = make_env({3, 1, -1, 2}, 2, {0, 1});
  CHECK(accuracy(identity_params(), identity_arch(), env) == 1.0);
}

TEST_CASE("environment validation and concat") {
  const auto a = make_env({1, 2, 3, 4}, 2, {0, 1});
  const auto b = make_env({5, 6}, 2, {1});
  const auto c = concat({a, b}, "ab");
  CHECK(c.size() == 3);
  CHECK(c.inputs.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(c.labels == std::vector<int>{0, 1, 1});
  Environment bad = a;
  bad.labels.push_back(0);
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  CHECK_THROWS_AS(concat({a, make_env({1, 2, 3}, 3, {0})}, "x"), LayoutError);
}

TEST_CASE("layout mismatch is rejected") {
  const ModelArch arch{3, {4}, 2, Activation::relu};
  const auto env = make_env({1, 2, 3}, 3, {0});
  CHECK_THROWS_AS(risk(ParamVector::from_values({1.0, 2.0}), arch, env), LayoutError);
}
