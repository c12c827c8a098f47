#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fedcl/errors.hpp"
#include "fedcl/losses.hpp"
#include "fedcl/nn.hpp"
#include "test_support.hpp"

using namespace fedcl;

namespace {

// Straight-line dense algebra over the flat buffer: each layer is a row-major
// [out x in] block followed by out biases.
std::vector<double> oracle_forward(std::span<const double> flat,
                                   const std::vector<std::size_t>& widths,
                                   std::size_t first, std::size_t last, bool tanh_last,
                                   std::vector<double> x) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < first; ++l) off += widths[l] * widths[l + 1] + widths[l + 1];
  for (std::size_t l = first; l < last; ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = flat[off + in * out + o];
      for (std::size_t i = 0; i < in; ++i) acc += flat[off + o * in + i] * x[i];
      y[o] = (l + 1 < last || tanh_last) ? std::tanh(acc) : acc;
    }
    off += in * out + out;
    x = std::move(y);
  }
  return x;
}

ModelParams random_model(std::uint64_t seed, std::size_t p = 5, std::size_t classes = 4) {
  ClassifierArch arch;
  arch.input_dim = p;
  arch.feature_widths = {6, 4};
  arch.num_classes = classes;
  auto m = init_classifier(arch, seed);
  std::mt19937_64 rng(seed ^ 0x55);
  std::normal_distribution<double> nd(0, 0.3);
  for (auto& v : m.stack.values()) v += nd(rng);  // nonzero biases too
  return m;
}

}  // namespace

TEST_CASE("dense stack layout") {
  DenseStack s({3, 2, 4});
  CHECK(s.layer_count() == 2);
  CHECK(s.size() == 3 * 2 + 2 + 2 * 4 + 4);
  CHECK(s.layer(1).offset == 8);
  s.weight(1, 3, 1) = 7.0;
  CHECK(s.values()[8 + 3 * 2 + 1] == 7.0);
  s.bias(0, 1) = 2.0;
  CHECK(s.values()[6 + 1] == 2.0);
  CHECK_THROWS_AS(DenseStack({3, 0, 2}), ShapeError);
}

TEST_CASE("model params validation") {
  CHECK_THROWS_AS(ModelParams(DenseStack({3, 2, 2}), 0), ShapeError);
  CHECK_THROWS_AS(ModelParams(DenseStack({3, 2, 2}), 2), ShapeError);
  ModelParams m(DenseStack({3, 2, 2}), 1);
  CHECK(m.feature_dim() == 2);
  m.stack.values()[0] = std::nan("");
  CHECK_THROWS(m.validate());
}

TEST_CASE("zero classifier gives uniform probabilities") {
  ModelParams m(DenseStack({5, 6, 4, 3}), 2);
  const std::vector<double> x{1, -2, 3, 0.5, 9};
  auto out = forward_classifier(m, x);
  for (double p : out.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));
  auto head = forward_head(m, std::vector<double>(4, 0.3));
  for (double p : head.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("identity head passes features through") {
  ModelParams m(DenseStack({2, 3, 3}), 1);
  for (std::size_t i = 0; i < 3; ++i) m.stack.weight(1, i, i) = 1.0;
  const std::vector<double> z{0.1, -0.4, 2.5};
  auto h = forward_head(m, z);
  for (std::size_t i = 0; i < 3; ++i) CHECK(h.logits[i] == z[i]);
}

TEST_CASE("classifier and head match the dense-algebra oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto m = random_model(seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> x(5);
    for (auto& v : x) v = nd(rng);
    const std::vector<std::size_t> widths{5, 6, 4, 4};
    auto out = forward_classifier(m, x);
    auto z = oracle_forward(m.stack.values(), widths, 0, 2, true, x);
    auto logits = oracle_forward(m.stack.values(), widths, 2, 3, false, z);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(out.z[i] - z[i]) < 1e-12);
    double mx = *std::max_element(logits.begin(), logits.end()), sum = 0;
    for (double l : logits) sum += std::exp(l - mx);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      CHECK(std::abs(out.logits[i] - logits[i]) < 1e-12);
      CHECK(std::abs(out.probs[i] - std::exp(logits[i] - mx) / sum) < 1e-12);
    }
    auto head = forward_head(m, out.z);
    CHECK(head.logits == out.logits);
  }
}

TEST_CASE("forward rejects wrong input width") {
  auto m = random_model(3);
  CHECK_THROWS_AS(forward_classifier(m, std::vector<double>(4)), ShapeError);
  CHECK_THROWS_AS(forward_head(m, std::vector<double>(5)), ShapeError);
}

TEST_CASE("generator forward") {
  GeneratorArch arch;
  arch.num_classes = 3;
  arch.noise_dim = 4;
  arch.hidden = {5};
  arch.latent_dim = 2;
  GeneratorParams zero(DenseStack({3 + 1 + 4, 5, 2}), 3, 4);
  const std::vector<double> eps{0.1, 0.2, -0.3, 1.0};
  for (double v : forward_generator(zero, 1, 0.4, eps)) CHECK(v == 0.0);

  auto g = init_generator(arch, 11);
  CHECK(forward_generator(g, 2, 0.7, eps) == forward_generator(g, 2, 0.7, eps));
  std::vector<double> in{0, 0, 1, 0.7, 0.1, 0.2, -0.3, 1.0};
  auto oracle = oracle_forward(g.stack.values(), {8, 5, 2}, 0, 2, true, in);
  auto z = forward_generator(g, 2, 0.7, eps);
  for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(z[i] - oracle[i]) < 1e-12);
  CHECK_THROWS_AS(forward_generator(g, 3, 0.0, eps), ShapeError);
  CHECK_THROWS_AS(forward_generator(g, -1, 0.0, eps), ShapeError);
}

TEST_CASE("softmax is a stable simplex") {
  const std::vector<double> logits{1000.0, 999.0, -1000.0};
  auto p = softmax(logits);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  for (double v : p) CHECK(v >= 0.0);
  std::vector<double> probs;
  const double ce = softmax_xent(logits, 2, probs);
  CHECK(std::isfinite(ce));
  CHECK(ce == doctest::Approx(2000.0 + std::log1p(std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  CurriculumConfig off;
  off.enabled = false;
  LossSpec spec;
  spec.curriculum = off;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = random_model(seed);
    std::mt19937_64 rng(seed + 100);
    auto batch = testing::random_dataset(8, 5, 4, rng);
    auto g = backward(m, batch, spec);
    auto num = testing::numeric_gradient(m.stack.values(), [&] { return objective(m, batch, spec); });
    CHECK(testing::relative_error(g.values, num) < 1e-4);
  }
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged") {
  CurriculumConfig off;
  off.enabled = false;
  LossSpec spec;
  spec.curriculum = off;
  auto m = random_model(4);
  std::mt19937_64 rng(9);
  auto batch = testing::random_dataset(6, 5, 4, rng);
  auto doubled = batch;
  doubled.features.insert(doubled.features.end(), batch.features.begin(), batch.features.end());
  doubled.labels.insert(doubled.labels.end(), batch.labels.begin(), batch.labels.end());
  auto a = backward(m, batch, spec);
  auto b = backward(m, doubled, spec);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) < 1e-14);
}

TEST_CASE("flat loss gives zero gradient") {
  // zero weights: logits identical for every class, and the feature
  // extractor receives no signal since the head weights are zero
  CurriculumConfig off;
  off.enabled = false;
  LossSpec spec;
  spec.curriculum = off;
  ModelParams m(DenseStack({2, 3, 2}), 1);
  Dataset d;
  d.dim = 2;
  d.num_classes = 2;
  d.features = {1, 2, 1, 2};
  d.labels = {0, 1};
  auto g = backward(m, d, spec);
  for (double v : g.values) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("non-finite input reports the sample index") {
  CurriculumConfig off;
  off.enabled = false;
  LossSpec spec;
  spec.curriculum = off;
  auto m = random_model(1);
  Dataset d;
  d.dim = 5;
  d.num_classes = 4;
  d.features.assign(15, 0.1);
  d.features[2 * 5 + 1] = std::numeric_limits<double>::quiet_NaN();
  d.labels = {0, 1, 2};
  try {
    backward(m, d, spec);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.sample_index() == 2);
  }
}

TEST_CASE("sgd step") {
  std::vector<double> p{1.0, -3.0};
  auto opt = OptimizerState::sgd(0.01);
  step(p, std::vector<double>{0.0, 0.0}, opt);
  CHECK(p == std::vector<double>{1.0, -3.0});
  step(p, std::vector<double>{2.0, 0.0}, opt);
  CHECK(p[0] == doctest::Approx(0.98).epsilon(1e-15));
  CHECK_THROWS_AS(step(p, std::vector<double>{1.0}, opt), ShapeError);
}

TEST_CASE("adam matches hand-computed recurrence") {
  const double lr = 1e-3, g = 0.5;
  std::vector<double> p{2.0};
  auto opt = OptimizerState::adam(lr, 1);
  double m = 0, v = 0, ref = 2.0;
  for (int t = 1; t <= 3; ++t) {
    step(p, std::vector<double>{g}, opt);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    ref -= lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(std::abs(p[0] - ref) < 1e-12);
  }
  // first step is lr * g/(|g| + eps) in magnitude
  std::vector<double> q{0.0};
  auto fresh = OptimizerState::adam(lr, 1);
  step(q, std::vector<double>{g}, fresh);
  CHECK(std::abs(q[0] + lr * g / (g + 1e-8)) < 1e-12);
}

TEST_CASE("initialization") {
  ClassifierArch arch;
  arch.input_dim = 8;
  arch.num_classes = 10;
  auto a = init_classifier(arch, 42);
  auto b = init_classifier(arch, 42);
  auto c = init_classifier(arch, 43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.split_index == 2);
  CHECK(a.feature_dim() == 32);
  for (std::size_t l = 0; l < a.stack.layer_count(); ++l) {
    const auto& s = a.stack.layer(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (std::size_t i = 0; i < s.weight_count(); ++i)
      CHECK(std::abs(a.stack.values()[s.offset + i]) <= bound);
    for (std::size_t o = 0; o < s.out; ++o) CHECK(a.stack.bias(l, o) == 0.0);
  }
  CHECK_THROWS_AS(init_classifier(ClassifierArch{0, {4}, {}, 2}, 1), ShapeError);
}

TEST_CASE("glorot weights have mean zero") {
  // 10k weights, U(-b, b): sd of the mean is b/sqrt(3n)
  DenseStack s({100, 100});
  glorot_init(s, 7);
  const double b = std::sqrt(6.0 / 200.0);
  double mean = 0;
  for (std::size_t i = 0; i < 10000; ++i) mean += s.values()[i];
  mean /= 10000;
  CHECK(std::abs(mean) < 3 * b / std::sqrt(3.0 * 10000));
}
