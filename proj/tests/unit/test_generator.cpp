#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fedcl/errors.hpp"
#include "fedcl/generator.hpp"
#include "fedcl/losses.hpp"
#include "test_support.hpp"

using namespace fedcl;

namespace {

ModelParams random_head_model(std::uint64_t seed, std::size_t p, std::size_t d,
                              std::size_t classes, double jitter = 0.5) {
  ClassifierArch arch;
  arch.input_dim = p;
  arch.feature_widths = {4, d};
  arch.num_classes = classes;
  auto m = init_classifier(arch, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> nd(0, jitter);
  for (auto& v : m.stack.values()) v += nd(rng);
  return m;
}

GeneratorParams toy_generator(std::uint64_t seed, std::size_t classes, std::size_t d) {
  GeneratorArch arch;
  arch.num_classes = classes;
  arch.noise_dim = 4;
  arch.hidden = {5};
  arch.latent_dim = d;
  auto g = init_generator(arch, seed);
  std::mt19937_64 rng(seed + 7);
  std::normal_distribution<double> nd(0, 0.3);
  for (auto& v : g.stack.values()) v += nd(rng);
  return g;
}

GlobalPool toy_pool() {
  GlobalPool p;
  p.sorted_samples = {-3.0, -1.0, 0.5, 2.0, 4.0};
  p.per_client_counts = {5};
  return p;
}

}  // namespace

TEST_CASE("label prior") {
  std::vector<std::vector<std::uint64_t>> one{{1, 1}};
  auto p = update_label_prior(one);
  CHECK(p.probabilities == std::vector<double>{0.5, 0.5});
  std::vector<std::vector<std::uint64_t>> two{{10, 0}, {0, 10}};
  CHECK(update_label_prior(two).probabilities == std::vector<double>{0.5, 0.5});

  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<std::uint64_t>> cs(1 + rng() % 6, std::vector<std::uint64_t>(5));
    for (auto& c : cs)
      for (auto& v : c) v = rng() % 50;
    cs[0][0] += 1;
    auto pr = update_label_prior(cs);
    std::vector<double> sums(5, 0.0);
    double total = 0;
    for (const auto& c : cs)
      for (std::size_t j = 0; j < 5; ++j) {
        sums[j] += static_cast<double>(c[j]);
        total += static_cast<double>(c[j]);
      }
    double mass = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(pr.probabilities[j] - sums[j] / total) < 1e-12);
      CHECK(pr.counts[j] == static_cast<std::uint64_t>(sums[j]));
      mass += pr.probabilities[j];
    }
    CHECK(std::abs(mass - 1.0) < 1e-12);
  }
  std::vector<std::vector<std::uint64_t>> zeros{{0, 0}, {0, 0}};
  CHECK_THROWS_AS(update_label_prior(zeros), DataError);
}

TEST_CASE("ensemble logits") {
  auto a = random_head_model(1, 3, 4, 3);
  std::vector<double> z{0.1, -0.2, 0.7, 0.3};
  std::vector<ModelParams> single{a};
  CHECK(ensemble_logits(single, z) == forward_head(a, z).logits);

  // a head negated in its output layer yields opposite logits
  auto neg = a;
  const auto& out = neg.stack.layer(neg.stack.layer_count() - 1);
  for (std::size_t i = 0; i < out.size(); ++i) neg.stack.values()[out.offset + i] *= -1.0;
  std::vector<ModelParams> pair{a, neg};
  for (double v : ensemble_logits(pair, z)) CHECK(std::abs(v) < 1e-15);

  std::vector<ModelParams> three{random_head_model(2, 3, 4, 3), random_head_model(3, 3, 4, 3),
                                 random_head_model(4, 3, 4, 3)};
  auto got = ensemble_logits(three, z);
  std::vector<double> oracle(3, 0.0);
  for (const auto& h : three) {
    auto l = forward_head(h, z).logits;
    for (std::size_t c = 0; c < 3; ++c) oracle[c] += l[c] / 3.0;
  }
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(got[c] - oracle[c]) < 1e-12);

  std::vector<ModelParams> perm{three[2], three[0], three[1]};
  auto permuted = ensemble_logits(perm, z);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(got[c] - permuted[c]) < 1e-12);

  CHECK_THROWS_AS(ensemble_logits(three, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("distill batch sampling") {
  auto g = toy_generator(1, 2, 3);
  auto prior = LabelPrior::uniform(2);
  auto pool = toy_pool();
  Rng r1(5), r2(5);
  auto a = sample_distill_batch(g, prior, pool, 64, r1);
  auto b = sample_distill_batch(g, prior, pool, 64, r2);
  CHECK(a.labels == b.labels);
  CHECK(a.latents == b.latents);
  CHECK(a.size() == 64);
  CHECK(a.conditioners.size() == 64);
  CHECK(a.noises.size() == 64 * 4);
  CHECK(a.latents.size() == 64 * 3);
  for (double c : a.conditioners)
    CHECK(std::find(pool.sorted_samples.begin(), pool.sorted_samples.end(), c) !=
          pool.sorted_samples.end());
  CHECK(normalize_conditioner(pool, -3.0) == 0.0);
  CHECK(normalize_conditioner(pool, 4.0) == 1.0);
  GlobalPool flat{{2.0, 2.0}, {2}};
  CHECK(normalize_conditioner(flat, 2.0) == 0.5);
}

TEST_CASE("generator loss is zero at the curriculum threshold") {
  // zero-weight heads ignore z; equal logits give CE = ln 2 for any label
  ModelParams h(DenseStack({3, 4, 3, 2}), 2);
  std::vector<ModelParams> heads{h, h};
  auto g = toy_generator(2, 2, 3);
  CurriculumConfig c;
  c.tau = std::numbers::ln2;
  auto lg = generator_loss(g, heads, LabelPrior::uniform(2), toy_pool(), 16, c, 3);
  CHECK(std::abs(lg.loss) < 1e-15);
  for (double v : lg.grad.values) CHECK(v == 0.0);
}

TEST_CASE("generator loss is deterministic under the seed") {
  std::vector<ModelParams> heads{random_head_model(1, 3, 3, 2), random_head_model(2, 3, 3, 2)};
  auto g = toy_generator(4, 2, 3);
  CurriculumConfig c;
  auto a = generator_loss(g, heads, LabelPrior::uniform(2), toy_pool(), 32, c, 9);
  auto b = generator_loss(g, heads, LabelPrior::uniform(2), toy_pool(), 32, c, 9);
  CHECK(a.loss == b.loss);
  CHECK(a.grad.values == b.grad.values);
}

TEST_CASE("generator gradient matches finite differences") {
  CurriculumConfig c;
  c.tau = 0.6;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    std::vector<ModelParams> heads{random_head_model(s, 3, 3, 2, 1.0),
                                   random_head_model(s + 100, 3, 3, 2, 1.0)};
    auto g = toy_generator(s, 2, 3);
    LabelPrior prior;
    prior.counts = {3, 5};
    prior.probabilities = {3.0 / 8, 5.0 / 8};
    auto lg = generator_loss(g, heads, prior, toy_pool(), 8, c, s);
    auto num = testing::numeric_gradient(g.stack.values(), [&] {
      return generator_loss(g, heads, prior, toy_pool(), 8, c, s).loss;
    });
    CHECK(testing::relative_error(lg.grad.values, num) < 1e-4);
  }
}

TEST_CASE("generator training") {
  std::vector<ModelParams> heads{random_head_model(1, 3, 3, 2), random_head_model(2, 3, 3, 2)};
  auto g = toy_generator(1, 2, 3);
  CurriculumConfig c;
  auto opt = OptimizerState::adam(1e-4, g.stack.size());
  auto none = train_generator(g, heads, LabelPrior::uniform(2), toy_pool(), 0, opt, 8, c, 1);
  CHECK(none.gen == g);
  CHECK(none.losses.empty());

  int improved = 0;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    std::vector<ModelParams> disc{random_head_model(s, 3, 3, 2, 2.0),
                                  random_head_model(s + 50, 3, 3, 2, 2.0)};
    auto gen = toy_generator(s, 2, 3);
    auto adam = OptimizerState::adam(1e-3, gen.stack.size());
    auto run = train_generator(gen, disc, LabelPrior::uniform(2), toy_pool(), 200, adam, 128, c, s);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
      first += run.losses[static_cast<std::size_t>(i)];
      last += run.losses[run.losses.size() - 1 - static_cast<std::size_t>(i)];
    }
    if (last <= first) ++improved;
  }
  CHECK(improved >= 2);
}

TEST_CASE("distillation term") {
  CurriculumConfig c;
  auto g = toy_generator(3, 2, 3);
  Rng rng(4);
  auto batch = sample_distill_batch(g, LabelPrior::uniform(2), toy_pool(), 12, rng);

  ModelParams flat(DenseStack({3, 4, 3, 2}), 2);
  CurriculumConfig at_tau;
  at_tau.tau = std::numbers::ln2;
  CHECK(std::abs(distillation_term(flat, batch, at_tau).loss) < 1e-15);

  for (std::uint64_t s = 1; s <= 50; ++s) {
    auto m = random_head_model(s, 3, 3, 2, 1.0);
    auto d = distillation_term(m, batch, c);
    const std::size_t head_start = m.head_offset();
    for (std::size_t i = 0; i < head_start; ++i) CHECK(d.grad.values[i] == 0.0);
    auto num = testing::numeric_gradient(m.stack.values(),
                                         [&] { return distillation_term(m, batch, c).loss; });
    CHECK(testing::relative_error(d.grad.values, num) < 1e-4);
  }

  auto wrong = random_head_model(1, 3, 5, 2);
  CHECK_THROWS_AS(distillation_term(wrong, batch, c), ShapeError);
}

TEST_CASE("client objective gradient is the sum of its terms") {
  CurriculumConfig c;
  c.tau = 1.0;
  auto g = toy_generator(5, 2, 3);
  Rng rng(6);
  auto batch = sample_distill_batch(g, LabelPrior::uniform(2), toy_pool(), 10, rng);
  std::mt19937_64 drng(7);
  for (std::uint64_t s = 1; s <= 20; ++s) {
    auto m = random_head_model(s, 3, 3, 2);
    auto data = testing::random_dataset(7, 3, 2, drng);
    LossSpec local;
    local.curriculum = c;
    LossSpec full = local;
    full.distill = &batch;
    full.distill_weight = 1.0;
    auto a = backward(m, data, local);
    auto b = distillation_term(m, batch, c);
    auto sum = backward(m, data, full);
    for (std::size_t i = 0; i < sum.values.size(); ++i)
      CHECK(std::abs(sum.values[i] - (a.values[i] + b.grad.values[i])) < 1e-12);
    auto num = testing::numeric_gradient(m.stack.values(), [&] { return objective(m, data, full); });
    CHECK(testing::relative_error(sum.values, num) < 1e-4);
  }
}
