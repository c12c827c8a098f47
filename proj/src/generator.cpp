#include "fedcl/generator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "fedcl/errors.hpp"

namespace fedcl {

LabelPrior LabelPrior::uniform(std::size_t classes) {
  LabelPrior p;
  p.counts.assign(classes, 0);
  p.probabilities.assign(classes, 1.0 / static_cast<double>(classes));
  return p;
}

LabelPrior update_label_prior(std::span<const std::vector<std::uint64_t>> counters) {
  if (counters.empty()) throw DataError("label prior needs at least one counter");
  LabelPrior p;
  p.counts.assign(counters.front().size(), 0);
  for (const auto& c : counters) {
    if (c.size() != p.counts.size()) throw ShapeError("label counters differ in length");
    for (std::size_t y = 0; y < c.size(); ++y) p.counts[y] += c[y];
  }
  std::uint64_t total = 0;
  for (auto c : p.counts) total += c;
  if (total == 0) throw DataError("label prior from all-zero counters");
  p.probabilities.resize(p.counts.size());
  for (std::size_t y = 0; y < p.counts.size(); ++y)
    p.probabilities[y] = static_cast<double>(p.counts[y]) / static_cast<double>(total);
  return p;
}

std::vector<double> ensemble_logits(std::span<const ModelParams> heads,
                                    std::span<const double> z) {
  if (heads.empty()) throw std::invalid_argument("ensemble of zero heads");
  std::vector<double> mean;
  Trace t;
  for (const auto& h : heads) {
    if (h.feature_dim() != z.size()) throw ShapeError("latent does not match head input");
    run_layers(h.stack, h.split_index, h.stack.layer_count(), false, z, t);
    const auto& logits = t.acts.back();
    if (mean.empty()) mean.assign(logits.size(), 0.0);
    if (logits.size() != mean.size()) throw ShapeError("heads disagree on class count");
    for (std::size_t c = 0; c < logits.size(); ++c) mean[c] += logits[c];
  }
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (double& v : mean) v *= inv;
  return mean;
}

double normalize_conditioner(const GlobalPool& pool, double beta) {
  const double range = pool.max() - pool.min();
  if (!(range > 0.0)) return 0.5;
  return (beta - pool.min()) / range;
}

DistillBatch sample_distill_batch(const GeneratorParams& gen, const LabelPrior& prior,
                                  const GlobalPool& pool, std::size_t batch_size,
                                  Rng& rng) {
  if (prior.num_classes() != gen.num_classes) throw ShapeError("prior and generator disagree on classes");
  DistillBatch b;
  b.noise_dim = gen.noise_dim;
  b.latent_dim = gen.latent_dim();
  std::discrete_distribution<int> label_dist(prior.probabilities.begin(),
                                             prior.probabilities.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  b.labels.reserve(batch_size);
  b.conditioners.reserve(batch_size);
  b.noises.reserve(batch_size * gen.noise_dim);
  for (std::size_t i = 0; i < batch_size; ++i) {
    b.labels.push_back(label_dist(rng));
    b.conditioners.push_back(draw_global_sample(pool, rng));
    for (std::size_t j = 0; j < gen.noise_dim; ++j) b.noises.push_back(normal(rng));
  }
  b.latents.reserve(batch_size * b.latent_dim);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto z = forward_generator(gen, b.labels[i],
                                     normalize_conditioner(pool, b.conditioners[i]),
                                     b.noise(i));
    b.latents.insert(b.latents.end(), z.begin(), z.end());
  }
  return b;
}

LossAndGrad generator_loss(const GeneratorParams& gen, std::span<const ModelParams> heads,
                           const LabelPrior& prior, const GlobalPool& pool,
                           std::size_t batch_size, const CurriculumConfig& cfg,
                           std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("generator batch size must be positive");
  if (heads.empty()) throw std::invalid_argument("generator loss needs at least one head");
  double prior_mass = 0.0;
  for (double p : prior.probabilities) prior_mass += p;
  if (prior.num_classes() != gen.num_classes || !(prior_mass > 0.0))
    throw DataError("degenerate label prior");

  Rng rng(seed);
  std::discrete_distribution<int> label_dist(prior.probabilities.begin(),
                                             prior.probabilities.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  LossAndGrad out;
  out.grad.values.assign(gen.stack.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  const double inv_k = 1.0 / static_cast<double>(heads.size());
  std::vector<double> eps(gen.noise_dim);
  std::vector<Trace> head_traces(heads.size());
  Trace gen_trace;
  std::vector<double> probs, mean_logits, dlogits, dz, dz_k;

  for (std::size_t i = 0; i < batch_size; ++i) {
    const int y = label_dist(rng);
    const double beta = draw_global_sample(pool, rng);
    for (auto& e : eps) e = normal(rng);

    const auto in = generator_input(gen, y, normalize_conditioner(pool, beta), eps);
    run_layers(gen.stack, 0, gen.stack.layer_count(), true, in, gen_trace);
    const auto& z = gen_trace.acts.back();

    mean_logits.assign(gen.num_classes, 0.0);
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const auto& h = heads[k];
      run_layers(h.stack, h.split_index, h.stack.layer_count(), false, z, head_traces[k]);
      const auto& lg = head_traces[k].acts.back();
      for (std::size_t c = 0; c < lg.size(); ++c) mean_logits[c] += lg[c];
    }
    for (double& v : mean_logits) v *= inv_k;

    const double ce = softmax_xent(mean_logits, y, probs);
    const auto s = cl_loss(ce, cfg);
    if (!std::isfinite(s.cl_loss))
      throw NumericError("non-finite generator loss at sample " + std::to_string(i), i);
    out.loss += s.cl_loss * inv_b;

    dlogits.resize(probs.size());
    const double scale = cl_loss_slope(s) * inv_b * inv_k;
    for (std::size_t c = 0; c < probs.size(); ++c)
      dlogits[c] = scale * (probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0));

    dz.assign(z.size(), 0.0);
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const auto& h = heads[k];
      backprop_layers(h.stack, h.split_index, h.stack.layer_count(), false, head_traces[k],
                      dlogits, {}, 1.0, &dz_k);
      for (std::size_t j = 0; j < dz.size(); ++j) dz[j] += dz_k[j];
    }
    backprop_layers(gen.stack, 0, gen.stack.layer_count(), true, gen_trace, dz,
                    out.grad.values, 1.0, nullptr);
  }
  out.grad.loss = out.loss;
  return out;
}

GeneratorTraining train_generator(GeneratorParams gen, std::span<const ModelParams> heads,
                                  const LabelPrior& prior, const GlobalPool& pool,
                                  std::size_t steps, OptimizerState& opt,
                                  std::size_t batch_size, const CurriculumConfig& cfg,
                                  std::uint64_t seed) {
  GeneratorTraining out;
  out.losses.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    auto lg = generator_loss(gen, heads, prior, pool, batch_size, cfg,
                             derive_seed(seed, "gen-step", s));
    if (!std::isfinite(lg.loss))
      throw NumericError("non-finite generator loss at step " + std::to_string(s));
    step(gen, lg.grad, opt);
    out.losses.push_back(lg.loss);
  }
  out.gen = std::move(gen);
  return out;
}

LossAndGrad distillation_term(const ModelParams& client, const DistillBatch& batch,
                              const CurriculumConfig& cfg) {
  if (batch.size() == 0) throw std::invalid_argument("empty distillation batch");
  if (batch.latent_dim != client.feature_dim())
    throw ShapeError("generated latent dimension does not match head input");
  LossAndGrad out;
  out.grad.values.assign(client.stack.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto& st = client.stack;
  Trace t;
  std::vector<double> probs, dlogits;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    run_layers(st, client.split_index, st.layer_count(), false, batch.latent(i), t);
    const double ce = softmax_xent(t.acts.back(), batch.labels[i], probs);
    const auto s = cl_loss(ce, cfg);
    if (!std::isfinite(s.cl_loss))
      throw NumericError("non-finite distillation loss at sample " + std::to_string(i), i);
    out.loss += s.cl_loss * inv_b;
    dlogits.resize(probs.size());
    const double scale = cl_loss_slope(s) * inv_b;
    for (std::size_t c = 0; c < probs.size(); ++c)
      dlogits[c] = scale * (probs[c] - (static_cast<int>(c) == batch.labels[i] ? 1.0 : 0.0));
    backprop_layers(st, client.split_index, st.layer_count(), false, t, dlogits,
                    out.grad.values, 1.0, nullptr);
  }
  out.grad.loss = out.loss;
  return out;
}

}  // namespace fedcl
