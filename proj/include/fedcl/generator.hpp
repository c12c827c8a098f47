#pragma once

// Server-side conditional latent generator and the client-side distillation
// term built on it.
//
// The generator is trained so that the averaged logits of all client heads
// classify its latents as the requested label, under the curriculum loss.
// Clients then add the curriculum loss of their own head on freshly generated
// latents to their local objective.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedcl/curriculum.hpp"
#include "fedcl/nn.hpp"
#include "fedcl/sync.hpp"

namespace fedcl {

struct LabelPrior {
  std::vector<std::uint64_t> counts;
  std::vector<double> probabilities;

  std::size_t num_classes() const noexcept { return counts.size(); }
  static LabelPrior uniform(std::size_t classes);
};

// Element-wise sum of the per-client counters, normalized.
LabelPrior update_label_prior(std::span<const std::vector<std::uint64_t>> counters);

// Mean over heads of the head logits g(z; w^h_k).
std::vector<double> ensemble_logits(std::span<const ModelParams> heads,
                                    std::span<const double> z);

struct DistillBatch {
  std::vector<int> labels;
  std::vector<double> conditioners;  // raw pooled difficulty samples
  std::vector<double> noises;        // row-major [B x noise_dim]
  std::vector<double> latents;       // row-major [B x latent_dim]
  std::size_t noise_dim = 0;
  std::size_t latent_dim = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> latent(std::size_t i) const {
    return {latents.data() + i * latent_dim, latent_dim};
  }
  std::span<const double> noise(std::size_t i) const {
    return {noises.data() + i * noise_dim, noise_dim};
  }
};

// Pool-range min-max scaling of a difficulty sample into [0, 1]; 0.5 when
// the pool has zero range.
double normalize_conditioner(const GlobalPool& pool, double beta);

// Draws B labels from the prior, B conditioners from the pool, B standard
// normal noise vectors, and runs the generator on them.
DistillBatch sample_distill_batch(const GeneratorParams& gen, const LabelPrior& prior,
                                  const GlobalPool& pool, std::size_t batch_size,
                                  Rng& rng);

struct LossAndGrad {
  double loss = 0.0;
  GradientVec grad;
};

// Mean curriculum loss of softmax(ensemble logits) on a generated batch and
// its gradient with respect to the generator parameters only.
LossAndGrad generator_loss(const GeneratorParams& gen, std::span<const ModelParams> heads,
                           const LabelPrior& prior, const GlobalPool& pool,
                           std::size_t batch_size, const CurriculumConfig& cfg,
                           std::uint64_t seed);

struct GeneratorTraining {
  GeneratorParams gen;
  std::vector<double> losses;
};

// `steps` optimizer updates of generator_loss; step s samples its batch from
// derive_seed(seed, "gen-step", s).
GeneratorTraining train_generator(GeneratorParams gen, std::span<const ModelParams> heads,
                                  const LabelPrior& prior, const GlobalPool& pool,
                                  std::size_t steps, OptimizerState& opt,
                                  std::size_t batch_size, const CurriculumConfig& cfg,
                                  std::uint64_t seed);

// Mean curriculum loss of the client's own head on generated latents. The
// gradient is full-length but zero over the feature-extractor parameters.
LossAndGrad distillation_term(const ModelParams& client, const DistillBatch& batch,
                              const CurriculumConfig& cfg);

}  // namespace fedcl
