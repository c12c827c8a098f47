#pragma once

// Composite client objective and its gradient:
//   mean_i l_cl(CE(x_i, y_i))                       local curriculum risk
//   + distill_weight * mean_j l_cl(CE(h(z_j), y_j))  generated latents
//   + (prox_mu / 2) * ||w - anchor||^2               FedProx proximal term

#include "fedcl/curriculum.hpp"
#include "fedcl/dataset.hpp"
#include "fedcl/generator.hpp"
#include "fedcl/nn.hpp"

namespace fedcl {

struct LossSpec {
  CurriculumConfig curriculum;
  double prox_mu = 0.0;
  const ModelParams* prox_anchor = nullptr;
  double distill_weight = 0.0;
  const DistillBatch* distill = nullptr;
};

// Gradient of the mean batch loss. Throws NumericError carrying the batch
// row of the first non-finite sample loss.
GradientVec backward(const ModelParams& params, const Dataset& batch,
                     const LossSpec& spec);

// Value of the same objective, without the gradient.
double objective(const ModelParams& params, const Dataset& batch,
                 const LossSpec& spec);

}  // namespace fedcl
