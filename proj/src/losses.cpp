#include "fedcl/losses.hpp"

#include <cmath>
#include <string>

#include "fedcl/errors.hpp"

namespace fedcl {

namespace {

void add_proximal(const ModelParams& params, const LossSpec& spec, GradientVec& g) {
  if (spec.prox_mu == 0.0 || spec.prox_anchor == nullptr) return;
  const auto w = params.stack.values();
  const auto a = spec.prox_anchor->stack.values();
  if (w.size() != a.size()) throw ShapeError("proximal anchor shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - a[i];
    sq += d * d;
    g.values[i] += spec.prox_mu * d;
  }
  g.loss += 0.5 * spec.prox_mu * sq;
}

}  // namespace

GradientVec backward(const ModelParams& params, const Dataset& batch,
                     const LossSpec& spec) {
  if (batch.empty()) throw std::invalid_argument("backward on an empty batch");
  if (batch.dim != params.input_dim()) throw ShapeError("batch feature dimension mismatch");
  GradientVec g;
  g.values.assign(params.stack.size(), 0.0);
  const auto& st = params.stack;
  const std::size_t split = params.split_index;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Trace f, h;
  std::vector<double> probs, dlogits, dz;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    run_layers(st, 0, split, true, batch.row(i), f);
    run_layers(st, split, st.layer_count(), false, f.acts.back(), h);
    const int y = batch.labels[i];
    const double ce = softmax_xent(h.acts.back(), y, probs);
    const auto s = cl_loss(ce, spec.curriculum);
    if (!std::isfinite(s.cl_loss))
      throw NumericError("non-finite loss at batch row " + std::to_string(i), i);
    g.loss += s.cl_loss * inv_n;

    const double scale = cl_loss_slope(s) * inv_n;
    dlogits.resize(probs.size());
    for (std::size_t c = 0; c < probs.size(); ++c)
      dlogits[c] = scale * (probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0));
    backprop_layers(st, split, st.layer_count(), false, h, dlogits, g.values, 1.0, &dz);
    backprop_layers(st, 0, split, true, f, dz, g.values, 1.0, nullptr);
  }

  if (spec.distill_weight != 0.0 && spec.distill != nullptr && spec.distill->size() > 0) {
    const auto d = distillation_term(params, *spec.distill, spec.curriculum);
    for (std::size_t i = 0; i < g.values.size(); ++i)
      g.values[i] += spec.distill_weight * d.grad.values[i];
    g.loss += spec.distill_weight * d.loss;
  }
  add_proximal(params, spec, g);
  return g;
}

double objective(const ModelParams& params, const Dataset& batch,
                 const LossSpec& spec) {
  if (batch.empty()) throw std::invalid_argument("objective on an empty batch");
  double loss = 0.0;
  std::vector<double> probs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto out = forward_classifier(params, batch.row(i));
    loss += cl_loss(softmax_xent(out.logits, batch.labels[i], probs), spec.curriculum).cl_loss;
  }
  loss /= static_cast<double>(batch.size());
  if (spec.distill_weight != 0.0 && spec.distill != nullptr && spec.distill->size() > 0) {
    double d = 0.0;
    for (std::size_t j = 0; j < spec.distill->size(); ++j) {
      const auto out = forward_head(params, spec.distill->latent(j));
      d += cl_loss(softmax_xent(out.logits, spec.distill->labels[j], probs), spec.curriculum)
               .cl_loss;
    }
    loss += spec.distill_weight * d / static_cast<double>(spec.distill->size());
  }
  if (spec.prox_mu != 0.0 && spec.prox_anchor != nullptr) {
    const auto w = params.stack.values();
    const auto a = spec.prox_anchor->stack.values();
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) sq += (w[i] - a[i]) * (w[i] - a[i]);
    loss += 0.5 * spec.prox_mu * sq;
  }
  return loss;
}

}  // namespace fedcl
