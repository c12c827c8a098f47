#include "fedcl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedcl/errors.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

DenseStack::DenseStack(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ShapeError("dense stack needs at least one layer");
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0)
      throw ShapeError("zero-dimension layer at position " + std::to_string(i));
    LayerShape s{widths[i], widths[i + 1], offset};
    offset += s.size();
    shapes_.push_back(s);
  }
  values_.assign(offset, 0.0);
}

std::size_t DenseStack::input_dim() const {
  return shapes_.empty() ? 0 : shapes_.front().in;
}

std::size_t DenseStack::output_dim() const {
  return shapes_.empty() ? 0 : shapes_.back().out;
}

bool DenseStack::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool DenseStack::same_shape(const DenseStack& other) const noexcept {
  if (shapes_.size() != other.shapes_.size()) return false;
  for (std::size_t i = 0; i < shapes_.size(); ++i)
    if (shapes_[i].in != other.shapes_[i].in || shapes_[i].out != other.shapes_[i].out)
      return false;
  return true;
}

ModelParams::ModelParams(DenseStack s, std::size_t split)
    : stack(std::move(s)), split_index(split) {
  validate();
}

void ModelParams::validate() const {
  if (split_index == 0 || split_index >= stack.layer_count())
    throw ShapeError("split index must satisfy 0 < split < layer count");
  for (std::size_t i = 0; i + 1 < stack.layer_count(); ++i)
    if (stack.layer(i).out != stack.layer(i + 1).in)
      throw ShapeError("layer dimensions do not chain");
  if (!stack.all_finite()) throw NumericError("non-finite classifier parameter");
}

GeneratorParams::GeneratorParams(DenseStack s, std::size_t classes, std::size_t noise)
    : stack(std::move(s)), num_classes(classes), noise_dim(noise) {
  validate();
}

void GeneratorParams::validate() const {
  if (stack.layer_count() == 0) throw ShapeError("empty generator");
  if (stack.input_dim() != input_dim())
    throw ShapeError("generator input must be classes + 1 + noise_dim");
  if (!stack.all_finite()) throw NumericError("non-finite generator parameter");
}

// ---------------------------------------------------------------------------

void run_layers(const DenseStack& stack, std::size_t first, std::size_t last,
                bool tanh_last, std::span<const double> input, Trace& trace) {
  if (input.size() != stack.layer(first).in)
    throw ShapeError("input dimension " + std::to_string(input.size()) +
                     " does not match layer input " +
                     std::to_string(stack.layer(first).in));
  const std::size_t n = last - first;
  trace.acts.resize(n + 1);
  trace.acts[0].assign(input.begin(), input.end());
  const auto values = stack.values();
  for (std::size_t j = 0; j < n; ++j) {
    const LayerShape& s = stack.layer(first + j);
    const auto& in = trace.acts[j];
    auto& out = trace.acts[j + 1];
    out.resize(s.out);
    const double* w = values.data() + s.offset;
    const double* b = values.data() + s.bias_offset();
    const bool act = (j + 1 < n) || tanh_last;
    for (std::size_t o = 0; o < s.out; ++o) {
      double acc = b[o];
      const double* row = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * in[i];
      out[o] = act ? std::tanh(acc) : acc;
    }
  }
}

void backprop_layers(const DenseStack& stack, std::size_t first,
                     std::size_t last, bool tanh_last, const Trace& trace,
                     std::span<const double> d_out, std::span<double> grad,
                     double scale, std::vector<double>* d_in) {
  const std::size_t n = last - first;
  const auto values = stack.values();
  std::vector<double> delta(d_out.begin(), d_out.end());
  std::vector<double> prev;
  for (std::size_t jj = n; jj-- > 0;) {
    const LayerShape& s = stack.layer(first + jj);
    const auto& out = trace.acts[jj + 1];
    const auto& in = trace.acts[jj];
    const bool act = (jj + 1 < n) || tanh_last;
    if (act)
      for (std::size_t o = 0; o < s.out; ++o) delta[o] *= 1.0 - out[o] * out[o];
    if (!grad.empty()) {
      double* gw = grad.data() + s.offset;
      double* gb = grad.data() + s.bias_offset();
      for (std::size_t o = 0; o < s.out; ++o) {
        const double d = scale * delta[o];
        double* row = gw + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) row[i] += d * in[i];
        gb[o] += d;
      }
    }
    if (jj == 0 && d_in == nullptr) break;
    prev.assign(s.in, 0.0);
    const double* w = values.data() + s.offset;
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = delta[o];
      const double* row = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) prev[i] += row[i] * d;
    }
    delta.swap(prev);
  }
  if (d_in != nullptr) *d_in = std::move(delta);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double softmax_xent(std::span<const double> logits, int label,
                    std::vector<double>& probs) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ShapeError("label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (double& v : probs) v /= sum;
  return std::log(sum) + mx - logits[static_cast<std::size_t>(label)];
}

ClassifierOutput forward_classifier(const ModelParams& params,
                                    std::span<const double> x) {
  const auto& st = params.stack;
  Trace t;
  run_layers(st, 0, params.split_index, true, x, t);
  ClassifierOutput out;
  out.z = t.acts.back();
  Trace h;
  run_layers(st, params.split_index, st.layer_count(), false, out.z, h);
  out.logits = h.acts.back();
  out.probs = softmax(out.logits);
  return out;
}

HeadOutput forward_head(const ModelParams& params, std::span<const double> z) {
  Trace h;
  run_layers(params.stack, params.split_index, params.stack.layer_count(), false,
             z, h);
  HeadOutput out;
  out.logits = h.acts.back();
  out.probs = softmax(out.logits);
  return out;
}

std::vector<double> generator_input(const GeneratorParams& gen, int label,
                                    double beta_cond,
                                    std::span<const double> epsilon) {
  if (label < 0 || static_cast<std::size_t>(label) >= gen.num_classes)
    throw ShapeError("generator label " + std::to_string(label) + " out of range");
  if (epsilon.size() != gen.noise_dim) throw ShapeError("noise dimension mismatch");
  std::vector<double> in(gen.input_dim(), 0.0);
  in[static_cast<std::size_t>(label)] = 1.0;
  in[gen.num_classes] = beta_cond;
  std::copy(epsilon.begin(), epsilon.end(), in.begin() + gen.num_classes + 1);
  return in;
}

std::vector<double> forward_generator(const GeneratorParams& gen, int label,
                                      double beta_cond,
                                      std::span<const double> epsilon) {
  const auto in = generator_input(gen, label, beta_cond, epsilon);
  Trace t;
  run_layers(gen.stack, 0, gen.stack.layer_count(), true, in, t);
  return t.acts.back();
}

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::sgd(double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  OptimizerState s;
  s.kind = OptimizerKind::SGD;
  s.lr = lr;
  return s;
}

OptimizerState OptimizerState::adam(double lr, std::size_t param_count) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  OptimizerState s;
  s.kind = OptimizerKind::Adam;
  s.lr = lr;
  s.m.assign(param_count, 0.0);
  s.v.assign(param_count, 0.0);
  return s;
}

void step(std::span<double> params, std::span<const double> grad,
          OptimizerState& opt) {
  if (params.size() != grad.size()) throw ShapeError("gradient shape mismatch");
  if (opt.kind == OptimizerKind::SGD) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= opt.lr * grad[i];
    ++opt.steps;
    return;
  }
  if (opt.m.size() != params.size() || opt.v.size() != params.size())
    throw ShapeError("Adam moment shape mismatch");
  ++opt.steps;
  const double t = static_cast<double>(opt.steps);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grad[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    const double mh = opt.m[i] / c1;
    const double vh = opt.v[i] / c2;
    params[i] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
  }
}

void step(ModelParams& params, const GradientVec& grad, OptimizerState& opt) {
  step(params.stack.values(), grad.values, opt);
}

void step(GeneratorParams& gen, const GradientVec& grad, OptimizerState& opt) {
  step(gen.stack.values(), grad.values, opt);
}

// ---------------------------------------------------------------------------

void glorot_init(DenseStack& stack, std::uint64_t seed) {
  Rng rng(seed);
  auto values = stack.values();
  std::fill(values.begin(), values.end(), 0.0);
  for (const auto& s : stack.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t k = 0; k < s.weight_count(); ++k) values[s.offset + k] = dist(rng);
  }
}

ModelParams init_classifier(const ClassifierArch& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.num_classes == 0 || arch.feature_widths.empty())
    throw ShapeError("zero-dimension classifier architecture");
  std::vector<std::size_t> widths{arch.input_dim};
  widths.insert(widths.end(), arch.feature_widths.begin(), arch.feature_widths.end());
  widths.insert(widths.end(), arch.head_hidden.begin(), arch.head_hidden.end());
  widths.push_back(arch.num_classes);
  DenseStack stack(widths);
  glorot_init(stack, seed);
  return ModelParams(std::move(stack), arch.feature_widths.size());
}

GeneratorParams init_generator(const GeneratorArch& arch, std::uint64_t seed) {
  if (arch.num_classes == 0 || arch.latent_dim == 0)
    throw ShapeError("zero-dimension generator architecture");
  std::vector<std::size_t> widths{arch.num_classes + 1 + arch.noise_dim};
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.latent_dim);
  DenseStack stack(widths);
  glorot_init(stack, seed);
  return GeneratorParams(std::move(stack), arch.num_classes, arch.noise_dim);
}

}  // namespace fedcl
