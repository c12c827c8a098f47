#pragma once

// Dense MLP substrate: flat parameter storage, tanh hidden layers, fused
// softmax cross-entropy, SGD/Adam and seeded Glorot initialization.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedcl {

// Location of one dense layer inside a flat parameter vector. The weight
// block is row-major [out x in], followed by `out` biases.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;

  std::size_t weight_count() const noexcept { return in * out; }
  std::size_t size() const noexcept { return in * out + out; }
  std::size_t bias_offset() const noexcept { return offset + in * out; }

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// A chain of dense layers whose parameters live in one contiguous vector, so
// averaging and optimizer updates are plain element-wise loops.
class DenseStack {
 public:
  DenseStack() = default;
  // widths = {input, hidden..., output}; all parameters zero.
  explicit DenseStack(const std::vector<std::size_t>& widths);

  std::size_t layer_count() const noexcept { return shapes_.size(); }
  const LayerShape& layer(std::size_t i) const { return shapes_.at(i); }
  const std::vector<LayerShape>& layers() const noexcept { return shapes_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double weight(std::size_t layer, std::size_t o, std::size_t i) const {
    const auto& s = shapes_[layer];
    return values_[s.offset + o * s.in + i];
  }
  double& weight(std::size_t layer, std::size_t o, std::size_t i) {
    const auto& s = shapes_[layer];
    return values_[s.offset + o * s.in + i];
  }
  double bias(std::size_t layer, std::size_t o) const {
    return values_[shapes_[layer].bias_offset() + o];
  }
  double& bias(std::size_t layer, std::size_t o) {
    return values_[shapes_[layer].bias_offset() + o];
  }

  bool all_finite() const noexcept;
  bool same_shape(const DenseStack& other) const noexcept;

  friend bool operator==(const DenseStack&, const DenseStack&) = default;

 private:
  std::vector<LayerShape> shapes_;
  std::vector<double> values_;
};

// Classifier w = [w^f; w^h]. Layers [0, split_index) form the feature
// extractor f (every layer tanh-activated); layers [split_index, n) form the
// predictor head, tanh on all but the final logits layer.
struct ModelParams {
  DenseStack stack;
  std::size_t split_index = 1;

  ModelParams() = default;
  ModelParams(DenseStack s, std::size_t split);

  std::size_t input_dim() const { return stack.input_dim(); }
  std::size_t feature_dim() const { return stack.layer(split_index).in; }
  std::size_t num_classes() const { return stack.output_dim(); }
  // Index of the first head parameter in the flat vector.
  std::size_t head_offset() const { return stack.layer(split_index).offset; }

  void validate() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Conditional generator G(y, beta, eps) -> z. Input is one-hot(y) ++ beta ++
// eps; every layer including the output is tanh-activated so generated
// latents share the range of real features.
struct GeneratorParams {
  DenseStack stack;
  std::size_t num_classes = 0;
  std::size_t noise_dim = 0;

  GeneratorParams() = default;
  GeneratorParams(DenseStack s, std::size_t classes, std::size_t noise);

  std::size_t input_dim() const { return num_classes + 1 + noise_dim; }
  std::size_t latent_dim() const { return stack.output_dim(); }

  void validate() const;
  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct GradientVec {
  std::vector<double> values;
  double loss = 0.0;
};

// ---- forward passes ----

struct ClassifierOutput {
  std::vector<double> z;
  std::vector<double> logits;
  std::vector<double> probs;
};

struct HeadOutput {
  std::vector<double> logits;
  std::vector<double> probs;
};

ClassifierOutput forward_classifier(const ModelParams& params,
                                    std::span<const double> x);
HeadOutput forward_head(const ModelParams& params, std::span<const double> z);
std::vector<double> forward_generator(const GeneratorParams& gen, int label,
                                      double beta_cond,
                                      std::span<const double> epsilon);

// Max-shifted softmax; strictly positive, sums to one.
std::vector<double> softmax(std::span<const double> logits);

// Fused softmax cross-entropy: returns -log softmax(logits)[label] and writes
// the probabilities into probs (resized).
double softmax_xent(std::span<const double> logits, int label,
                    std::vector<double>& probs);

// ---- layer-range primitives used by the composite losses ----

// Per-layer post-activation outputs; acts[0] is the input.
struct Trace {
  std::vector<std::vector<double>> acts;
};

// Runs layers [first, last). tanh follows every layer except layer `last-1`
// when tanh_last is false.
void run_layers(const DenseStack& stack, std::size_t first, std::size_t last,
                bool tanh_last, std::span<const double> input, Trace& trace);

// Backpropagates d_out through layers [first, last) recorded in trace.
// Adds scale * dLoss/dparam into grad (skipped when grad is empty) and writes
// dLoss/dinput into d_in when non-null.
void backprop_layers(const DenseStack& stack, std::size_t first,
                     std::size_t last, bool tanh_last, const Trace& trace,
                     std::span<const double> d_out, std::span<double> grad,
                     double scale, std::vector<double>* d_in);

// Generator input vector one-hot(label) ++ beta ++ epsilon.
std::vector<double> generator_input(const GeneratorParams& gen, int label,
                                    double beta_cond,
                                    std::span<const double> epsilon);

// ---- optimizers ----

enum class OptimizerKind { SGD, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::SGD;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t steps = 0;
  std::vector<double> m;
  std::vector<double> v;

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, std::size_t param_count);
};

void step(std::span<double> params, std::span<const double> grad,
          OptimizerState& opt);
void step(ModelParams& params, const GradientVec& grad, OptimizerState& opt);
void step(GeneratorParams& gen, const GradientVec& grad, OptimizerState& opt);

// ---- initialization ----

struct ClassifierArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> feature_widths{64, 32};  // last entry is d
  std::vector<std::size_t> head_hidden{};
  std::size_t num_classes = 0;
};

struct GeneratorArch {
  std::size_t num_classes = 0;
  std::size_t noise_dim = 32;
  std::vector<std::size_t> hidden{128};
  std::size_t latent_dim = 32;
};

// Weights ~ U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)), biases zero.
void glorot_init(DenseStack& stack, std::uint64_t seed);
ModelParams init_classifier(const ClassifierArch& arch, std::uint64_t seed);
GeneratorParams init_generator(const GeneratorArch& arch, std::uint64_t seed);

}  // namespace fedcl
