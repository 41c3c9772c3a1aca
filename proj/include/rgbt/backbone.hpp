#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rgbt/noise.hpp"

namespace rgbt {

class CounterRng;

// Named view over a flat parameter buffer. Checkpoints and the optimizer
// both walk parameters through these.
struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> data;
};

struct ConstTensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<const double> data;
};

// tanh through a single exp: absolute error around 1e-16, about twice as
// fast as std::tanh, and saturates cleanly at +-1 when exp over/underflows.
inline double tanh_activation(double z) { return 1.0 - 2.0 / (std::exp(2.0 * z) + 1.0); }

// One-hidden-layer perceptron: logits = W2 tanh(W1 x + b1) + b2.
struct Mlp {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 0;
  std::vector<double> w1;  // hidden x inputs
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // outputs x hidden
  std::vector<double> b2;  // outputs

  static Mlp zeros(std::size_t inputs, std::size_t hidden, std::size_t outputs);
  // Weights ~ N(0, 1/fan_in), biases zero.
  void initialize(CounterRng& rng);

  void hidden_forward(std::span<const double> x, std::span<double> act) const;
  // Computes only logits [first, first + count) from a hidden activation.
  void output_forward(std::span<const double> act, std::size_t first, std::size_t count,
                      std::span<double> logits) const;
  void forward(std::span<const double> x, std::span<double> act, std::span<double> logits) const;

  // Accumulates parameter gradients into `grad` for upstream gradient on
  // logits [first, first + dlogits.size()). When dx is non-empty it receives
  // (not accumulates) the gradient w.r.t. x.
  void backward(std::span<const double> x, std::span<const double> act, std::size_t first,
                std::span<const double> dlogits, Mlp& grad, std::span<double> dx) const;

  void add(const Mlp& other);
  void fill(double value);
  void append_views(const std::string& prefix, std::vector<TensorView>& out);
  void append_views(const std::string& prefix, std::vector<ConstTensorView>& out) const;
};

struct Embeddings {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t dim = 0;
  std::vector<double> user_vecs;  // users x dim
  std::vector<double> item_vecs;  // items x dim

  std::span<const double> user(std::size_t u) const { return {user_vecs.data() + u * dim, dim}; }
  std::span<const double> item(std::size_t i) const { return {item_vecs.data() + i * dim, dim}; }
  std::span<double> user(std::size_t u) { return {user_vecs.data() + u * dim, dim}; }
  std::span<double> item(std::size_t i) { return {item_vecs.data() + i * dim, dim}; }

  // x_ui = [p_u, q_i]; `out` has size 2 * dim.
  void feature(std::size_t u, std::size_t i, std::span<double> out) const;
  void check_indices(std::size_t u, std::size_t i) const;
};

// Parameters w: embeddings plus the K-way classifier head.
struct Classifier {
  Embeddings embeddings;
  Mlp head;
  int classes = 0;

  Classifier zeros_like() const;
  void add(const Classifier& other);
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
};

// Parameters theta: maps a 2d feature to K x K logits, softmaxed per row.
struct TransitionNet {
  Mlp net;
  int classes = 0;

  TransitionNet zeros_like() const;
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
};

struct ModelBundle {
  Classifier classifier;
  TransitionNet transition;
};

struct ModelShape {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t dim = 32;
  int classes = 5;
  double embedding_scale = 0.1;
  // Diagonal mass of the transition net's output at zero input weights: the
  // output biases start at the logits of a row with this diagonal entry. At
  // or below 1/K the biases start at zero.
  double transition_prior = 0.9;
};

// Seeded initialisation: embeddings N(0, scale^2), layers N(0, 1/fan_in),
// biases zero except the transition prior.
ModelBundle initialize_model(const ModelShape& shape, std::uint64_t seed);

// Numerically stable softmax over `logits`, written to `out`.
void softmax(std::span<const double> logits, std::span<double> out);

// f(x; w) for pair (u, i). Throws BoundsError on invalid indices.
std::vector<double> predict_posterior(const Classifier& model, std::size_t u, std::size_t i);

// Inner product p_u . q_i.
double predict_score(const Classifier& model, std::size_t u, std::size_t i);

// Row-stochastic T*(x; theta). Throws DimensionError on feature size mismatch.
TransitionMatrix predict_transition(const TransitionNet& theta, std::span<const double> feature);

struct OptimizerConfig {
  enum class Kind { kAdam, kSgd };
  Kind kind = Kind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment update (or plain SGD). One instance per parameter group;
// moment buffers are allocated on the first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  // Throws DimensionError when shapes differ between params and grads.
  void apply(std::span<const TensorView> params, std::span<const ConstTensorView> grads);
  std::uint64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

template <class Params>
void apply_gradients(Params& params, const Params& grads, Optimizer& opt) {
  auto p = params.tensors();
  auto g = grads.tensors();
  opt.apply(p, g);
}

// Loss callback for gradient checking: returns the loss at `params` and, when
// `grad` is non-null, writes the analytic gradient into it.
using LossFunction = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

// Max over parameters of |analytic - central| / (|analytic| + |central| + 1e-12).
double finite_difference_check(const LossFunction& loss, std::span<const double> params,
                               double epsilon);

// Flat list of named tensors with shape headers; values use 17 significant
// digits so the round trip is bit-exact.
std::string serialize_checkpoint(const ModelBundle& model);
ModelBundle parse_checkpoint(std::string_view text);

}  // namespace rgbt
