#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rgbt/backbone.hpp"
#include "rgbt/noise.hpp"

// Batch kernels behind the training and evaluation loops. Every kernel has a
// serial reference and an OpenMP variant; the parallel variant reduces
// fixed-size chunks in index order, so its result does not depend on the
// thread count.
namespace rgbt::kernels {

enum class Backend { kSerial, kParallel };

// Arguments of every log are clamped below at this value.
inline constexpr double kLogFloor = 1e-12;

// Samples per reduction chunk in the parallel variants.
inline constexpr std::size_t kChunk = 32;

using Pair = std::pair<std::size_t, std::size_t>;

// (x, noisy label) from the full training set; class indices are 0-based.
struct LabeledPair {
  std::size_t user = 0;
  std::size_t item = 0;
  int noisy = 0;
};

// (x, noisy label, Bayes label, reliability weight) from the distilled set.
struct TransitionExample {
  std::size_t user = 0;
  std::size_t item = 0;
  int bayes = 0;
  int noisy = 0;
  double weight = 1.0;
};

// -(1/N) sum log (f(x; w)^T T*(x; theta))_noisy. A null theta means the
// identity transition, i.e. plain cross-entropy. When grad is non-null it is
// overwritten with the gradient w.r.t. w. T* is a constant for the gradient:
// it reaches w only through f, not through the x fed to theta.
double class_loss(Backend backend, const Classifier& model, const TransitionNet* theta,
                  std::span<const LabeledPair> batch, Classifier* grad);

// Same loss with one fixed transition per sample.
double class_loss(Backend backend, const Classifier& model, std::span<const TransitionMatrix> transitions,
                  std::span<const LabeledPair> batch, Classifier* grad);

// -(1/M) sum w(x) log T*_{bayes, noisy}(x; theta), features taken from
// `embeddings`. When grad is non-null it is overwritten with d/dtheta.
double calibrated_loss(Backend backend, const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const TransitionExample> batch, TransitionNet* grad);

// Row i of `out` (size pairs.size() * K) receives f(x_i; w).
void posteriors(Backend backend, const Classifier& model, std::span<const Pair> pairs,
                std::span<double> out);

std::vector<TransitionMatrix> transitions(Backend backend, const TransitionNet& theta,
                                          const Embeddings& embeddings, std::span<const Pair> pairs);

enum class ScoreKind { kTopClass, kExpectedRating };

// Scores every item for one user, reusing the item half of the first head
// layer across users.
class ItemScorer {
 public:
  ItemScorer(const Classifier& model, ScoreKind kind);
  void score_user(std::size_t user, std::span<double> out) const;
  std::size_t items() const { return model_.embeddings.items; }

 private:
  const Classifier& model_;
  ScoreKind kind_;
  std::vector<double> item_part_;  // items x hidden
};

double relevance(std::span<const double> posterior, ScoreKind kind);

}  // namespace rgbt::kernels
