#pragma once

#include "kernels_common.hpp"

namespace rgbt::kernels::serial {
double class_loss(const Classifier& model, const TransitionNet* theta,
                  std::span<const TransitionMatrix> fixed, std::span<const LabeledPair> batch,
                  Classifier* grad);
double calibrated_loss(const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const TransitionExample> batch, TransitionNet* grad);
void posteriors(const Classifier& model, std::span<const Pair> pairs, std::span<double> out);
std::vector<TransitionMatrix> transitions(const TransitionNet& theta, const Embeddings& embeddings,
                                          std::span<const Pair> pairs);
}  // namespace rgbt::kernels::serial

namespace rgbt::kernels::omp {
double class_loss(const Classifier& model, const TransitionNet* theta,
                  std::span<const TransitionMatrix> fixed, std::span<const LabeledPair> batch,
                  Classifier* grad);
double calibrated_loss(const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const TransitionExample> batch, TransitionNet* grad);
void posteriors(const Classifier& model, std::span<const Pair> pairs, std::span<double> out);
std::vector<TransitionMatrix> transitions(const TransitionNet& theta, const Embeddings& embeddings,
                                          std::span<const Pair> pairs);
}  // namespace rgbt::kernels::omp
