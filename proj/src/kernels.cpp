#include "rgbt/kernels.hpp"

#include "kernels_impl.hpp"
#include "rgbt/error.hpp"

namespace rgbt::kernels {

namespace {

void check_pairs(const Embeddings& emb, std::span<const LabeledPair> batch, int classes) {
  for (const auto& p : batch) {
    emb.check_indices(p.user, p.item);
    if (p.noisy < 0 || p.noisy >= classes) throw DomainError("label outside 0..K-1");
  }
}

}  // namespace

double class_loss(Backend backend, const Classifier& model, const TransitionNet* theta,
                  std::span<const LabeledPair> batch, Classifier* grad) {
  if (batch.empty()) throw DomainError("class loss needs a non-empty batch");
  check_pairs(model.embeddings, batch, model.classes);
  if (theta && (theta->classes != model.classes || theta->net.inputs != model.head.inputs))
    throw DimensionError("transition network does not match classifier");
  return backend == Backend::kSerial ? serial::class_loss(model, theta, {}, batch, grad)
                                     : omp::class_loss(model, theta, {}, batch, grad);
}

double class_loss(Backend backend, const Classifier& model, std::span<const TransitionMatrix> transitions,
                  std::span<const LabeledPair> batch, Classifier* grad) {
  if (batch.empty()) throw DomainError("class loss needs a non-empty batch");
  check_pairs(model.embeddings, batch, model.classes);
  if (transitions.size() != batch.size()) throw DimensionError("need one transition per sample");
  for (const auto& t : transitions)
    if (t.classes() != model.classes) throw DimensionError("transition does not match classifier");
  return backend == Backend::kSerial ? serial::class_loss(model, nullptr, transitions, batch, grad)
                                     : omp::class_loss(model, nullptr, transitions, batch, grad);
}

double calibrated_loss(Backend backend, const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const TransitionExample> batch, TransitionNet* grad) {
  if (batch.empty()) throw DomainError("calibrated loss needs a non-empty batch");
  if (theta.net.inputs != 2 * embeddings.dim) throw DimensionError("feature size mismatch");
  for (const auto& e : batch) {
    embeddings.check_indices(e.user, e.item);
    if (e.bayes < 0 || e.bayes >= theta.classes || e.noisy < 0 || e.noisy >= theta.classes)
      throw DomainError("label outside 0..K-1");
  }
  return backend == Backend::kSerial ? serial::calibrated_loss(theta, embeddings, batch, grad)
                                     : omp::calibrated_loss(theta, embeddings, batch, grad);
}

void posteriors(Backend backend, const Classifier& model, std::span<const Pair> pairs,
                std::span<double> out) {
  if (out.size() != pairs.size() * static_cast<std::size_t>(model.classes))
    throw DimensionError("posterior buffer has the wrong size");
  for (const auto& [u, i] : pairs) model.embeddings.check_indices(u, i);
  if (backend == Backend::kSerial) serial::posteriors(model, pairs, out);
  else omp::posteriors(model, pairs, out);
}

std::vector<TransitionMatrix> transitions(Backend backend, const TransitionNet& theta,
                                          const Embeddings& embeddings, std::span<const Pair> pairs) {
  for (const auto& [u, i] : pairs) embeddings.check_indices(u, i);
  return backend == Backend::kSerial ? serial::transitions(theta, embeddings, pairs)
                                     : omp::transitions(theta, embeddings, pairs);
}

double relevance(std::span<const double> posterior, ScoreKind kind) {
  if (kind == ScoreKind::kTopClass) return posterior.back();
  double e = 0.0;
  for (std::size_t k = 0; k < posterior.size(); ++k) e += static_cast<double>(k + 1) * posterior[k];
  return e;
}

ItemScorer::ItemScorer(const Classifier& model, ScoreKind kind) : model_(model), kind_(kind) {
  const auto& head = model.head;
  const std::size_t d = model.embeddings.dim;
  const std::size_t n = model.embeddings.items;
  item_part_.assign(n * head.hidden, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = model.embeddings.item(i);
    for (std::size_t h = 0; h < head.hidden; ++h) {
      const double* row = head.w1.data() + h * head.inputs + d;
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += row[j] * q[j];
      item_part_[i * head.hidden + h] = z;
    }
  }
}

void ItemScorer::score_user(std::size_t user, std::span<double> out) const {
  const auto& head = model_.head;
  const std::size_t d = model_.embeddings.dim;
  const std::size_t hidden = head.hidden;
  const std::size_t k = head.outputs;
  if (user >= model_.embeddings.users) throw BoundsError("user index out of range");
  if (out.size() != model_.embeddings.items) throw DimensionError("score buffer has the wrong size");

  std::vector<double> user_part(hidden), act(hidden), logits(k), probs(k);
  const auto p = model_.embeddings.user(user);
  for (std::size_t h = 0; h < hidden; ++h) {
    const double* row = head.w1.data() + h * head.inputs;
    double z = head.b1[h];
    for (std::size_t j = 0; j < d; ++j) z += row[j] * p[j];
    user_part[h] = z;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* part = item_part_.data() + i * hidden;
    for (std::size_t h = 0; h < hidden; ++h) act[h] = tanh_activation(user_part[h] + part[h]);
    head.output_forward(act, 0, k, logits);
    softmax(logits, probs);
    out[i] = relevance(probs, kind_);
  }
}

}  // namespace rgbt::kernels
