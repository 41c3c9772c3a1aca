// Serial reference kernels.

#include "kernels_impl.hpp"

namespace rgbt::kernels::serial {

double class_loss(const Classifier& model, const TransitionNet* theta,
                  std::span<const TransitionMatrix> fixed, std::span<const LabeledPair> batch,
                  Classifier* grad) {
  if (grad) *grad = model.zeros_like();
  detail::Scratch s(model, theta);
  Mlp dummy;
  Mlp& head_grad = grad ? grad->head : dummy;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double* t = fixed.empty() ? nullptr : fixed[i].entries().data();
    loss += detail::class_sample(model, theta, t, batch[i], scale, grad != nullptr, head_grad, s);
    if (grad) detail::scatter_feature_grad(grad->embeddings, batch[i], s.dx);
  }
  return loss;
}

double calibrated_loss(const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const TransitionExample> batch, TransitionNet* grad) {
  if (grad) *grad = theta.zeros_like();
  detail::Scratch s(theta);
  Mlp dummy;
  Mlp& g = grad ? grad->net : dummy;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& e : batch) loss += detail::calibrated_sample(theta, embeddings, e, scale, grad != nullptr, g, s);
  return loss;
}

void posteriors(const Classifier& model, std::span<const Pair> pairs, std::span<double> out) {
  detail::Scratch s(model, nullptr);
  const std::size_t k = static_cast<std::size_t>(model.classes);
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    model.embeddings.feature(pairs[n].first, pairs[n].second, s.x);
    model.head.forward(s.x, s.act, s.logits);
    softmax(s.logits, out.subspan(n * k, k));
  }
}

std::vector<TransitionMatrix> transitions(const TransitionNet& theta, const Embeddings& embeddings,
                                          std::span<const Pair> pairs) {
  std::vector<TransitionMatrix> out;
  out.reserve(pairs.size());
  std::vector<double> x(theta.net.inputs);
  for (const auto& [u, i] : pairs) {
    embeddings.feature(u, i, x);
    out.push_back(predict_transition(theta, x));
  }
  return out;
}

}  // namespace rgbt::kernels::serial
