// OpenMP kernels. Work is cut into kChunk-sized chunks; partial sums are
// combined in chunk order after the parallel region.

#include <cstdint>

#include "kernels_impl.hpp"

namespace rgbt::kernels::omp {

namespace {

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

}  // namespace

double class_loss(const Classifier& model, const TransitionNet* theta,
                  std::span<const TransitionMatrix> fixed, std::span<const LabeledPair> batch,
                  Classifier* grad) {
  const std::size_t n = batch.size();
  const std::size_t chunks = chunk_count(n);
  const std::size_t feat = model.head.inputs;
  const double scale = 1.0 / static_cast<double>(n);
  const bool want_grad = grad != nullptr;

  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<Mlp> chunk_grad(want_grad ? chunks : 0);
  std::vector<double> dx(want_grad ? n * feat : 0);

#pragma omp parallel
  {
    detail::Scratch s(model, theta);
    Mlp dummy;
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
      const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
      const std::size_t end = std::min(n, begin + kChunk);
      Mlp* g = &dummy;
      if (want_grad) {
        chunk_grad[c] = Mlp::zeros(model.head.inputs, model.head.hidden, model.head.outputs);
        g = &chunk_grad[c];
      }
      double acc = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const double* t = fixed.empty() ? nullptr : fixed[i].entries().data();
        acc += detail::class_sample(model, theta, t, batch[i], scale, want_grad, *g, s);
        if (want_grad) std::copy(s.dx.begin(), s.dx.end(), dx.begin() + static_cast<std::ptrdiff_t>(i * feat));
      }
      chunk_loss[c] = acc;
    }
  }

  double loss = 0.0;
  for (double v : chunk_loss) loss += v;
  if (want_grad) {
    *grad = model.zeros_like();
    for (const auto& g : chunk_grad) grad->head.add(g);
    for (std::size_t i = 0; i < n; ++i)
      detail::scatter_feature_grad(grad->embeddings, batch[i],
                                   std::span<const double>(dx).subspan(i * feat, feat));
  }
  return loss;
}

double calibrated_loss(const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const TransitionExample> batch, TransitionNet* grad) {
  const std::size_t n = batch.size();
  const std::size_t chunks = chunk_count(n);
  const double scale = 1.0 / static_cast<double>(n);
  const bool want_grad = grad != nullptr;

  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<Mlp> chunk_grad(want_grad ? chunks : 0);

#pragma omp parallel
  {
    detail::Scratch s(theta);
    Mlp dummy;
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
      const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
      const std::size_t end = std::min(n, begin + kChunk);
      Mlp* g = &dummy;
      if (want_grad) {
        chunk_grad[c] = Mlp::zeros(theta.net.inputs, theta.net.hidden, theta.net.outputs);
        g = &chunk_grad[c];
      }
      double acc = 0.0;
      for (std::size_t i = begin; i < end; ++i)
        acc += detail::calibrated_sample(theta, embeddings, batch[i], scale, want_grad, *g, s);
      chunk_loss[c] = acc;
    }
  }

  double loss = 0.0;
  for (double v : chunk_loss) loss += v;
  if (want_grad) {
    *grad = theta.zeros_like();
    for (const auto& g : chunk_grad) grad->net.add(g);
  }
  return loss;
}

void posteriors(const Classifier& model, std::span<const Pair> pairs, std::span<double> out) {
  const std::size_t k = static_cast<std::size_t>(model.classes);
#pragma omp parallel
  {
    detail::Scratch s(model, nullptr);
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(pairs.size()); ++n) {
      const auto idx = static_cast<std::size_t>(n);
      model.embeddings.feature(pairs[idx].first, pairs[idx].second, s.x);
      model.head.forward(s.x, s.act, s.logits);
      softmax(s.logits, out.subspan(idx * k, k));
    }
  }
}

std::vector<TransitionMatrix> transitions(const TransitionNet& theta, const Embeddings& embeddings,
                                          std::span<const Pair> pairs) {
  std::vector<TransitionMatrix> out(pairs.size());
#pragma omp parallel
  {
    std::vector<double> x(theta.net.inputs);
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(pairs.size()); ++n) {
      const auto idx = static_cast<std::size_t>(n);
      embeddings.feature(pairs[idx].first, pairs[idx].second, x);
      out[idx] = predict_transition(theta, x);
    }
  }
  return out;
}

}  // namespace rgbt::kernels::omp
