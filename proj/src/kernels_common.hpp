#pragma once

// Per-sample building blocks shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "rgbt/kernels.hpp"

namespace rgbt::kernels::detail {

struct Scratch {
  std::vector<double> x, act, logits, probs, trans_act, trans_logits, trans, dlogits, dx;

  Scratch(const Classifier& model, const TransitionNet* theta) {
    const std::size_t k = static_cast<std::size_t>(model.classes);
    x.resize(model.head.inputs);
    act.resize(model.head.hidden);
    logits.resize(k);
    probs.resize(k);
    dlogits.resize(k);
    dx.resize(model.head.inputs);
    if (theta) {
      trans_act.resize(theta->net.hidden);
      trans_logits.resize(theta->net.outputs);
      trans.resize(theta->net.outputs);
    }
  }

  Scratch(const TransitionNet& theta) {
    const std::size_t k = static_cast<std::size_t>(theta.classes);
    x.resize(theta.net.inputs);
    trans_act.resize(theta.net.hidden);
    trans_logits.resize(k);
    trans.resize(k);
    dlogits.resize(k);
  }
};

// Loss of one labelled pair scaled by `scale`; head gradient accumulated into
// head_grad and the feature gradient written to s.dx when want_grad. The
// transition comes from `fixed` (row-major K x K) when given, else from
// theta, else is the identity; either way it is a constant for the gradient.
inline double class_sample(const Classifier& model, const TransitionNet* theta, const double* fixed,
                           const LabeledPair& p, double scale, bool want_grad, Mlp& head_grad,
                           Scratch& s) {
  const int k = model.classes;
  model.embeddings.feature(p.user, p.item, s.x);
  model.head.forward(s.x, s.act, s.logits);
  softmax(s.logits, s.probs);

  const double* t = fixed;
  if (!t && theta) {
    theta->net.forward(s.x, s.trans_act, s.trans_logits);
    for (int row = 0; row < k; ++row) {
      const auto off = static_cast<std::size_t>(row) * k;
      softmax(std::span<const double>(s.trans_logits).subspan(off, k),
              std::span<double>(s.trans).subspan(off, k));
    }
    t = s.trans.data();
  }
  // r = f^T T; only the noisy coordinate is needed.
  double r = 0.0;
  if (t) {
    for (int row = 0; row < k; ++row) r += s.probs[row] * t[static_cast<std::size_t>(row) * k + p.noisy];
  } else {
    r = s.probs[p.noisy];
  }
  const bool clamped = !(r >= kLogFloor);
  const double loss = -std::log(clamped ? kLogFloor : r) * scale;
  if (!want_grad) return loss;

  if (clamped) {
    std::fill(s.dlogits.begin(), s.dlogits.end(), 0.0);
  } else {
    // dL/df_i = -T_{i,noisy} / r, then through the softmax.
    double dot = 0.0;
    for (int i = 0; i < k; ++i) {
      const double ti = t ? t[static_cast<std::size_t>(i) * k + p.noisy] : (i == p.noisy ? 1.0 : 0.0);
      s.dlogits[i] = -ti / r;
      dot += s.probs[i] * s.dlogits[i];
    }
    for (int i = 0; i < k; ++i) s.dlogits[i] = scale * s.probs[i] * (s.dlogits[i] - dot);
  }
  model.head.backward(s.x, s.act, 0, s.dlogits, head_grad, s.dx);
  return loss;
}

inline double calibrated_sample(const TransitionNet& theta, const Embeddings& emb,
                                const TransitionExample& e, double scale, bool want_grad,
                                Mlp& grad, Scratch& s) {
  const int k = theta.classes;
  emb.feature(e.user, e.item, s.x);
  theta.net.hidden_forward(s.x, s.trans_act);
  theta.net.output_forward(s.trans_act, static_cast<std::size_t>(e.bayes) * k, k, s.trans_logits);
  softmax(s.trans_logits, s.trans);
  const double t = s.trans[e.noisy];
  const bool clamped = !(t >= kLogFloor);
  const double loss = -e.weight * std::log(clamped ? kLogFloor : t) * scale;
  if (!want_grad || clamped || e.weight == 0.0) return loss;
  for (int j = 0; j < k; ++j)
    s.dlogits[j] = e.weight * scale * (s.trans[j] - (j == e.noisy ? 1.0 : 0.0));
  theta.net.backward(s.x, s.trans_act, static_cast<std::size_t>(e.bayes) * k, s.dlogits, grad, {});
  return loss;
}

inline void scatter_feature_grad(Embeddings& grad, const LabeledPair& p, std::span<const double> dx) {
  auto gu = grad.user(p.user);
  auto gi = grad.item(p.item);
  const std::size_t d = grad.dim;
  for (std::size_t j = 0; j < d; ++j) gu[j] += dx[j];
  for (std::size_t j = 0; j < d; ++j) gi[j] += dx[d + j];
}

}  // namespace rgbt::kernels::detail
