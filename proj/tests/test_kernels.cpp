#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>

#include "rgbt/backbone.hpp"
#include "rgbt/error.hpp"
#include "rgbt/kernels.hpp"
#include "rgbt/rng.hpp"
#include "rgbt/training.hpp"
#include "test_util.hpp"

using namespace rgbt;
using kernels::Backend;

namespace {

// Straightforward re-derivations used as oracles.
std::vector<double> oracle_softmax(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - mx));
  for (auto& v : p) v /= s;
  return p;
}

std::vector<double> oracle_mlp(const Mlp& m, const std::vector<double>& x) {
  std::vector<double> a(m.hidden), out(m.outputs);
  for (std::size_t h = 0; h < m.hidden; ++h) {
    double z = m.b1[h];
    for (std::size_t j = 0; j < m.inputs; ++j) z += m.w1[h * m.inputs + j] * x[j];
    a[h] = std::tanh(z);
  }
  for (std::size_t o = 0; o < m.outputs; ++o) {
    double z = m.b2[o];
    for (std::size_t h = 0; h < m.hidden; ++h) z += m.w2[o * m.hidden + h] * a[h];
    out[o] = z;
  }
  return out;
}

std::vector<double> feature(const Embeddings& e, std::size_t u, std::size_t i) {
  std::vector<double> x(e.user(u).begin(), e.user(u).end());
  x.insert(x.end(), e.item(i).begin(), e.item(i).end());
  return x;
}

std::vector<double> oracle_f(const Classifier& c, std::size_t u, std::size_t i) {
  return oracle_softmax(oracle_mlp(c.head, feature(c.embeddings, u, i)));
}

// Row-major K x K.
std::vector<double> oracle_t(const TransitionNet& t, const Embeddings& e, std::size_t u, std::size_t i) {
  const auto z = oracle_mlp(t.net, feature(e, u, i));
  const int k = t.classes;
  std::vector<double> out;
  for (int r = 0; r < k; ++r) {
    const auto row = oracle_softmax(std::vector<double>(z.begin() + r * k, z.begin() + (r + 1) * k));
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

struct Fixture {
  ModelBundle model;
  std::vector<kernels::LabeledPair> pairs;
  std::vector<kernels::TransitionExample> examples;
};

Fixture make_fixture(std::size_t users, std::size_t items, std::size_t dim, int k, std::size_t n,
                     std::uint64_t seed, double scale = 0.5) {
  Fixture f;
  f.model = initialize_model({users, items, dim, k, scale}, seed);
  CounterRng rng(seed, Stream::kMonteCarlo);
  for (std::size_t s = 0; s < n; ++s) {
    const auto u = rng.uniform_index(users), i = rng.uniform_index(items);
    const int noisy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    const int bayes = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    f.pairs.push_back({u, i, noisy});
    f.examples.push_back({u, i, bayes, noisy, 0.1 + rng.uniform()});
  }
  return f;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  return worst;
}

}  // namespace

TEST(ClassLoss, IdentityTransitionIsCrossEntropy) {
  auto f = make_fixture(7, 9, 4, 3, 50, 1);
  double ce = 0.0;
  for (const auto& p : f.pairs) ce -= std::log(oracle_f(f.model.classifier, p.user, p.item)[p.noisy]);
  ce /= static_cast<double>(f.pairs.size());
  for (auto b : {Backend::kSerial, Backend::kParallel})
    EXPECT_NEAR(kernels::class_loss(b, f.model.classifier, nullptr, f.pairs, nullptr), ce, 1e-12);
  // An explicit identity-like theta (huge diagonal logits) agrees as well.
  TransitionNet eye = f.model.transition;
  eye.net.fill(0.0);
  for (int r = 0; r < 3; ++r) eye.net.b2[r * 3 + r] = 800.0;
  EXPECT_NEAR(kernels::class_loss(Backend::kSerial, f.model.classifier, &eye, f.pairs, nullptr), ce, 1e-12);
}

TEST(ClassLoss, MatchesForwardCorrectedOracle) {
  auto f = make_fixture(6, 5, 3, 4, 40, 2);
  double want = 0.0;
  for (const auto& p : f.pairs) {
    const auto fx = oracle_f(f.model.classifier, p.user, p.item);
    const auto t = oracle_t(f.model.transition, f.model.classifier.embeddings, p.user, p.item);
    double r = 0.0;
    for (int i = 0; i < 4; ++i) r += fx[i] * t[i * 4 + p.noisy];
    want -= std::log(r);
  }
  want /= static_cast<double>(f.pairs.size());
  for (auto b : {Backend::kSerial, Backend::kParallel})
    EXPECT_NEAR(kernels::class_loss(b, f.model.classifier, &f.model.transition, f.pairs, nullptr), want, 1e-12);
}

TEST(ClassLoss, OneHotPosteriorWithUniformTransitionGivesLogK) {
  auto f = make_fixture(3, 3, 2, 5, 10, 3);
  auto& head = f.model.classifier.head;
  head.fill(0.0);
  head.b2[2] = 800.0;
  TransitionNet uniform = f.model.transition;
  uniform.net.fill(0.0);
  EXPECT_NEAR(kernels::class_loss(Backend::kSerial, f.model.classifier, &uniform, f.pairs, nullptr), std::log(5.0),
              1e-12);
}

TEST(CalibratedLoss, MatchesWeightedOracle) {
  auto f = make_fixture(5, 8, 3, 3, 37, 4);
  double want = 0.0;
  for (const auto& e : f.examples) {
    const auto t = oracle_t(f.model.transition, f.model.classifier.embeddings, e.user, e.item);
    want -= e.weight * std::log(t[e.bayes * 3 + e.noisy]);
  }
  want /= static_cast<double>(f.examples.size());
  for (auto b : {Backend::kSerial, Backend::kParallel})
    EXPECT_NEAR(kernels::calibrated_loss(b, f.model.transition, f.model.classifier.embeddings, f.examples, nullptr),
                want, 1e-12);
}

TEST(CalibratedLoss, TwoSampleHandSum) {
  auto f = make_fixture(4, 4, 2, 3, 2, 5);
  f.examples[0].weight = 0.5;
  f.examples[1].weight = 1.0;
  const auto& emb = f.model.classifier.embeddings;
  const auto t0 = oracle_t(f.model.transition, emb, f.examples[0].user, f.examples[0].item);
  const auto t1 = oracle_t(f.model.transition, emb, f.examples[1].user, f.examples[1].item);
  const double want = -(0.5 * std::log(t0[f.examples[0].bayes * 3 + f.examples[0].noisy]) +
                        1.0 * std::log(t1[f.examples[1].bayes * 3 + f.examples[1].noisy])) /
                      2.0;
  EXPECT_NEAR(kernels::calibrated_loss(Backend::kSerial, f.model.transition, emb, f.examples, nullptr), want, 1e-14);
}

TEST(CalibratedLoss, ZeroWeightsGiveZeroLossAndGradient) {
  auto f = make_fixture(4, 4, 2, 3, 20, 6);
  for (auto& e : f.examples) e.weight = 0.0;
  TransitionNet g;
  EXPECT_EQ(kernels::calibrated_loss(Backend::kParallel, f.model.transition, f.model.classifier.embeddings,
                                     f.examples, &g),
            0.0);
  for (double v : fixtures::flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(CalibratedLoss, UniformRowsGiveLogKAndCertainRowsGiveZero) {
  auto f = make_fixture(4, 4, 2, 4, 20, 7);
  for (auto& e : f.examples) e.weight = 1.0;
  TransitionNet t = f.model.transition;
  t.net.fill(0.0);
  EXPECT_NEAR(kernels::calibrated_loss(Backend::kSerial, t, f.model.classifier.embeddings, f.examples, nullptr),
              std::log(4.0), 1e-14);
  for (auto& e : f.examples) {
    e.bayes = 1;
    e.noisy = 3;
  }
  t.net.b2[1 * 4 + 3] = 800.0;
  EXPECT_NEAR(kernels::calibrated_loss(Backend::kSerial, t, f.model.classifier.embeddings, f.examples, nullptr), 0.0,
              1e-14);
}

TEST(Losses, ExtremeParametersStayFinite) {
  auto f = make_fixture(4, 4, 2, 3, 30, 8);
  for (auto* m : {&f.model.classifier.head, &f.model.transition.net}) {
    for (auto& v : m->w2) v *= 1e4;
    for (auto& v : m->b2) v = -1e4;
    m->b2[0] = 1e4;
  }
  for (auto b : {Backend::kSerial, Backend::kParallel}) {
    Classifier gw;
    TransitionNet gt;
    const double a = kernels::class_loss(b, f.model.classifier, &f.model.transition, f.pairs, &gw);
    const double c = kernels::calibrated_loss(b, f.model.transition, f.model.classifier.embeddings, f.examples, &gt);
    EXPECT_TRUE(std::isfinite(a));
    EXPECT_TRUE(std::isfinite(c));
    EXPECT_LE(a, -std::log(kernels::kLogFloor) + 1e-9);
    for (double v : fixtures::flatten(gw)) ASSERT_TRUE(std::isfinite(v));
    for (double v : fixtures::flatten(gt)) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Kernels, SerialAndParallelAgree) {
  for (std::size_t n : {1u, 31u, 32u, 33u, 257u}) {
    auto f = make_fixture(20, 30, 5, 4, n, 10 + n);
    Classifier gs, gp;
    TransitionNet ts, tp;
    const double ls = kernels::class_loss(Backend::kSerial, f.model.classifier, &f.model.transition, f.pairs, &gs);
    const double lp = kernels::class_loss(Backend::kParallel, f.model.classifier, &f.model.transition, f.pairs, &gp);
    EXPECT_NEAR(ls, lp, 1e-12 * std::abs(ls));
    EXPECT_LT(max_rel_diff(fixtures::flatten(gs), fixtures::flatten(gp)), 1e-12);
    const auto& emb = f.model.classifier.embeddings;
    const double cs = kernels::calibrated_loss(Backend::kSerial, f.model.transition, emb, f.examples, &ts);
    const double cp = kernels::calibrated_loss(Backend::kParallel, f.model.transition, emb, f.examples, &tp);
    EXPECT_NEAR(cs, cp, 1e-12 * std::abs(cs));
    EXPECT_LT(max_rel_diff(fixtures::flatten(ts), fixtures::flatten(tp)), 1e-12);
  }
}

TEST(Kernels, ParallelResultIndependentOfThreadCount) {
  auto f = make_fixture(20, 30, 5, 4, 300, 21);
  const int saved = omp_get_max_threads();
  std::vector<double> ref;
  double ref_loss = 0.0;
  for (int threads : {1, 2, 3, 8}) {
    omp_set_num_threads(threads);
    Classifier g;
    const double l = kernels::class_loss(Backend::kParallel, f.model.classifier, &f.model.transition, f.pairs, &g);
    const auto flat = fixtures::flatten(g);
    if (ref.empty()) {
      ref = flat;
      ref_loss = l;
    } else {
      EXPECT_EQ(l, ref_loss);
      EXPECT_EQ(flat, ref);
    }
  }
  omp_set_num_threads(saved);
}

TEST(Kernels, PosteriorsAndTransitionsMatchSinglePairPredictions) {
  auto f = make_fixture(6, 7, 3, 3, 25, 22);
  std::vector<kernels::Pair> pairs;
  for (const auto& p : f.pairs) pairs.emplace_back(p.user, p.item);
  for (auto b : {Backend::kSerial, Backend::kParallel}) {
    std::vector<double> post(pairs.size() * 3);
    kernels::posteriors(b, f.model.classifier, pairs, post);
    const auto ts = kernels::transitions(b, f.model.transition, f.model.classifier.embeddings, pairs);
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const auto want = oracle_f(f.model.classifier, pairs[n].first, pairs[n].second);
      const auto wt = oracle_t(f.model.transition, f.model.classifier.embeddings, pairs[n].first, pairs[n].second);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(post[n * 3 + k], want[k], 1e-14);
      for (std::size_t e = 0; e < 9; ++e) EXPECT_NEAR(ts[n].entries()[e], wt[e], 1e-14);
      EXPECT_TRUE(ts[n].is_row_stochastic(1e-12));
    }
  }
}

TEST(Kernels, RejectsEmptyBatchesAndBadIndices) {
  auto f = make_fixture(3, 3, 2, 3, 4, 23);
  EXPECT_THROW(kernels::class_loss(Backend::kSerial, f.model.classifier, nullptr, {}, nullptr), DomainError);
  EXPECT_THROW(kernels::calibrated_loss(Backend::kParallel, f.model.transition, f.model.classifier.embeddings, {},
                                        nullptr),
               DomainError);
  f.pairs[0].user = 99;
  EXPECT_THROW(kernels::class_loss(Backend::kSerial, f.model.classifier, nullptr, f.pairs, nullptr), BoundsError);
  f.pairs[0].user = 0;
  f.pairs[0].noisy = 3;
  EXPECT_THROW(kernels::class_loss(Backend::kParallel, f.model.classifier, nullptr, f.pairs, nullptr), DomainError);
}

// Central differences over every parameter of a tiny instance.
TEST(Gradients, ClassLossMatchesFiniteDifferences) {
  auto f = make_fixture(5, 5, 3, 3, 12, 30);
  // T* enters as a constant: the check differentiates the loss with every
  // sample's transition frozen at the base point.
  std::vector<kernels::Pair> xs;
  for (const auto& p : f.pairs) xs.emplace_back(p.user, p.item);
  const auto frozen = kernels::transitions(Backend::kSerial, f.model.transition, f.model.classifier.embeddings, xs);
  for (auto theta_mode : {0, 1}) {
    const LossFunction loss = [&](std::span<const double> params, std::vector<double>* grad) {
      Classifier c = f.model.classifier;
      fixtures::assign(c, params);
      Classifier g;
      const double v = theta_mode ? kernels::class_loss(Backend::kSerial, c, frozen, f.pairs, grad ? &g : nullptr)
                                  : kernels::class_loss(Backend::kSerial, c, nullptr, f.pairs, grad ? &g : nullptr);
      if (grad) *grad = fixtures::flatten(g);
      return v;
    };
    EXPECT_LT(finite_difference_check(loss, fixtures::flatten(f.model.classifier), 1e-5), 1e-4);
  }
}

TEST(ClassLoss, NetworkAndFrozenTransitionsAgree) {
  auto f = make_fixture(5, 5, 3, 3, 12, 32);
  std::vector<kernels::Pair> xs;
  for (const auto& p : f.pairs) xs.emplace_back(p.user, p.item);
  const auto frozen = kernels::transitions(Backend::kSerial, f.model.transition, f.model.classifier.embeddings, xs);
  for (auto b : {Backend::kSerial, Backend::kParallel}) {
    Classifier ga, gb;
    const double a = kernels::class_loss(b, f.model.classifier, &f.model.transition, f.pairs, &ga);
    const double c = kernels::class_loss(b, f.model.classifier, frozen, f.pairs, &gb);
    EXPECT_NEAR(a, c, 1e-14);
    const auto va = fixtures::flatten(ga), vb = fixtures::flatten(gb);
    for (std::size_t j = 0; j < va.size(); ++j) EXPECT_NEAR(va[j], vb[j], 1e-14);
  }
  EXPECT_THROW(kernels::class_loss(Backend::kSerial, f.model.classifier, std::span(frozen).first(2), f.pairs, nullptr),
               DimensionError);
}

TEST(Gradients, CalibratedLossMatchesFiniteDifferences) {
  auto f = make_fixture(5, 5, 3, 3, 12, 31);
  const LossFunction loss = [&](std::span<const double> params, std::vector<double>* grad) {
    TransitionNet t = f.model.transition;
    fixtures::assign(t, params);
    TransitionNet g;
    const double v = kernels::calibrated_loss(Backend::kParallel, t, f.model.classifier.embeddings, f.examples,
                                              grad ? &g : nullptr);
    if (grad) *grad = fixtures::flatten(g);
    return v;
  };
  EXPECT_LT(finite_difference_check(loss, fixtures::flatten(f.model.transition), 1e-5), 1e-4);
}

TEST(FiniteDifferenceCheck, DetectsWrongGradientAndValidatesEpsilon) {
  const LossFunction quad = [](std::span<const double> p, std::vector<double>* g) {
    if (g) *g = {2.0 * p[0], 3.0};  // second entry deliberately wrong
    return p[0] * p[0] + 2.0 * p[1];
  };
  const std::vector<double> x{0.7, 0.2};
  EXPECT_GT(finite_difference_check(quad, x, 1e-5), 0.1);
  EXPECT_THROW(finite_difference_check(quad, x, 0.0), DomainError);
  EXPECT_THROW(finite_difference_check(quad, x, 0.5), DomainError);
}
