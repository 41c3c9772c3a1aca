#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rgbt/backbone.hpp"
#include "rgbt/error.hpp"
#include "rgbt/evaluation.hpp"
#include "rgbt/rng.hpp"
#include "test_util.hpp"

using namespace rgbt;

namespace {

// P(top class) is increasing in the single item coordinate.
Classifier monotone_model(const std::vector<double>& item_values) {
  auto m = initialize_model({.users = 1, .items = item_values.size(), .dim = 1, .classes = 3}, 0).classifier;
  m.head.fill(0.0);
  m.head.w1[0 * 2 + 1] = 1.0;  // hidden 0 reads the item coordinate
  m.head.w2[2 * 2 + 0] = 4.0;  // top class logit
  for (std::size_t i = 0; i < item_values.size(); ++i) m.embeddings.item(i)[0] = item_values[i];
  m.embeddings.user(0)[0] = 0.0;
  return m;
}

double oracle_ndcg(const std::vector<std::size_t>& ranked, const std::vector<std::size_t>& rel, int k) {
  double dcg = 0.0, idcg = 0.0;
  for (int r = 0; r < k && r < static_cast<int>(ranked.size()); ++r)
    if (std::find(rel.begin(), rel.end(), ranked[r]) != rel.end()) dcg += 1.0 / std::log2(r + 2.0);
  for (int r = 0; r < k && r < static_cast<int>(rel.size()); ++r) idcg += 1.0 / std::log2(r + 2.0);
  return idcg > 0 ? dcg / idcg : 0.0;
}

}  // namespace

TEST(Rank, ThreeItemExample) {
  const auto m = monotone_model({0.2, 0.9, 0.5});
  const auto r = rank_items(m, 0, {});
  EXPECT_EQ(r.items, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Rank, ExclusionAndTies) {
  const auto m = monotone_model({0.3, 0.3, 0.7, 0.3});
  const std::vector<std::size_t> ex{2};
  const auto r = rank_items(m, 0, ex);
  EXPECT_EQ(r.items, (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_EQ(r.excluded, ex);
  const std::vector<std::size_t> all{0, 1, 2, 3};
  EXPECT_TRUE(rank_items(m, 0, all).items.empty());
  EXPECT_THROW(rank_items(m, 1, {}), BoundsError);
}

TEST(Rank, MatchesSortOracle) {
  const auto m = initialize_model({.users = 3, .items = 40, .dim = 4, .classes = 5, .embedding_scale = 1.0}, 5).classifier;
  for (std::size_t u = 0; u < 3; ++u) {
    std::vector<std::size_t> ex{3, 17};
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < 40; ++i)
      if (i != 3 && i != 17) scored.push_back({-predict_posterior(m, u, i).back(), i});
    std::sort(scored.begin(), scored.end());
    std::vector<std::size_t> expect;
    for (auto& s : scored) expect.push_back(s.second);
    EXPECT_EQ(rank_items(m, u, ex).items, expect);
  }
}

TEST(Metrics, RecallExamples) {
  std::vector<std::size_t> ranked(20);
  std::iota(ranked.begin(), ranked.end(), 0);
  std::vector<std::size_t> first{0}, eleventh{10}, four{1, 3, 12, 15};
  EXPECT_EQ(recall_at_k(ranked, first, 10), 1.0);
  EXPECT_EQ(recall_at_k(ranked, eleventh, 10), 0.0);
  EXPECT_EQ(recall_at_k(ranked, four, 5), 0.5);
  EXPECT_EQ(recall_at_k(ranked, {}, 5), 0.0);
}

TEST(Metrics, NdcgExamples) {
  std::vector<std::size_t> ranked{4, 7, 1, 0};
  std::vector<std::size_t> a{4}, b{7}, none{9};
  EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, a, 10), 1.0);
  EXPECT_NEAR(ndcg_at_k(ranked, b, 2), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(ndcg_at_k(ranked, b, 2), 0.6309, 1e-4);
  EXPECT_EQ(ndcg_at_k(ranked, none, 4), 0.0);
}

TEST(Metrics, BoundedAndPerfectIffTop) {
  CounterRng rng(3, Stream::kMonteCarlo);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::size_t> ranked(15);
    std::iota(ranked.begin(), ranked.end(), 0);
    for (std::size_t j = ranked.size() - 1; j > 0; --j) std::swap(ranked[j], ranked[rng.uniform_index(j + 1)]);
    std::vector<std::size_t> rel;
    for (std::size_t i = 0; i < 15; ++i)
      if (rng.uniform() < 0.25) rel.push_back(i);
    const int k = 1 + static_cast<int>(rng.uniform_index(15));
    const double r = recall_at_k(ranked, rel, k), n = ndcg_at_k(ranked, rel, k);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    EXPECT_GE(n, 0.0);
    EXPECT_LE(n, 1.0 + 1e-12);
    EXPECT_NEAR(n, oracle_ndcg(ranked, rel, k), 1e-12);
    // Perfect iff the top min(k, |rel|) ranks are all relevant.
    bool top = !rel.empty();
    for (int j = 0; j < std::min<int>(k, rel.size()); ++j)
      top = top && std::binary_search(rel.begin(), rel.end(), ranked[j]);
    EXPECT_EQ(std::abs(n - 1.0) < 1e-12, top);
  }
}

TEST(Aggregate, MatchesBruteForce) {
  CounterRng rng(8, Stream::kMonteCarlo);
  std::vector<std::array<int, 3>> train_rows, rel_rows;
  for (int u = 0; u < 8; ++u)
    for (int i = 0; i < 20; ++i) {
      const double d = rng.uniform();
      if (d < 0.3) train_rows.push_back({u, i, 3});
      else if (d < 0.45 && u != 5) rel_rows.push_back({u, i, 5});
    }
  // Shared index maps: build once, then split.
  auto rows = train_rows;
  rows.insert(rows.end(), rel_rows.begin(), rel_rows.end());
  const auto all = fixtures::make_dataset(rows, 5);
  std::vector<InteractionRecord> tr(all.records.begin(), all.records.begin() + train_rows.size());
  std::vector<InteractionRecord> te(all.records.begin() + train_rows.size(), all.records.end());
  const auto train = with_records(all, tr), relevant = with_records(all, te);

  Classifier model = initialize_model({.users = all.num_users(), .items = all.num_items(), .dim = 3, .classes = 5, .embedding_scale = 1.0}, 2).classifier;
  const std::vector<int> ks{1, 3, 5, 10};
  for (auto backend : {kernels::Backend::kSerial, kernels::Backend::kParallel}) {
    const auto rep = evaluate_ranking(model, train, relevant, ks, kernels::ScoreKind::kTopClass, backend);
    std::vector<double> rec(ks.size(), 0.0), nd(ks.size(), 0.0);
    std::size_t users = 0;
    for (std::size_t u = 0; u < all.num_users(); ++u) {
      std::vector<std::size_t> ex, rel;
      for (const auto& r : train.records)
        if (r.user == u) ex.push_back(r.item);
      for (const auto& r : relevant.records)
        if (r.user == u) rel.push_back(r.item);
      if (rel.empty()) continue;
      std::sort(ex.begin(), ex.end());
      std::sort(rel.begin(), rel.end());
      ++users;
      const auto ranked = rank_items(model, u, ex).items;
      for (std::size_t j = 0; j < ks.size(); ++j) {
        rec[j] += recall_at_k(ranked, rel, ks[j]);
        nd[j] += oracle_ndcg(ranked, rel, ks[j]);
      }
    }
    ASSERT_EQ(rep.users_evaluated, users);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      EXPECT_NEAR(rep.recall[j], rec[j] / users, 1e-12);
      EXPECT_NEAR(rep.ndcg[j], nd[j] / users, 1e-12);
    }
  }
}

TEST(MatrixError, ExactAndUniform) {
  auto bundle = initialize_model({.users = 3, .items = 3, .dim = 2, .classes = 5}, 0);
  auto& theta = bundle.transition;
  theta.net.fill(0.0);
  const auto truth = symmetric_matrix(5, 0.2);
  std::vector<kernels::Pair> pairs{{0, 0}, {1, 2}, {2, 1}};
  std::vector<TransitionMatrix> truths(3, truth);
  EXPECT_NEAR(evaluate_matrix(theta, bundle.classifier.embeddings, pairs, truths), 6.0, 1e-12);

  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) theta.net.b2[r * 5 + c] = std::log(truth(r, c));
  for (auto backend : {kernels::Backend::kSerial, kernels::Backend::kParallel})
    EXPECT_NEAR(evaluate_matrix(theta, bundle.classifier.embeddings, pairs, truths, backend), 0.0, 1e-12);
  EXPECT_THROW(evaluate_matrix(theta, bundle.classifier.embeddings, pairs, {}), UnsupportedError);
}

TEST(Accuracy, MatchesArgmaxOracle) {
  const auto m = initialize_model({.users = 5, .items = 6, .dim = 3, .classes = 4, .embedding_scale = 1.0}, 3).classifier;
  std::vector<kernels::Pair> pairs;
  std::vector<int> labels;
  std::size_t hits = 0;
  for (std::size_t u = 0; u < 5; ++u)
    for (std::size_t i = 0; i < 6; ++i) {
      const auto p = predict_posterior(m, u, i);
      const int arg = 1 + static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      const int label = 1 + static_cast<int>((u + i) % 4);
      pairs.push_back({u, i});
      labels.push_back(label);
      hits += arg == label;
    }
  EXPECT_DOUBLE_EQ(classification_accuracy(m, pairs, labels), static_cast<double>(hits) / pairs.size());
}

TEST(Variance, BayesEstimatorHasLowerVariance) {
  const auto rep = variance_comparison({0.5, 0.2}, 2000, 500, 0);
  EXPECT_EQ(rep.n_trials, 2000);
  EXPECT_LE(rep.var_bltm, rep.var_cltm);
  EXPECT_NEAR(rep.ratio, rep.var_cltm / rep.var_bltm, 1e-15);
  EXPECT_LT(variance_test_p_value(rep), 0.01);
  EXPECT_NEAR(rep.mean_bltm, 0.5, 0.01);  // p = 0.5: the noisy label is a fair coin
}

TEST(Variance, HoldsAcrossModerateInstances) {
  for (double p : {0.3, 0.45, 0.7})
    for (double eta : {0.1, 0.3}) {
      const auto rep = variance_comparison({p, eta}, 400, 300, 1);
      EXPECT_GE(rep.var_bltm, 0.0);
      EXPECT_LE(rep.var_bltm, rep.var_cltm) << p << " " << eta;
    }
}

TEST(Variance, DeterministicAndValidated) {
  const auto a = variance_comparison({0.5, 0.2}, 50, 40, 9);
  const auto b = variance_comparison({0.5, 0.2}, 50, 40, 9);
  EXPECT_EQ(a.var_bltm, b.var_bltm);
  EXPECT_EQ(a.var_cltm, b.var_cltm);
  EXPECT_THROW(variance_comparison({1.0 - 1e-9, 0.2}, 50, 40, 0), DomainError);
  EXPECT_THROW(variance_comparison({0.5, 0.5}, 50, 40, 0), DomainError);
}
