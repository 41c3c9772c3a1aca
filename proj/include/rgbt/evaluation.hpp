#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rgbt/backbone.hpp"
#include "rgbt/ingest.hpp"
#include "rgbt/kernels.hpp"
#include "rgbt/noise.hpp"

namespace rgbt {

struct RankedList {
  std::size_t user = 0;
  std::vector<std::size_t> items;     // descending relevance, ties by item index
  std::vector<std::size_t> excluded;  // sorted
};

// Ranks every item outside `exclude` by relevance (probability of the top
// rating class by default).
RankedList rank_items(const Classifier& model, std::size_t user, std::span<const std::size_t> exclude,
                      kernels::ScoreKind kind = kernels::ScoreKind::kTopClass);

// `relevant` must be sorted. Empty relevant sets give 0.
double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, int k);
double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, int k);

struct RankingReport {
  std::vector<int> ks;
  std::vector<double> recall;  // mean over evaluated users, one per k
  std::vector<double> ndcg;
  std::size_t users_evaluated = 0;
};

// Full-ranking protocol: for every user with at least one relevant record,
// rank all items minus the user's training items and average the metrics.
RankingReport evaluate_ranking(const Classifier& model, const InteractionDataset& train,
                               const InteractionDataset& relevant, std::span<const int> ks,
                               kernels::ScoreKind kind = kernels::ScoreKind::kTopClass,
                               kernels::Backend backend = kernels::Backend::kParallel);

// Mean L1 error of T*(x; theta) against per-instance truths. Throws
// UnsupportedError when no ground truth is supplied.
double evaluate_matrix(const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const kernels::Pair> instances,
                       std::span<const TransitionMatrix> truths,
                       kernels::Backend backend = kernels::Backend::kParallel);

// Fraction of pairs whose argmax posterior equals the 1-based clean label.
double classification_accuracy(const Classifier& model, std::span<const kernels::Pair> pairs,
                               std::span<const int> clean_labels,
                               kernels::Backend backend = kernels::Backend::kParallel);

// Binary instance for the variance experiment: P(Y = 2 | x) = p and a
// symmetric flip rate eta.
struct VarianceSpec {
  double p = 0.5;
  double eta = 0.2;
};

struct VarianceReport {
  double var_bltm = 0.0;
  double var_cltm = 0.0;
  double ratio = 0.0;  // var_cltm / var_bltm
  double mean_bltm = 0.0;
  double mean_cltm = 0.0;
  int n_trials = 0;
  int n_per_trial = 0;
  int bayes_label = 1;  // 1-based row whose off-diagonal entry is estimated
};

// Monte Carlo comparison of the Bayes-label estimator (deterministic
// argmax labels) against the plug-in clean-label estimator (labels drawn
// from the posterior) for the off-diagonal entry of the Bayes row.
VarianceReport variance_comparison(const VarianceSpec& spec, int n_trials, int n_per_trial,
                                   std::uint64_t seed);

// One-sided F-test p-value for H0: var_bltm >= var_cltm.
double variance_test_p_value(const VarianceReport& report);

}  // namespace rgbt
