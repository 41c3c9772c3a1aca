#include "rgbt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>

#include "rgbt/error.hpp"
#include "rgbt/rng.hpp"

namespace rgbt {

namespace {

std::vector<std::vector<std::size_t>> items_by_user(const InteractionDataset& ds, std::size_t users) {
  std::vector<std::vector<std::size_t>> out(users);
  for (const auto& r : ds.records)
    if (r.user < users) out[r.user].push_back(r.item);
  for (auto& v : out) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

// Top `limit` items outside `exclude`, by descending score then item index.
std::vector<std::size_t> top_items(std::span<const double> scores, std::span<const std::size_t> exclude,
                                   std::size_t limit) {
  std::vector<std::size_t> cand;
  cand.reserve(scores.size());
  std::size_t e = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    while (e < exclude.size() && exclude[e] < i) ++e;
    if (e < exclude.size() && exclude[e] == i) continue;
    cand.push_back(i);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  limit = std::min(limit, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(limit), cand.end(), better);
  cand.resize(limit);
  return cand;
}

double sample_variance(const std::vector<double>& v, double& mean) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

RankedList rank_items(const Classifier& model, std::size_t user, std::span<const std::size_t> exclude,
                      kernels::ScoreKind kind) {
  if (user >= model.embeddings.users) throw BoundsError("user index out of range");
  RankedList list;
  list.user = user;
  list.excluded.assign(exclude.begin(), exclude.end());
  std::sort(list.excluded.begin(), list.excluded.end());
  std::vector<double> scores(model.embeddings.items);
  kernels::ItemScorer(model, kind).score_user(user, scores);
  list.items = top_items(scores, list.excluded, scores.size());
  return list;
}

double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, int k) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (relevant.empty()) return 0.0;
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < top; ++r)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[r])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, int k) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (relevant.empty()) return 0.0;
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < top; ++r)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[r]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  const std::size_t ideal = std::min<std::size_t>(static_cast<std::size_t>(k), relevant.size());
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

RankingReport evaluate_ranking(const Classifier& model, const InteractionDataset& train,
                               const InteractionDataset& relevant, std::span<const int> ks,
                               kernels::ScoreKind kind, kernels::Backend backend) {
  RankingReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.recall.assign(ks.size(), 0.0);
  report.ndcg.assign(ks.size(), 0.0);
  int max_k = 0;
  for (int k : ks) {
    if (k < 1) throw DomainError("k must be >= 1");
    max_k = std::max(max_k, k);
  }

  const std::size_t users = model.embeddings.users;
  const auto train_items = items_by_user(train, users);
  const auto rel_items = items_by_user(relevant, users);
  std::vector<std::size_t> eval_users;
  for (std::size_t u = 0; u < users; ++u)
    if (!rel_items[u].empty()) eval_users.push_back(u);
  report.users_evaluated = eval_users.size();
  if (eval_users.empty()) return report;

  const kernels::ItemScorer scorer(model, kind);
  const std::size_t nk = ks.size();
  std::vector<double> per_user(eval_users.size() * 2 * nk, 0.0);

  auto evaluate_user = [&](std::size_t idx, std::vector<double>& scores) {
    const std::size_t u = eval_users[idx];
    scorer.score_user(u, scores);
    const auto top = top_items(scores, train_items[u], static_cast<std::size_t>(max_k));
    for (std::size_t j = 0; j < nk; ++j) {
      per_user[idx * 2 * nk + j] = recall_at_k(top, rel_items[u], ks[j]);
      per_user[idx * 2 * nk + nk + j] = ndcg_at_k(top, rel_items[u], ks[j]);
    }
  };

  if (backend == kernels::Backend::kSerial) {
    std::vector<double> scores(model.embeddings.items);
    for (std::size_t idx = 0; idx < eval_users.size(); ++idx) evaluate_user(idx, scores);
  } else {
#pragma omp parallel
    {
      std::vector<double> scores(model.embeddings.items);
#pragma omp for schedule(dynamic, 8)
      for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(eval_users.size()); ++idx)
        evaluate_user(static_cast<std::size_t>(idx), scores);
    }
  }

  // Ordered reduction.
  for (std::size_t idx = 0; idx < eval_users.size(); ++idx)
    for (std::size_t j = 0; j < nk; ++j) {
      report.recall[j] += per_user[idx * 2 * nk + j];
      report.ndcg[j] += per_user[idx * 2 * nk + nk + j];
    }
  const double n = static_cast<double>(eval_users.size());
  for (std::size_t j = 0; j < nk; ++j) {
    report.recall[j] /= n;
    report.ndcg[j] /= n;
  }
  return report;
}

double evaluate_matrix(const TransitionNet& theta, const Embeddings& embeddings,
                       std::span<const kernels::Pair> instances, std::span<const TransitionMatrix> truths,
                       kernels::Backend backend) {
  if (truths.empty() && !instances.empty())
    throw UnsupportedError("matrix error needs ground-truth transition matrices");
  const auto estimates = kernels::transitions(backend, theta, embeddings, instances);
  return l1_matrix_error(estimates, truths);
}

double classification_accuracy(const Classifier& model, std::span<const kernels::Pair> pairs,
                               std::span<const int> clean_labels, kernels::Backend backend) {
  if (pairs.size() != clean_labels.size()) throw DimensionError("label count does not match pairs");
  if (pairs.empty()) throw DomainError("accuracy of an empty set");
  const auto k = static_cast<std::size_t>(model.classes);
  std::vector<double> post(pairs.size() * k);
  kernels::posteriors(backend, model, pairs, post);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto row = std::span<const double>(post).subspan(n * k, k);
    const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) + 1;
    if (arg == clean_labels[n]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

VarianceReport variance_comparison(const VarianceSpec& spec, int n_trials, int n_per_trial,
                                   std::uint64_t seed) {
  constexpr double kDegenerate = 1e-6;
  if (!(spec.p > kDegenerate && spec.p < 1.0 - kDegenerate))
    throw DomainError("posterior p(x) is degenerate; the plug-in estimator has no label uncertainty");
  if (!(spec.eta >= 0.0 && spec.eta < 0.5)) throw DomainError("flip rate must lie in [0, 1/2)");
  if (n_trials < 2 || n_per_trial < 1) throw DomainError("need at least 2 trials and 1 draw per trial");

  // Bayes label: argmax of (1 - p, p), ties to the lower class.
  const int bayes = spec.p > 0.5 ? 1 : 0;
  const int flip = 1 - bayes;

  CounterRng rng(seed, Stream::kMonteCarlo);
  std::vector<double> est_bltm, est_cltm;
  est_bltm.reserve(static_cast<std::size_t>(n_trials));
  est_cltm.reserve(static_cast<std::size_t>(n_trials));
  for (int trial = 0; trial < n_trials; ++trial) {
    int noisy_flip = 0;  // Bayes-label estimator: all draws sit in row `bayes`
    int plug_rows = 0;   // plug-in estimator: draws whose imputed label is `bayes`
    int plug_flip = 0;
    for (int k = 0; k < n_per_trial; ++k) {
      const int clean = rng.uniform() < spec.p ? 1 : 0;
      const int noisy = rng.uniform() < spec.eta ? 1 - clean : clean;
      const int imputed = rng.uniform() < spec.p ? 1 : 0;
      if (noisy == flip) ++noisy_flip;
      if (imputed == bayes) {
        ++plug_rows;
        if (noisy == flip) ++plug_flip;
      }
    }
    est_bltm.push_back(static_cast<double>(noisy_flip) / n_per_trial);
    if (plug_rows > 0) est_cltm.push_back(static_cast<double>(plug_flip) / plug_rows);
  }
  if (est_cltm.size() < 2) throw NumericError("plug-in estimator produced too few estimates");

  VarianceReport r;
  r.n_trials = n_trials;
  r.n_per_trial = n_per_trial;
  r.bayes_label = bayes + 1;
  r.var_bltm = sample_variance(est_bltm, r.mean_bltm);
  r.var_cltm = sample_variance(est_cltm, r.mean_cltm);
  r.ratio = r.var_bltm > 0.0 ? r.var_cltm / r.var_bltm : 0.0;
  return r;
}

double variance_test_p_value(const VarianceReport& report) {
  if (!(report.var_bltm > 0.0)) return report.var_cltm > 0.0 ? 0.0 : 1.0;
  const double df = static_cast<double>(report.n_trials - 1);
  boost::math::fisher_f_distribution<double> f(df, df);
  return boost::math::cdf(boost::math::complement(f, report.ratio));
}

}  // namespace rgbt
