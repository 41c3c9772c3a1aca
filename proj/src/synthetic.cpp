#include "rgbt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "rgbt/error.hpp"
#include "rgbt/rng.hpp"

namespace rgbt {

namespace {

std::vector<double> resolve_shares(const SyntheticSpec& spec) {
  if (!spec.class_shares.empty()) return spec.class_shares;
  if (spec.classes == 5) return {0.0611, 0.1137, 0.2715, 0.3417, 0.2120};
  return std::vector<double>(static_cast<std::size_t>(spec.classes), 1.0 / spec.classes);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (users == 0 || items == 0) throw DomainError("synthetic data needs users and items");
  if (classes < 2) throw DomainError("synthetic data needs K >= 2");
  if (factors == 0) throw DomainError("synthetic data needs at least one factor");
  if (interactions > users * items) throw DomainError("more interactions than user-item pairs");
  if (!(jitter >= 0.0) || !(bias_scale >= 0.0) || !(popularity_exponent >= 0.0))
    throw DomainError("synthetic scales must be non-negative");
  if (!class_shares.empty()) {
    if (class_shares.size() != static_cast<std::size_t>(classes))
      throw DimensionError("class_shares must have K entries");
    double sum = 0.0;
    for (double s : class_shares) {
      if (!(s >= 0.0)) throw DomainError("class shares must be non-negative");
      sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("class shares must sum to 1");
  }
}

InteractionDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, Stream::kSynthetic);
  const std::size_t f = spec.factors;

  std::vector<double> uf(spec.users * f), vf(spec.items * f), ub(spec.users), vb(spec.items);
  for (auto& x : uf) x = rng.normal();
  for (auto& x : vf) x = rng.normal();
  for (auto& x : ub) x = spec.bias_scale * rng.normal();
  for (auto& x : vb) x = spec.bias_scale * rng.normal();

  std::vector<double> pop_cdf(spec.items);
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.items; ++i) {
    acc += std::pow(static_cast<double>(i) + 10.0, -spec.popularity_exponent);
    pop_cdf[i] = acc;
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(spec.interactions);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(spec.interactions * 2);
  // Dense requests fall back to uniform items so rejection terminates.
  const bool dense = spec.interactions * 2 > spec.users * spec.items;
  while (pairs.size() < spec.interactions) {
    const std::size_t u = rng.uniform_index(spec.users);
    std::size_t v;
    if (dense) {
      v = rng.uniform_index(spec.items);
    } else {
      const double target = rng.uniform() * acc;
      v = static_cast<std::size_t>(std::upper_bound(pop_cdf.begin(), pop_cdf.end(), target) - pop_cdf.begin());
      v = std::min(v, spec.items - 1);
    }
    if (seen.insert(static_cast<std::uint64_t>(u) * spec.items + v).second) pairs.emplace_back(u, v);
  }

  const double norm = 1.0 / std::sqrt(static_cast<double>(f));
  std::vector<double> score(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto [u, v] = pairs[n];
    double s = 0.0;
    for (std::size_t d = 0; d < f; ++d) s += uf[u * f + d] * vf[v * f + d];
    score[n] = s * norm + ub[u] + vb[v];
    if (spec.jitter > 0.0) score[n] += spec.jitter * rng.normal();
  }

  // Rank-based cut: the r-th smallest score gets the class whose cumulative
  // share first exceeds (r + 0.5) / N.
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  const auto shares = resolve_shares(spec);
  std::vector<double> cum(shares.size());
  std::partial_sum(shares.begin(), shares.end(), cum.begin());
  std::vector<int> label(pairs.size());
  const double total = static_cast<double>(pairs.size());
  int cls = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const double q = (static_cast<double>(r) + 0.5) / total;
    while (cls + 1 < spec.classes && q > cum[static_cast<std::size_t>(cls)]) ++cls;
    label[order[r]] = cls + 1;
  }

  InteractionDataset ds;
  ds.num_classes = spec.classes;
  ds.records.reserve(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    InteractionRecord rec;
    rec.user_id = "u" + std::to_string(pairs[n].first + 1);
    rec.item_id = "i" + std::to_string(pairs[n].second + 1);
    rec.label = label[n];
    rec.user = ds.users.intern(rec.user_id);
    rec.item = ds.items.intern(rec.item_id);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace rgbt
