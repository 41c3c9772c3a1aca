#include "rgbt/distillation.hpp"

#include <algorithm>
#include <cmath>

#include "rgbt/error.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

void ThresholdSchedule::validate() const {
  if (!(rho0 >= 0.0 && rho0 < 1.0)) throw DomainError("rho0 must lie in [0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in (0, 1]");
  if (!(rho_min >= 0.0 && rho_min <= rho0)) throw DomainError("rho_min must lie in [0, rho0]");
  if (!(tau0 >= 0.0)) throw DomainError("tau0 must be >= 0");
  if (!(tau_gamma > 0.0 && tau_gamma <= 1.0)) throw DomainError("tau_gamma must lie in (0, 1]");
}

std::optional<int> distill(std::span<const double> posterior, double rho) {
  if (posterior.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t k = 1; k < posterior.size(); ++k)
    if (posterior[k] > posterior[best]) best = k;
  if (posterior[best] > (1.0 + rho) / 2.0) return static_cast<int>(best) + 1;
  return std::nullopt;
}

Thresholds schedule_at(const ThresholdSchedule& s, int t) {
  const double td = static_cast<double>(std::max(t, 0));
  return {std::max(s.rho_min, s.rho0 * std::pow(s.gamma, td)), s.tau0 * std::pow(s.tau_gamma, td)};
}

DistilledSet::DistilledSet(std::size_t train_size) : slot_(train_size, -1) {}

bool DistilledSet::contains(std::size_t record) const {
  return record < slot_.size() && slot_[record] >= 0;
}

const DistilledSample* DistilledSet::find(std::size_t record) const {
  if (!contains(record)) return nullptr;
  return &samples_[static_cast<std::size_t>(slot_[record])];
}

void DistilledSet::upsert(const DistilledSample& s) {
  if (s.record >= slot_.size()) throw BoundsError("record outside the training set");
  if (slot_[s.record] >= 0) {
    samples_[static_cast<std::size_t>(slot_[s.record])] = s;
    return;
  }
  auto pos = std::lower_bound(samples_.begin(), samples_.end(), s.record,
                              [](const DistilledSample& a, std::size_t r) { return a.record < r; });
  const bool at_end = pos == samples_.end();
  samples_.insert(pos, s);
  if (at_end) slot_[s.record] = static_cast<std::int64_t>(samples_.size() - 1);
  else rebuild_slots();
}

void DistilledSet::rebuild_slots() {
  std::fill(slot_.begin(), slot_.end(), -1);
  for (std::size_t i = 0; i < samples_.size(); ++i) slot_[samples_[i].record] = static_cast<std::int64_t>(i);
}

std::vector<double> DistilledSet::weights() const {
  std::vector<double> w;
  w.reserve(samples_.size());
  for (const auto& s : samples_) w.push_back(s.weight);
  return w;
}

void DistilledSet::set_weights(std::span<const double> weights) {
  if (weights.size() != samples_.size()) throw DimensionError("weight count does not match the set");
  for (std::size_t i = 0; i < samples_.size(); ++i) samples_[i].weight = weights[i];
}

DistilledSet refresh_distilled_set(const DistilledSet& current, const InteractionDataset& train,
                                   const RefreshInputs& in, const ThresholdSchedule& schedule, int t) {
  const std::size_t n = train.size();
  const auto k = static_cast<std::size_t>(in.classes);
  if (current.train_size() != n) throw DimensionError("distilled set belongs to another training set");
  if (in.posteriors.size() != n * k) throw DimensionError("posterior buffer has the wrong size");
  if (!in.weights.empty() && in.weights.size() != n) throw DimensionError("weight buffer has the wrong size");

  const Thresholds th = schedule_at(schedule, t);
  DistilledSet next(n);
  auto& out = next.samples();
  out.reserve(std::max(current.size(), n / 4));

  // Walk the training set in order; upsert at the end keeps this O(N).
  for (std::size_t r = 0; r < n; ++r) {
    const auto post = in.posteriors.subspan(r * k, k);
    const auto confident = distill(post, th.rho);
    const bool present = current.contains(r);
    const double w = in.weights.empty() ? 1.0 : in.weights[r];
    const bool reliable = !in.weights.empty() && w > th.tau;
    if (!confident && !present && !reliable) continue;

    const auto argmax = static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin()) + 1;
    DistilledSample s;
    s.record = r;
    s.user = train.records[r].user;
    s.item = train.records[r].item;
    s.noisy_label = train.records[r].label;
    s.bayes_label = confident ? *confident : argmax;
    s.weight = w;
    s.refresh_index = t;
    if (present) s.refresh_index = current.find(r)->refresh_index;
    next.upsert(s);
  }
  return next;
}

double utilization(const DistilledSet& current, const InteractionDataset& train) {
  if (train.empty()) throw DomainError("utilization of an empty training set");
  return static_cast<double>(current.size()) / static_cast<double>(train.size());
}

std::string serialize_distilled(const DistilledSet& set, const InteractionDataset& train) {
  std::string out = "user\titem\tnoisy_label\tbayes_label\tweight\trefresh_index\n";
  for (const auto& s : set.samples()) {
    const auto& rec = train.records[s.record];
    out += rec.user_id + '\t' + rec.item_id + '\t' + std::to_string(s.noisy_label) + '\t' +
           std::to_string(s.bayes_label) + '\t' + text::format_double(s.weight) + '\t' +
           std::to_string(s.refresh_index) + '\n';
  }
  return out;
}

}  // namespace rgbt
