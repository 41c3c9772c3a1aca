#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgbt/ingest.hpp"

namespace rgbt {

// One admitted training pair. Labels are 1-based; the feature x_ui is read
// from the current embeddings through (user, item) whenever it is needed.
struct DistilledSample {
  std::size_t record = 0;  // position in the training set
  std::size_t user = 0;
  std::size_t item = 0;
  int noisy_label = 1;
  int bayes_label = 1;
  double weight = 1.0;
  int refresh_index = 0;  // refresh at which the pair was first admitted
};

struct ThresholdSchedule {
  double rho0 = 0.4;
  double gamma = 0.9;
  double rho_min = 0.0;
  double tau0 = 0.5;
  double tau_gamma = 0.9;

  void validate() const;
};

struct Thresholds {
  double rho = 0.0;
  double tau = 0.0;
};

// argmax of the posterior (1-based, lowest index wins ties) when its maximum
// exceeds (1 + rho) / 2, otherwise nothing.
std::optional<int> distill(std::span<const double> posterior, double rho);

// rho_t = max(rho_min, rho0 * gamma^t), tau_t = tau0 * tau_gamma^t.
Thresholds schedule_at(const ThresholdSchedule& s, int t);

// Distilled set keyed by training-record position. Samples are kept in
// training-set order; a pair once admitted is never evicted.
class DistilledSet {
 public:
  explicit DistilledSet(std::size_t train_size = 0);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  bool contains(std::size_t record) const;
  const DistilledSample* find(std::size_t record) const;
  const std::vector<DistilledSample>& samples() const { return samples_; }
  std::vector<DistilledSample>& samples() { return samples_; }
  std::size_t train_size() const { return slot_.size(); }

  // Inserts or overwrites; keeps training-set order.
  void upsert(const DistilledSample& s);

  std::vector<double> weights() const;
  void set_weights(std::span<const double> weights);

 private:
  void rebuild_slots();

  std::vector<std::int64_t> slot_;
  std::vector<DistilledSample> samples_;
};

struct RefreshInputs {
  // f(x; w) for every training record, row-major N x K.
  std::span<const double> posteriors;
  int classes = 0;
  // Current reliability weights for every training record. Empty disables
  // the weight gate (no GMM has been fitted yet).
  std::span<const double> weights;
};

// One distillation refresh at index t. A record is admitted when the
// confidence gate fires at rho_t, or when its weight exceeds tau_t; records
// already present get their Bayes label and weight refreshed.
DistilledSet refresh_distilled_set(const DistilledSet& current, const InteractionDataset& train,
                                   const RefreshInputs& inputs, const ThresholdSchedule& schedule,
                                   int t);

// |distinct pairs in the set| / |train|. Throws DomainError on empty train.
double utilization(const DistilledSet& current, const InteractionDataset& train);

// "user\titem\tnoisy_label\tbayes_label\tweight\trefresh_index" per line.
std::string serialize_distilled(const DistilledSet& set, const InteractionDataset& train);

}  // namespace rgbt
