#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgbt/backbone.hpp"
#include "rgbt/distillation.hpp"
#include "rgbt/ingest.hpp"
#include "rgbt/kernels.hpp"
#include "rgbt/reliability.hpp"

namespace rgbt {

enum class Variant { kFull, kNoGmm, kNoBltm, kNormal };

// Where the reliability weight enters the transition update.
enum class Weighting { kBoth, kSamplingOnly, kLossOnly };

struct LossConfig {
  double lambda = 1.0;
  std::size_t batch_size = 256;
  int epochs = 100;
  Variant variant = Variant::kFull;

  void validate() const;
};

struct TrainConfig {
  LossConfig loss;
  std::size_t dim = 32;
  double embedding_scale = 0.1;
  double transition_prior = 0.9;
  OptimizerConfig::Kind optimizer = OptimizerConfig::Kind::kAdam;
  double lr_w = 1e-3;
  double lr_theta = 1e-3;
  int refresh_interval = 5;
  int patience = 10;  // epochs without validation NDCG@10 improvement; 0 disables
  Weighting weighting = Weighting::kBoth;
  bool include_self = true;
  GmmOptions gmm;
  ThresholdSchedule schedule;
  kernels::ScoreKind score_kind = kernels::ScoreKind::kTopClass;
  kernels::Backend backend = kernels::Backend::kParallel;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss_class = 0.0;
  double loss_calibrated = 0.0;
  double loss_rgbt = 0.0;
  double utilization = 0.0;
  std::size_t distilled = 0;
  int refreshes = 0;
  double val_recall10 = 0.0;
  double val_ndcg10 = 0.0;
  std::optional<double> l1_error;
  bool theta_updated = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

std::string history_header();
std::string history_line(const EpochRecord& r);

struct UtilizationPoint {
  int refresh = 0;
  int epoch = 0;
  double rho = 0.0;
  double tau = 0.0;
  std::size_t distilled = 0;
  double utilization = 0.0;
  double effective_sample_size = 0.0;
};

struct TrainData {
  const InteractionDataset* train = nullptr;
  const InteractionDataset* validation = nullptr;  // optional; drives early stopping
  // Optional ground truth for the per-epoch matrix error.
  std::span<const kernels::Pair> truth_pairs;
  std::span<const TransitionMatrix> truths;
};

struct TrainResult {
  ModelBundle model;
  TrainHistory history;
  DistilledSet distilled;
  std::optional<GmmParams> gmm;
  FeatureScaler scaler;
  std::vector<UtilizationPoint> utilization;
  int best_epoch = -1;
};

// Called after each epoch; used to stream history to disk.
using EpochCallback = std::function<void(const EpochRecord&)>;

// --- Losses ---------------------------------------------------------------

struct ThetaLoss {
  double value = 0.0;
  TransitionNet grad;
};

struct ClassLoss {
  double value = 0.0;
  Classifier grad;
};

// -(1/M) sum log T*_{y*, y~}(x; theta) over distilled samples.
ThetaLoss loss_bltm(std::span<const DistilledSample> batch, const TransitionNet& theta,
                    const Embeddings& embeddings,
                    kernels::Backend backend = kernels::Backend::kParallel);

// Same with each term scaled by the sample's reliability weight.
ThetaLoss loss_calibrated(std::span<const DistilledSample> batch, const TransitionNet& theta,
                          const Embeddings& embeddings,
                          kernels::Backend backend = kernels::Backend::kParallel);

// -(1/N) sum log (f(x; w)^T T*(x; theta))_{y~}; gradient w.r.t. w only.
// `labels` are 1-based noisy labels aligned with `pairs`.
ClassLoss loss_class(std::span<const kernels::Pair> pairs, std::span<const int> labels,
                     const Classifier& model, const TransitionNet* theta,
                     kernels::Backend backend = kernels::Backend::kParallel);

// class + lambda * calibrated; lambda must be > 0.
double loss_rgbt(double class_loss, double calibrated_loss, double lambda);

// Draws indices with probability proportional to their weight, with
// replacement. All-zero weights fall back to uniform draws.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::span<const double> weights);
  std::size_t draw(CounterRng& rng) const;
  std::size_t size() const { return cumulative_.size(); }

 private:
  std::vector<double> cumulative_;
};

// Alternating optimisation: every `refresh_interval` epochs (starting at 0)
// refresh the distilled set and refit the GMM; then per step update theta on
// a weighted distilled batch and w on a batch from the full training set.
// Epochs that start with an empty distilled set skip the theta updates.
TrainResult train_rgbt(const TrainData& data, const TrainConfig& config, std::uint64_t seed,
                       const EpochCallback& on_epoch = {});

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);
Weighting parse_weighting(std::string_view name);
std::string_view weighting_name(Weighting w);

}  // namespace rgbt
