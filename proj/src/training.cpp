#include "rgbt/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "rgbt/error.hpp"
#include "rgbt/evaluation.hpp"
#include "rgbt/rng.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

void LossConfig::validate() const {
  if (!(lambda > 0.0)) throw DomainError("lambda must be > 0");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (epochs < 0) throw DomainError("epochs must be >= 0");
}

void TrainConfig::validate() const {
  loss.validate();
  schedule.validate();
  if (dim < 1) throw DomainError("embedding dimension must be >= 1");
  if (!(lr_w > 0.0) || !(lr_theta > 0.0)) throw DomainError("learning rates must be > 0");
  if (refresh_interval < 1) throw DomainError("refresh_interval must be >= 1");
  if (patience < 0) throw DomainError("patience must be >= 0");
  if (!(transition_prior >= 0.0 && transition_prior < 1.0)) throw DomainError("transition prior must lie in [0, 1)");
}

std::string history_header() {
  return "epoch,loss_class,loss_calibrated,loss_rgbt,utilization,distilled,refreshes,"
         "val_recall10,val_ndcg10,l1_error,theta_updated\n";
}

std::string history_line(const EpochRecord& r) {
  using text::format_double;
  return std::to_string(r.epoch) + ',' + format_double(r.loss_class) + ',' +
         format_double(r.loss_calibrated) + ',' + format_double(r.loss_rgbt) + ',' +
         format_double(r.utilization) + ',' + std::to_string(r.distilled) + ',' +
         std::to_string(r.refreshes) + ',' + format_double(r.val_recall10) + ',' +
         format_double(r.val_ndcg10) + ',' + (r.l1_error ? format_double(*r.l1_error) : "") + ',' +
         (r.theta_updated ? "1" : "0") + '\n';
}

namespace {

std::vector<kernels::TransitionExample> to_examples(std::span<const DistilledSample> batch,
                                                    bool use_weights) {
  std::vector<kernels::TransitionExample> out;
  out.reserve(batch.size());
  for (const auto& s : batch)
    out.push_back({s.user, s.item, s.bayes_label - 1, s.noisy_label - 1, use_weights ? s.weight : 1.0});
  return out;
}

void scale_tensors(TransitionNet& g, double factor) {
  for (auto& t : g.tensors())
    for (auto& v : t.data) v *= factor;
}

}  // namespace

ThetaLoss loss_bltm(std::span<const DistilledSample> batch, const TransitionNet& theta,
                    const Embeddings& embeddings, kernels::Backend backend) {
  ThetaLoss out;
  const auto ex = to_examples(batch, false);
  out.value = kernels::calibrated_loss(backend, theta, embeddings, ex, &out.grad);
  return out;
}

ThetaLoss loss_calibrated(std::span<const DistilledSample> batch, const TransitionNet& theta,
                          const Embeddings& embeddings, kernels::Backend backend) {
  ThetaLoss out;
  const auto ex = to_examples(batch, true);
  out.value = kernels::calibrated_loss(backend, theta, embeddings, ex, &out.grad);
  return out;
}

ClassLoss loss_class(std::span<const kernels::Pair> pairs, std::span<const int> labels,
                     const Classifier& model, const TransitionNet* theta, kernels::Backend backend) {
  if (pairs.size() != labels.size()) throw DimensionError("label count does not match pairs");
  std::vector<kernels::LabeledPair> batch;
  batch.reserve(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n)
    batch.push_back({pairs[n].first, pairs[n].second, labels[n] - 1});
  ClassLoss out;
  out.value = kernels::class_loss(backend, model, theta, batch, &out.grad);
  return out;
}

double loss_rgbt(double class_loss, double calibrated_loss, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be > 0");
  return class_loss + lambda * calibrated_loss;
}

WeightedSampler::WeightedSampler(std::span<const double> weights) {
  if (weights.empty()) throw DomainError("cannot sample from an empty set");
  cumulative_.resize(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw DomainError("sampling weights must be non-negative");
    acc += weights[i];
    cumulative_[i] = acc;
  }
  if (acc == 0.0)
    for (std::size_t i = 0; i < cumulative_.size(); ++i) cumulative_[i] = static_cast<double>(i + 1);
}

std::size_t WeightedSampler::draw(CounterRng& rng) const {
  const double target = rng.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

TrainResult train_rgbt(const TrainData& data, const TrainConfig& config, std::uint64_t seed,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (!data.train || data.train->empty()) throw DomainError("training set is empty");
  const auto& train = *data.train;
  const int k = train.num_classes;
  const std::size_t n = train.size();
  const auto backend = config.backend;
  const Variant variant = config.loss.variant;
  const bool distill_on = variant != Variant::kNormal;
  const bool learn_theta = variant == Variant::kFull || variant == Variant::kNoGmm;
  const bool use_gmm = variant == Variant::kFull || variant == Variant::kNoBltm;
  const bool sample_by_weight = config.weighting != Weighting::kLossOnly;
  const bool loss_by_weight = config.weighting != Weighting::kSamplingOnly;

  TrainResult res;
  res.model = initialize_model({train.num_users(), train.num_items(), config.dim, k, config.embedding_scale,
                                config.transition_prior}, seed);
  auto& clf = res.model.classifier;
  auto& theta = res.model.transition;
  res.distilled = DistilledSet(n);

  Optimizer opt_w({config.optimizer, config.lr_w});
  Optimizer opt_theta({config.optimizer, config.lr_theta});
  CounterRng shuffle_rng(seed, Stream::kShuffle);
  CounterRng sample_rng(seed, Stream::kSampling);

  std::vector<kernels::Pair> pairs(n);
  std::vector<kernels::LabeledPair> labeled(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = train.records[r];
    pairs[r] = {rec.user, rec.item};
    labeled[r] = {rec.user, rec.item, rec.label - 1};
  }
  std::optional<CooccurrenceIndex> cooccur;
  if (use_gmm) cooccur.emplace(train, config.include_self, backend);

  std::vector<double> posterior(n * static_cast<std::size_t>(k));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(config.loss.batch_size, n);
  const std::size_t steps = (n + batch - 1) / batch;
  const std::array<int, 1> val_ks{10};

  int refreshes = 0;
  bool theta_trained = false;
  double best_ndcg = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::optional<ModelBundle> best_model;

  Classifier grad_w;
  TransitionNet grad_theta;
  std::vector<kernels::TransitionExample> theta_batch(batch);
  std::vector<kernels::LabeledPair> class_batch;
  class_batch.reserve(batch);

  for (int epoch = 0; epoch < config.loss.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;

    if (distill_on && epoch % config.refresh_interval == 0) {
      kernels::posteriors(backend, clf, pairs, posterior);
      std::vector<double> gate;
      if (res.gmm) {
        const auto feats = build_features(pairs, clf, *cooccur);
        gate.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
          const Vec2 raw{feats.features[r].score, static_cast<double>(feats.features[r].cooccur)};
          gate[r] = reliability_weight(res.scaler.apply(raw), *res.gmm);
        }
      }
      res.distilled = refresh_distilled_set(res.distilled, train, {posterior, k, gate}, config.schedule, refreshes);

      auto& samples = res.distilled.samples();
      if (use_gmm && samples.size() >= 4) {
        std::vector<kernels::Pair> dp;
        dp.reserve(samples.size());
        for (const auto& s : samples) dp.emplace_back(s.user, s.item);
        const auto feats = build_features(dp, clf, *cooccur);
        std::vector<Vec2> x;
        x.reserve(samples.size());
        for (const auto& f : feats.features) x.push_back(f.standardized);
        const auto fit = fit_gmm(x, config.gmm, seed);
        res.gmm = fit.params;
        res.scaler = feats.scaler;
        for (std::size_t i = 0; i < samples.size(); ++i) samples[i].weight = reliability_weight(x[i], *res.gmm);
      } else if (!use_gmm) {
        for (auto& s : samples) s.weight = 1.0;
      }

      const Thresholds th = schedule_at(config.schedule, refreshes);
      UtilizationPoint pt{refreshes, epoch, th.rho, th.tau, res.distilled.size(),
                          utilization(res.distilled, train), 0.0};
      const auto w = res.distilled.weights();
      if (std::any_of(w.begin(), w.end(), [](double v) { return v > 0.0; })) pt.effective_sample_size = effective_sample_size(w);
      res.utilization.push_back(pt);
      ++refreshes;
    }

    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    const bool theta_active = learn_theta && !res.distilled.empty();
    std::optional<WeightedSampler> sampler;
    if (theta_active) {
      if (sample_by_weight) sampler.emplace(res.distilled.weights());
      else sampler.emplace(std::vector<double>(res.distilled.size(), 1.0));
    }

    double sum_class = 0.0, sum_cal = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      if (theta_active) {
        const auto& samples = res.distilled.samples();
        for (auto& ex : theta_batch) {
          const auto& s = samples[sampler->draw(sample_rng)];
          ex = {s.user, s.item, s.bayes_label - 1, s.noisy_label - 1, loss_by_weight ? s.weight : 1.0};
        }
        const double cal = kernels::calibrated_loss(backend, theta, clf.embeddings, theta_batch, &grad_theta);
        if (!std::isfinite(cal)) throw NumericError("calibrated loss diverged at epoch " + std::to_string(epoch));
        scale_tensors(grad_theta, config.loss.lambda);
        apply_gradients(theta, grad_theta, opt_theta);
        sum_cal += cal;
        theta_trained = true;
      }

      class_batch.clear();
      const std::size_t begin = step * batch;
      const std::size_t end = std::min(n, begin + batch);
      for (std::size_t i = begin; i < end; ++i) class_batch.push_back(labeled[order[i]]);
      // Until theta has seen a distilled batch its output carries no
      // information, so the classifier trains against the identity.
      const TransitionNet* t = (learn_theta && theta_trained) ? &theta : nullptr;
      const double cls = kernels::class_loss(backend, clf, t, class_batch, &grad_w);
      if (!std::isfinite(cls)) throw NumericError("class loss diverged at epoch " + std::to_string(epoch));
      apply_gradients(clf, grad_w, opt_w);
      sum_class += cls;
    }

    rec.loss_class = sum_class / static_cast<double>(steps);
    rec.loss_calibrated = theta_active ? sum_cal / static_cast<double>(steps) : 0.0;
    rec.loss_rgbt = rec.loss_class + config.loss.lambda * rec.loss_calibrated;
    rec.theta_updated = theta_active;
    rec.distilled = res.distilled.size();
    rec.utilization = distill_on ? utilization(res.distilled, train) : 0.0;
    rec.refreshes = refreshes;
    if (data.validation && !data.validation->empty()) {
      const auto rep = evaluate_ranking(clf, train, *data.validation, val_ks, config.score_kind, backend);
      rec.val_recall10 = rep.recall[0];
      rec.val_ndcg10 = rep.ndcg[0];
    }
    if (!data.truths.empty()) {
      rec.l1_error = evaluate_matrix(theta, clf.embeddings, data.truth_pairs, data.truths, backend);
    }
    res.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (data.validation && !data.validation->empty() && config.patience > 0) {
      if (rec.val_ndcg10 > best_ndcg) {
        best_ndcg = rec.val_ndcg10;
        best_model = res.model;
        res.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    }
  }
  if (best_model) res.model = std::move(*best_model);
  return res;
}

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_gmm") return Variant::kNoGmm;
  if (name == "no_bltm") return Variant::kNoBltm;
  if (name == "normal") return Variant::kNormal;
  throw ConfigError("train.variant", "unknown variant '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoGmm: return "no_gmm";
    case Variant::kNoBltm: return "no_bltm";
    case Variant::kNormal: return "normal";
  }
  return "full";
}

Weighting parse_weighting(std::string_view name) {
  if (name == "both") return Weighting::kBoth;
  if (name == "sampling") return Weighting::kSamplingOnly;
  if (name == "loss") return Weighting::kLossOnly;
  throw ConfigError("train.weighting", "unknown weighting '" + std::string(name) + "'");
}

std::string_view weighting_name(Weighting w) {
  switch (w) {
    case Weighting::kBoth: return "both";
    case Weighting::kSamplingOnly: return "sampling";
    case Weighting::kLossOnly: return "loss";
  }
  return "both";
}

}  // namespace rgbt
