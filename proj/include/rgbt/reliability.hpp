#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rgbt/backbone.hpp"
#include "rgbt/ingest.hpp"
#include "rgbt/kernels.hpp"

namespace rgbt {

using Vec2 = std::array<double, 2>;

// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct Cov2 {
  double xx = 1.0;
  double xy = 0.0;
  double yy = 1.0;

  double det() const { return xx * yy - xy * xy; }
};

struct ReliabilityFeature {
  double score = 0.0;
  long long cooccur = 0;
  Vec2 standardized{0.0, 0.0};
};

// Per-coordinate z-scoring. Coordinates with zero variance map to 0.
struct FeatureScaler {
  Vec2 mean{0.0, 0.0};
  Vec2 stddev{0.0, 0.0};

  static FeatureScaler fit(std::span<const Vec2> raw);
  Vec2 apply(const Vec2& raw) const;
};

struct GmmParams {
  Vec2 pi{0.5, 0.5};
  std::array<Vec2, 2> mu{};
  std::array<Cov2, 2> sigma{};
  int reliable_index = 0;
};

struct GmmOptions {
  double tol = 1e-6;
  int max_iter = 200;
  double regularization = 1e-6;
};

struct GmmFit {
  GmmParams params;
  // Mean per-point log-likelihood evaluated at the start of each iteration.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

// Counts c_uv = #{u' in U_v : |I_u n I_u'| > 1} over the training set.
// With include_self the sum also visits u' = u, as the formula is written.
class CooccurrenceIndex {
 public:
  CooccurrenceIndex(const InteractionDataset& train, bool include_self,
                    kernels::Backend backend = kernels::Backend::kParallel);

  long long count(std::size_t user, std::size_t item) const;
  bool include_self() const { return include_self_; }

 private:
  std::size_t overlap(std::size_t a, std::size_t b) const;

  bool include_self_;
  std::size_t users_;
  std::vector<std::vector<std::size_t>> items_of_user_;  // sorted
  std::vector<std::vector<std::size_t>> users_of_item_;
  std::vector<std::uint32_t> overlap_;  // users x users when dense
  bool dense_ = false;
};

// Single-pair convenience; builds a throwaway index.
long long cooccurrence_feature(std::size_t user, std::size_t item, const InteractionDataset& train,
                               bool include_self = true);

struct FeatureBatch {
  std::vector<ReliabilityFeature> features;
  FeatureScaler scaler;
};

// (p_u . q_v, c_uv) per pair, then both coordinates z-scored over the batch.
FeatureBatch build_features(std::span<const kernels::Pair> pairs, const Classifier& model,
                            const CooccurrenceIndex& cooccur);

// Two-component EM on 2-d features. Throws InsufficientDataError below four
// points. The initialisation is deterministic; `seed` is carried for
// interface stability and does not change the result.
GmmFit fit_gmm(std::span<const Vec2> features, const GmmOptions& options, std::uint64_t seed);

double log_gaussian(const Vec2& x, const Vec2& mu, const Cov2& sigma);

// Posterior responsibility of component k at x, densities floored at 1e-300.
double component_posterior(const Vec2& x, const GmmParams& g, int k);
double reliability_weight(const Vec2& x, const GmmParams& g);

// (sum w)^2 / sum w^2. Throws DomainError for negative or all-zero weights.
double effective_sample_size(std::span<const double> weights);

std::string serialize_gmm(const GmmParams& g, const FeatureScaler* scaler = nullptr);
GmmParams parse_gmm(std::string_view text, FeatureScaler* scaler = nullptr);

}  // namespace rgbt
