#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rgbt/ingest.hpp"

namespace rgbt {

// Latent-factor rating generator. Each interaction's score is
// u.v / sqrt(factors) + b_u + b_v (+ optional Gaussian jitter); scores are
// cut at quantiles so that class k receives class_shares[k - 1] of the
// records. With jitter = 0 the clean label is a deterministic function of
// (user, item).
struct SyntheticSpec {
  std::size_t users = 943;
  std::size_t items = 1682;
  std::size_t interactions = 100000;
  int classes = 5;
  std::size_t factors = 8;
  double bias_scale = 0.5;
  double jitter = 0.0;
  // Item popularity follows (rank + 10)^-exponent; 0 gives uniform items.
  double popularity_exponent = 0.8;
  // Empty: the MovieLens-100k rating histogram when K = 5, uniform otherwise.
  std::vector<double> class_shares;
  std::uint64_t seed = 0;

  void validate() const;
};

InteractionDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace rgbt
