#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rgbt {

// K x K row-stochastic matrix, row-major. Row i is the distribution of the
// observed label given (true or Bayes) label i, with 0-based indices.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(int classes);  // zero-filled
  TransitionMatrix(int classes, std::vector<double> entries);

  static TransitionMatrix identity(int classes);
  static TransitionMatrix uniform(int classes);

  int classes() const { return classes_; }
  double operator()(int row, int col) const { return entries_[index(row, col)]; }
  double& operator()(int row, int col) { return entries_[index(row, col)]; }
  std::span<const double> row(int r) const {
    return {entries_.data() + static_cast<std::size_t>(r) * classes_,
            static_cast<std::size_t>(classes_)};
  }
  const std::vector<double>& entries() const { return entries_; }

  bool is_row_stochastic(double tol = 1e-9) const;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * classes_ + col;
  }
  int classes_ = 0;
  std::vector<double> entries_;
};

enum class NoiseKind { kSymmetric, kPairflip };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kSymmetric;
  double eta = 0.0;
  int classes = 5;
  std::uint64_t seed = 0;
};

// Diagonal 1 - eta, every off-diagonal eta / (K - 1).
TransitionMatrix symmetric_matrix(int classes, double eta);

// Label y flips to y - 1 with probability eta; the lowest class wraps to the
// highest so every row carries the same flip mass.
TransitionMatrix pairflip_matrix(int classes, double eta);

TransitionMatrix noise_matrix(const NoiseSpec& spec);

// Resamples each 1-based label independently from row T[label - 1].
std::vector<int> inject_noise(std::span<const int> labels, const TransitionMatrix& t,
                              std::uint64_t seed);

// Mean over instances of sum_ij |estimate_ij - truth_ij|.
double l1_matrix_error(std::span<const TransitionMatrix> estimates,
                       std::span<const TransitionMatrix> truths);
double l1_distance(const TransitionMatrix& a, const TransitionMatrix& b);

// One row per line, tab-delimited, 17 significant digits.
std::string serialize_matrix(const TransitionMatrix& t);
TransitionMatrix parse_matrix(std::string_view text);

NoiseKind parse_noise_kind(std::string_view name);
std::string_view noise_kind_name(NoiseKind kind);

}  // namespace rgbt
