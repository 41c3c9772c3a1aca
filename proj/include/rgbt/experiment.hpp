#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgbt/ingest.hpp"
#include "rgbt/noise.hpp"
#include "rgbt/synthetic.hpp"
#include "rgbt/training.hpp"

namespace rgbt {

enum class DataFormat { kRaw, kDump };

struct DataConfig {
  std::string path;  // empty: generate synthetic data
  DataFormat format = DataFormat::kRaw;
  std::string columns = "user,item,label,timestamp";
  char delimiter = '\t';
  bool header = false;
  int classes = 5;
  SyntheticSpec synthetic;
  SplitSpec split;  // the seed comes from the run seed
  TestFilter filter{TestFilter::Kind::kRatingEquals, 5.0};
};

struct NoiseConfig {
  std::optional<NoiseKind> kind;  // nullopt: labels are used as read
  double eta = 0.2;
  // Ground truth for labels that were corrupted outside the run.
  std::string truth_path;
};

struct ExperimentConfig {
  DataConfig data;
  NoiseConfig noise;
  TrainConfig train;
  std::vector<Variant> variants{Variant::kFull};
  std::vector<int> ks{5, 10, 20, 50};
  std::vector<std::uint64_t> seeds{0};
  std::string out = "out";
};

// "key = value" lines with dotted keys; '#' starts a comment. Unknown keys
// and bad values raise ConfigError naming the key.
ExperimentConfig parse_config(std::string_view text);
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
void validate_config(const ExperimentConfig& config);

// Sorted "key=value" lines of every field that can change results.
std::string canonical_config(const ExperimentConfig& config);
// FNV-1a over canonical_config.
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hash_hex(std::uint64_t hash);

struct MetricRow {
  std::string metric;
  std::optional<int> k;
  double value = 0.0;
  double stddev = 0.0;
};

std::string metrics_table(const std::vector<MetricRow>& rows);

struct SeedOutcome {
  std::uint64_t seed = 0;
  Variant variant = Variant::kFull;
  TrainResult result;
  std::vector<MetricRow> metrics;
  std::optional<double> l1_error;
};

struct VariantSummary {
  Variant variant = Variant::kFull;
  std::vector<SeedOutcome> seeds;
  std::vector<MetricRow> metrics;  // mean and std across seeds
};

struct RunReport {
  std::uint64_t config_hash = 0;
  std::vector<VariantSummary> variants;

  const VariantSummary& variant(Variant v) const;
  // Aggregate value of a metric, nullopt when absent.
  std::optional<double> metric(Variant v, std::string_view name, std::optional<int> k = {}) const;
};

// Loaded once per experiment and shared by every seed.
InteractionDataset load_dataset(const DataConfig& data);

// Splits (or reads the dump's split column) and applies the configured noise
// to train and validation labels. Test labels stay clean.
struct PreparedData {
  InteractionDataset train;
  InteractionDataset validation;
  InteractionDataset test;           // clean labels, unfiltered
  InteractionDataset test_relevant;  // after the test filter
  std::optional<TransitionMatrix> truth;
};
PreparedData prepare_data(const ExperimentConfig& config, const InteractionDataset& ds,
                          std::uint64_t seed);

std::vector<MetricRow> evaluate_model(const ExperimentConfig& config, const Classifier& model,
                                      const TransitionNet* theta, const PreparedData& data);

// Runs every (seed, variant) pair and writes under config.out:
//   report.txt, config.txt
//   <variant>/metrics.csv, <variant>/matrix_error.csv
//   <variant>/seed_<s>/{history,metrics,matrix_error,utilization}.csv,
//   gmm.txt, checkpoint.txt, distilled.tsv
// Progress goes to `log` when given.
RunReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

enum class SweepAxis { kLambda, kRho, kNoiseRate };
SweepAxis parse_sweep_axis(std::string_view name);
std::string_view sweep_axis_name(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  Variant variant = Variant::kFull;
  std::vector<MetricRow> metrics;
};

// One run_experiment per value under config.out/<axis>_<index>/, plus
// config.out/sweep_<axis>.csv with one row per (value, variant).
std::vector<SweepRow> emit_sweep(const ExperimentConfig& config, SweepAxis axis,
                                 const std::vector<double>& values, std::ostream* log = nullptr);
std::string sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows, const std::vector<int>& ks);

}  // namespace rgbt
