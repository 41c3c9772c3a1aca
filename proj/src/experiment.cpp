#include "rgbt/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "rgbt/error.hpp"
#include "rgbt/evaluation.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

namespace fs = std::filesystem;

std::string metrics_table(const std::vector<MetricRow>& rows) {
  std::string out = "metric,K,value,std\n";
  for (const auto& r : rows)
    out += r.metric + ',' + (r.k ? std::to_string(*r.k) : "") + ',' + text::format_double(r.value) + ',' +
           text::format_double(r.stddev) + '\n';
  return out;
}

const VariantSummary& RunReport::variant(Variant v) const {
  for (const auto& s : variants)
    if (s.variant == v) return s;
  throw DomainError("variant '" + std::string(variant_name(v)) + "' was not run");
}

std::optional<double> RunReport::metric(Variant v, std::string_view name, std::optional<int> k) const {
  for (const auto& r : variant(v).metrics)
    if (r.metric == name && r.k == k) return r.value;
  return std::nullopt;
}

InteractionDataset load_dataset(const DataConfig& data) {
  if (data.path.empty()) {
    SyntheticSpec spec = data.synthetic;
    spec.classes = data.classes;
    return generate_synthetic(spec);
  }
  if (data.format == DataFormat::kDump) throw DomainError("dump files are read by prepare_data");
  Schema schema = Schema::from_names(data.columns, data.delimiter);
  schema.has_header = data.header;
  return parse_interactions(text::read_file(data.path), schema, data.classes);
}

PreparedData prepare_data(const ExperimentConfig& config, const InteractionDataset& ds, std::uint64_t seed) {
  const auto& d = config.data;
  DatasetSplits splits;
  if (!d.path.empty() && d.format == DataFormat::kDump) {
    splits = parse_dump(text::read_file(d.path), d.classes);
  } else {
    SplitSpec spec = d.split;
    spec.seed = seed;
    splits = split_dataset(ds, spec);
  }

  PreparedData out;
  if (config.noise.kind) {
    out.truth = noise_matrix({*config.noise.kind, config.noise.eta, d.classes, seed});
    std::vector<int> labels;
    labels.reserve(splits.train.size() + splits.validation.size());
    for (const auto& r : splits.train.records) labels.push_back(r.label);
    for (const auto& r : splits.validation.records) labels.push_back(r.label);
    const auto noisy = inject_noise(labels, *out.truth, seed);
    std::size_t n = 0;
    for (auto& r : splits.train.records) r.label = noisy[n++];
    for (auto& r : splits.validation.records) r.label = noisy[n++];
  } else if (!config.noise.truth_path.empty()) {
    out.truth = parse_matrix(text::read_file(config.noise.truth_path));
    if (out.truth->classes() != d.classes) throw ConfigError("noise.truth_path", "matrix size does not match K");
  }
  out.test_relevant = filter_test_set(splits.test, d.filter);
  out.train = std::move(splits.train);
  out.validation = std::move(splits.validation);
  out.test = std::move(splits.test);
  return out;
}

namespace {

std::vector<kernels::Pair> pairs_of(const InteractionDataset& ds) {
  std::vector<kernels::Pair> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.emplace_back(r.user, r.item);
  return out;
}

std::string utilization_table(const std::vector<UtilizationPoint>& points) {
  std::string out = "refresh,epoch,rho,tau,distilled,utilization,effective_sample_size\n";
  for (const auto& p : points)
    out += std::to_string(p.refresh) + ',' + std::to_string(p.epoch) + ',' + text::format_double(p.rho) + ',' +
           text::format_double(p.tau) + ',' + std::to_string(p.distilled) + ',' + text::format_double(p.utilization) +
           ',' + text::format_double(p.effective_sample_size) + '\n';
  return out;
}

std::string noise_label(const ExperimentConfig& c) {
  return c.noise.kind ? std::string(noise_kind_name(*c.noise.kind)) : std::string("external");
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<MetricRow> aggregate(const std::vector<SeedOutcome>& seeds) {
  std::vector<MetricRow> out;
  if (seeds.empty()) return out;
  for (std::size_t m = 0; m < seeds.front().metrics.size(); ++m) {
    std::vector<double> xs;
    for (const auto& s : seeds) xs.push_back(s.metrics[m].value);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    out.push_back({seeds.front().metrics[m].metric, seeds.front().metrics[m].k, mean, sample_std(xs, mean)});
  }
  return out;
}

}  // namespace

std::vector<MetricRow> evaluate_model(const ExperimentConfig& config, const Classifier& model,
                                      const TransitionNet* theta, const PreparedData& data) {
  const auto backend = config.train.backend;
  std::vector<MetricRow> rows;
  const auto rep = evaluate_ranking(model, data.train, data.test_relevant, config.ks, config.train.score_kind, backend);
  for (std::size_t j = 0; j < config.ks.size(); ++j) rows.push_back({"recall", config.ks[j], rep.recall[j], 0.0});
  for (std::size_t j = 0; j < config.ks.size(); ++j) rows.push_back({"ndcg", config.ks[j], rep.ndcg[j], 0.0});
  if (!data.test.empty()) {
    std::vector<int> labels;
    for (const auto& r : data.test.records) labels.push_back(r.label);
    rows.push_back({"accuracy", std::nullopt, classification_accuracy(model, pairs_of(data.test), labels, backend), 0.0});
  }
  if (data.truth && theta && !data.test.empty()) {
    const auto pairs = pairs_of(data.test);
    const std::vector<TransitionMatrix> truths(pairs.size(), *data.truth);
    rows.push_back({"l1_error", std::nullopt, evaluate_matrix(*theta, model.embeddings, pairs, truths, backend), 0.0});
    rows.push_back({"l1_uniform", std::nullopt, l1_distance(TransitionMatrix::uniform(data.truth->classes()), *data.truth), 0.0});
  }
  return rows;
}

RunReport run_experiment(const ExperimentConfig& config, std::ostream* log) {
  validate_config(config);
  RunReport report;
  report.config_hash = config_hash(config);
  const fs::path root(config.out);
  fs::create_directories(root);
  text::write_file((root / "config.txt").string(), canonical_config(config));

  InteractionDataset ds;
  if (config.data.path.empty() || config.data.format == DataFormat::kRaw) ds = load_dataset(config.data);

  for (Variant v : config.variants) report.variants.push_back({v, {}, {}});

  for (std::uint64_t seed : config.seeds) {
    const PreparedData data = prepare_data(config, ds, seed);
    if (data.train.empty()) throw DomainError("training split is empty");
    const auto test_pairs = pairs_of(data.test);
    std::vector<TransitionMatrix> truths;
    if (data.truth) truths.assign(test_pairs.size(), *data.truth);

    for (auto& summary : report.variants) {
      const Variant v = summary.variant;
      const fs::path dir = root / std::string(variant_name(v)) / ("seed_" + std::to_string(seed));
      fs::create_directories(dir);
      TrainConfig tc = config.train;
      tc.loss.variant = v;

      std::ofstream history((dir / "history.csv").string(), std::ios::binary | std::ios::trunc);
      if (!history) throw Error("cannot write " + (dir / "history.csv").string());
      history << history_header();
      TrainData td{&data.train, &data.validation, test_pairs, truths};
      SeedOutcome outcome;
      outcome.seed = seed;
      outcome.variant = v;
      outcome.result = train_rgbt(td, tc, seed, [&](const EpochRecord& r) {
        history << history_line(r);
        history.flush();
        if (log)
          *log << variant_name(v) << " seed=" << seed << " epoch=" << r.epoch
               << " loss=" << text::format_double(r.loss_rgbt) << " ndcg10=" << text::format_double(r.val_ndcg10)
               << '\n';
      });
      history.close();

      const auto& model = outcome.result.model;
      outcome.metrics = evaluate_model(config, model.classifier, &model.transition, data);
      for (const auto& r : outcome.metrics)
        if (r.metric == "l1_error") outcome.l1_error = r.value;

      text::write_file((dir / "metrics.csv").string(), metrics_table(outcome.metrics));
      std::string me = "noise,eta,instances,l1_error,uniform_l1\n";
      if (outcome.l1_error)
        me += noise_label(config) + ',' + text::format_double(config.noise.kind ? config.noise.eta : 0.0) + ',' +
              std::to_string(test_pairs.size()) + ',' + text::format_double(*outcome.l1_error) + ',' +
              text::format_double(l1_distance(TransitionMatrix::uniform(data.truth->classes()), *data.truth)) + '\n';
      text::write_file((dir / "matrix_error.csv").string(), me);
      text::write_file((dir / "utilization.csv").string(), utilization_table(outcome.result.utilization));
      text::write_file((dir / "gmm.txt").string(),
                       outcome.result.gmm ? serialize_gmm(*outcome.result.gmm, &outcome.result.scaler) : "none\n");
      text::write_file((dir / "checkpoint.txt").string(), serialize_checkpoint(model));
      text::write_file((dir / "distilled.tsv").string(), serialize_distilled(outcome.result.distilled, data.train));
      if (log) *log << variant_name(v) << " seed=" << seed << " done\n";
      summary.seeds.push_back(std::move(outcome));
    }
  }

  std::string report_text = "config_hash=" + hash_hex(report.config_hash) + '\n';
  for (auto& summary : report.variants) {
    summary.metrics = aggregate(summary.seeds);
    const fs::path dir = root / std::string(variant_name(summary.variant));
    text::write_file((dir / "metrics.csv").string(), metrics_table(summary.metrics));
    std::string me = "noise,eta,seeds,mean_l1,std_l1,uniform_l1\n";
    std::optional<double> mean_l1, std_l1, uniform_l1;
    for (const auto& r : summary.metrics) {
      if (r.metric == "l1_error") mean_l1 = r.value, std_l1 = r.stddev;
      if (r.metric == "l1_uniform") uniform_l1 = r.value;
    }
    if (mean_l1)
      me += noise_label(config) + ',' + text::format_double(config.noise.kind ? config.noise.eta : 0.0) + ',' +
            std::to_string(summary.seeds.size()) + ',' + text::format_double(*mean_l1) + ',' +
            text::format_double(*std_l1) + ',' + text::format_double(uniform_l1.value_or(0.0)) + '\n';
    text::write_file((dir / "matrix_error.csv").string(), me);
    report_text += "variant=" + std::string(variant_name(summary.variant)) + '\n';
  }
  report_text += "seeds=" + std::to_string(config.seeds.size()) + '\n';
  text::write_file((root / "report.txt").string(), report_text);
  return report;
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "lambda") return SweepAxis::kLambda;
  if (name == "rho") return SweepAxis::kRho;
  if (name == "noise_rate") return SweepAxis::kNoiseRate;
  throw ConfigError("sweep.axis", "expected lambda, rho or noise_rate");
}

std::string_view sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kLambda: return "lambda";
    case SweepAxis::kRho: return "rho";
    case SweepAxis::kNoiseRate: return "noise_rate";
  }
  return "lambda";
}

std::string sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows, const std::vector<int>& ks) {
  std::string out(sweep_axis_name(axis));
  out += ",variant";
  for (int k : ks) out += ",recall@" + std::to_string(k);
  for (int k : ks) out += ",ndcg@" + std::to_string(k);
  out += ",accuracy,l1_error,l1_std\n";
  for (const auto& row : rows) {
    out += text::format_double(row.value) + ',' + std::string(variant_name(row.variant));
    auto find = [&](std::string_view name, std::optional<int> k) -> const MetricRow* {
      for (const auto& m : row.metrics)
        if (m.metric == name && m.k == k) return &m;
      return nullptr;
    };
    for (const char* name : {"recall", "ndcg"})
      for (int k : ks) {
        const auto* m = find(name, k);
        out += ',' + (m ? text::format_double(m->value) : std::string());
      }
    const auto* acc = find("accuracy", std::nullopt);
    const auto* l1 = find("l1_error", std::nullopt);
    out += ',' + (acc ? text::format_double(acc->value) : std::string());
    out += ',' + (l1 ? text::format_double(l1->value) : std::string());
    out += ',' + (l1 ? text::format_double(l1->stddev) : std::string()) + '\n';
  }
  return out;
}

std::vector<SweepRow> emit_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<double>& values,
                                 std::ostream* log) {
  if (values.empty()) throw ConfigError("sweep.values", "at least one value is required");
  if (axis == SweepAxis::kNoiseRate && !config.noise.kind)
    throw ConfigError("noise.kind", "a noise_rate sweep needs an injected noise kind");
  std::vector<SweepRow> rows;
  for (std::size_t idx = 0; idx < values.size(); ++idx) {
    ExperimentConfig c = config;
    const double v = values[idx];
    switch (axis) {
      case SweepAxis::kLambda: c.train.loss.lambda = v; break;
      case SweepAxis::kRho:
        c.train.schedule.rho0 = v;
        c.train.schedule.rho_min = std::min(c.train.schedule.rho_min, v);
        break;
      case SweepAxis::kNoiseRate: c.noise.eta = v; break;
    }
    c.out = (fs::path(config.out) / (std::string(sweep_axis_name(axis)) + '_' + std::to_string(idx))).string();
    const auto report = run_experiment(c, log);
    for (const auto& s : report.variants) rows.push_back({v, s.variant, s.metrics});
  }
  fs::create_directories(config.out);
  text::write_file((fs::path(config.out) / ("sweep_" + std::string(sweep_axis_name(axis)) + ".csv")).string(),
                   sweep_table(axis, rows, config.ks));
  return rows;
}

}  // namespace rgbt
