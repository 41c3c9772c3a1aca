#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rgbt/error.hpp"
#include "rgbt/evaluation.hpp"
#include "rgbt/experiment.hpp"
#include "rgbt/text_io.hpp"

namespace fs = std::filesystem;
using namespace rgbt;

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig c;
  if (!g.config_path.empty()) {
    std::string text;
    try {
      text = text::read_file(g.config_path);
    } catch (const Error& e) {
      throw ConfigError("--config", e.what());
    }
    c = parse_config(text);
  }
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set", "expected key=value, got '" + kv + "'");
    set_config_value(c, text::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  if (g.seed) c.seeds = {*g.seed};
  if (!g.out.empty()) c.out = g.out;
  validate_config(c);
  return c;
}

DatasetSplits load_splits(const ExperimentConfig& c, std::uint64_t seed) {
  if (!c.data.path.empty() && c.data.format == DataFormat::kDump)
    return parse_dump(text::read_file(c.data.path), c.data.classes);
  SplitSpec spec = c.data.split;
  spec.seed = seed;
  return split_dataset(load_dataset(c.data), spec);
}

int cmd_ingest(const ExperimentConfig& c) {
  const auto splits = load_splits(c, c.seeds.front());
  fs::create_directories(c.out);
  const auto path = (fs::path(c.out) / "dataset.tsv").string();
  text::write_file(path, dump_splits(splits));
  std::cout << "train=" << splits.train.size() << " validation=" << splits.validation.size()
            << " test=" << splits.test.size() << " users=" << splits.train.num_users()
            << " items=" << splits.train.num_items() << " -> " << path << '\n';
  return 0;
}

int cmd_inject(const ExperimentConfig& c, const std::string& input) {
  if (!c.noise.kind) throw ConfigError("noise.kind", "inject needs symmetric or pairflip");
  const std::uint64_t seed = c.seeds.front();
  DatasetSplits splits = input.empty() ? load_splits(c, seed) : parse_dump(text::read_file(input), c.data.classes);
  const auto t = noise_matrix({*c.noise.kind, c.noise.eta, c.data.classes, seed});
  std::vector<int> labels;
  for (const auto& r : splits.train.records) labels.push_back(r.label);
  for (const auto& r : splits.validation.records) labels.push_back(r.label);
  const auto noisy = inject_noise(labels, t, seed);
  std::size_t n = 0, flipped = 0;
  for (auto* ds : {&splits.train, &splits.validation})
    for (auto& r : ds->records) {
      flipped += noisy[n] != r.label;
      r.label = noisy[n++];
    }
  fs::create_directories(c.out);
  text::write_file((fs::path(c.out) / "noisy.tsv").string(), dump_splits(splits));
  text::write_file((fs::path(c.out) / "transition.txt").string(), serialize_matrix(t));
  std::cout << "flipped " << flipped << " of " << labels.size() << " labels\n";
  return 0;
}

void print_metrics(const std::vector<MetricRow>& rows) { std::cout << metrics_table(rows); }

int cmd_train(const ExperimentConfig& c, bool quiet) {
  const auto report = run_experiment(c, quiet ? nullptr : &std::cerr);
  std::cout << "config_hash=" << hash_hex(report.config_hash) << '\n';
  for (const auto& v : report.variants) {
    std::cout << "[" << variant_name(v.variant) << "]\n";
    print_metrics(v.metrics);
  }
  return 0;
}

int cmd_eval(const ExperimentConfig& c, const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint", "a checkpoint path is required");
  ModelBundle model;
  try {
    model = parse_checkpoint(text::read_file(checkpoint));
  } catch (const ParseError& e) {
    throw ConfigError("--checkpoint", e.what());
  }
  InteractionDataset ds;
  if (c.data.path.empty() || c.data.format == DataFormat::kRaw) ds = load_dataset(c.data);
  const auto data = prepare_data(c, ds, c.seeds.front());
  if (model.classifier.embeddings.users < data.train.num_users() ||
      model.classifier.embeddings.items < data.train.num_items())
    throw ConfigError("--checkpoint", "checkpoint does not cover the dataset's users and items");
  const auto rows = evaluate_model(c, model.classifier, &model.transition, data);
  fs::create_directories(c.out);
  text::write_file((fs::path(c.out) / "metrics.csv").string(), metrics_table(rows));
  print_metrics(rows);
  return 0;
}

int cmd_sweep(const ExperimentConfig& c, const std::string& axis_name, const std::string& values_text, bool quiet) {
  const auto axis = parse_sweep_axis(axis_name);
  std::vector<double> values;
  for (auto part : text::split(values_text, ',')) {
    part = text::trim(part);
    if (part.empty()) continue;
    double v = 0.0;
    if (!text::parse_double(part, v)) throw ConfigError("--values", "not a number: '" + std::string(part) + "'");
    values.push_back(v);
  }
  const auto rows = emit_sweep(c, axis, values, quiet ? nullptr : &std::cerr);
  std::cout << sweep_table(axis, rows, c.ks);
  return 0;
}

int cmd_variance(const ExperimentConfig& c, double p, double eta, int trials, int draws) {
  if (trials < 2) throw ConfigError("--trials", "must be >= 2");
  if (draws < 1) throw ConfigError("--draws", "must be >= 1");
  VarianceReport rep;
  try {
    rep = variance_comparison({p, eta}, trials, draws, c.seeds.front());
  } catch (const DomainError& e) {
    throw ConfigError("--p/--eta", e.what());
  }
  const double pv = variance_test_p_value(rep);
  std::string out = "p,eta,trials,draws,mean_bltm,mean_cltm,var_bltm,var_cltm,ratio,p_value\n";
  out += text::format_double(p) + ',' + text::format_double(eta) + ',' + std::to_string(trials) + ',' +
         std::to_string(draws) + ',' + text::format_double(rep.mean_bltm) + ',' + text::format_double(rep.mean_cltm) +
         ',' + text::format_double(rep.var_bltm) + ',' + text::format_double(rep.var_cltm) + ',' +
         text::format_double(rep.ratio) + ',' + text::format_double(pv) + '\n';
  fs::create_directories(c.out);
  text::write_file((fs::path(c.out) / "variance.csv").string(), out);
  std::cout << out;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rgbt: transition-corrected recommendation from noisy labels"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "run a single seed (overrides run.seeds)");
  app.add_option("--out", g.out, "output directory (overrides run.out)");
  app.add_option("--set", g.overrides, "override a config key: key=value")->allow_extra_args(false);
  app.add_flag("-q,--quiet", g.quiet, "no per-epoch progress on stderr");

  auto* ingest = app.add_subcommand("ingest", "parse and split a dataset into a canonical dump");
  auto* inject = app.add_subcommand("inject", "corrupt train/validation labels of a dump");
  std::string input;
  inject->add_option("--input", input, "dataset dump (default: data from the config)");
  auto* train = app.add_subcommand("train", "train every configured variant and seed");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "checkpoint.txt written by train")->required();
  auto* sweep = app.add_subcommand("sweep", "train over a grid of one parameter");
  std::string axis, values;
  sweep->add_option("--axis", axis, "lambda, rho or noise_rate")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  auto* variance = app.add_subcommand("variance", "Monte Carlo variance comparison");
  double p = 0.5, eta = 0.2;
  int trials = 2000, draws = 500;
  variance->add_option("--p", p, "clean posterior P(Y = 2 | x)");
  variance->add_option("--eta", eta, "flip rate");
  variance->add_option("--trials", trials, "number of trials");
  variance->add_option("--draws", draws, "labels per trial");
  for (auto* sub : {ingest, inject, train, eval, sweep, variance}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    const auto c = load_config(g);
    if (*ingest) return cmd_ingest(c);
    if (*inject) return cmd_inject(c, input);
    if (*train) return cmd_train(c, g.quiet);
    if (*eval) return cmd_eval(c, checkpoint);
    if (*sweep) return cmd_sweep(c, axis, values, g.quiet);
    if (*variance) return cmd_variance(c, p, eta, trials, draws);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
