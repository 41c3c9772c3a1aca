#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rgbt/error.hpp"
#include "rgbt/experiment.hpp"

using namespace rgbt;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToy = R"(
# small synthetic run
data.synthetic.users = 40
data.synthetic.items = 50
data.synthetic.interactions = 1200
data.synthetic.factors = 3
data.classes = 3
test_filter.kind = none
noise.kind = symmetric
noise.eta = 0.2
model.dim = 4
train.epochs = 4
train.batch_size = 64
train.patience = 0
train.refresh_interval = 2
train.lr_w = 0.01
train.lr_theta = 0.01
train.variants = full, normal
eval.ks = 5, 10
run.seeds = 0, 1
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rgbt_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  const auto c = parse_config(kToy);
  EXPECT_EQ(c.data.synthetic.users, 40u);
  EXPECT_EQ(c.data.classes, 3);
  ASSERT_TRUE(c.noise.kind.has_value());
  EXPECT_EQ(*c.noise.kind, NoiseKind::kSymmetric);
  EXPECT_EQ(c.variants.size(), 2u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(c.ks, (std::vector<int>{5, 10}));
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(field_of("train.bogus = 1"), "train.bogus");
  EXPECT_EQ(field_of("train.lambda = abc"), "train.lambda");
  EXPECT_EQ(field_of("train.lambda = -1"), "train.lambda");
  EXPECT_EQ(field_of("noise.kind = diagonal"), "noise.kind");
  EXPECT_EQ(field_of("noise.kind = pairflip\nnoise.eta = 1.5"), "noise.eta");
  EXPECT_EQ(field_of("train.variants = full, fancy"), "train.variants");
  EXPECT_EQ(field_of("model.transition_prior = 1"), "model.transition_prior");
  EXPECT_EQ(field_of("just a line"), "line 1");
  EXPECT_EQ(field_of("run.seeds = "), "run.seeds");
}

TEST(Config, HashTracksSemanticFieldsOnly) {
  const auto base = parse_config(kToy);
  const auto h = config_hash(base);

  auto c = base;
  c.out = "elsewhere";
  EXPECT_EQ(config_hash(c), h);

  c = base;
  c.train.loss.lambda = 2.0;
  EXPECT_NE(config_hash(c), h);

  c = base;
  set_config_value(c, "train.lr_theta", "0.001");
  EXPECT_NE(config_hash(c), h);

  c = base;
  c.noise.kind.reset();
  const auto clean = config_hash(c);
  c.noise.eta = 0.4;  // inert without injected noise
  EXPECT_EQ(config_hash(c), clean);

  EXPECT_EQ(hash_hex(0x1f).size(), 16u);
  EXPECT_EQ(hash_hex(0x1f), "000000000000001f");
}

TEST(Config, CanonicalTextIsSortedAndReparses) {
  const auto c = parse_config(kToy);
  const auto text = canonical_config(c);
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  EXPECT_TRUE(std::is_sorted(lines.begin(), lines.end()));
  EXPECT_EQ(config_hash(parse_config(text)), config_hash(c));
}

TEST(Experiment, PreparedTestLabelsStayClean) {
  auto c = parse_config(kToy);
  c.noise.eta = 0.4;
  const auto ds = load_dataset(c.data);
  const auto data = prepare_data(c, ds, 0);
  auto clean_cfg = c;
  clean_cfg.noise.kind.reset();
  const auto clean = prepare_data(clean_cfg, ds, 0);
  ASSERT_TRUE(data.truth.has_value());
  EXPECT_FALSE(clean.truth.has_value());
  ASSERT_EQ(data.train.size(), clean.train.size());
  ASSERT_EQ(data.test.size(), clean.test.size());
  std::size_t flipped = 0;
  for (std::size_t n = 0; n < data.train.size(); ++n) {
    EXPECT_EQ(data.train.records[n].user_id, clean.train.records[n].user_id);
    flipped += data.train.records[n].label != clean.train.records[n].label;
  }
  for (std::size_t n = 0; n < data.test.size(); ++n) EXPECT_EQ(data.test.records[n].label, clean.test.records[n].label);
  const double rate = static_cast<double>(flipped) / data.train.size();
  EXPECT_NEAR(rate, 0.4, 0.06);
}

TEST(Experiment, ToyRunWritesEveryArtifact) {
  auto c = parse_config(kToy);
  const auto root = scratch("toy");
  c.out = root.string();
  const auto report = run_experiment(c);
  EXPECT_EQ(report.config_hash, config_hash(c));
  ASSERT_EQ(report.variants.size(), 2u);
  for (const auto& v : report.variants) EXPECT_EQ(v.seeds.size(), 2u);
  EXPECT_TRUE(report.metric(Variant::kFull, "ndcg", 10).has_value());
  EXPECT_TRUE(report.metric(Variant::kNormal, "accuracy").has_value());
  EXPECT_FALSE(report.metric(Variant::kFull, "ndcg", 20).has_value());

  for (const char* f : {"report.txt", "config.txt"}) EXPECT_TRUE(fs::exists(root / f)) << f;
  for (const char* v : {"full", "normal"}) {
    EXPECT_TRUE(fs::exists(root / v / "metrics.csv")) << v;
    for (const char* s : {"seed_0", "seed_1"})
      for (const char* f : {"history.csv", "metrics.csv", "matrix_error.csv", "utilization.csv", "gmm.txt",
                            "checkpoint.txt", "distilled.tsv"})
        EXPECT_TRUE(fs::exists(root / v / s / f)) << v << '/' << s << '/' << f;
  }
  fs::remove_all(root);
}

TEST(Experiment, RerunIsByteIdentical) {
  auto c = parse_config(kToy);
  c.variants = {Variant::kFull};
  c.seeds = {5};
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  c.out = a.string();
  run_experiment(c);
  c.out = b.string();
  run_experiment(c);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, SweepHasOneRowPerValueAndVariant) {
  auto c = parse_config(kToy);
  c.seeds = {0};
  c.train.loss.epochs = 2;
  const auto root = scratch("sweep");
  c.out = root.string();
  const auto rows = emit_sweep(c, SweepAxis::kNoiseRate, {0.1, 0.3});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(rows[0].value, 0.1);
  EXPECT_DOUBLE_EQ(rows[3].value, 0.3);
  const auto table = slurp(root / "sweep_noise_rate.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
  EXPECT_EQ(table.rfind("noise_rate,variant,recall@5,recall@10,ndcg@5,ndcg@10,", 0), 0u);
  EXPECT_TRUE(fs::exists(root / "noise_rate_1" / "report.txt"));
  fs::remove_all(root);

  c.noise.kind.reset();
  EXPECT_THROW(emit_sweep(c, SweepAxis::kNoiseRate, {0.1}), ConfigError);
  EXPECT_EQ(parse_sweep_axis("rho"), SweepAxis::kRho);
  EXPECT_THROW(parse_sweep_axis("tau"), ConfigError);
}
