#include <gtest/gtest.h>

#include <map>
#include <set>
#include <utility>

#include "rgbt/error.hpp"
#include "rgbt/synthetic.hpp"

using namespace rgbt;

namespace {

SyntheticSpec spec(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.users = 200;
  s.items = 300;
  s.interactions = 20000;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Synthetic, ClassSharesFollowHistogram) {
  const auto ds = generate_synthetic(spec());
  ASSERT_EQ(ds.records.size(), 20000u);
  std::map<int, double> count;
  for (const auto& r : ds.records) count[r.label] += 1.0;
  const double want[] = {0.0611, 0.1137, 0.2715, 0.3417, 0.2120};
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(count[k] / 20000.0, want[k - 1], 1.0 / 20000.0 + 1e-12) << k;
}

TEST(Synthetic, CustomSharesAndUniformDefault) {
  auto s = spec();
  s.classes = 3;
  auto ds = generate_synthetic(s);
  std::map<int, int> count;
  for (const auto& r : ds.records) count[r.label]++;
  for (int k = 1; k <= 3; ++k) EXPECT_NEAR(count[k], 20000.0 / 3.0, 1.0);

  s.class_shares = {0.5, 0.25, 0.25};
  ds = generate_synthetic(s);
  count.clear();
  for (const auto& r : ds.records) count[r.label]++;
  EXPECT_NEAR(count[1], 10000, 1);
  EXPECT_NEAR(count[2], 5000, 1);
}

TEST(Synthetic, PairsAreDistinct) {
  const auto ds = generate_synthetic(spec());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : ds.records) EXPECT_TRUE(seen.insert({r.user_id, r.item_id}).second);
  EXPECT_LE(ds.users.size(), 200u);
  EXPECT_LE(ds.items.size(), 300u);
}

TEST(Synthetic, DenseRequestTerminates) {
  SyntheticSpec s;
  s.users = 10;
  s.items = 10;
  s.interactions = 100;
  const auto ds = generate_synthetic(s);
  EXPECT_EQ(ds.records.size(), 100u);
}

TEST(Synthetic, SeedDeterminesOutput) {
  const auto a = generate_synthetic(spec(7));
  const auto b = generate_synthetic(spec(7));
  const auto c = generate_synthetic(spec(8));
  ASSERT_EQ(a.records.size(), b.records.size());
  bool differs = false;
  for (std::size_t n = 0; n < a.records.size(); ++n) {
    EXPECT_EQ(a.records[n].user_id, b.records[n].user_id);
    EXPECT_EQ(a.records[n].item_id, b.records[n].item_id);
    EXPECT_EQ(a.records[n].label, b.records[n].label);
    differs |= a.records[n].item_id != c.records[n].item_id || a.records[n].label != c.records[n].label;
  }
  EXPECT_TRUE(differs);
}

TEST(Synthetic, ValidationRejectsBadSpecs) {
  auto s = spec();
  s.interactions = s.users * s.items + 1;
  EXPECT_THROW(generate_synthetic(s), DomainError);
  s = spec();
  s.classes = 1;
  EXPECT_THROW(generate_synthetic(s), DomainError);
  s = spec();
  s.class_shares = {0.5, 0.5};
  EXPECT_THROW(generate_synthetic(s), DimensionError);
  s = spec();
  s.class_shares = {0.2, 0.2, 0.2, 0.2, 0.3};
  EXPECT_THROW(generate_synthetic(s), DomainError);
  s = spec();
  s.jitter = -1;
  EXPECT_THROW(generate_synthetic(s), DomainError);
}
