#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rgbt {

// Bijection between external identifiers and dense indices 0..size-1,
// assigned in first-appearance order.
class IndexMap {
 public:
  std::size_t intern(std::string_view external);
  std::optional<std::size_t> find(std::string_view external) const;
  const std::string& external_of(std::size_t index) const;
  std::size_t size() const { return externals_.size(); }

 private:
  std::vector<std::string> externals_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  int label = 0;  // 1..K
  std::optional<long long> timestamp;
  std::optional<double> aux;
  // Dense indices resolved against the owning dataset's maps.
  std::size_t user = 0;
  std::size_t item = 0;
};

struct InteractionDataset {
  std::vector<InteractionRecord> records;
  IndexMap users;
  IndexMap items;
  int num_classes = 0;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }
  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

enum class Column { kUser, kItem, kLabel, kTimestamp, kAux, kSkip };

struct Schema {
  char delimiter = '\t';
  std::vector<Column> columns{Column::kUser, Column::kItem, Column::kLabel,
                              Column::kTimestamp};
  bool has_header = false;

  // "user,item,label,timestamp"; recognised names are user, item, label,
  // timestamp, aux and skip.
  static Schema from_names(std::string_view names, char delimiter);
};

struct SplitSpec {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct DatasetSplits {
  InteractionDataset train;
  InteractionDataset validation;
  InteractionDataset test;
};

struct TestFilter {
  enum class Kind { kNone, kRatingEquals, kRatingGreaterThan, kAuxAtLeast };
  Kind kind = Kind::kNone;
  double threshold = 0.0;

  bool accepts(const InteractionRecord& r) const;
};

// Throws ParseError (with line number) on malformed lines and DomainError on
// labels outside 1..K. Duplicate (user, item) pairs keep the last occurrence.
InteractionDataset parse_interactions(std::string_view raw, const Schema& schema,
                                      int num_classes);

// Uniform shuffle by seed, then consecutive slices of round(n * ratio).
// All three outputs share the input's index maps.
DatasetSplits split_dataset(const InteractionDataset& ds, const SplitSpec& spec);

InteractionDataset filter_test_set(const InteractionDataset& test_raw,
                                   const TestFilter& filter);

// Builds a dataset holding `records` with the index maps of `like`.
InteractionDataset with_records(const InteractionDataset& like,
                                std::vector<InteractionRecord> records);

// Canonical dump: header "user\titem\tlabel\tsplit", one record per line.
std::string dump_splits(const DatasetSplits& splits);
DatasetSplits parse_dump(std::string_view dump, int num_classes);

TestFilter::Kind parse_filter_kind(std::string_view name);
std::string_view filter_kind_name(TestFilter::Kind kind);

}  // namespace rgbt
