#include "rgbt/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rgbt/error.hpp"
#include "rgbt/rng.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

std::size_t IndexMap::intern(std::string_view external) {
  auto it = index_.find(std::string(external));
  if (it != index_.end()) return it->second;
  const std::size_t idx = externals_.size();
  externals_.emplace_back(external);
  index_.emplace(externals_.back(), idx);
  return idx;
}

std::optional<std::size_t> IndexMap::find(std::string_view external) const {
  auto it = index_.find(std::string(external));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& IndexMap::external_of(std::size_t index) const {
  if (index >= externals_.size()) throw BoundsError("index " + std::to_string(index));
  return externals_[index];
}

Schema Schema::from_names(std::string_view names, char delimiter) {
  Schema schema;
  schema.delimiter = delimiter;
  schema.columns.clear();
  for (auto token : text::split(names, ',')) {
    token = text::trim(token);
    if (token == "user") schema.columns.push_back(Column::kUser);
    else if (token == "item") schema.columns.push_back(Column::kItem);
    else if (token == "label" || token == "rating") schema.columns.push_back(Column::kLabel);
    else if (token == "timestamp") schema.columns.push_back(Column::kTimestamp);
    else if (token == "aux") schema.columns.push_back(Column::kAux);
    else if (token == "skip") schema.columns.push_back(Column::kSkip);
    else throw ConfigError("data.columns", "unknown column '" + std::string(token) + "'");
  }
  auto count = [&](Column c) { return std::count(schema.columns.begin(), schema.columns.end(), c); };
  if (count(Column::kUser) != 1 || count(Column::kItem) != 1 || count(Column::kLabel) != 1)
    throw ConfigError("data.columns", "need exactly one user, item and label column");
  return schema;
}

bool TestFilter::accepts(const InteractionRecord& r) const {
  switch (kind) {
    case Kind::kNone: return true;
    case Kind::kRatingEquals: return static_cast<double>(r.label) == threshold;
    case Kind::kRatingGreaterThan: return static_cast<double>(r.label) > threshold;
    case Kind::kAuxAtLeast: return r.aux.has_value() && *r.aux >= threshold;
  }
  return false;
}

InteractionDataset parse_interactions(std::string_view raw, const Schema& schema,
                                      int num_classes) {
  if (num_classes < 2) throw DomainError("num_classes must be >= 2");
  InteractionDataset ds;
  ds.num_classes = num_classes;

  std::unordered_map<std::uint64_t, std::size_t> slot_of_pair;
  std::vector<InteractionRecord> records;
  std::vector<bool> alive;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_pending = schema.has_header;
  while (pos <= raw.size()) {
    std::size_t end = raw.find('\n', pos);
    if (end == std::string_view::npos) end = raw.size();
    std::string_view line = raw.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) {
      if (end == raw.size()) break;
      continue;
    }
    if (header_pending) {
      header_pending = false;
      continue;
    }

    const auto fields = text::split(line, schema.delimiter);
    InteractionRecord rec;
    bool have_user = false, have_item = false, have_label = false;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const Column col = schema.columns[c];
      if (c >= fields.size()) {
        if (col == Column::kUser || col == Column::kItem || col == Column::kLabel)
          throw ParseError(line_no, "expected at least " + std::to_string(c + 1) + " columns");
        continue;
      }
      const auto field = text::trim(fields[c]);
      switch (col) {
        case Column::kUser:
          if (field.empty()) throw ParseError(line_no, "empty user id");
          rec.user_id = std::string(field);
          have_user = true;
          break;
        case Column::kItem:
          if (field.empty()) throw ParseError(line_no, "empty item id");
          rec.item_id = std::string(field);
          have_item = true;
          break;
        case Column::kLabel: {
          long long v = 0;
          if (!text::parse_int(field, v)) throw ParseError(line_no, "label is not an integer");
          if (v < 1 || v > num_classes)
            throw DomainError("line " + std::to_string(line_no) + ": label " + std::to_string(v) +
                              " outside 1.." + std::to_string(num_classes));
          rec.label = static_cast<int>(v);
          have_label = true;
          break;
        }
        case Column::kTimestamp: {
          long long v = 0;
          if (!field.empty()) {
            if (!text::parse_int(field, v)) throw ParseError(line_no, "timestamp is not an integer");
            rec.timestamp = v;
          }
          break;
        }
        case Column::kAux: {
          double v = 0;
          if (!field.empty()) {
            if (!text::parse_double(field, v)) throw ParseError(line_no, "aux is not a number");
            rec.aux = v;
          }
          break;
        }
        case Column::kSkip:
          break;
      }
    }
    if (!have_user || !have_item || !have_label) throw ParseError(line_no, "missing column");

    rec.user = ds.users.intern(rec.user_id);
    rec.item = ds.items.intern(rec.item_id);
    const std::uint64_t key = (static_cast<std::uint64_t>(rec.user) << 32) | rec.item;
    auto it = slot_of_pair.find(key);
    if (it != slot_of_pair.end()) alive[it->second] = false;
    slot_of_pair[key] = records.size();
    records.push_back(std::move(rec));
    alive.push_back(true);
    if (end == raw.size()) break;
  }

  for (std::size_t i = 0; i < records.size(); ++i)
    if (alive[i]) ds.records.push_back(std::move(records[i]));
  return ds;
}

InteractionDataset with_records(const InteractionDataset& like,
                                std::vector<InteractionRecord> records) {
  InteractionDataset out;
  out.users = like.users;
  out.items = like.items;
  out.num_classes = like.num_classes;
  out.records = std::move(records);
  return out;
}

DatasetSplits split_dataset(const InteractionDataset& ds, const SplitSpec& spec) {
  if (ds.empty()) throw DomainError("cannot split an empty dataset");
  if (spec.train < 0 || spec.validation < 0 || spec.test < 0 ||
      std::abs(spec.train + spec.validation + spec.test - 1.0) > 1e-9)
    throw DomainError("split ratios must be non-negative and sum to 1");

  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(spec.seed, Stream::kSplit);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train));
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.validation));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(idx.begin(), idx.end());
    std::vector<InteractionRecord> recs;
    recs.reserve(idx.size());
    for (auto i : idx) recs.push_back(ds.records[i]);
    return with_records(ds, std::move(recs));
  };
  return {take(0, n_train), take(n_train, n_train + n_val), take(n_train + n_val, n)};
}

InteractionDataset filter_test_set(const InteractionDataset& test_raw, const TestFilter& filter) {
  std::vector<InteractionRecord> kept;
  for (const auto& r : test_raw.records)
    if (filter.accepts(r)) kept.push_back(r);
  return with_records(test_raw, std::move(kept));
}

std::string dump_splits(const DatasetSplits& splits) {
  std::string out = "user\titem\tlabel\tsplit\n";
  auto emit = [&](const InteractionDataset& ds, const char* name) {
    for (const auto& r : ds.records) {
      out += r.user_id;
      out += '\t';
      out += r.item_id;
      out += '\t';
      out += std::to_string(r.label);
      out += '\t';
      out += name;
      out += '\n';
    }
  };
  emit(splits.train, "train");
  emit(splits.validation, "validation");
  emit(splits.test, "test");
  return out;
}

DatasetSplits parse_dump(std::string_view dump, int num_classes) {
  Schema schema;
  schema.delimiter = '\t';
  schema.columns = {Column::kUser, Column::kItem, Column::kLabel, Column::kSkip};
  schema.has_header = true;
  InteractionDataset all = parse_interactions(dump, schema, num_classes);

  // Second pass for the split column; parse_interactions keeps line order.
  std::vector<int> split_of;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < dump.size()) {
    std::size_t end = dump.find('\n', pos);
    if (end == std::string_view::npos) end = dump.size();
    auto line = dump.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1 || text::trim(line).empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() < 4) throw ParseError(line_no, "missing split column");
    const auto name = text::trim(fields[3]);
    if (name == "train") split_of.push_back(0);
    else if (name == "validation") split_of.push_back(1);
    else if (name == "test") split_of.push_back(2);
    else throw ParseError(line_no, "unknown split '" + std::string(name) + "'");
  }
  if (split_of.size() != all.size())
    throw ParseError(line_no, "duplicate (user, item) pairs in dump");

  std::vector<InteractionRecord> parts[3];
  for (std::size_t i = 0; i < all.size(); ++i) parts[split_of[i]].push_back(all.records[i]);
  return {with_records(all, std::move(parts[0])), with_records(all, std::move(parts[1])),
          with_records(all, std::move(parts[2]))};
}

TestFilter::Kind parse_filter_kind(std::string_view name) {
  if (name == "none") return TestFilter::Kind::kNone;
  if (name == "rating-equals") return TestFilter::Kind::kRatingEquals;
  if (name == "rating-greater-than") return TestFilter::Kind::kRatingGreaterThan;
  if (name == "aux-at-least") return TestFilter::Kind::kAuxAtLeast;
  throw ConfigError("test_filter.kind", "unknown filter '" + std::string(name) + "'");
}

std::string_view filter_kind_name(TestFilter::Kind kind) {
  switch (kind) {
    case TestFilter::Kind::kNone: return "none";
    case TestFilter::Kind::kRatingEquals: return "rating-equals";
    case TestFilter::Kind::kRatingGreaterThan: return "rating-greater-than";
    case TestFilter::Kind::kAuxAtLeast: return "aux-at-least";
  }
  return "none";
}

}  // namespace rgbt
