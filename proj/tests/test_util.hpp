#pragma once

#include <span>
#include <vector>

#include "rgbt/backbone.hpp"
#include "rgbt/ingest.hpp"

#include <array>
#include <string>

namespace rgbt::fixtures {

template <class Params>
std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

template <class Params>
void assign(Params& p, std::span<const double> values) {
  std::size_t at = 0;
  for (auto& t : p.tensors())
    for (auto& v : t.data) v = values[at++];
}

// Dataset from (user, item, label) triples with dense ids "u<n>" / "i<n>".
inline InteractionDataset make_dataset(const std::vector<std::array<int, 3>>& rows, int classes) {
  InteractionDataset ds;
  ds.num_classes = classes;
  for (const auto& [u, i, y] : rows) {
    InteractionRecord r;
    r.user_id = "u" + std::to_string(u);
    r.item_id = "i" + std::to_string(i);
    r.label = y;
    r.user = ds.users.intern(r.user_id);
    r.item = ds.items.intern(r.item_id);
    ds.records.push_back(r);
  }
  return ds;
}

}  // namespace rgbt::fixtures
