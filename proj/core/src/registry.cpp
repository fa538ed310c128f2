#include "entlm/registry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "entlm/errors.hpp"

namespace entlm {

EntityRegistry::EntityRegistry(std::size_t d_embd) : d_embd_(d_embd) {
  if (d_embd == 0) throw ConfigError("entity registry width must be positive");
}

Tensor EntityRegistry::fetch_entity_matrix(const std::string& doc_id, std::span<const EntityRef> entity_ids) const {
  if (entity_ids.empty()) throw LengthError("fetch_entity_matrix: empty sequence");
  Tensor out = Tensor::ones({entity_ids.size(), d_embd_});
  auto values = out.data();
  for (std::size_t i = 0; i < entity_ids.size(); ++i) {
    if (!entity_ids[i]) continue;
    if (const auto* stored = find({doc_id, *entity_ids[i]})) {
      std::copy(stored->begin(), stored->end(), values.begin() + static_cast<std::ptrdiff_t>(i * d_embd_));
    }
  }
  return out;
}

void EntityRegistry::commit(std::span<const PendingUpdate> updates) {
  for (const PendingUpdate& u : updates) {
    if (u.vector.size() != d_embd_) {
      throw ContractError("registry commit: vector of length " + std::to_string(u.vector.size()) +
                          " for registry width " + std::to_string(d_embd_));
    }
    if (!std::all_of(u.vector.begin(), u.vector.end(), [](double v) { return std::isfinite(v); })) {
      throw NumericalError("registry commit: non-finite entity vector for entity " +
                           std::to_string(u.key.entity_id) + " of document '" + u.key.doc_id + "'");
    }
  }
  for (const PendingUpdate& u : updates) store_[u.key] = u.vector;
}

void EntityRegistry::reset_document(const std::string& doc_id) {
  auto first = store_.lower_bound(EntityKey{doc_id, std::numeric_limits<std::int64_t>::min()});
  auto last = first;
  while (last != store_.end() && last->first.doc_id == doc_id) ++last;
  store_.erase(first, last);
}

const std::vector<double>* EntityRegistry::find(const EntityKey& key) const {
  auto it = store_.find(key);
  return it == store_.end() ? nullptr : &it->second;
}

std::vector<MentionSpan> find_mentions(std::span<const EntityRef> entity_ids) {
  std::vector<MentionSpan> spans;
  std::size_t i = 0;
  while (i < entity_ids.size()) {
    if (!entity_ids[i]) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < entity_ids.size() && entity_ids[j] == entity_ids[i]) ++j;
    spans.push_back({*entity_ids[i], i, j});
    i = j;
  }
  return spans;
}

std::vector<PendingUpdate> stage_updates(const Tensor& final_hidden, const std::string& doc_id,
                                         std::span<const EntityRef> entity_ids) {
  if (final_hidden.rank() != 2 || final_hidden.dim(0) != entity_ids.size()) {
    throw DimensionError("stage_updates: hidden states " + shape_string(final_hidden.shape()) + " for " +
                         std::to_string(entity_ids.size()) + " positions");
  }
  const std::size_t d = final_hidden.dim(1);
  auto values = final_hidden.data();
  std::vector<PendingUpdate> updates;
  for (const MentionSpan& m : find_mentions(entity_ids)) {
    const std::size_t last = m.end - 1;
    PendingUpdate u{{doc_id, m.entity_id},
                    std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(last * d),
                                        values.begin() + static_cast<std::ptrdiff_t>((last + 1) * d)),
                    last};
    auto same = std::find_if(updates.begin(), updates.end(), [&](const PendingUpdate& p) { return p.key == u.key; });
    if (same != updates.end()) {
      *same = std::move(u);
    } else {
      updates.push_back(std::move(u));
    }
  }
  return updates;
}

}  // namespace entlm
