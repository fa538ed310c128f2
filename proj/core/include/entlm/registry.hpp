#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entlm/annotations.hpp"
#include "entlm/tensor.hpp"

namespace entlm {

struct EntityKey {
  std::string doc_id;
  std::int64_t entity_id = 0;

  auto operator<=>(const EntityKey&) const = default;
};

struct PendingUpdate {
  EntityKey key;
  std::vector<double> vector;
  // Sequence position the vector was taken from.
  std::size_t position = 0;
};

// Persistent entity set: the latest hidden representation of every entity
// seen so far, keyed by (document, entity id).
//
// Every key that was never written, and the null entity, reads as the
// all-ones vector. Stored vectors are plain values, so no gradient ever
// flows into the registry.
class EntityRegistry {
 public:
  explicit EntityRegistry(std::size_t d_embd);

  std::size_t d_embd() const noexcept { return d_embd_; }
  std::size_t size() const noexcept { return store_.size(); }

  // Row i holds the vector of entity_ids[i], or ones for null and unseen
  // entities. The result does not require grad.
  Tensor fetch_entity_matrix(const std::string& doc_id, std::span<const EntityRef> entity_ids) const;

  // Writes every update; later entries for the same key win.
  void commit(std::span<const PendingUpdate> updates);

  // Drops every key of doc_id.
  void reset_document(const std::string& doc_id);
  void clear() noexcept { store_.clear(); }

  // Stored vector, or nullptr when the key was never written.
  const std::vector<double>* find(const EntityKey& key) const;

  const std::map<EntityKey, std::vector<double>>& entries() const noexcept { return store_; }

 private:
  std::size_t d_embd_;
  std::map<EntityKey, std::vector<double>> store_;
};

// One update per mention (maximal run of equal non-null entity ids), taken
// from the run's last position of final_hidden[s x d]. When an entity has
// several mentions in the sequence only the last one is returned.
std::vector<PendingUpdate> stage_updates(const Tensor& final_hidden, const std::string& doc_id,
                                         std::span<const EntityRef> entity_ids);

// Half-open [begin, end) runs of equal non-null entity ids.
struct MentionSpan {
  std::int64_t entity_id;
  std::size_t begin;
  std::size_t end;
};
std::vector<MentionSpan> find_mentions(std::span<const EntityRef> entity_ids);

}  // namespace entlm
