#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"
#include "entlm/optim.hpp"
#include "entlm/registry.hpp"
#include "entlm/tensor_file.hpp"

namespace entlm {

struct CheckpointMeta {
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::size_t seq_len = kDefaultSeqLen;
  // Serialized tokenizer vocabulary, so a checkpoint is self-contained.
  std::string vocab;
};

struct LoadedCheckpoint {
  ModelParams params;
  CheckpointMeta meta;
  // Present when the checkpoint was saved with optimizer moments.
  std::optional<std::vector<AdamState>> optimizer;
  // Present when the checkpoint was saved with the training registry.
  std::optional<EntityRegistry> registry;
};

// Parameters (and optionally Adam moments and the entity registry) at 32-bit
// precision plus the model configuration as header record.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta,
                     const AdamOptimizer* optimizer = nullptr, const EntityRegistry* registry = nullptr);

// Validates every tensor against `expected` when given, otherwise against the
// configuration stored in the file. Throws VersionError, TruncatedError or
// ShapeError (naming the tensor) on mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

// Rounds every parameter through float, matching what a checkpoint stores.
void round_to_stored_precision(ModelParams& params);

std::vector<std::pair<std::string, std::string>> model_config_record(const ModelConfig& config);
ModelConfig model_config_from_record(const TensorFileContents& contents);

// Registry snapshot in the same container, one tensor "<doc_id>/<entity_id>"
// per stored entity.
void save_registry_snapshot(const std::filesystem::path& path, const EntityRegistry& registry);
EntityRegistry load_registry_snapshot(const std::filesystem::path& path);

}  // namespace entlm
