#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"
#include "entlm/registry.hpp"

namespace entlm {

enum class PosClass { kNoun, kPronoun, kOther };

// NN, NNS, NNP, NNPS -> noun; PRP, PRP$ -> pronoun; anything else -> other.
PosClass pos_class(std::string_view tag);
std::string_view pos_class_name(PosClass c);
PosClass parse_pos_class(std::string_view name);

enum class MentionMode { kWithEntities, kWithoutEntities };

std::string_view mention_mode_name(MentionMode mode);
MentionMode parse_mention_mode(std::string_view name);

struct MentionRecord {
  std::string doc_id;
  std::int64_t entity_id = 0;
  // Subtoken offsets within the document, [begin, end).
  std::size_t begin = 0;
  std::size_t end = 0;
  // Taken from the mention-final subtoken's tag.
  PosClass pos = PosClass::kOther;
  // Final-layer hidden state at the mention-final subtoken.
  std::vector<double> representation;
  MentionMode mode = MentionMode::kWithEntities;

  EntityKey key() const { return {doc_id, entity_id}; }
};

struct ExtractOptions {
  MentionMode mode = MentionMode::kWithEntities;
  // Feed each mention alone as its own sequence, without surrounding words.
  bool isolated = false;
};

struct Extraction {
  std::vector<MentionRecord> mentions;
  // Entity representations as committed during the pass.
  EntityRegistry registry;
};

// Runs the frozen model over the stream with the same registry threading as
// training. In without-entities mode the model sees all-ones entity rows
// but the registry still records each mention so entity similarity can be
// measured. A stream without annotations gives no mentions.
Extraction extract_mentions(const ModelParams& params, const TrainingStream& stream, const ExtractOptions& options);

// Throws DimensionError for different lengths and UndefinedSimilarityError
// when either vector is zero.
double cosine(std::span<const double> u, std::span<const double> v);

struct SimilarityRow {
  PosClass pos = PosClass::kOther;
  // Macro average over entities with at least two mentions in this class.
  std::optional<double> mention_similarity;
  std::size_t mention_entities = 0;
  // Macro average over every entity with a mention in this class.
  std::optional<double> entity_similarity;
  std::size_t entities = 0;
  std::size_t mentions = 0;
};

struct SimilarityReport {
  MentionMode mode = MentionMode::kWithEntities;
  // Noun, pronoun, other order; classes without mentions are absent.
  std::vector<SimilarityRow> rows;

  const SimilarityRow* find(PosClass pos) const;
};

// Entity representations come from the registry (ones when never written).
// The result does not depend on the order of `mentions`.
SimilarityReport build_report(std::span<const MentionRecord> mentions, const EntityRegistry& registry,
                              MentionMode mode = MentionMode::kWithEntities);

std::string format_report_table(std::span<const SimilarityReport> reports);
// One JSON object per row.
std::string format_report_json_lines(std::span<const SimilarityReport> reports);

// Header line followed by one JSON object per mention:
//   {"doc_id", "entity_id", "pos_class", "mode", "begin", "end", "vector"}
std::string format_embeddings(std::span<const MentionRecord> mentions);
void export_embeddings(std::span<const MentionRecord> mentions, const std::filesystem::path& path);
std::vector<MentionRecord> parse_embeddings(std::string_view text);

}  // namespace entlm
