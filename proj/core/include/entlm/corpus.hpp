#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/annotations.hpp"
#include "entlm/bpe.hpp"

namespace entlm {

// One document of the (X, E) data layout: words with a parallel entity id
// (or null) and POS tag per word.
struct AnnotatedDocument {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<EntityRef> entity_ids;
  std::vector<std::string> pos_tags;

  std::size_t size() const noexcept { return tokens.size(); }
  // Throws ContractError if the arrays are not parallel or an id is negative.
  void validate() const;

  bool operator==(const AnnotatedDocument&) const = default;
};

enum class CorpusFormat { kColumn, kPlain, kRecords };

CorpusFormat parse_corpus_format(std::string_view name);
std::string_view corpus_format_name(CorpusFormat format);

// Column format, UTF-8 with LF line endings:
//
//   #doc <id>
//   <token> TAB <entity id or _> TAB <pos>
//
// Blank lines are ignored.
std::vector<AnnotatedDocument> parse_column_text(std::string_view text);
std::vector<AnnotatedDocument> read_column_file(const std::filesystem::path& path);
std::string format_column_text(const std::vector<AnnotatedDocument>& docs);

// One document per non-blank line, whitespace separated. Every entity is
// null and every POS tag is "UNK".
std::vector<AnnotatedDocument> parse_plain_text(std::string_view text);
std::vector<AnnotatedDocument> read_plain_text(const std::filesystem::path& path);

// One JSON object per line:
//   {"doc_id": "...", "tokens": [...], "entities": [int|null, ...], "pos": [...]}
std::vector<AnnotatedDocument> parse_records_text(std::string_view text);
std::vector<AnnotatedDocument> read_records_file(const std::filesystem::path& path);
std::string format_records_text(const std::vector<AnnotatedDocument>& docs);

std::vector<AnnotatedDocument> read_documents(const std::filesystem::path& path, CorpusFormat format);

// Word sequences for tokenizer training.
WordCorpus word_corpus(const std::vector<AnnotatedDocument>& docs);

// A training window: a contiguous slice of one document's subtokens.
struct Window {
  std::string doc_id;
  std::size_t doc_index = 0;
  // First window of its document; the registry is reset here.
  bool starts_document = false;
  SubtokenSequence tokens;

  std::size_t size() const noexcept { return tokens.size(); }
};

struct TrainingStream {
  std::vector<Window> windows;
  std::size_t document_count = 0;

  bool empty() const noexcept { return windows.empty(); }
};

inline constexpr std::size_t kDefaultSeqLen = 128;

// Encodes each document and cuts it into windows of at most seq_len
// subtokens. Windows never cross documents. Documents with no tokens are
// skipped.
TrainingStream build_stream(const std::vector<AnnotatedDocument>& docs, const BpeVocab& vocab,
                            std::size_t seq_len = kDefaultSeqLen);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace entlm
