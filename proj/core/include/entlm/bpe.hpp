#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entlm/annotations.hpp"
#include "entlm/ops.hpp"

namespace entlm {

struct MergeRule {
  std::string left;
  std::string right;

  bool operator==(const MergeRule&) const = default;
};

// Byte-level BPE vocabulary.
//
// Ids 0..255 are the single bytes. Each merge, in training order, maps the
// concatenated symbol to the next free id unless that byte string already
// has one. The end-of-document marker takes the last id.
class BpeVocab {
 public:
  static constexpr std::size_t kByteSymbols = 256;
  static constexpr int kFormatVersion = 1;

  BpeVocab();

  std::span<const MergeRule> merges() const noexcept { return merges_; }

  // Number of ids, including the end-of-document marker.
  std::size_t size() const noexcept { return symbols_.size() + 1; }
  TokenId end_of_document() const noexcept { return static_cast<TokenId>(symbols_.size()); }

  std::optional<TokenId> find(std::string_view symbol) const;
  // Bytes of a token id; the end-of-document marker has none.
  std::string_view symbol(TokenId id) const;

  // Appends a merge and returns the id of the merged symbol. Both halves must
  // already be symbols.
  TokenId add_merge(const MergeRule& rule);

  // Segments one pre-token (for instance " hello") by merge priority.
  std::vector<TokenId> encode_chunk(std::string_view chunk) const;

  std::string to_text() const;
  static BpeVocab from_text(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static BpeVocab load(const std::filesystem::path& path);

 private:
  struct MergeTarget {
    std::size_t rank;
    TokenId merged;
  };
  static std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  std::vector<MergeRule> merges_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> ids_;
  std::unordered_map<std::uint64_t, MergeTarget> ranks_;
};

// Word sequences, one inner vector per document or sentence.
using WordCorpus = std::vector<std::vector<std::string>>;

// Greedy BPE training: repeatedly merge the most frequent adjacent symbol
// pair (ties go to the lexicographically smallest pair) until the vocabulary
// reaches target_vocab_size ids or no pair occurs at least twice.
BpeVocab bpe_train(const WordCorpus& corpus, std::size_t target_vocab_size);

// Pre-tokens of a word sequence: the first word as is, later words with one
// leading space. Joining them restores the words separated by single spaces.
std::vector<std::string> word_chunks(std::span<const std::string> words);

// Lossless split of free text into pre-tokens: runs of non-space characters
// with at most one leading space, and runs of remaining whitespace.
std::vector<std::string> pretokenize(std::string_view text);

struct SubtokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::size_t> word_index;
  std::vector<EntityRef> entity_ids;
  std::vector<std::string> pos_tags;

  std::size_t size() const noexcept { return ids.size(); }
};

// Encodes each word independently and copies its entity id and POS tag onto
// every subtoken it produces.
SubtokenSequence encode(std::span<const std::string> words, std::span<const EntityRef> entity_ids,
                        std::span<const std::string> pos_tags, const BpeVocab& vocab);

std::vector<TokenId> encode_text(std::string_view text, const BpeVocab& vocab);

std::string decode(std::span<const TokenId> ids, const BpeVocab& vocab);

}  // namespace entlm
