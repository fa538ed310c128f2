#include "entlm/bpe.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

// Printable stand-ins for raw bytes so merge files stay line- and
// space-delimited text (the GPT-2 byte-to-unicode table).
struct ByteAlphabet {
  std::array<char32_t, 256> to_code{};
  std::map<char32_t, unsigned char> to_byte;

  ByteAlphabet() {
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      to_code[b] = direct[b] ? static_cast<char32_t>(b) : next++;
      to_byte[to_code[b]] = static_cast<unsigned char>(b);
    }
  }
};

const ByteAlphabet& alphabet() {
  static const ByteAlphabet table;
  return table;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string printable(std::string_view bytes) {
  std::string out;
  for (unsigned char b : bytes) append_utf8(out, alphabet().to_code[b]);
  return out;
}

std::string from_printable(std::string_view text, std::size_t line) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    char32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      len = 3;
    } else {
      throw ParseError("invalid symbol encoding in merge list", line);
    }
    if (i + len > text.size()) throw ParseError("truncated UTF-8 sequence in merge list", line);
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
    auto it = alphabet().to_byte.find(cp);
    if (it == alphabet().to_byte.end()) throw ParseError("character outside the byte alphabet", line);
    out.push_back(static_cast<char>(it->second));
    i += len;
  }
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Applies one merge left to right, non-overlapping.
void apply_merge(std::vector<TokenId>& seq, TokenId a, TokenId b, TokenId merged) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < seq.size(); ++w) {
    if (r + 1 < seq.size() && seq[r] == a && seq[r + 1] == b) {
      seq[w] = merged;
      r += 2;
    } else {
      seq[w] = seq[r];
      r += 1;
    }
  }
  seq.resize(w);
}

}  // namespace

BpeVocab::BpeVocab() {
  symbols_.reserve(kByteSymbols);
  for (std::size_t b = 0; b < kByteSymbols; ++b) {
    symbols_.emplace_back(1, static_cast<char>(b));
    ids_.emplace(symbols_.back(), static_cast<TokenId>(b));
  }
}

std::optional<TokenId> BpeVocab::find(std::string_view symbol) const {
  auto it = ids_.find(std::string(symbol));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string_view BpeVocab::symbol(TokenId id) const {
  if (id == end_of_document()) return {};
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

TokenId BpeVocab::add_merge(const MergeRule& rule) {
  auto left = find(rule.left);
  auto right = find(rule.right);
  if (!left || !right) throw ContractError("merge refers to a symbol that is not in the vocabulary");
  std::string joined = rule.left + rule.right;
  TokenId merged;
  if (auto existing = find(joined)) {
    merged = *existing;
  } else {
    merged = static_cast<TokenId>(symbols_.size());
    symbols_.push_back(joined);
    ids_.emplace(std::move(joined), merged);
  }
  // Earlier rules win if a pair is listed twice.
  ranks_.try_emplace(pair_key(*left, *right), MergeTarget{merges_.size(), merged});
  merges_.push_back(rule);
  return merged;
}

std::vector<TokenId> BpeVocab::encode_chunk(std::string_view chunk) const {
  std::vector<TokenId> seq;
  seq.reserve(chunk.size());
  for (unsigned char b : chunk) seq.push_back(static_cast<TokenId>(b));
  while (seq.size() > 1) {
    std::size_t best_rank = merges_.size();
    TokenId a = 0, b = 0, merged = 0;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      auto it = ranks_.find(pair_key(seq[i], seq[i + 1]));
      if (it != ranks_.end() && it->second.rank < best_rank) {
        best_rank = it->second.rank;
        a = seq[i];
        b = seq[i + 1];
        merged = it->second.merged;
      }
    }
    if (best_rank == merges_.size()) break;
    apply_merge(seq, a, b, merged);
  }
  return seq;
}

std::string BpeVocab::to_text() const {
  std::ostringstream out;
  out << "#entlm-bpe v" << kFormatVersion << " vocab_size=" << size() << '\n';
  for (const MergeRule& m : merges_) out << printable(m.left) << ' ' << printable(m.right) << '\n';
  return out.str();
}

BpeVocab BpeVocab::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty vocabulary file", 1);
  const std::string prefix = "#entlm-bpe v";
  if (line.rfind(prefix, 0) != 0) throw ParseError("missing vocabulary header", 1);
  int version = 0;
  std::size_t declared = 0;
  {
    std::istringstream header(line.substr(prefix.size()));
    std::string size_field;
    if (!(header >> version >> size_field) || size_field.rfind("vocab_size=", 0) != 0) {
      throw ParseError("malformed vocabulary header", 1);
    }
    try {
      declared = std::stoull(size_field.substr(11));
    } catch (const std::exception&) {
      throw ParseError("malformed vocab_size in header", 1);
    }
  }
  if (version != kFormatVersion) {
    throw ParseError("unsupported vocabulary version " + std::to_string(version), 1);
  }
  BpeVocab vocab;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
        line.find(' ', space + 1) != std::string::npos) {
      throw ParseError("expected two symbols separated by one space", line_no);
    }
    MergeRule rule{from_printable(std::string_view(line).substr(0, space), line_no),
                   from_printable(std::string_view(line).substr(space + 1), line_no)};
    if (!vocab.find(rule.left) || !vocab.find(rule.right)) {
      throw ParseError("merge uses a symbol not produced by earlier merges", line_no);
    }
    vocab.add_merge(rule);
  }
  if (vocab.size() != declared) {
    throw ParseError("header declares " + std::to_string(declared) + " ids but merges produce " +
                     std::to_string(vocab.size()),
                     1);
  }
  return vocab;
}

void BpeVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path.string());
  out << to_text();
  if (!out) throw IoError("failed writing vocabulary file " + path.string());
}

BpeVocab BpeVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

BpeVocab bpe_train(const WordCorpus& corpus, std::size_t target_vocab_size) {
  std::map<std::string, std::int64_t> chunk_counts;
  for (const auto& words : corpus) {
    for (std::string& chunk : word_chunks(words)) {
      if (!chunk.empty()) ++chunk_counts[chunk];
    }
  }
  if (chunk_counts.empty()) throw InputError("cannot train BPE on an empty corpus");

  BpeVocab vocab;
  if (target_vocab_size <= vocab.size()) {
    throw ConfigError("target vocabulary size " + std::to_string(target_vocab_size) +
                      " must exceed the byte alphabet plus end-of-document marker (" + std::to_string(vocab.size()) +
                      ")");
  }

  struct Word {
    std::vector<TokenId> symbols;
    std::int64_t count;
  };
  std::vector<Word> words;
  words.reserve(chunk_counts.size());
  for (const auto& [chunk, count] : chunk_counts) {
    Word w{{}, count};
    for (unsigned char b : chunk) w.symbols.push_back(static_cast<TokenId>(b));
    words.push_back(std::move(w));
  }

  using Pair = std::pair<TokenId, TokenId>;
  std::map<Pair, std::int64_t> counts;
  std::map<Pair, std::set<std::size_t>> where;
  auto add_word = [&](std::size_t wi, int sign) {
    const Word& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      Pair p{w.symbols[i], w.symbols[i + 1]};
      auto it = counts.find(p);
      if (sign > 0) {
        counts[p] += w.count;
        where[p].insert(wi);
      } else if (it != counts.end()) {
        it->second -= w.count;
        if (it->second == 0) counts.erase(it);
      }
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

  while (vocab.size() < target_vocab_size) {
    const Pair* best = nullptr;
    std::int64_t best_count = 0;
    for (const auto& [p, c] : counts) {
      if (c > best_count) {
        best = &p;
        best_count = c;
      } else if (c == best_count && best != nullptr) {
        const auto lhs = std::make_pair(vocab.symbol(p.first), vocab.symbol(p.second));
        const auto rhs = std::make_pair(vocab.symbol(best->first), vocab.symbol(best->second));
        if (lhs < rhs) best = &p;
      }
    }
    if (best == nullptr || best_count < 2) break;

    const Pair chosen = *best;
    const TokenId merged =
        vocab.add_merge({std::string(vocab.symbol(chosen.first)), std::string(vocab.symbol(chosen.second))});

    const std::set<std::size_t> affected = std::move(where[chosen]);
    where.erase(chosen);
    for (std::size_t wi : affected) {
      add_word(wi, -1);
      apply_merge(words[wi].symbols, chosen.first, chosen.second, merged);
      add_word(wi, +1);
    }
  }
  return vocab;
}

std::vector<std::string> word_chunks(std::span<const std::string> words) {
  std::vector<std::string> chunks;
  chunks.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) chunks.push_back(i == 0 ? words[i] : " " + words[i]);
  return chunks;
}

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    if (text[i] == ' ' && i + 1 < text.size() && !is_space(text[i + 1])) {
      ++i;
      while (i < text.size() && !is_space(text[i])) ++i;
    } else if (is_space(text[i])) {
      while (i < text.size() && is_space(text[i])) ++i;
      // Leave a final space to lead the following word.
      if (i < text.size() && i - start > 1 && text[i - 1] == ' ') --i;
    } else {
      while (i < text.size() && !is_space(text[i])) ++i;
    }
    chunks.emplace_back(text.substr(start, i - start));
  }
  return chunks;
}

SubtokenSequence encode(std::span<const std::string> words, std::span<const EntityRef> entity_ids,
                        std::span<const std::string> pos_tags, const BpeVocab& vocab) {
  if (entity_ids.size() != words.size() || pos_tags.size() != words.size()) {
    throw DimensionError("encode: " + std::to_string(words.size()) + " words with " +
                         std::to_string(entity_ids.size()) + " entity ids and " + std::to_string(pos_tags.size()) +
                         " POS tags");
  }
  SubtokenSequence out;
  const auto chunks = word_chunks(words);
  for (std::size_t w = 0; w < chunks.size(); ++w) {
    const auto ids = vocab.encode_chunk(chunks[w]);
    for (TokenId id : ids) {
      out.ids.push_back(id);
      out.word_index.push_back(w);
      out.entity_ids.push_back(entity_ids[w]);
      out.pos_tags.push_back(pos_tags[w]);
    }
  }
  return out;
}

std::vector<TokenId> encode_text(std::string_view text, const BpeVocab& vocab) {
  std::vector<TokenId> ids;
  for (const std::string& chunk : pretokenize(text)) {
    const auto part = vocab.encode_chunk(chunk);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string decode(std::span<const TokenId> ids, const BpeVocab& vocab) {
  std::string text;
  for (TokenId id : ids) text += vocab.symbol(id);
  return text;
}

}  // namespace entlm
