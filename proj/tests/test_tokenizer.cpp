#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "entlm/bpe.hpp"
#include "entlm/errors.hpp"
#include "support.hpp"

using namespace entlm;

namespace {

// Textbook BPE: recount every pair from scratch after each merge.
std::vector<MergeRule> brute_force_merges(const WordCorpus& corpus, std::size_t target) {
  std::map<std::string, long> chunk_counts;
  for (const auto& words : corpus) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      const std::string chunk = i == 0 ? words[i] : " " + words[i];
      if (!chunk.empty()) ++chunk_counts[chunk];
    }
  }
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [chunk, n] : chunk_counts) {
    std::vector<std::string> symbols;
    for (char c : chunk) symbols.emplace_back(1, c);
    words.emplace_back(symbols, n);
  }
  std::set<std::string> known;
  for (int b = 0; b < 256; ++b) known.insert(std::string(1, static_cast<char>(b)));
  std::vector<MergeRule> merges;
  while (known.size() + 1 < target) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [symbols, n] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) counts[{symbols[i], symbols[i + 1]}] += n;
    long best = 0;
    std::pair<std::string, std::string> chosen;
    for (const auto& [pair, n] : counts) {  // map order = lexicographic, so the first max wins ties
      if (n > best) {
        best = n;
        chosen = pair;
      }
    }
    if (best < 2) break;
    merges.push_back({chosen.first, chosen.second});
    known.insert(chosen.first + chosen.second);
    for (auto& [symbols, n] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == chosen.first && symbols[i + 1] == chosen.second) {
          next.push_back(chosen.first + chosen.second);
          ++i;
        } else {
          next.push_back(symbols[i]);
        }
      }
      symbols = std::move(next);
    }
  }
  return merges;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::string random_unicode(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::pair<char32_t, char32_t>> ranges = {
      {0x20, 0x7E}, {0x09, 0x0A}, {0xA0, 0x17F}, {0x391, 0x3C9}, {0x410, 0x44F}, {0x4E00, 0x4FFF}, {0x1F600, 0x1F64F}};
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> which(0, ranges.size() - 1);
  std::string s;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [lo, hi] = ranges[which(rng)];
    std::uniform_int_distribution<std::uint32_t> cp(lo, hi);
    append_utf8(s, cp(rng));
  }
  return s;
}

WordCorpus sample_corpus() {
  return {{"the", "cat", "sat", "on", "the", "mat"},
          {"the", "hat", "is", "on", "the", "cat"},
          {"a", "cat", "and", "a", "hat", "and", "a", "mat"},
          {"Noriega", "and", "Noriega's", "hat"}};
}

}  // namespace

TEST(BpeTrain, MatchesBruteForceOracle) {
  const WordCorpus corpus = sample_corpus();
  for (std::size_t target : {260u, 270u, 300u, 2000u}) {
    const BpeVocab vocab = bpe_train(corpus, target);
    const auto expected = brute_force_merges(corpus, target);
    ASSERT_EQ(vocab.merges().size(), expected.size()) << "target " << target;
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(vocab.merges()[i], expected[i]) << "merge " << i;
    EXPECT_LE(vocab.size(), target);
  }
}

TEST(BpeTrain, MatchesOracleOnRandomCorpora) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> letter('a', 'e');
  std::uniform_int_distribution<int> wlen(1, 6);
  for (int trial = 0; trial < 10; ++trial) {
    WordCorpus corpus(5);
    for (auto& doc : corpus) {
      for (int w = 0; w < 12; ++w) {
        std::string word;
        for (int k = wlen(rng); k > 0; --k) word += static_cast<char>(letter(rng));
        doc.push_back(word);
      }
    }
    const BpeVocab vocab = bpe_train(corpus, 320);
    const auto expected = brute_force_merges(corpus, 320);
    ASSERT_EQ(vocab.merges().size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(vocab.merges()[i], expected[i]);
  }
}

TEST(BpeTrain, DominantPairMergesFirst) {
  const BpeVocab vocab = bpe_train({{"aaaa", "aaaa"}}, 300);
  ASSERT_FALSE(vocab.merges().empty());
  EXPECT_EQ(vocab.merges()[0], (MergeRule{"a", "a"}));
}

TEST(BpeTrain, TieGoesToSmallestPair) {
  // "ab" and "cd" occur twice each; ("a","b") sorts first.
  const BpeVocab vocab = bpe_train({{"cd"}, {"ab"}, {"cd"}, {"ab"}}, 258);
  ASSERT_EQ(vocab.merges().size(), 1u);
  EXPECT_EQ(vocab.merges()[0], (MergeRule{"a", "b"}));
}

TEST(BpeTrain, NothingToMergeGivesBaseAlphabet) {
  const BpeVocab vocab = bpe_train({{"abcdefg"}}, 1000);
  EXPECT_TRUE(vocab.merges().empty());
  EXPECT_EQ(vocab.size(), 257u);
}

TEST(BpeTrain, Errors) {
  EXPECT_THROW(bpe_train({}, 300), InputError);
  EXPECT_THROW(bpe_train({{}, {""}}, 300), InputError);
  EXPECT_THROW(bpe_train(sample_corpus(), 257), ConfigError);
}

TEST(BpeTrain, Deterministic) {
  EXPECT_EQ(bpe_train(sample_corpus(), 400).to_text(), bpe_train(sample_corpus(), 400).to_text());
}

TEST(BpeVocab, IdsAreDenseAndEndOfDocumentIsLast) {
  const BpeVocab vocab = bpe_train(sample_corpus(), 300);
  EXPECT_EQ(static_cast<std::size_t>(vocab.end_of_document()), vocab.size() - 1);
  EXPECT_TRUE(vocab.symbol(vocab.end_of_document()).empty());
  std::set<std::string> seen;
  for (TokenId id = 0; id < vocab.end_of_document(); ++id) {
    const std::string s(vocab.symbol(id));
    EXPECT_TRUE(seen.insert(s).second) << "duplicate symbol for id " << id;
    EXPECT_EQ(vocab.find(s), id);
  }
  EXPECT_THROW(vocab.symbol(static_cast<TokenId>(vocab.size())), IndexError);
  EXPECT_THROW(vocab.symbol(-1), IndexError);
}

TEST(BpeVocab, EncodeFollowsMergePriority) {
  BpeVocab vocab;
  const TokenId bc = vocab.add_merge({"b", "c"});
  const TokenId ab = vocab.add_merge({"a", "b"});
  // "abc": ("b","c") has priority over ("a","b").
  EXPECT_EQ(vocab.encode_chunk("abc"), (std::vector<TokenId>{'a', bc}));
  EXPECT_EQ(vocab.encode_chunk("abd"), (std::vector<TokenId>{ab, 'd'}));
  EXPECT_THROW(vocab.add_merge({"x", "zz"}), Error);
}

TEST(BpeVocab, TextRoundTrip) {
  const BpeVocab vocab = bpe_train({{"héllo", "wörld", "héllo", "wörld", "\t\ttab"}}, 320);
  const std::string text = vocab.to_text();
  EXPECT_EQ(text.rfind("#entlm-bpe v1 vocab_size=" + std::to_string(vocab.size()) + "\n", 0), 0u);
  const BpeVocab back = BpeVocab::from_text(text);
  EXPECT_EQ(back.to_text(), text);
  ASSERT_EQ(back.merges().size(), vocab.merges().size());
  for (std::size_t i = 0; i < vocab.merges().size(); ++i) EXPECT_EQ(back.merges()[i], vocab.merges()[i]);
  testkit::TempDir dir;
  vocab.save(dir / "v.txt");
  EXPECT_EQ(BpeVocab::load(dir / "v.txt").to_text(), text);
}

TEST(BpeVocab, ParseErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      BpeVocab::from_text(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of(""), 1u);
  EXPECT_EQ(line_of("not a header\n"), 1u);
  EXPECT_EQ(line_of("#entlm-bpe v9 vocab_size=257\n"), 1u);
  EXPECT_EQ(line_of("#entlm-bpe v1 vocab_size=258\na b\nab\n"), 3u);
  EXPECT_EQ(line_of("#entlm-bpe v1 vocab_size=259\na b\nabc d\n"), 3u);
  EXPECT_EQ(line_of("#entlm-bpe v1 vocab_size=300\na b\n"), 1u);
}

TEST(Pretokenize, IsLossless) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const std::string s = random_unicode(rng, 40);
    std::string joined;
    for (const auto& c : pretokenize(s)) joined += c;
    EXPECT_EQ(joined, s);
  }
}

TEST(Encode, RoundTripOnRandomUnicode) {
  const BpeVocab vocab = bpe_train(sample_corpus(), 400);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::string s = random_unicode(rng, 30);
    EXPECT_EQ(decode(encode_text(s, vocab), vocab), s);
  }
  EXPECT_EQ(decode(encode_text("hello world", vocab), vocab), "hello world");
  EXPECT_EQ(decode(std::vector<TokenId>{}, vocab), "");
  EXPECT_THROW(decode(std::vector<TokenId>{static_cast<TokenId>(vocab.size() + 3)}, vocab), IndexError);
}

TEST(Encode, PropagatesAnnotationsToEverySubtoken) {
  const std::vector<std::string> words{"``", "The", "U.S.", "underestimated", "Noriega", "all", "along",
                                       "''", "says", "Ambler", "Moss"};
  const std::vector<EntityRef> ents{kNullEntity, 73, 73, kNullEntity, 82, kNullEntity,
                                    kNullEntity, kNullEntity, kNullEntity, 50, 50};
  const std::vector<std::string> pos{"``", "DT", "NNP", "VBD", "NNP", "DT", "IN", "''", "VBZ", "NNP", "NNP"};
  const BpeVocab vocab = bpe_train({words}, 300);
  const SubtokenSequence seq = encode(words, ents, pos, vocab);
  ASSERT_EQ(seq.ids.size(), seq.entity_ids.size());
  ASSERT_EQ(seq.ids.size(), seq.pos_tags.size());
  ASSERT_EQ(seq.ids.size(), seq.word_index.size());
  std::vector<EntityRef> collapsed;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq.entity_ids[i], ents[seq.word_index[i]]);
    EXPECT_EQ(seq.pos_tags[i], pos[seq.word_index[i]]);
    if (i == 0 || seq.word_index[i] != seq.word_index[i - 1]) collapsed.push_back(seq.entity_ids[i]);
  }
  EXPECT_EQ(collapsed, ents);
  EXPECT_THROW(encode(words, std::vector<EntityRef>(2), pos, vocab), DimensionError);
}
