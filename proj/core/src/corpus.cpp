#include "entlm/corpus.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\v\f") == std::string_view::npos;
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\v' || line[i] == '\f' ||
                               line[i] == '\r'))
      ++i;
    const std::size_t start = i;
    while (i < line.size() && !(line[i] == ' ' || line[i] == '\t' || line[i] == '\v' || line[i] == '\f' ||
                                line[i] == '\r'))
      ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

EntityRef parse_entity_field(std::string_view field, std::size_t line_no) {
  if (field == "_") return kNullEntity;
  std::int64_t value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw ParseError("entity field '" + std::string(field) + "' is neither an integer nor '_'", line_no);
  }
  if (value < 0) throw ParseError("entity id " + std::string(field) + " is negative", line_no);
  return value;
}

}  // namespace

void AnnotatedDocument::validate() const {
  if (entity_ids.size() != tokens.size() || pos_tags.size() != tokens.size()) {
    throw ContractError("document '" + doc_id + "': " + std::to_string(tokens.size()) + " tokens, " +
                        std::to_string(entity_ids.size()) + " entity ids, " + std::to_string(pos_tags.size()) +
                        " POS tags");
  }
  for (const EntityRef& e : entity_ids) {
    if (e && *e < 0) throw ContractError("document '" + doc_id + "' has a negative entity id");
  }
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "column") return CorpusFormat::kColumn;
  if (name == "plain") return CorpusFormat::kPlain;
  if (name == "records") return CorpusFormat::kRecords;
  throw ConfigError("unknown corpus format '" + std::string(name) + "' (expected column, plain or records)");
}

std::string_view corpus_format_name(CorpusFormat format) {
  switch (format) {
    case CorpusFormat::kColumn:
      return "column";
    case CorpusFormat::kPlain:
      return "plain";
    case CorpusFormat::kRecords:
      return "records";
  }
  return "column";
}

std::vector<AnnotatedDocument> parse_column_text(std::string_view text) {
  std::vector<AnnotatedDocument> docs;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    std::string_view line = lines[n];
    if (is_blank(line)) continue;
    if (line.rfind("#doc", 0) == 0 && (line.size() == 4 || line[4] == ' ' || line[4] == '\t')) {
      std::string_view id = line.substr(4);
      const auto first = id.find_first_not_of(" \t");
      if (first == std::string_view::npos) throw ParseError("document header without an id", line_no);
      id = id.substr(first);
      id = id.substr(0, id.find_last_not_of(" \t") + 1);
      docs.push_back(AnnotatedDocument{std::string(id), {}, {}, {}});
      continue;
    }
    if (docs.empty()) throw ParseError("token line before the first '#doc' header", line_no);
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string_view::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab1 == std::string_view::npos || tab2 == std::string_view::npos ||
        line.find('\t', tab2 + 1) != std::string_view::npos) {
      throw ParseError("expected 'token<TAB>entity<TAB>pos'", line_no);
    }
    const std::string_view token = line.substr(0, tab1);
    const std::string_view entity = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string_view pos = line.substr(tab2 + 1);
    if (token.empty()) throw ParseError("empty token field", line_no);
    if (pos.empty()) throw ParseError("empty POS field", line_no);
    AnnotatedDocument& doc = docs.back();
    doc.tokens.emplace_back(token);
    doc.entity_ids.push_back(parse_entity_field(entity, line_no));
    doc.pos_tags.emplace_back(pos);
  }
  return docs;
}

std::vector<AnnotatedDocument> read_column_file(const std::filesystem::path& path) {
  return parse_column_text(read_text_file(path));
}

std::string format_column_text(const std::vector<AnnotatedDocument>& docs) {
  std::ostringstream out;
  for (const AnnotatedDocument& doc : docs) {
    doc.validate();
    out << "#doc " << doc.doc_id << '\n';
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out << doc.tokens[i] << '\t' << entity_string(doc.entity_ids[i]) << '\t' << doc.pos_tags[i] << '\n';
    }
    out << '\n';
  }
  return out.str();
}

std::vector<AnnotatedDocument> parse_plain_text(std::string_view text) {
  std::vector<AnnotatedDocument> docs;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    auto words = split_whitespace(lines[n]);
    if (words.empty()) continue;
    AnnotatedDocument doc;
    doc.doc_id = "line-" + std::to_string(n + 1);
    doc.entity_ids.assign(words.size(), kNullEntity);
    doc.pos_tags.assign(words.size(), "UNK");
    doc.tokens = std::move(words);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<AnnotatedDocument> read_plain_text(const std::filesystem::path& path) {
  return parse_plain_text(read_text_file(path));
}

std::vector<AnnotatedDocument> parse_records_text(std::string_view text) {
  using nlohmann::json;
  std::vector<AnnotatedDocument> docs;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    if (is_blank(lines[n])) continue;
    json record;
    try {
      record = json::parse(lines[n]);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON record: ") + e.what(), line_no);
    }
    try {
      AnnotatedDocument doc;
      doc.doc_id = record.at("doc_id").get<std::string>();
      doc.tokens = record.at("tokens").get<std::vector<std::string>>();
      doc.pos_tags = record.at("pos").get<std::vector<std::string>>();
      for (const json& e : record.at("entities")) {
        if (e.is_null()) {
          doc.entity_ids.push_back(kNullEntity);
        } else if (e.is_number_integer() && e.get<std::int64_t>() >= 0) {
          doc.entity_ids.push_back(e.get<std::int64_t>());
        } else {
          throw ParseError("entity must be a non-negative integer or null", line_no);
        }
      }
      if (doc.entity_ids.size() != doc.tokens.size() || doc.pos_tags.size() != doc.tokens.size()) {
        throw ParseError("tokens, entities and pos arrays differ in length", line_no);
      }
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
  }
  return docs;
}

std::vector<AnnotatedDocument> read_records_file(const std::filesystem::path& path) {
  return parse_records_text(read_text_file(path));
}

std::string format_records_text(const std::vector<AnnotatedDocument>& docs) {
  using nlohmann::json;
  std::string out;
  for (const AnnotatedDocument& doc : docs) {
    doc.validate();
    json entities = json::array();
    for (const EntityRef& e : doc.entity_ids) entities.push_back(e ? json(*e) : json(nullptr));
    json record = {{"doc_id", doc.doc_id}, {"tokens", doc.tokens}, {"entities", entities}, {"pos", doc.pos_tags}};
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::vector<AnnotatedDocument> read_documents(const std::filesystem::path& path, CorpusFormat format) {
  switch (format) {
    case CorpusFormat::kColumn:
      return read_column_file(path);
    case CorpusFormat::kPlain:
      return read_plain_text(path);
    case CorpusFormat::kRecords:
      return read_records_file(path);
  }
  return {};
}

WordCorpus word_corpus(const std::vector<AnnotatedDocument>& docs) {
  WordCorpus corpus;
  corpus.reserve(docs.size());
  for (const AnnotatedDocument& doc : docs) corpus.push_back(doc.tokens);
  return corpus;
}

TrainingStream build_stream(const std::vector<AnnotatedDocument>& docs, const BpeVocab& vocab, std::size_t seq_len) {
  if (seq_len < 2) throw ConfigError("seq_len must be at least 2, got " + std::to_string(seq_len));
  TrainingStream stream;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const AnnotatedDocument& doc = docs[d];
    doc.validate();
    if (doc.size() == 0) continue;
    const SubtokenSequence seq = encode(doc.tokens, doc.entity_ids, doc.pos_tags, vocab);
    ++stream.document_count;
    for (std::size_t begin = 0; begin < seq.size(); begin += seq_len) {
      const std::size_t end = std::min(seq.size(), begin + seq_len);
      Window w;
      w.doc_id = doc.doc_id;
      w.doc_index = d;
      w.starts_document = begin == 0;
      auto slice = [&](const auto& v) { return std::vector(v.begin() + begin, v.begin() + end); };
      w.tokens.ids = slice(seq.ids);
      w.tokens.word_index = slice(seq.word_index);
      w.tokens.entity_ids = slice(seq.entity_ids);
      w.tokens.pos_tags = slice(seq.pos_tags);
      stream.windows.push_back(std::move(w));
    }
  }
  return stream;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace entlm
