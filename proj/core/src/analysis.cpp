#include "entlm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "entlm/errors.hpp"
#include "entlm/tensor_file.hpp"

namespace entlm {
namespace {

constexpr std::string_view kEmbeddingsFormat = "entlm-embeddings";
constexpr int kEmbeddingsVersion = 1;
constexpr PosClass kClasses[] = {PosClass::kNoun, PosClass::kPronoun, PosClass::kOther};

std::vector<double> row_of(const Tensor& m, std::size_t row) {
  const std::size_t d = m.shape()[1];
  const auto data = m.data();
  const auto first = data.begin() + static_cast<std::ptrdiff_t>(row * d);
  return {first, first + static_cast<std::ptrdiff_t>(d)};
}

// Canonical order inside a group so the sums below never depend on the
// caller's ordering.
bool canonical_less(const MentionRecord* a, const MentionRecord* b) {
  if (a->begin != b->begin) return a->begin < b->begin;
  if (a->end != b->end) return a->end < b->end;
  return a->representation < b->representation;
}

}  // namespace

PosClass pos_class(std::string_view tag) {
  if (tag == "NN" || tag == "NNS" || tag == "NNP" || tag == "NNPS") return PosClass::kNoun;
  if (tag == "PRP" || tag == "PRP$") return PosClass::kPronoun;
  return PosClass::kOther;
}

std::string_view pos_class_name(PosClass c) {
  switch (c) {
    case PosClass::kNoun:
      return "noun";
    case PosClass::kPronoun:
      return "pronoun";
    case PosClass::kOther:
      break;
  }
  return "other";
}

PosClass parse_pos_class(std::string_view name) {
  for (PosClass c : kClasses) {
    if (pos_class_name(c) == name) return c;
  }
  throw InputError("unknown POS class '" + std::string(name) + "'");
}

std::string_view mention_mode_name(MentionMode mode) {
  return mode == MentionMode::kWithEntities ? "with-entities" : "without-entities";
}

MentionMode parse_mention_mode(std::string_view name) {
  if (name == "with-entities" || name == "with") return MentionMode::kWithEntities;
  if (name == "without-entities" || name == "without") return MentionMode::kWithoutEntities;
  throw InputError("unknown mention mode '" + std::string(name) + "'");
}

Extraction extract_mentions(const ModelParams& params, const TrainingStream& stream, const ExtractOptions& options) {
  const std::size_t d = params.config.d_embd;
  const bool entity_mode = params.config.entity_attention;
  const bool feed_entities = options.mode == MentionMode::kWithEntities && !options.isolated;
  Extraction out{{}, EntityRegistry(d)};
  std::size_t doc_offset = 0;

  for (const Window& w : stream.windows) {
    if (w.starts_document) {
      out.registry.reset_document(w.doc_id);
      doc_offset = 0;
    }
    const auto& seq = w.tokens;
    const auto spans = find_mentions(seq.entity_ids);
    if (!spans.empty()) {
      std::vector<std::vector<double>> reps;
      if (options.isolated) {
        for (const MentionSpan& m : spans) {
          const std::span<const TokenId> ids(seq.ids.data() + m.begin, m.end - m.begin);
          Tensor ones;
          if (entity_mode) ones = Tensor::ones({ids.size(), d});
          const ForwardOutput f = forward(params, ids, ones);
          reps.push_back(row_of(f.activations.final_hidden(), ids.size() - 1));
        }
      } else {
        Tensor entities;
        if (entity_mode) {
          entities = feed_entities ? out.registry.fetch_entity_matrix(w.doc_id, seq.entity_ids)
                                   : Tensor::ones({seq.size(), d});
        }
        const ForwardOutput f = forward(params, seq.ids, entities);
        for (const MentionSpan& m : spans) reps.push_back(row_of(f.activations.final_hidden(), m.end - 1));
      }
      std::vector<PendingUpdate> updates;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        const MentionSpan& m = spans[i];
        MentionRecord r;
        r.doc_id = w.doc_id;
        r.entity_id = m.entity_id;
        r.begin = doc_offset + m.begin;
        r.end = doc_offset + m.end;
        r.pos = pos_class(seq.pos_tags[m.end - 1]);
        r.representation = reps[i];
        r.mode = options.mode;
        updates.push_back({r.key(), r.representation, m.end - 1});
        out.mentions.push_back(std::move(r));
      }
      out.registry.commit(updates);
    }
    doc_offset += seq.size();
  }
  return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine of vectors with lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw UndefinedSimilarityError("cosine similarity with a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

const SimilarityRow* SimilarityReport::find(PosClass pos) const {
  for (const auto& r : rows) {
    if (r.pos == pos) return &r;
  }
  return nullptr;
}

SimilarityReport build_report(std::span<const MentionRecord> mentions, const EntityRegistry& registry,
                              MentionMode mode) {
  std::map<std::pair<PosClass, EntityKey>, std::vector<const MentionRecord*>> groups;
  for (const MentionRecord& m : mentions) groups[{m.pos, m.key()}].push_back(&m);

  SimilarityReport report;
  report.mode = mode;
  const std::vector<double> ones(registry.d_embd(), 1.0);
  for (PosClass c : kClasses) {
    SimilarityRow row;
    row.pos = c;
    double mention_sum = 0.0, entity_sum = 0.0;
    for (auto& [gk, group] : groups) {
      if (gk.first != c) continue;
      std::sort(group.begin(), group.end(), canonical_less);
      row.mentions += group.size();

      const std::vector<double>* stored = registry.find(gk.second);
      const std::vector<double>& entity_vec = stored ? *stored : ones;
      double s = 0.0;
      for (const MentionRecord* m : group) s += cosine(entity_vec, m->representation);
      entity_sum += s / static_cast<double>(group.size());
      ++row.entities;

      if (group.size() >= 2) {
        double p = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < group.size(); ++i) {
          for (std::size_t j = i + 1; j < group.size(); ++j) {
            p += cosine(group[i]->representation, group[j]->representation);
            ++pairs;
          }
        }
        mention_sum += p / static_cast<double>(pairs);
        ++row.mention_entities;
      }
    }
    if (row.entities == 0) continue;
    row.entity_similarity = entity_sum / static_cast<double>(row.entities);
    if (row.mention_entities > 0) row.mention_similarity = mention_sum / static_cast<double>(row.mention_entities);
    report.rows.push_back(row);
  }
  return report;
}

std::string format_report_table(std::span<const SimilarityReport> reports) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v) {
      std::snprintf(buf, sizeof(buf), "%10.4f", *v);
    } else {
      std::snprintf(buf, sizeof(buf), "%10s", "-");
    }
    return std::string(buf);
  };
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %-8s %10s %10s %9s %9s\n", "mode", "class", "mention", "entity", "entities",
                "mentions");
  out << line;
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      std::snprintf(line, sizeof(line), "%-18s %-8s %s %s %9zu %9zu\n", std::string(mention_mode_name(rep.mode)).c_str(),
                    std::string(pos_class_name(r.pos)).c_str(), cell(r.mention_similarity).c_str(),
                    cell(r.entity_similarity).c_str(), r.entities, r.mentions);
      out << line;
    }
  }
  return out.str();
}

std::string format_report_json_lines(std::span<const SimilarityReport> reports) {
  std::string out;
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      nlohmann::ordered_json j;
      j["mode"] = mention_mode_name(rep.mode);
      j["pos_class"] = pos_class_name(r.pos);
      j["mention_similarity"] = r.mention_similarity ? nlohmann::ordered_json(*r.mention_similarity) : nullptr;
      j["entity_similarity"] = r.entity_similarity ? nlohmann::ordered_json(*r.entity_similarity) : nullptr;
      j["mention_entities"] = r.mention_entities;
      j["entities"] = r.entities;
      j["mentions"] = r.mentions;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::string format_embeddings(std::span<const MentionRecord> mentions) {
  nlohmann::ordered_json header;
  header["format"] = kEmbeddingsFormat;
  header["version"] = kEmbeddingsVersion;
  header["count"] = mentions.size();
  header["d_embd"] = mentions.empty() ? 0 : mentions.front().representation.size();
  std::string out = header.dump() + '\n';
  for (const MentionRecord& m : mentions) {
    nlohmann::ordered_json j;
    j["doc_id"] = m.doc_id;
    j["entity_id"] = m.entity_id;
    j["pos_class"] = pos_class_name(m.pos);
    j["mode"] = mention_mode_name(m.mode);
    j["begin"] = m.begin;
    j["end"] = m.end;
    j["vector"] = m.representation;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void export_embeddings(std::span<const MentionRecord> mentions, const std::filesystem::path& path) {
  write_file_atomically(path, format_embeddings(mentions));
}

std::vector<MentionRecord> parse_embeddings(std::string_view text) {
  std::vector<MentionRecord> out;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.value("format", "") != kEmbeddingsFormat) throw ParseError("not an embeddings file", line_no);
        if (j.value("version", 0) != kEmbeddingsVersion) throw ParseError("unsupported embeddings version", line_no);
        expected = j.at("count").get<std::size_t>();
        have_header = true;
        continue;
      }
      MentionRecord r;
      r.doc_id = j.at("doc_id").get<std::string>();
      r.entity_id = j.at("entity_id").get<std::int64_t>();
      r.pos = parse_pos_class(j.at("pos_class").get<std::string>());
      r.mode = parse_mention_mode(j.at("mode").get<std::string>());
      r.begin = j.at("begin").get<std::size_t>();
      r.end = j.at("end").get<std::size_t>();
      r.representation = j.at("vector").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed embeddings record: ") + e.what(), line_no);
    } catch (const InputError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_header) throw ParseError("embeddings file has no header", 1);
  if (out.size() != expected) {
    throw ParseError("embeddings header announces " + std::to_string(expected) + " records, found " +
                         std::to_string(out.size()),
                     line_no);
  }
  return out;
}

}  // namespace entlm
