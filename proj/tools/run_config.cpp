#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "entlm/errors.hpp"

namespace entlm::cli {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view text) {
  const std::string s(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
}

}  // namespace

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("expected true or false, got '" + std::string(text) + "'");
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k(key);
  auto flag = [&](std::string_view v) {
    try {
      return parse_bool(v);
    } catch (const ConfigError& e) {
      throw ConfigError(k + ": " + e.what());
    }
  };
  if (k == "model.n_layers") model.n_layers = parse_size(k, value);
  else if (k == "model.n_heads") model.n_heads = parse_size(k, value);
  else if (k == "model.d_embd") model.d_embd = parse_size(k, value);
  else if (k == "model.d_ff") model.d_ff = parse_size(k, value);
  else if (k == "model.vocab_size") model.vocab_size = parse_size(k, value);
  else if (k == "model.max_seq_len") model.max_seq_len = parse_size(k, value);
  else if (k == "model.entity_attention") model.entity_attention = train.entity_attention = flag(value);
  else if (k == "model.ln_eps") model.ln_eps = parse_real(k, value);
  else if (k == "train.learning_rate") train.learning_rate = parse_real(k, value);
  else if (k == "train.max_steps") train.max_steps = parse_size(k, value);
  else if (k == "train.val_every") train.val_every = parse_size(k, value);
  else if (k == "train.seq_len") train.seq_len = parse_size(k, value);
  else if (k == "train.seed") train.seed = parse_size(k, value);
  else if (k == "train.checkpoint_dir") train.checkpoint_dir = value;
  else if (k == "data.train") data.train = value;
  else if (k == "data.valid") data.valid = value;
  else if (k == "data.vocab") data.vocab = value;
  else if (k == "data.vocab_size") data.vocab_size = parse_size(k, value);
  else if (k == "data.format") {
    try {
      data.format = parse_corpus_format(value);
    } catch (const Error& e) {
      throw ConfigError(k + ": " + e.what());
    }
  } else {
    throw ConfigError("unknown configuration key '" + k + "'");
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (train.seq_len > model.max_seq_len) {
    throw ConfigError("train.seq_len (" + std::to_string(train.seq_len) + ") exceeds model.max_seq_len (" +
                      std::to_string(model.max_seq_len) + ")");
  }
  if (data.vocab.empty() && data.vocab_size > model.vocab_size) {
    throw ConfigError("data.vocab_size (" + std::to_string(data.vocab_size) + ") exceeds model.vocab_size (" +
                      std::to_string(model.vocab_size) + ")");
  }
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "data") {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside of a section");
    try {
      config.set(section + "." + std::string(trim(line.substr(0, eq))), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace entlm::cli
