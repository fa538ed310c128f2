#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"
#include "entlm/trainer.hpp"

namespace entlm::cli {

struct DataConfig {
  std::string train;
  std::string valid;
  // Existing vocabulary file; when empty a tokenizer is trained on `train`.
  std::string vocab;
  CorpusFormat format = CorpusFormat::kColumn;
  std::size_t vocab_size = 8000;
};

// Merged view of everything one invocation needs.
//
//   [model]  n_layers n_heads d_embd d_ff vocab_size max_seq_len entity_attention ln_eps
//   [train]  learning_rate max_steps val_every seq_len seed checkpoint_dir
//   [data]   train valid vocab format vocab_size
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  // Applies "section.key=value"; throws ConfigError for unknown keys and
  // malformed values.
  void set(std::string_view dotted_key, std::string_view value);
  void validate() const;
};

// key = value lines grouped in [section] blocks; '#' and ';' start comments.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

bool parse_bool(std::string_view text);

}  // namespace entlm::cli
