#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "entlm/annotations.hpp"
#include "entlm/model.hpp"

namespace entlm::testkit {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(ENTLM_TEST_DATA_DIR) / name;
}

// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("entlm-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ModelConfig tiny_config(bool entity_attention = true) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_embd = 16;
  c.d_ff = 32;
  c.vocab_size = 50;
  c.max_seq_len = 32;
  c.entity_attention = entity_attention;
  return c;
}

inline std::vector<TokenId> random_ids(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Perturbs every entry of every parameter so zero-initialised projections
// do not hide a path.
inline void jitter(ModelParams& params, std::mt19937_64& rng, double scale = 0.05) {
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& nt : params.named_tensors()) {
    for (double& v : nt.tensor.data()) v += normal(rng);
  }
}

}  // namespace entlm::testkit
