#include "entlm/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <map>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

constexpr std::string_view kCheckpointKind = "checkpoint";
constexpr std::string_view kRegistryKind = "registry";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::string& required(const TensorFileContents& c, std::string_view key) {
  const std::string* v = c.find_record(key);
  if (!v) throw CheckpointError("checkpoint record lacks '" + std::string(key) + "'");
  return *v;
}

std::uint64_t parse_u64(const std::string& s, std::string_view key) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw CheckpointError("record '" + std::string(key) + "' is not an unsigned integer: '" + s + "'");
  }
  return v;
}

std::vector<double> widen(const std::vector<float>& values) { return {values.begin(), values.end()}; }

constexpr std::string_view kRegistryPrefix = "registry:";

std::string registry_tensor_name(const EntityKey& key) {
  return std::string(kRegistryPrefix) + key.doc_id + "/" + std::to_string(key.entity_id);
}

// Tensors named "<prefix><doc_id>/<entity_id>" back into a registry.
EntityRegistry registry_from_tensors(const TensorFileContents& contents, std::size_t d, std::string_view prefix) {
  EntityRegistry registry(d);
  std::vector<PendingUpdate> updates;
  for (const auto& t : contents.tensors) {
    if (t.name.rfind(prefix, 0) != 0) continue;
    const std::string name = t.name.substr(prefix.size());
    const auto slash = name.rfind('/');
    if (slash == std::string::npos) throw CheckpointError("registry entry '" + t.name + "' lacks a doc/entity key");
    if (t.shape != Shape{d}) throw ShapeError("registry entry '" + t.name + "' has shape " + shape_string(t.shape));
    const std::string id_text = name.substr(slash + 1);
    std::int64_t id = 0;
    auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc() || ptr != id_text.data() + id_text.size() || id < 0) {
      throw CheckpointError("registry entry '" + t.name + "' has a bad entity id");
    }
    updates.push_back({{name.substr(0, slash), id}, widen(t.values), 0});
  }
  registry.commit(updates);
  return registry;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> model_config_record(const ModelConfig& c) {
  return {
      {"model.n_layers", std::to_string(c.n_layers)},
      {"model.n_heads", std::to_string(c.n_heads)},
      {"model.d_embd", std::to_string(c.d_embd)},
      {"model.d_ff", std::to_string(c.d_ff)},
      {"model.vocab_size", std::to_string(c.vocab_size)},
      {"model.max_seq_len", std::to_string(c.max_seq_len)},
      {"model.entity_attention", c.entity_attention ? "true" : "false"},
      {"model.ln_eps", format_double(c.ln_eps)},
  };
}

ModelConfig model_config_from_record(const TensorFileContents& contents) {
  ModelConfig c;
  c.n_layers = parse_u64(required(contents, "model.n_layers"), "model.n_layers");
  c.n_heads = parse_u64(required(contents, "model.n_heads"), "model.n_heads");
  c.d_embd = parse_u64(required(contents, "model.d_embd"), "model.d_embd");
  c.d_ff = parse_u64(required(contents, "model.d_ff"), "model.d_ff");
  c.vocab_size = parse_u64(required(contents, "model.vocab_size"), "model.vocab_size");
  c.max_seq_len = parse_u64(required(contents, "model.max_seq_len"), "model.max_seq_len");
  const std::string& ea = required(contents, "model.entity_attention");
  if (ea != "true" && ea != "false") throw CheckpointError("model.entity_attention must be true or false");
  c.entity_attention = ea == "true";
  try {
    c.ln_eps = std::stod(required(contents, "model.ln_eps"));
  } catch (const std::invalid_argument&) {
    throw CheckpointError("model.ln_eps is not a number");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("stored model configuration is invalid: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta,
                     const AdamOptimizer* optimizer, const EntityRegistry* registry) {
  TensorFileContents contents;
  contents.kind = kCheckpointKind;
  contents.record = model_config_record(params.config);
  contents.record.emplace_back("train.step", std::to_string(meta.step));
  contents.record.emplace_back("train.seed", std::to_string(meta.seed));
  contents.record.emplace_back("train.seq_len", std::to_string(meta.seq_len));
  contents.record.emplace_back("tokenizer.vocab", meta.vocab);
  contents.record.emplace_back("optimizer", optimizer ? "adam" : "none");
  const auto named = params.named_tensors();
  for (const auto& nt : named) {
    contents.tensors.push_back({nt.name, nt.tensor.shape(), to_stored(nt.tensor.data())});
  }
  if (optimizer) {
    const auto states = optimizer->states();
    contents.record.emplace_back("optimizer.steps", std::to_string(optimizer->steps()));
    for (std::size_t i = 0; i < named.size(); ++i) {
      const AdamState& s = states[i];
      if (s.m.empty()) continue;
      contents.tensors.push_back({"optim.m." + named[i].name, named[i].tensor.shape(), to_stored(s.m)});
      contents.tensors.push_back({"optim.v." + named[i].name, named[i].tensor.shape(), to_stored(s.v)});
    }
  }
  if (registry) {
    contents.record.emplace_back("registry.d_embd", std::to_string(registry->d_embd()));
    for (const auto& [key, vec] : registry->entries()) {
      contents.tensors.push_back({registry_tensor_name(key), {vec.size()}, to_stored(vec)});
    }
  }
  write_tensor_file(path, contents);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  const TensorFileContents contents = read_tensor_file(path);
  if (contents.kind != kCheckpointKind) {
    throw CheckpointError(path.string() + " holds a '" + contents.kind + "' file, not a checkpoint");
  }
  const ModelConfig stored = model_config_from_record(contents);
  const ModelConfig& config = expected ? *expected : stored;

  LoadedCheckpoint out;
  out.meta.step = parse_u64(required(contents, "train.step"), "train.step");
  out.meta.seed = parse_u64(required(contents, "train.seed"), "train.seed");
  if (const auto* vp = contents.find_record("tokenizer.vocab")) out.meta.vocab = *vp;
  if (const auto* sl = contents.find_record("train.seq_len")) out.meta.seq_len = parse_u64(*sl, "train.seq_len");

  std::map<std::string, Tensor> loaded;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    const TensorFileEntry* entry = contents.find_tensor(name);
    if (!entry) throw ShapeError("checkpoint lacks tensor '" + name + "' required by the configuration");
    if (entry->shape != shape) {
      throw ShapeError("tensor '" + name + "' has shape " + shape_string(entry->shape) + " but the configuration needs " +
                       shape_string(shape));
    }
    loaded.emplace(name, Tensor::from(shape, widen(entry->values)));
  }
  for (const auto& t : contents.tensors) {
    if (t.name.starts_with("optim.") || t.name.starts_with(kRegistryPrefix) || loaded.count(t.name)) continue;
    throw ShapeError("checkpoint holds tensor '" + t.name + "' that the configuration does not have");
  }
  // Rebuild the structure through a fresh skeleton so slot assignment stays
  // in one place.
  ModelParams skeleton = ModelParams::initialize(config, 0);
  for (auto& nt : skeleton.named_tensors()) {
    const Tensor& src = loaded.at(nt.name);
    std::copy(src.data().begin(), src.data().end(), nt.tensor.data().begin());
  }
  out.params = std::move(skeleton);

  const std::string* opt = contents.find_record("optimizer");
  if (opt && *opt == "adam") {
    std::vector<AdamState> states;
    const std::uint64_t steps = parse_u64(required(contents, "optimizer.steps"), "optimizer.steps");
    for (const auto& [name, shape] : parameter_shapes(config)) {
      AdamState s;
      const auto* m = contents.find_tensor("optim.m." + name);
      const auto* v = contents.find_tensor("optim.v." + name);
      if (m && v) {
        if (m->shape != shape || v->shape != shape) throw ShapeError("optimizer state for '" + name + "' has wrong shape");
        s.m = widen(m->values);
        s.v = widen(v->values);
      } else {
        s.m.assign(shape_numel(shape), 0.0);
        s.v.assign(shape_numel(shape), 0.0);
      }
      s.t = steps;
      states.push_back(std::move(s));
    }
    out.optimizer = std::move(states);
  }
  if (const auto* rd = contents.find_record("registry.d_embd")) {
    out.registry = registry_from_tensors(contents, parse_u64(*rd, "registry.d_embd"), kRegistryPrefix);
  }
  return out;
}

void round_to_stored_precision(ModelParams& params) {
  for (auto& nt : params.named_tensors()) {
    for (double& v : nt.tensor.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

void save_registry_snapshot(const std::filesystem::path& path, const EntityRegistry& registry) {
  TensorFileContents contents;
  contents.kind = kRegistryKind;
  contents.record.emplace_back("d_embd", std::to_string(registry.d_embd()));
  for (const auto& [key, vec] : registry.entries()) {
    contents.tensors.push_back({key.doc_id + "/" + std::to_string(key.entity_id), {vec.size()}, to_stored(vec)});
  }
  write_tensor_file(path, contents);
}

EntityRegistry load_registry_snapshot(const std::filesystem::path& path) {
  const TensorFileContents contents = read_tensor_file(path);
  if (contents.kind != kRegistryKind) {
    throw CheckpointError(path.string() + " holds a '" + contents.kind + "' file, not a registry snapshot");
  }
  return registry_from_tensors(contents, parse_u64(required(contents, "d_embd"), "d_embd"), "");
}

}  // namespace entlm
