#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"
#include "entlm/optim.hpp"
#include "entlm/registry.hpp"

namespace entlm {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t max_steps = 1000;
  std::size_t val_every = 100;
  std::size_t seq_len = kDefaultSeqLen;
  std::uint64_t seed = 42;
  bool entity_attention = true;
  std::string checkpoint_dir;

  void validate() const;
};

struct StepReport {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::size_t tokens = 0;
  double seconds = 0.0;
  std::size_t registry_updates = 0;
};

struct EvalReport {
  double mean_nll = 0.0;
  double perplexity = 0.0;
  std::size_t tokens = 0;
  double seconds = 0.0;
};

// Owns the parameters, optimizer state, tape and entity registry of one
// training stream. Each step is one window (batch size 1):
//
//   fetch entities -> forward -> loss -> backward -> Adam
//   -> stage mention-final hidden states -> commit
//
// so the entities a step sees are exactly the commits of earlier steps.
class Trainer {
 public:
  Trainer(ModelParams params, AdamHyperParams hp);

  // Throws LengthError for windows shorter than 2 and NumericalError, with a
  // dump of the step inputs, when the loss is not finite.
  StepReport train_step(const Window& window);

  // Trains until `max_steps` total steps, cycling over the windows of
  // length >= 2 in stream order.
  void run(const TrainingStream& stream, std::size_t max_steps,
           const std::function<void(const StepReport&)>& on_step = {});

  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  const EntityRegistry& registry() const noexcept { return registry_; }
  EntityRegistry& registry() noexcept { return registry_; }
  const AdamOptimizer& optimizer() const noexcept { return optimizer_; }
  AdamOptimizer& optimizer() noexcept { return optimizer_; }

  std::uint64_t step() const noexcept { return step_; }
  // Resume support: continue counting from `step`.
  void set_step(std::uint64_t step) noexcept { step_ = step; }

 private:
  ModelParams params_;
  AdamOptimizer optimizer_;
  EntityRegistry registry_;
  Tape tape_;
  std::uint64_t step_ = 0;
};

// Token-weighted next-token NLL over the stream with frozen parameters. A
// fresh registry is threaded through each document exactly as in training.
EvalReport evaluate_perplexity(const ModelParams& params, const TrainingStream& stream);

struct OverheadReport {
  double baseline_seconds = 0.0;
  double entity_seconds = 0.0;
  double ratio = 0.0;
  std::size_t steps = 0;
};

inline constexpr std::size_t kOverheadWarmupSteps = 10;

// Mean training-step time of entity mode over baseline mode on identical
// data, seed and configuration. Both models warm up for 10 steps; the timed
// steps are interleaved.
OverheadReport measure_overhead(const ModelConfig& model, const TrainConfig& train, const TrainingStream& stream,
                                std::size_t n_steps);

// Line-delimited JSON metrics. "time" and "timestamp" are the only
// wall-clock-dependent fields.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path, bool append = false);

  void write(const StepReport& report);
  void write(std::uint64_t step, const EvalReport& report, const std::string& split);

 private:
  std::ofstream out_;
};

}  // namespace entlm
