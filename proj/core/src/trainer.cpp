#include "entlm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include <json.hpp>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string step_dump(std::uint64_t step, const Window& window, double loss) {
  std::ostringstream out;
  out << "non-finite loss " << loss << " at step " << step << " (document '" << window.doc_id << "', "
      << window.size() << " tokens)\n  ids:";
  for (TokenId id : window.tokens.ids) out << ' ' << id;
  out << "\n  entities:";
  for (const EntityRef& e : window.tokens.entity_ids) out << ' ' << entity_string(e);
  return out.str();
}

std::vector<const Window*> trainable_windows(const TrainingStream& stream) {
  std::vector<const Window*> out;
  for (const Window& w : stream.windows) {
    if (w.size() >= 2) out.push_back(&w);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be positive");
  if (max_steps < 1) throw ConfigError("train.max_steps must be at least 1");
  if (val_every < 1) throw ConfigError("train.val_every must be at least 1");
  if (seq_len < 2) throw ConfigError("train.seq_len must be at least 2");
}

Trainer::Trainer(ModelParams params, AdamHyperParams hp)
    : params_(std::move(params)), optimizer_(params_.tensors(), hp), registry_(params_.config.d_embd) {
  params_.set_requires_grad(true);
}

StepReport Trainer::train_step(const Window& window) {
  const auto& ids = window.tokens.ids;
  const auto& entity_ids = window.tokens.entity_ids;
  if (ids.size() < 2) throw LengthError("training window needs at least 2 tokens, got " + std::to_string(ids.size()));
  const bool entity_mode = params_.config.entity_attention;

  const auto start = Clock::now();
  if (window.starts_document) registry_.reset_document(window.doc_id);

  Tensor entities;
  if (entity_mode) entities = registry_.fetch_entity_matrix(window.doc_id, entity_ids);

  optimizer_.zero_grad();
  ForwardOutput out;
  Tensor loss;
  {
    TapeScope scope(tape_);
    out = forward(params_, ids, entities);
    loss = next_token_loss(out, ids);
    if (!std::isfinite(loss.item())) {
      tape_.clear();
      throw NumericalError(step_dump(step_ + 1, window, loss.item()));
    }
    tape_.backward(loss);
  }
  optimizer_.step();

  std::size_t committed = 0;
  if (entity_mode) {
    const auto updates = stage_updates(out.activations.final_hidden(), window.doc_id, entity_ids);
    registry_.commit(updates);
    committed = updates.size();
  }

  ++step_;
  StepReport report;
  report.step = step_;
  report.loss = loss.item();
  report.tokens = ids.size();
  report.registry_updates = committed;
  report.seconds = seconds_since(start);
  return report;
}

void Trainer::run(const TrainingStream& stream, std::size_t max_steps,
                  const std::function<void(const StepReport&)>& on_step) {
  const auto windows = trainable_windows(stream);
  if (windows.empty()) throw InputError("training stream has no window with at least 2 tokens");
  while (step_ < max_steps) {
    const Window& w = *windows[step_ % windows.size()];
    StepReport report = train_step(w);
    if (on_step) on_step(report);
  }
}

EvalReport evaluate_perplexity(const ModelParams& params, const TrainingStream& stream) {
  const auto start = Clock::now();
  const bool entity_mode = params.config.entity_attention;
  EntityRegistry registry(params.config.d_embd);
  double total_nll = 0.0;
  std::size_t predictions = 0;
  for (const Window& w : stream.windows) {
    if (w.starts_document) registry.reset_document(w.doc_id);
    const auto& ids = w.tokens.ids;
    Tensor entities;
    if (entity_mode) entities = registry.fetch_entity_matrix(w.doc_id, w.tokens.entity_ids);
    ForwardOutput out = forward(params, ids, entities);
    if (ids.size() >= 2) {
      const double mean = next_token_loss(out, ids).item();
      total_nll += mean * static_cast<double>(ids.size() - 1);
      predictions += ids.size() - 1;
    }
    if (entity_mode) registry.commit(stage_updates(out.activations.final_hidden(), w.doc_id, w.tokens.entity_ids));
  }
  if (predictions == 0) throw InputError("evaluation stream has no next-token predictions");
  EvalReport report;
  report.tokens = predictions;
  report.mean_nll = total_nll / static_cast<double>(predictions);
  report.perplexity = std::exp(report.mean_nll);
  report.seconds = seconds_since(start);
  return report;
}

OverheadReport measure_overhead(const ModelConfig& model, const TrainConfig& train, const TrainingStream& stream,
                                std::size_t n_steps) {
  if (n_steps < kOverheadWarmupSteps) {
    throw ConfigError("overhead measurement needs at least " + std::to_string(kOverheadWarmupSteps) +
                      " steps, got " + std::to_string(n_steps));
  }
  const auto windows = trainable_windows(stream);
  if (windows.empty()) throw InputError("overhead stream has no window with at least 2 tokens");

  ModelConfig base_cfg = model;
  base_cfg.entity_attention = false;
  ModelConfig entity_cfg = model;
  entity_cfg.entity_attention = true;
  AdamHyperParams hp;
  hp.lr = train.learning_rate;
  Trainer baseline(ModelParams::initialize(base_cfg, train.seed), hp);
  Trainer entity(ModelParams::initialize(entity_cfg, train.seed), hp);

  for (std::size_t i = 0; i < kOverheadWarmupSteps; ++i) {
    const Window& w = *windows[i % windows.size()];
    baseline.train_step(w);
    entity.train_step(w);
  }
  double base_total = 0.0, entity_total = 0.0;
  for (std::size_t i = 0; i < n_steps; ++i) {
    const Window& w = *windows[(kOverheadWarmupSteps + i) % windows.size()];
    base_total += baseline.train_step(w).seconds;
    entity_total += entity.train_step(w).seconds;
  }
  OverheadReport report;
  report.steps = n_steps;
  report.baseline_seconds = base_total / static_cast<double>(n_steps);
  report.entity_seconds = entity_total / static_cast<double>(n_steps);
  report.ratio = report.entity_seconds / report.baseline_seconds;
  return report;
}

MetricsLog::MetricsLog(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw IoError("cannot open metrics log " + path.string());
}

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void MetricsLog::write(const StepReport& r) {
  nlohmann::ordered_json j = {{"type", "step"},   {"step", r.step},       {"loss", r.loss},
                              {"tokens", r.tokens}, {"registry_updates", r.registry_updates},
                              {"time", r.seconds},  {"timestamp", timestamp()}};
  out_ << j.dump() << '\n';
  out_.flush();
}

void MetricsLog::write(std::uint64_t step, const EvalReport& r, const std::string& split) {
  nlohmann::ordered_json j = {{"type", "eval"},  {"split", split},        {"step", step},
                              {"loss", r.mean_nll}, {"ppl", r.perplexity}, {"tokens", r.tokens},
                              {"time", r.seconds},  {"timestamp", timestamp()}};
  out_ << j.dump() << '\n';
  out_.flush();
}

}  // namespace entlm
