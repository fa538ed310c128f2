#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "entlm/analysis.hpp"
#include "entlm/bpe.hpp"
#include "entlm/checkpoint.hpp"
#include "entlm/corpus.hpp"
#include "entlm/errors.hpp"
#include "entlm/trainer.hpp"
#include "run_config.hpp"

namespace entlm::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kCheckpointFile = "checkpoint.entlm";
constexpr const char* kMetricsFile = "metrics.jsonl";

void setup_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_logger_mt("entlm");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("ENTLM_LOG"); env && *env) level = spdlog::level::from_str(env);
  spdlog::set_level(level);
}

// Flags shared by the subcommands; each subcommand registers the ones it takes.
struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> entity_attention;
  std::string data;
  std::string ckpt;
  std::string out;
  std::optional<std::string> format;
  std::string vocab;
  std::optional<std::size_t> vocab_size;
  std::optional<std::size_t> steps;
  std::string mode = "both";
  std::string export_path;
  bool isolated = false;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.train.seed = *o.seed;
  if (o.entity_attention) c.set("model.entity_attention", *o.entity_attention);
  if (!o.data.empty()) c.data.train = o.data;
  if (o.format) c.set("data.format", *o.format);
  if (!o.vocab.empty()) c.data.vocab = o.vocab;
  if (o.vocab_size) c.data.vocab_size = *o.vocab_size;
  if (o.steps) c.train.max_steps = *o.steps;
  if (!o.out.empty()) c.train.checkpoint_dir = o.out;
  return c;
}

CorpusFormat format_or(const Options& o, CorpusFormat fallback) {
  return o.format ? parse_corpus_format(*o.format) : fallback;
}

std::vector<AnnotatedDocument> load_docs(const std::string& path, CorpusFormat format) {
  auto docs = read_documents(path, format);
  spdlog::info("read {} documents from {} ({})", docs.size(), path, corpus_format_name(format));
  return docs;
}

BpeVocab resolve_vocab(const RunConfig& c, const std::vector<AnnotatedDocument>& train_docs) {
  if (!c.data.vocab.empty()) return BpeVocab::load(c.data.vocab);
  spdlog::info("training tokenizer to {} ids", c.data.vocab_size);
  return bpe_train(word_corpus(train_docs), c.data.vocab_size);
}

void check_vocab_fits(const BpeVocab& vocab, const ModelConfig& model) {
  if (vocab.size() > model.vocab_size) {
    throw ConfigError("tokenizer has " + std::to_string(vocab.size()) + " ids but model.vocab_size is " +
                      std::to_string(model.vocab_size));
  }
}

int cmd_tokenizer_train(const Options& o, std::ostream& out) {
  RunConfig c = resolve_config(o);
  if (c.data.train.empty()) throw ConfigError("tokenizer-train needs --data");
  if (o.out.empty()) throw ConfigError("tokenizer-train needs --out");
  const auto docs = load_docs(c.data.train, c.data.format);
  const BpeVocab vocab = bpe_train(word_corpus(docs), c.data.vocab_size);
  vocab.save(o.out);
  out << "wrote " << vocab.size() << " ids (" << vocab.merges().size() << " merges) to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig c = resolve_config(o);
  if (c.data.train.empty()) throw ConfigError("train needs training data (--data or data.train)");
  if (c.train.checkpoint_dir.empty()) throw ConfigError("train needs an output directory (--out or train.checkpoint_dir)");

  std::optional<LoadedCheckpoint> resume;
  if (!o.ckpt.empty()) {
    resume = load_checkpoint(o.ckpt, &c.model);
    if (c.data.vocab.empty() && !resume->meta.vocab.empty()) {
      // Keep the tokenizer the checkpoint was trained with.
      c.data.vocab = "<checkpoint>";
    }
  }
  c.validate();

  const auto train_docs = load_docs(c.data.train, c.data.format);
  const BpeVocab vocab = c.data.vocab == "<checkpoint>" ? BpeVocab::from_text(resume->meta.vocab)
                                                        : resolve_vocab(c, train_docs);
  check_vocab_fits(vocab, c.model);
  const TrainingStream stream = build_stream(train_docs, vocab, c.train.seq_len);
  if (stream.empty()) throw InputError("training data " + c.data.train + " holds no tokens");
  std::optional<TrainingStream> valid;
  if (!c.data.valid.empty()) valid = build_stream(load_docs(c.data.valid, c.data.format), vocab, c.train.seq_len);

  // Everything is validated; from here on outputs are written.
  const fs::path dir = c.train.checkpoint_dir;
  fs::create_directories(dir);
  AdamHyperParams hp;
  hp.lr = c.train.learning_rate;
  Trainer trainer(resume ? std::move(resume->params) : ModelParams::initialize(c.model, c.train.seed), hp);
  if (resume) {
    if (resume->optimizer) trainer.optimizer().restore(*resume->optimizer, resume->meta.step);
    if (resume->registry) trainer.registry() = *resume->registry;
    trainer.set_step(resume->meta.step);
    spdlog::info("resuming from {} at step {}", o.ckpt, resume->meta.step);
  }
  MetricsLog log(dir / kMetricsFile, resume.has_value());
  CheckpointMeta meta;
  meta.seed = c.train.seed;
  meta.seq_len = c.train.seq_len;
  meta.vocab = vocab.to_text();

  auto save = [&] {
    meta.step = trainer.step();
    save_checkpoint(dir / kCheckpointFile, trainer.params(), meta, &trainer.optimizer(), &trainer.registry());
  };
  double last_loss = 0.0;
  trainer.run(stream, c.train.max_steps, [&](const StepReport& r) {
    log.write(r);
    last_loss = r.loss;
    spdlog::debug("step {} loss {:.6f} ({:.3f}s, {} registry updates)", r.step, r.loss, r.seconds,
                  r.registry_updates);
    if (r.step % c.train.val_every == 0) {
      spdlog::info("step {} loss {:.4f}", r.step, r.loss);
      if (valid && !valid->empty()) {
        const EvalReport e = evaluate_perplexity(trainer.params(), *valid);
        log.write(r.step, e, "valid");
        spdlog::info("step {} valid loss {:.4f} ppl {:.3f}", r.step, e.mean_nll, e.perplexity);
      }
      save();
    }
  });
  save();
  out << "trained to step " << trainer.step() << ", last loss " << last_loss << ", checkpoint "
      << (dir / kCheckpointFile).string() << '\n';
  return kExitOk;
}

struct LoadedModel {
  LoadedCheckpoint ckpt;
  BpeVocab vocab;
};

LoadedModel load_model(const Options& o) {
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  LoadedModel m{load_checkpoint(o.ckpt), {}};
  if (!o.vocab.empty()) {
    m.vocab = BpeVocab::load(o.vocab);
  } else if (!m.ckpt.meta.vocab.empty()) {
    m.vocab = BpeVocab::from_text(m.ckpt.meta.vocab);
  } else {
    throw ConfigError("checkpoint carries no tokenizer; pass --vocab");
  }
  check_vocab_fits(m.vocab, m.ckpt.params.config);
  return m;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.data.empty()) throw ConfigError("eval needs --data");
  const CorpusFormat format = format_or(o, CorpusFormat::kColumn);
  const LoadedModel m = load_model(o);
  const std::size_t seq_len = std::min(m.ckpt.meta.seq_len, m.ckpt.params.config.max_seq_len);
  const TrainingStream stream = build_stream(load_docs(o.data, format), m.vocab, seq_len);
  const EvalReport r = evaluate_perplexity(m.ckpt.params, stream);
  if (!o.out.empty()) MetricsLog(o.out, true).write(m.ckpt.meta.step, r, "eval");
  out << "tokens " << r.tokens << "  mean_nll " << r.mean_nll << "  perplexity " << r.perplexity << '\n';
  return kExitOk;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  if (o.data.empty()) throw ConfigError("analyze needs --data");
  std::vector<MentionMode> modes;
  if (o.mode == "both") {
    modes = {MentionMode::kWithEntities, MentionMode::kWithoutEntities};
  } else {
    try {
      modes = {parse_mention_mode(o.mode)};
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }
  const CorpusFormat format = format_or(o, CorpusFormat::kColumn);
  const LoadedModel m = load_model(o);
  const std::size_t seq_len = std::min(m.ckpt.meta.seq_len, m.ckpt.params.config.max_seq_len);
  const TrainingStream stream = build_stream(load_docs(o.data, format), m.vocab, seq_len);

  std::vector<SimilarityReport> reports;
  std::vector<MentionRecord> all_mentions;
  for (MentionMode mode : modes) {
    ExtractOptions opts;
    opts.mode = mode;
    opts.isolated = o.isolated;
    Extraction ex = extract_mentions(m.ckpt.params, stream, opts);
    reports.push_back(build_report(ex.mentions, ex.registry, mode));
    all_mentions.insert(all_mentions.end(), std::make_move_iterator(ex.mentions.begin()),
                        std::make_move_iterator(ex.mentions.end()));
  }
  if (all_mentions.empty()) spdlog::warn("no entity mentions in {}; the report is empty", o.data);
  out << format_report_table(reports);
  if (!o.out.empty()) write_file_atomically(o.out, format_report_json_lines(reports));
  if (!o.export_path.empty()) export_embeddings(all_mentions, o.export_path);
  return kExitOk;
}

int cmd_overhead(const Options& o, std::ostream& out) {
  RunConfig c = resolve_config(o);
  if (c.data.train.empty()) throw ConfigError("overhead needs training data (--data or data.train)");
  const std::size_t n_steps = o.steps.value_or(100);
  if (n_steps < kOverheadWarmupSteps) {
    throw ConfigError("--steps must be at least " + std::to_string(kOverheadWarmupSteps));
  }
  c.validate();
  const auto docs = load_docs(c.data.train, c.data.format);
  const BpeVocab vocab = resolve_vocab(c, docs);
  check_vocab_fits(vocab, c.model);
  const TrainingStream stream = build_stream(docs, vocab, c.train.seq_len);
  const OverheadReport r = measure_overhead(c.model, c.train, stream, n_steps);
  nlohmann::ordered_json j = {{"steps", r.steps},
                              {"baseline_seconds", r.baseline_seconds},
                              {"entity_seconds", r.entity_seconds},
                              {"ratio", r.ratio}};
  if (!o.out.empty()) write_file_atomically(o.out, j.dump() + "\n");
  out << "baseline " << r.baseline_seconds << " s/step  entity " << r.entity_seconds << " s/step  ratio " << r.ratio
      << " over " << r.steps << " steps\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  setup_logging();
  CLI::App app{"Entity-aware GPT-2 style language model", "entlm"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration file");
    sub->add_option("--set", o.overrides, "Override a configuration key (section.key=value)");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "Corpus file");
    sub->add_option("--format", o.format, "Corpus format: column, plain or records");
  };

  auto* tok = app.add_subcommand("tokenizer-train", "Train a BPE vocabulary");
  add_config(tok);
  add_data(tok);
  tok->add_option("--vocab-size", o.vocab_size, "Target number of ids");
  tok->add_option("--out", o.out, "Vocabulary file to write");

  auto* train = app.add_subcommand("train", "Train a model");
  add_config(train);
  add_data(train);
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--entity-attention", o.entity_attention, "true for GPT2E, false for the baseline");
  train->add_option("--ckpt", o.ckpt, "Checkpoint to resume from");
  train->add_option("--out", o.out, "Output directory");
  train->add_option("--vocab", o.vocab, "Existing vocabulary file");
  train->add_option("--steps", o.steps, "Total number of training steps");

  auto* eval = app.add_subcommand("eval", "Perplexity of a checkpoint on a corpus");
  add_data(eval);
  eval->add_option("--ckpt", o.ckpt, "Checkpoint");
  eval->add_option("--vocab", o.vocab, "Vocabulary file overriding the checkpoint's");
  eval->add_option("--out", o.out, "Metrics log to append to");

  auto* analyze = app.add_subcommand("analyze", "Mention and entity cosine similarity report");
  add_data(analyze);
  analyze->add_option("--ckpt", o.ckpt, "Checkpoint");
  analyze->add_option("--vocab", o.vocab, "Vocabulary file overriding the checkpoint's");
  analyze->add_option("--mode", o.mode, "with, without or both")->check(CLI::IsMember({"with", "without", "both", "with-entities", "without-entities"}));
  analyze->add_option("--out", o.out, "Report as JSON lines");
  analyze->add_option("--export", o.export_path, "Mention embeddings as JSON lines");
  analyze->add_flag("--no-context", o.isolated, "Feed each mention alone, without its sentence");

  auto* overhead = app.add_subcommand("overhead", "Step time of entity mode over baseline mode");
  add_config(overhead);
  add_data(overhead);
  overhead->add_option("--seed", o.seed, "Random seed");
  overhead->add_option("--vocab", o.vocab, "Existing vocabulary file");
  overhead->add_option("--steps", o.steps, "Timed steps (default 100)");
  overhead->add_option("--out", o.out, "Report as JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (tok->parsed()) return cmd_tokenizer_train(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (analyze->parsed()) return cmd_analyze(o, out);
    if (overhead->parsed()) return cmd_overhead(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace entlm::cli
