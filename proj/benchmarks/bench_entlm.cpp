#include <benchmark/benchmark.h>

#include <random>

#include "entlm/bpe.hpp"
#include "entlm/corpus.hpp"
#include "entlm/model.hpp"
#include "entlm/ops.hpp"
#include "entlm/trainer.hpp"

using namespace entlm;

namespace {

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = n(rng);
  return Tensor::from({r, c}, std::move(v));
}

ModelConfig desk(bool entity) {
  ModelConfig c;
  c.entity_attention = entity;
  return c;
}

const TrainingStream& toy_stream() {
  static const TrainingStream s = [] {
    const auto docs = read_column_file(ENTLM_BENCH_DATA);
    return build_stream(docs, bpe_train(word_corpus(docs), 8000), 80);
  }();
  return s;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_Forward(benchmark::State& state) {
  const bool entity = state.range(0) != 0;
  const auto s = static_cast<std::size_t>(state.range(1));
  const ModelParams p = ModelParams::initialize(desk(entity), 1);
  std::vector<TokenId> ids(s);
  for (std::size_t i = 0; i < s; ++i) ids[i] = static_cast<TokenId>((i * 37) % p.config.vocab_size);
  const Tensor e = Tensor::ones({s, p.config.d_embd});
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, ids, e));
  state.SetLabel(entity ? "entity" : "baseline");
}
BENCHMARK(BM_Forward)->Args({0, 64})->Args({1, 64})->Args({0, 128})->Args({1, 128})->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  const bool entity = state.range(0) != 0;
  Trainer trainer(ModelParams::initialize(desk(entity), 1), AdamHyperParams{});
  const TrainingStream& s = toy_stream();
  std::size_t i = 0;
  for (auto _ : state) {
    const Window& w = s.windows[i++ % s.windows.size()];
    if (w.size() >= 2) benchmark::DoNotOptimize(trainer.train_step(w));
  }
  state.SetLabel(entity ? "entity" : "baseline");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_BpeEncode(benchmark::State& state) {
  const auto docs = read_column_file(ENTLM_BENCH_DATA);
  const BpeVocab vocab = bpe_train(word_corpus(docs), 8000);
  std::size_t tokens = 0;
  for (auto _ : state) {
    for (const auto& d : docs) {
      const SubtokenSequence seq = encode(d.tokens, d.entity_ids, d.pos_tags, vocab);
      tokens += seq.size();
      benchmark::DoNotOptimize(seq);
    }
  }
  state.SetItemsProcessed(static_cast<int64_t>(tokens));
}
BENCHMARK(BM_BpeEncode);
BENCHMARK_MAIN();
