#include <benchmark/benchmark.h>

#include "eduqg/checkpoint.hpp"
#include "eduqg/generation.hpp"
#include "eduqg/metrics.hpp"
#include "eduqg/synthetic.hpp"
#include "eduqg/textproc.hpp"
#include "eduqg/trainer.hpp"

namespace {

using namespace eduqg;

struct Fixture {
  std::vector<QGExample> examples;
  std::shared_ptr<const Tokenizer> tokenizer;
  Checkpoint model;

  static const Fixture& get() {
    static const Fixture f = [] {
      SyntheticOptions opts;
      opts.abstracts = 10;
      opts.squad_train = 10;
      opts.squad_dev = 10;
      opts.sciq_train = 200;
      opts.sciq_validation = 10;
      opts.sciq_test = 10;
      opts.reference_sentences = 10;
      const auto corpus = generate_synthetic(opts);
      Fixture out;
      std::vector<std::string> texts;
      for (const auto& r : corpus.sciq_train) {
        QGExample ex;
        ex.id = std::to_string(out.examples.size());
        ex.context = r.at("support");
        ex.question = r.at("question");
        texts.push_back(ex.context);
        texts.push_back(ex.question);
        out.examples.push_back(std::move(ex));
      }
      out.tokenizer = std::make_shared<const Tokenizer>(build_vocabulary(texts));
      out.model = init_model(ModelConfig::toy(out.tokenizer->vocab_size()), out.tokenizer, 1);
      return out;
    }();
    return f;
  }
};

void BM_TokenizerEncode(benchmark::State& state) {
  const auto& f = Fixture::get();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.tokenizer->encode(f.examples[i++ % f.examples.size()].context));
  }
}
BENCHMARK(BM_TokenizerEncode);

void BM_CorpusBleu(benchmark::State& state) {
  const auto& f = Fixture::get();
  std::vector<std::string> hyps;
  std::vector<std::string> refs;
  for (std::size_t i = 0; i < f.examples.size(); ++i) {
    hyps.push_back(f.examples[i].question);
    refs.push_back(f.examples[(i + 1) % f.examples.size()].question);
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu_n(hyps, refs, 4));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(hyps.size()));
}
BENCHMARK(BM_CorpusBleu);

void BM_TrainStepBatch(benchmark::State& state) {
  const auto& f = Fixture::get();
  std::vector<SeqPair> batch;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    batch.push_back(make_qg_pair(f.examples[static_cast<std::size_t>(i)], *f.tokenizer, {}));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(batch_loss(f.model.config, f.model.params, batch, 0, true, 1));
  }
}
BENCHMARK(BM_TrainStepBatch)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_BeamDecode(benchmark::State& state) {
  const auto& f = Fixture::get();
  const auto input = encode_context(f.examples[0].context, *f.tokenizer, {});
  const auto vocab = DecodeVocab::from(*f.tokenizer);
  const auto spec = DecodeSpec::beam(static_cast<std::size_t>(state.range(0)), 24, 1.0);
  for (auto _ : state) {
    const auto session = start_session(f.model, input);
    benchmark::DoNotOptimize(decode(*session, vocab, spec));
  }
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
