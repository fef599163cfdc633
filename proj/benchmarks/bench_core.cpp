#include <benchmark/benchmark.h>

#include "mmt/autodiff/ops.hpp"
#include "mmt/eval/bleu.hpp"
#include "mmt/workflow/workflow.hpp"

using namespace mmt;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

struct World {
    workflow::ToyDataset data;
    model::ModuleRegistry registry;
    std::shared_ptr<const corpus::EncodedCorpus> encoded;
};

const World& world() {
    static const World w = [] {
        World out{workflow::make_toy_dataset(4, 500, 1, 0, 0), {}, nullptr};
        auto toks = workflow::train_tokenizers(out.data.corpus, out.data.corpus.langs(), 200);
        out.registry = model::init_modules(toks, model::ModelConfig::desk(), 1);
        out.encoded = workflow::encode_corpus(out.data.corpus, out.registry);
        return out;
    }();
    return w;
}

} // namespace

static void BM_MatmulForwardBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    auto a = ad::Tensor::parameter({n, 64}, random_values(n * 64, rng));
    auto b = ad::Tensor::parameter({64, 64}, random_values(64 * 64, rng));
    for (auto _ : state) {
        auto g = ad::backward(ad::sum(ad::matmul(a, b)));
        benchmark::DoNotOptimize(g);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(4)->Range(16, 1024);

static void BM_AttentionForwardBackward(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const std::size_t batch = 16, d = 64;
    Rng rng(2);
    auto q = ad::Tensor::parameter({batch * len, d}, random_values(batch * len * d, rng));
    auto k = ad::Tensor::parameter({batch * len, d}, random_values(batch * len * d, rng));
    auto v = ad::Tensor::parameter({batch * len, d}, random_values(batch * len * d, rng));
    ad::AttentionLayout layout{.heads = 4, .batch = batch, .query_len = len, .key_len = len, .causal = true};
    for (auto _ : state) {
        auto g = ad::backward(ad::sum(ad::attention(q, k, v, layout)));
        benchmark::DoNotOptimize(g);
    }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(8)->Arg(16)->Arg(32);

static void BM_BpeTrain(benchmark::State& state) {
    const auto& w = world();
    const LanguageId en("en");
    const auto lines = w.data.corpus.split_lines(en, corpus::Split::Train);
    for (auto _ : state) {
        auto t = tok::train_bpe(en, lines, static_cast<std::size_t>(state.range(0)));
        benchmark::DoNotOptimize(t);
    }
}
BENCHMARK(BM_BpeTrain)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_TrainingStepFar(benchmark::State& state) {
    const auto& w = world();
    auto registry = w.registry.clone();
    const auto langs = w.data.corpus.langs();
    const auto schedule = sched::frozen_schedule(langs, sched::Preset::Far);
    train::CorpusBatchSource source(w.encoded, static_cast<std::size_t>(state.range(0)), 1);
    train::ModuleOptimizers opt(train::AdamConfig{});
    Rng rng(3);
    for (auto _ : state) {
        auto losses = train::multilingual_training_step(registry, schedule, source, opt, rng);
        benchmark::DoNotOptimize(losses);
    }
}
BENCHMARK(BM_TrainingStepFar)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Decode(benchmark::State& state) {
    const auto& w = world();
    const LanguageId de("de"), en("en");
    const auto lines = w.data.corpus.split_lines(de, corpus::Split::Test);
    eval::DecodeConfig cfg;
    cfg.beam_size = static_cast<std::size_t>(state.range(0));
    cfg.strategy = cfg.beam_size == 1 ? eval::Strategy::Greedy : eval::Strategy::Beam;
    cfg.max_len = 24;
    for (auto _ : state) {
        auto out = eval::translate_all(w.registry, de, en, lines, cfg);
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(lines.size()));
}
BENCHMARK(BM_Decode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_CorpusBleu(benchmark::State& state) {
    const auto& w = world();
    const auto hyp = w.data.corpus.split_lines(LanguageId("en"), corpus::Split::Train);
    auto ref = hyp;
    for (std::size_t i = 0; i < ref.size(); i += 3) ref[i] += " extra";
    for (auto _ : state) benchmark::DoNotOptimize(eval::bleu(hyp, ref));
}
BENCHMARK(BM_CorpusBleu);

BENCHMARK_MAIN();
