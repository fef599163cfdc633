#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "mmt/config/run_config.hpp"
#include "mmt/corpus/batching.hpp"
#include "mmt/corpus/toy.hpp"
#include "mmt/eval/translate.hpp"
#include "mmt/model/registry.hpp"
#include "mmt/probe/probe.hpp"
#include "mmt/train/trainer.hpp"

namespace mmt::workflow {

/// A generated toy family: the language specs, the multi-parallel corpus and
/// synthetic inference pairs (train and test) rendered in every language.
struct ToyDataset {
    std::vector<corpus::ToyLanguageSpec> specs;
    corpus::MultiParallelCorpus corpus;
    std::map<LanguageId, std::vector<probe::InferencePair>> nli_train;
    std::map<LanguageId, std::vector<probe::InferencePair>> nli_test;
};

/// The first `n_langs` of the default toy family (at most 5).
ToyDataset make_toy_dataset(std::size_t n_langs, std::size_t sentences, std::uint64_t seed,
                            std::size_t nli_train = 900, std::size_t nli_test = 300);

/// Corpus files plus `lexicon.<lang>.txt` and `nli.<split>.<lang>.tsv`.
void save_toy_dataset(const ToyDataset& data, const std::filesystem::path& dir);
/// Loads what save_toy_dataset wrote; lexicons and inference files are optional.
ToyDataset load_toy_dataset(const std::filesystem::path& dir);

/// One BPE tokenizer per language, learned from that language's train split.
std::vector<std::shared_ptr<const tok::Tokenizer>> train_tokenizers(const corpus::MultiParallelCorpus& corpus,
                                                                   std::span<const LanguageId> langs,
                                                                   std::size_t merges);

std::shared_ptr<const corpus::EncodedCorpus> encode_corpus(const corpus::MultiParallelCorpus& corpus,
                                                           const model::ModuleRegistry& registry);

/// `<dir>/languages.txt`, `<lang>.ckpt` and `<lang>.bpe` for every language.
void save_registry(const model::ModuleRegistry& registry, const std::filesystem::path& dir);
model::ModuleRegistry load_registry(const std::filesystem::path& dir);
/// Writes just one language's files and appends it to languages.txt.
void save_language(const model::ModuleRegistry& registry, const LanguageId& lang, const std::filesystem::path& dir);

struct InitialRun {
    model::ModuleRegistry registry;
    train::TrainHistory history;
};

/// Tokenizers, module initialization and training on `config.languages`.
InitialRun train_initial(const corpus::MultiParallelCorpus& corpus, const config::RunConfig& config,
                         std::ostream* log = nullptr);

/// Trains the new language's modules against the frozen anchor and adds
/// them to the registry. Initialization uses the same per-language seed rule.
train::TrainHistory add_new_language(model::ModuleRegistry& registry, const corpus::MultiParallelCorpus& corpus,
                                     const LanguageId& lang, const LanguageId& anchor, train::TrainSide side,
                                     const config::RunConfig& config, std::ostream* log = nullptr);

/// Per-step training losses as CSV `step,src,tgt,mode,loss`.
std::string history_csv(const train::TrainHistory& history);

} // namespace mmt::workflow
