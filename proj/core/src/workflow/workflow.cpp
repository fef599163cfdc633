#include "mmt/workflow/workflow.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmt/model/checkpoint.hpp"

namespace mmt::workflow {

namespace fs = std::filesystem;

ToyDataset make_toy_dataset(std::size_t n_langs, std::size_t sentences, std::uint64_t seed, std::size_t nli_train,
                            std::size_t nli_test) {
    auto defs = corpus::default_toy_languages();
    if (n_langs < 2 || n_langs > defs.size()) {
        throw Error("toy family has 2 to " + std::to_string(defs.size()) + " languages, asked for " +
                    std::to_string(n_langs));
    }
    defs.resize(n_langs);
    ToyDataset d{corpus::make_toy_specs(defs, seed), {}, {}, {}};
    d.corpus = corpus::generate_toy_corpus(d.specs, sentences, corpus::kMinLength, corpus::kMaxLength, seed).corpus;
    if (nli_train + nli_test > 0) {
        auto all = probe::generate_inference_data(d.specs, nli_train + nli_test, seed);
        for (auto& [lang, rows] : all) {
            d.nli_train[lang].assign(rows.begin(), rows.begin() + static_cast<long>(nli_train));
            d.nli_test[lang].assign(rows.begin() + static_cast<long>(nli_train), rows.end());
        }
    }
    return d;
}

void save_toy_dataset(const ToyDataset& data, const fs::path& dir) {
    data.corpus.save(dir);
    for (const auto& spec : data.specs) {
        std::ofstream os(dir / ("lexicon." + spec.lang.str() + ".txt"), std::ios::binary);
        if (!os) throw Error("cannot write lexicon for " + spec.lang.str() + " in " + dir.string());
        os << "order " << corpus::to_string(spec.order) << "\n";
        for (const auto& w : spec.lexicon) os << w << "\n";
    }
    for (const auto& [lang, rows] : data.nli_train) probe::save_inference_tsv(rows, dir / ("nli.train." + lang.str() + ".tsv"));
    for (const auto& [lang, rows] : data.nli_test) probe::save_inference_tsv(rows, dir / ("nli.test." + lang.str() + ".tsv"));
}

ToyDataset load_toy_dataset(const fs::path& dir) {
    ToyDataset d;
    d.corpus = corpus::MultiParallelCorpus::load(dir);
    for (const auto& lang : d.corpus.langs()) {
        const auto lex = dir / ("lexicon." + lang.str() + ".txt");
        if (fs::exists(lex)) {
            std::ifstream is(lex, std::ios::binary);
            std::string first;
            std::getline(is, first);
            if (first.rfind("order ", 0) != 0) throw Error(lex.string() + ": missing order line");
            corpus::ToyLanguageSpec spec{lang, {}, corpus::parse_order_rule(first.substr(6))};
            for (std::string w; std::getline(is, w);) {
                if (!w.empty()) spec.lexicon.push_back(w);
            }
            spec.validate();
            d.specs.push_back(std::move(spec));
        }
        for (auto [name, target] : {std::pair{"train", &d.nli_train}, std::pair{"test", &d.nli_test}}) {
            const auto p = dir / ("nli." + std::string(name) + "." + lang.str() + ".tsv");
            if (fs::exists(p)) (*target)[lang] = probe::load_inference_tsv(p);
        }
    }
    return d;
}

std::vector<std::shared_ptr<const tok::Tokenizer>> train_tokenizers(const corpus::MultiParallelCorpus& corpus,
                                                                   std::span<const LanguageId> langs,
                                                                   std::size_t merges) {
    std::vector<std::shared_ptr<const tok::Tokenizer>> out;
    for (const auto& l : langs) {
        if (!corpus.has_language(l)) throw Error("corpus has no language '" + l.str() + "'");
        const auto lines = corpus.split_lines(l, corpus::Split::Train);
        out.push_back(std::make_shared<tok::Tokenizer>(tok::train_bpe(l, lines, merges)));
    }
    return out;
}

std::shared_ptr<const corpus::EncodedCorpus> encode_corpus(const corpus::MultiParallelCorpus& corpus,
                                                           const model::ModuleRegistry& registry) {
    std::map<LanguageId, const tok::Tokenizer*> toks;
    for (const auto& l : registry.languages()) {
        const auto& p = registry.at(l);
        if (!p.tokenizer) throw Error("language " + l.str() + " has no tokenizer attached");
        if (corpus.has_language(l)) toks[l] = p.tokenizer.get();
    }
    std::vector<LanguageId> langs;
    for (const auto& [l, t] : toks) langs.push_back(l);
    return std::make_shared<corpus::EncodedCorpus>(corpus.select(langs), toks);
}

namespace {

std::vector<LanguageId> read_language_list(const fs::path& dir) {
    std::ifstream is(dir / "languages.txt");
    if (!is) throw Error("no model directory at " + dir.string() + " (languages.txt missing)");
    std::vector<LanguageId> out;
    for (std::string l; std::getline(is, l);) {
        if (!l.empty()) out.emplace_back(l);
    }
    return out;
}

void write_one(const model::LanguageModulePair& p, const fs::path& dir) {
    if (!p.tokenizer) throw Error("language " + p.lang.str() + " has no tokenizer to save");
    p.tokenizer->save(dir / (p.lang.str() + ".bpe"));
    model::checkpoint_save(p, dir / (p.lang.str() + ".ckpt"));
}

} // namespace

void save_registry(const model::ModuleRegistry& registry, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream os(dir / "languages.txt", std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / "languages.txt").string());
    for (const auto& l : registry.languages()) {
        write_one(registry.at(l), dir);
        os << l.str() << "\n";
    }
}

void save_language(const model::ModuleRegistry& registry, const LanguageId& lang, const fs::path& dir) {
    auto langs = fs::exists(dir / "languages.txt") ? read_language_list(dir) : std::vector<LanguageId>{};
    fs::create_directories(dir);
    write_one(registry.at(lang), dir);
    if (std::find(langs.begin(), langs.end(), lang) == langs.end()) {
        std::ofstream os(dir / "languages.txt", std::ios::binary | std::ios::app);
        os << lang.str() << "\n";
    }
}

model::ModuleRegistry load_registry(const fs::path& dir) {
    model::ModuleRegistry reg;
    for (const auto& l : read_language_list(dir)) {
        auto tok = std::make_shared<const tok::Tokenizer>(tok::Tokenizer::load(dir / (l.str() + ".bpe")));
        const auto ckpt = dir / (l.str() + ".ckpt");
        const auto header = model::checkpoint_peek(ckpt);
        reg.add(model::checkpoint_load(ckpt, header.config, tok));
    }
    if (reg.size() == 0) throw Error("model directory " + dir.string() + " lists no languages");
    return reg;
}

InitialRun train_initial(const corpus::MultiParallelCorpus& corpus, const config::RunConfig& config,
                         std::ostream* log) {
    config.validate();
    auto toks = train_tokenizers(corpus, config.languages, config.bpe_merges);
    InitialRun run{model::init_modules(toks, config.model, config.seed), {}};
    run.history = train::train(run.registry, encode_corpus(corpus, run.registry), config.train_config(), log);
    return run;
}

train::TrainHistory add_new_language(model::ModuleRegistry& registry, const corpus::MultiParallelCorpus& corpus,
                                     const LanguageId& lang, const LanguageId& anchor, train::TrainSide side,
                                     const config::RunConfig& config, std::ostream* log) {
    if (!registry.contains(anchor)) throw Error("anchor language '" + anchor.str() + "' is not in the registry");
    const std::vector<LanguageId> one{lang};
    auto tok = train_tokenizers(corpus, one, config.bpe_merges).front();
    auto pair = model::make_module_pair(lang, registry.at(anchor).config, config.seed, tok);
    auto rc = config.train_config();
    // encode_corpus needs the new tokenizer too, so build the map by hand
    std::map<LanguageId, const tok::Tokenizer*> toks{{anchor, registry.at(anchor).tokenizer.get()}, {lang, tok.get()}};
    const std::vector<LanguageId> both{anchor, lang};
    auto enc = std::make_shared<corpus::EncodedCorpus>(corpus.select(both), toks);
    return train::add_language(registry, std::move(pair), anchor, side, enc, rc, log);
}

std::string history_csv(const train::TrainHistory& history) {
    std::string out = "step,src,tgt,mode,loss\n";
    char buf[48];
    for (const auto& s : history.steps) {
        std::snprintf(buf, sizeof buf, ",%.6f\n", s.loss.loss);
        out += std::to_string(s.step) + "," + s.loss.direction.src.str() + "," + s.loss.direction.tgt.str() + "," +
               std::string(sched::label(s.loss.mode)) + buf;
    }
    return out;
}

} // namespace mmt::workflow
