#include "mmt/model/registry.hpp"

#include <set>

namespace mmt::model {

LanguageModulePair LanguageModulePair::clone() const {
    return LanguageModulePair{lang, config, encoder.clone(), decoder.clone(), tokenizer, tokenizer_hash};
}

LanguageModulePair make_module_pair(const LanguageId& lang, const ModelConfig& config, std::uint64_t seed,
                                    std::shared_ptr<const tok::Tokenizer> tokenizer) {
    ModelConfig c = config;
    std::uint64_t tok_hash = 0;
    if (tokenizer) {
        if (tokenizer->lang() != lang) {
            throw Error("tokenizer for " + tokenizer->lang().str() + " given to language " + lang.str());
        }
        c.vocab_size = tokenizer->vocab_size();
        tok_hash = tokenizer->hash();
    }
    c.validate();
    Rng rng = Rng::derived(seed, lang.str());
    Encoder enc(c, rng);
    Decoder dec(c, rng);
    return LanguageModulePair{lang, c, std::move(enc), std::move(dec), std::move(tokenizer), tok_hash};
}

void ModuleRegistry::add(LanguageModulePair pair) {
    if (pair.lang.empty()) throw ContractError("language id must not be empty");
    if (pairs_.contains(pair.lang)) throw Error("language " + pair.lang.str() + " is already in the registry");
    order_.push_back(pair.lang);
    pairs_.emplace(pair.lang, std::move(pair));
}

bool ModuleRegistry::contains(const LanguageId& lang) const { return pairs_.contains(lang); }

LanguageModulePair& ModuleRegistry::at(const LanguageId& lang) {
    auto it = pairs_.find(lang);
    if (it == pairs_.end()) throw Error("no modules for language '" + lang.str() + "'");
    return it->second;
}

const LanguageModulePair& ModuleRegistry::at(const LanguageId& lang) const {
    auto it = pairs_.find(lang);
    if (it == pairs_.end()) throw Error("no modules for language '" + lang.str() + "'");
    return it->second;
}

ModuleRegistry ModuleRegistry::clone() const {
    ModuleRegistry out;
    for (const auto& l : order_) out.add(at(l).clone());
    return out;
}

std::map<std::string, std::uint64_t> ModuleRegistry::parameter_hashes() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& l : order_) {
        const auto& p = at(l);
        for (const auto* set : {&p.encoder.params(), &p.decoder.params()}) {
            for (const auto& [name, t] : set->entries()) out[l.str() + "/" + name] = hash_values(t.values());
        }
    }
    return out;
}

ModuleRegistry init_modules(std::span<const LanguageId> langs, const ModelConfig& config, std::uint64_t seed) {
    if (langs.empty()) throw ContractError("init_modules: no languages");
    std::set<LanguageId> seen;
    for (const auto& l : langs) {
        if (!seen.insert(l).second) throw Error("init_modules: duplicate language '" + l.str() + "'");
    }
    ModuleRegistry reg;
    for (const auto& l : langs) reg.add(make_module_pair(l, config, seed));
    return reg;
}

ModuleRegistry init_modules(std::span<const std::shared_ptr<const tok::Tokenizer>> tokenizers,
                            const ModelConfig& config, std::uint64_t seed) {
    if (tokenizers.empty()) throw ContractError("init_modules: no languages");
    std::set<LanguageId> seen;
    for (const auto& t : tokenizers) {
        if (!t) throw ContractError("init_modules: null tokenizer");
        if (!seen.insert(t->lang()).second) throw Error("init_modules: duplicate language '" + t->lang().str() + "'");
    }
    ModuleRegistry reg;
    for (const auto& t : tokenizers) reg.add(make_module_pair(t->lang(), config, seed, t));
    return reg;
}

} // namespace mmt::model
