#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "mmt/model/transformer.hpp"
#include "mmt/tokenizer/bpe.hpp"

namespace mmt::model {

/// One language's private encoder (e_i) and decoder (d_i).
struct LanguageModulePair {
    LanguageId lang;
    ModelConfig config;
    Encoder encoder;
    Decoder decoder;
    std::shared_ptr<const tok::Tokenizer> tokenizer; // may be null for bare models
    std::uint64_t tokenizer_hash = 0;

    LanguageModulePair clone() const;
};

/// Builds a fresh pair. Values depend only on (lang, config, seed), so a
/// language added later gets the same initialization it would have had in
/// the initial batch.
LanguageModulePair make_module_pair(const LanguageId& lang, const ModelConfig& config, std::uint64_t seed,
                                    std::shared_ptr<const tok::Tokenizer> tokenizer = nullptr);

/// Languages in insertion order, each owning exactly one module pair.
class ModuleRegistry {
  public:
    void add(LanguageModulePair pair);

    bool contains(const LanguageId& lang) const;
    LanguageModulePair& at(const LanguageId& lang);
    const LanguageModulePair& at(const LanguageId& lang) const;

    const std::vector<LanguageId>& languages() const { return order_; }
    std::size_t size() const { return order_.size(); }
    std::size_t num_encoders() const { return pairs_.size(); }
    std::size_t num_decoders() const { return pairs_.size(); }

    ModuleRegistry clone() const;

    /// Hash of every parameter array, keyed "<lang>/<array name>".
    std::map<std::string, std::uint64_t> parameter_hashes() const;

  private:
    std::vector<LanguageId> order_;
    std::map<LanguageId, LanguageModulePair> pairs_;
};

/// One pair per language; duplicate ids are an Error.
ModuleRegistry init_modules(std::span<const LanguageId> langs, const ModelConfig& config, std::uint64_t seed);

/// As above with vocabulary sizes taken from each language's tokenizer.
ModuleRegistry init_modules(std::span<const std::shared_ptr<const tok::Tokenizer>> tokenizers,
                            const ModelConfig& config, std::uint64_t seed);

} // namespace mmt::model
