#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "mmt/model/registry.hpp"

namespace mmt::model {

enum class CheckpointDtype { F64, F32 };

/// Writes one language's encoder and decoder to a single file.
///
/// F64 (the default) stores values exactly. F32 halves the size but is
/// lossy, so a reload is only bit-identical to the rounded values.
void checkpoint_save(const LanguageModulePair& pair, const std::filesystem::path& path,
                     CheckpointDtype dtype = CheckpointDtype::F64);

/// Reads a file written by checkpoint_save. The stored config must equal
/// `expected` (Error names the first differing field). When `tokenizer` is
/// given its hash must match the one recorded at save time.
LanguageModulePair checkpoint_load(const std::filesystem::path& path, const ModelConfig& expected,
                                   std::shared_ptr<const tok::Tokenizer> tokenizer = nullptr);

struct CheckpointHeader {
    int version = 0;
    LanguageId lang;
    ModelConfig config;
    std::uint64_t tokenizer_hash = 0;
    CheckpointDtype dtype = CheckpointDtype::F64;
};

/// Header only, without checking the config.
CheckpointHeader checkpoint_peek(const std::filesystem::path& path);

} // namespace mmt::model
