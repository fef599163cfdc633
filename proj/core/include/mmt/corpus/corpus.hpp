#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/common.hpp"

namespace mmt::corpus {

enum class Split { Train, Valid, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Sentence-aligned text in several languages. Record r has one line per
/// language; the three splits partition the records.
class MultiParallelCorpus {
  public:
    MultiParallelCorpus() = default;
    explicit MultiParallelCorpus(std::vector<LanguageId> langs);

    /// Appends a record (one line per language, in `langs()` order) to a split.
    std::size_t add_record(std::vector<std::string> lines, Split split);

    const std::vector<LanguageId>& langs() const { return langs_; }
    bool has_language(const LanguageId& lang) const;
    std::size_t size() const { return num_records_; }

    const std::string& line(const LanguageId& lang, std::size_t record) const;
    const std::vector<std::string>& lines(const LanguageId& lang) const;
    const std::vector<std::size_t>& split(Split s) const;

    /// Lines of one language restricted to a split, in split order.
    std::vector<std::string> split_lines(const LanguageId& lang, Split s) const;

    /// Copy keeping only the given languages (in the given order).
    MultiParallelCorpus select(std::span<const LanguageId> langs) const;

    /// Writes `<split>.<lang>.txt` for every split and language plus a manifest.
    void save(const std::filesystem::path& dir) const;
    static MultiParallelCorpus load(const std::filesystem::path& dir);

  private:
    std::size_t lang_index(const LanguageId& lang) const;

    std::vector<LanguageId> langs_;
    std::vector<std::vector<std::string>> text_; // [lang][record]
    std::vector<std::size_t> splits_[3];
    std::size_t num_records_ = 0;
};

struct ParallelFragment {
    MultiParallelCorpus corpus; // two languages, every record in the train split
    std::size_t empty_lines = 0; // records where either side is empty
};

/// Reads two line-aligned UTF-8 files. Empty lines are kept as empty
/// sentences and counted. Line-count mismatch is an Error naming both counts.
ParallelFragment load_parallel_files(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                                     const LanguageId& src_lang, const LanguageId& tgt_lang);

} // namespace mmt::corpus
