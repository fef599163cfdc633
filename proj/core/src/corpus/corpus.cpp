#include "mmt/corpus/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mmt::corpus {
namespace {

constexpr Split kSplits[] = {Split::Train, Split::Valid, Split::Test};

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

std::filesystem::path split_file(const std::filesystem::path& dir, Split s, const LanguageId& lang) {
    return dir / (std::string(to_string(s)) + "." + lang.str() + ".txt");
}

} // namespace

std::string_view to_string(Split split) {
    switch (split) {
    case Split::Train:
        return "train";
    case Split::Valid:
        return "valid";
    case Split::Test:
        return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    for (auto s : kSplits) {
        if (to_string(s) == name) return s;
    }
    throw Error("unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

MultiParallelCorpus::MultiParallelCorpus(std::vector<LanguageId> langs) : langs_(std::move(langs)) {
    for (std::size_t i = 0; i < langs_.size(); ++i) {
        if (langs_[i].empty()) throw ContractError("corpus language id must not be empty");
        for (std::size_t j = 0; j < i; ++j) {
            if (langs_[i] == langs_[j]) throw Error("corpus lists language " + langs_[i].str() + " twice");
        }
    }
    text_.resize(langs_.size());
}

std::size_t MultiParallelCorpus::add_record(std::vector<std::string> lines, Split split) {
    if (lines.size() != langs_.size()) {
        throw ContractError("record has " + std::to_string(lines.size()) + " lines for " +
                            std::to_string(langs_.size()) + " languages");
    }
    for (std::size_t i = 0; i < lines.size(); ++i) text_[i].push_back(std::move(lines[i]));
    splits_[static_cast<int>(split)].push_back(num_records_);
    return num_records_++;
}

bool MultiParallelCorpus::has_language(const LanguageId& lang) const {
    return std::find(langs_.begin(), langs_.end(), lang) != langs_.end();
}

std::size_t MultiParallelCorpus::lang_index(const LanguageId& lang) const {
    auto it = std::find(langs_.begin(), langs_.end(), lang);
    if (it == langs_.end()) throw Error("corpus has no language '" + lang.str() + "'");
    return static_cast<std::size_t>(it - langs_.begin());
}

const std::string& MultiParallelCorpus::line(const LanguageId& lang, std::size_t record) const {
    const auto& col = text_[lang_index(lang)];
    if (record >= col.size()) throw ContractError("record index out of range");
    return col[record];
}

const std::vector<std::string>& MultiParallelCorpus::lines(const LanguageId& lang) const {
    return text_[lang_index(lang)];
}

const std::vector<std::size_t>& MultiParallelCorpus::split(Split s) const { return splits_[static_cast<int>(s)]; }

std::vector<std::string> MultiParallelCorpus::split_lines(const LanguageId& lang, Split s) const {
    const auto& col = text_[lang_index(lang)];
    std::vector<std::string> out;
    for (auto r : split(s)) out.push_back(col[r]);
    return out;
}

MultiParallelCorpus MultiParallelCorpus::select(std::span<const LanguageId> langs) const {
    MultiParallelCorpus out(std::vector<LanguageId>(langs.begin(), langs.end()));
    std::vector<std::size_t> cols;
    for (const auto& l : langs) cols.push_back(lang_index(l));
    for (std::size_t i = 0; i < cols.size(); ++i) out.text_[i] = text_[cols[i]];
    for (int s = 0; s < 3; ++s) out.splits_[s] = splits_[s];
    out.num_records_ = num_records_;
    return out;
}

void MultiParallelCorpus::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (auto s : kSplits) {
        for (std::size_t li = 0; li < langs_.size(); ++li) {
            std::ofstream out(split_file(dir, s, langs_[li]), std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cannot write " + split_file(dir, s, langs_[li]).string());
            for (auto r : split(s)) out << text_[li][r] << '\n';
        }
    }
    std::ofstream m(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
    if (!m) throw Error("cannot write " + (dir / "manifest.txt").string());
    m << "#mmt-corpus version=1\n";
    m << "langs=";
    for (std::size_t i = 0; i < langs_.size(); ++i) m << (i ? "," : "") << langs_[i].str();
    m << "\n";
    for (auto s : kSplits) m << to_string(s) << "=" << split(s).size() << "\n";
}

MultiParallelCorpus MultiParallelCorpus::load(const std::filesystem::path& dir) {
    auto manifest = read_lines(dir / "manifest.txt");
    if (manifest.empty() || manifest[0].rfind("#mmt-corpus", 0) != 0) {
        throw Error(dir.string() + ": manifest.txt is not a corpus manifest");
    }
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < manifest.size(); ++i) {
        if (manifest[i].empty()) continue;
        auto eq = manifest[i].find('=');
        if (eq == std::string::npos) throw Error("manifest: malformed line '" + manifest[i] + "'");
        kv[manifest[i].substr(0, eq)] = manifest[i].substr(eq + 1);
    }
    std::vector<LanguageId> langs;
    {
        std::istringstream is(kv["langs"]);
        for (std::string l; std::getline(is, l, ',');) {
            if (!l.empty()) langs.emplace_back(l);
        }
    }
    if (langs.empty()) throw Error("manifest: no languages listed");
    MultiParallelCorpus out(langs);
    for (auto s : kSplits) {
        const std::string key(to_string(s));
        if (!kv.contains(key)) throw Error("manifest: missing line count for split " + key);
        const std::size_t expected = std::stoul(kv[key]);
        std::vector<std::vector<std::string>> cols;
        for (const auto& l : langs) {
            cols.push_back(read_lines(split_file(dir, s, l)));
            if (cols.back().size() != expected) {
                throw Error(split_file(dir, s, l).string() + " has " + std::to_string(cols.back().size()) +
                            " lines, manifest says " + std::to_string(expected));
            }
        }
        for (std::size_t r = 0; r < expected; ++r) {
            std::vector<std::string> rec;
            for (auto& c : cols) rec.push_back(std::move(c[r]));
            out.add_record(std::move(rec), s);
        }
    }
    return out;
}

ParallelFragment load_parallel_files(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                                     const LanguageId& src_lang, const LanguageId& tgt_lang) {
    if (src_lang == tgt_lang) throw Error("load_parallel_files: both sides are " + src_lang.str());
    auto src = read_lines(src_path);
    auto tgt = read_lines(tgt_path);
    if (src.size() != tgt.size()) {
        throw Error("line count mismatch: " + src_path.string() + " has " + std::to_string(src.size()) + ", " +
                    tgt_path.string() + " has " + std::to_string(tgt.size()));
    }
    ParallelFragment out{MultiParallelCorpus({src_lang, tgt_lang}), 0};
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].empty() || tgt[i].empty()) ++out.empty_lines;
        out.corpus.add_record({std::move(src[i]), std::move(tgt[i])}, Split::Train);
    }
    return out;
}

} // namespace mmt::corpus
