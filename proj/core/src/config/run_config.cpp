#include "mmt/config/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mmt::config {

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
    case ScheduleKind::Basic:
        return "basic";
    case ScheduleKind::Far:
        return "far";
    case ScheduleKind::Close:
        return "close";
    case ScheduleKind::Adaptive:
        return "adaptive";
    case ScheduleKind::File:
        return "file";
    }
    return "?";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
    for (auto k : {ScheduleKind::Basic, ScheduleKind::Far, ScheduleKind::Close, ScheduleKind::Adaptive,
                   ScheduleKind::File}) {
        if (to_string(k) == text) return k;
    }
    throw Error("unknown schedule '" + std::string(text) + "' (expected basic, far, close, adaptive or file)");
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string join(const std::vector<LanguageId>& langs) {
    std::string out;
    for (std::size_t i = 0; i < langs.size(); ++i) out += (i ? "," : "") + langs[i].str();
    return out;
}

struct Reader {
    std::string where;

    std::size_t size(const std::string& v) const {
        std::size_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size()) throw Error(where + ": expected a non-negative integer");
        return out;
    }
    std::uint64_t u64(const std::string& v) const {
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size()) throw Error(where + ": expected a non-negative integer");
        return out;
    }
    double real(const std::string& v) const {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used == v.size()) return x;
        } catch (const std::exception&) {
        }
        throw Error(where + ": expected a number");
    }
};

} // namespace

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "[run]\n"
       << "languages = " << join(languages) << "\n"
       << "seed = " << seed << "\n"
       << "output_dir = " << output_dir.string() << "\n\n"
       << "[corpus]\n"
       << "dir = " << corpus_dir.string() << "\n"
       << "toy_sentences = " << toy_sentences << "\n"
       << "bpe_merges = " << bpe_merges << "\n\n"
       << "[model]\n"
       << "num_layers = " << model.num_layers << "\n"
       << "num_heads = " << model.num_heads << "\n"
       << "d_model = " << model.d_model << "\n"
       << "d_ff = " << model.d_ff << "\n"
       << "dropout = " << format_double(model.dropout) << "\n"
       << "max_len = " << model.max_len << "\n"
       << "vocab_size = " << model.vocab_size << "\n\n"
       << "[train]\n"
       << "schedule = " << to_string(schedule) << "\n"
       << "schedule_file = " << schedule_file.string() << "\n"
       << "max_steps = " << max_steps << "\n"
       << "token_budget = " << token_budget << "\n"
       << "patience = " << patience << "\n"
       << "eval_every = " << eval_every << "\n"
       << "lr = " << format_double(lr) << "\n"
       << "warmup_steps = " << warmup_steps << "\n";
    return os.str();
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig c;
    std::istringstream is{std::string(text)};
    std::string line, section;
    std::set<std::string> seen;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const std::string at = "config line " + std::to_string(n);
        if (t.front() == '[') {
            if (t.back() != ']') throw Error(at + ": unterminated section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw Error(at + ": expected 'key = value'");
        const std::string key = section + "." + trim(std::string_view(t).substr(0, eq));
        const std::string v = trim(std::string_view(t).substr(eq + 1));
        if (!seen.insert(key).second) throw Error(at + ": duplicate key '" + key + "'");
        const Reader r{at + " (" + key + ")"};

        if (key == "run.languages") {
            c.languages.clear();
            std::istringstream ls(v);
            for (std::string x; std::getline(ls, x, ',');) {
                if (!trim(x).empty()) c.languages.emplace_back(trim(x));
            }
        } else if (key == "run.seed") c.seed = r.u64(v);
        else if (key == "run.output_dir") c.output_dir = v;
        else if (key == "corpus.dir") c.corpus_dir = v;
        else if (key == "corpus.toy_sentences") c.toy_sentences = r.size(v);
        else if (key == "corpus.bpe_merges") c.bpe_merges = r.size(v);
        else if (key == "model.num_layers") c.model.num_layers = r.size(v);
        else if (key == "model.num_heads") c.model.num_heads = r.size(v);
        else if (key == "model.d_model") c.model.d_model = r.size(v);
        else if (key == "model.d_ff") c.model.d_ff = r.size(v);
        else if (key == "model.dropout") c.model.dropout = r.real(v);
        else if (key == "model.max_len") c.model.max_len = r.size(v);
        else if (key == "model.vocab_size") c.model.vocab_size = r.size(v);
        else if (key == "train.schedule") c.schedule = parse_schedule_kind(v);
        else if (key == "train.schedule_file") c.schedule_file = v;
        else if (key == "train.max_steps") c.max_steps = r.size(v);
        else if (key == "train.token_budget") c.token_budget = r.size(v);
        else if (key == "train.patience") c.patience = r.size(v);
        else if (key == "train.eval_every") c.eval_every = r.size(v);
        else if (key == "train.lr") c.lr = r.real(v);
        else if (key == "train.warmup_steps") c.warmup_steps = r.size(v);
        else throw Error(at + ": unknown key '" + key + "'");
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write config " + path.string());
    os << serialize();
}

void RunConfig::validate() const {
    if (languages.size() < 2) throw Error("config: at least two languages are required");
    std::set<LanguageId> langs(languages.begin(), languages.end());
    if (langs.size() != languages.size()) throw Error("config: duplicate language in 'languages'");
    if (!corpus_dir.empty() && !std::filesystem::exists(corpus_dir / "manifest.txt")) {
        throw Error("config: corpus directory " + corpus_dir.string() + " has no manifest.txt");
    }
    if (schedule == ScheduleKind::File && !std::filesystem::exists(schedule_file)) {
        throw Error("config: schedule file " + schedule_file.string() + " does not exist");
    }
    for (const auto& l : build_schedule().languages()) {
        if (!langs.contains(l)) throw Error("config: schedule uses language '" + l.str() + "' not in 'languages'");
    }
    train_config().validate();
}

sched::TrainingSchedule RunConfig::build_schedule() const {
    switch (schedule) {
    case ScheduleKind::Basic:
        return sched::basic_schedule(languages);
    case ScheduleKind::Far:
        return sched::frozen_schedule(languages, sched::Preset::Far);
    case ScheduleKind::Close:
        return sched::frozen_schedule(languages, sched::Preset::Close);
    case ScheduleKind::Adaptive: {
        // start from the first generic matching; the trainer revises it each epoch
        std::vector<sched::LanguagePair> pairs;
        for (std::size_t i = 0; i + 1 < languages.size(); i += 2) {
            pairs.push_back(sched::make_pair(languages[i], languages[i + 1]));
        }
        return sched::frozen_schedule(languages, pairs);
    }
    case ScheduleKind::File:
        return sched::TrainingSchedule::load(schedule_file);
    }
    throw ContractError("unhandled schedule kind");
}

train::TrainRunConfig RunConfig::train_config() const {
    train::TrainRunConfig t;
    t.schedule = build_schedule();
    t.max_steps = max_steps;
    t.token_budget = token_budget;
    t.patience = patience;
    t.eval_every = eval_every;
    t.seed = seed;
    t.adaptive = schedule == ScheduleKind::Adaptive;
    t.adam.base_lr = lr;
    t.adam.warmup_steps = warmup_steps;
    return t;
}

} // namespace mmt::config
