#include "mmt/schedule/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mmt/tokenizer/bpe.hpp"

namespace mmt::sched {
namespace {

std::size_t position(std::span<const LanguageId> langs, const LanguageId& l) {
    auto it = std::find(langs.begin(), langs.end(), l);
    if (it == langs.end()) throw Error("language '" + l.str() + "' is not in the schedule's language list");
    return static_cast<std::size_t>(it - langs.begin());
}

void check_distinct(std::span<const LanguageId> langs) {
    std::set<LanguageId> seen;
    for (const auto& l : langs) {
        if (!seen.insert(l).second) throw Error("language '" + l.str() + "' listed twice");
    }
}

// Builds a schedule in nested-loop order from a per-direction mode lookup.
template <typename ModeOf>
TrainingSchedule nested(std::span<const LanguageId> langs, ModeOf mode_of) {
    std::vector<ScheduledDirection> out;
    for (const auto& s : langs) {
        for (const auto& t : langs) {
            if (s == t) continue;
            Direction d{s, t};
            if (auto m = mode_of(d)) out.push_back({d, *m});
        }
    }
    return TrainingSchedule(std::move(out));
}

} // namespace

std::string_view label(FreezeMode mode) {
    switch (mode) {
    case FreezeMode::None:
        return "n-n";
    case FreezeMode::FreezeSrcEncoder:
        return "f-n";
    case FreezeMode::FreezeTgtDecoder:
        return "n-f";
    }
    return "?";
}

std::string_view short_label(FreezeMode mode) {
    switch (mode) {
    case FreezeMode::None:
        return "nn";
    case FreezeMode::FreezeSrcEncoder:
        return "fn";
    case FreezeMode::FreezeTgtDecoder:
        return "nf";
    }
    return "?";
}

FreezeMode parse_mode(std::string_view text) {
    for (auto m : {FreezeMode::None, FreezeMode::FreezeSrcEncoder, FreezeMode::FreezeTgtDecoder}) {
        if (text == label(m) || text == short_label(m)) return m;
    }
    throw Error("unknown freeze mode '" + std::string(text) + "' (expected nn, fn or nf)");
}

LanguagePair make_pair(const LanguageId& a, const LanguageId& b) {
    if (a == b) throw ContractError("a language pair needs two different languages");
    return a < b ? LanguagePair{a, b} : LanguagePair{b, a};
}

std::string pair_name(const LanguagePair& p) { return p.first.str() + "-" + p.second.str(); }

TrainingSchedule::TrainingSchedule(std::vector<ScheduledDirection> directions) : directions_(std::move(directions)) {
    std::set<Direction> seen;
    for (const auto& d : directions_) {
        if (d.direction.src.empty() || d.direction.tgt.empty()) throw Error("schedule has an empty language id");
        if (d.direction.src == d.direction.tgt) {
            throw Error("schedule direction " + d.direction.str() + " would be autoencoding, which is excluded");
        }
        if (!seen.insert(d.direction).second) throw Error("schedule lists " + d.direction.str() + " twice");
    }
}

std::optional<FreezeMode> TrainingSchedule::mode(const Direction& d) const {
    for (const auto& s : directions_) {
        if (s.direction == d) return s.mode;
    }
    return std::nullopt;
}

std::vector<LanguageId> TrainingSchedule::languages() const {
    std::vector<LanguageId> out;
    auto add = [&](const LanguageId& l) {
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    };
    for (const auto& s : directions_) {
        add(s.direction.src);
        add(s.direction.tgt);
    }
    return out;
}

std::string TrainingSchedule::serialize() const {
    std::string out;
    for (const auto& s : directions_) {
        out += s.direction.src.str() + " " + s.direction.tgt.str() + " " + std::string(short_label(s.mode)) + "\n";
    }
    return out;
}

TrainingSchedule TrainingSchedule::parse(std::string_view text) {
    std::vector<ScheduledDirection> dirs;
    std::size_t line_no = 0;
    std::istringstream is{std::string(text)};
    for (std::string line; std::getline(is, line);) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        auto fields = tok::split_whitespace(line);
        if (fields.empty()) continue;
        if (fields.size() != 3) {
            throw Error("schedule line " + std::to_string(line_no) + ": expected 'src tgt mode', got '" + line + "'");
        }
        dirs.push_back({{LanguageId(std::string(fields[0])), LanguageId(std::string(fields[1]))}, parse_mode(fields[2])});
    }
    return TrainingSchedule(std::move(dirs));
}

void TrainingSchedule::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write schedule " + path.string());
    out << serialize();
}

TrainingSchedule TrainingSchedule::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open schedule " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

TrainingSchedule basic_schedule(std::span<const LanguageId> langs) {
    if (langs.size() < 2) throw Error("basic schedule needs at least two languages");
    check_distinct(langs);
    return nested(langs, [](const Direction&) { return std::optional<FreezeMode>(FreezeMode::None); });
}

std::string_view to_string(Preset preset) { return preset == Preset::Far ? "far" : "close"; }

Preset parse_preset(std::string_view name) {
    if (name == "far" || name == "FAR") return Preset::Far;
    if (name == "close" || name == "CLOSE") return Preset::Close;
    throw Error("unknown preset '" + std::string(name) + "' (expected far or close)");
}

TrainingSchedule frozen_schedule(std::span<const LanguageId> langs, Preset preset) {
    struct Cell {
        const char* src;
        const char* tgt;
        const char* mode;
    };
    static constexpr Cell kFar[] = {
        {"de", "en", "n-f"}, {"de", "es", "n-f"}, {"de", "fr", "n-n"}, {"en", "de", "f-n"},
        {"en", "es", "n-n"}, {"en", "fr", "f-n"}, {"es", "de", "f-n"}, {"es", "en", "n-n"},
        {"es", "fr", "f-n"}, {"fr", "de", "n-n"}, {"fr", "en", "n-f"}, {"fr", "es", "f-n"},
    };
    static constexpr Cell kClose[] = {
        {"de", "en", "n-n"}, {"de", "es", "f-n"}, {"de", "fr", "n-f"}, {"en", "de", "n-n"},
        {"en", "es", "n-f"}, {"en", "fr", "f-n"}, {"es", "de", "n-f"}, {"es", "en", "f-n"},
        {"es", "fr", "n-n"}, {"fr", "de", "f-n"}, {"fr", "en", "n-f"}, {"fr", "es", "n-n"},
    };
    check_distinct(langs);
    std::set<std::string> names;
    for (const auto& l : langs) names.insert(l.str());
    if (names != std::set<std::string>{"de", "en", "es", "fr"}) {
        throw Error("the " + std::string(to_string(preset)) + " preset is defined for exactly de, en, es, fr");
    }
    const auto& table = preset == Preset::Far ? kFar : kClose;
    return nested(langs, [&](const Direction& d) -> std::optional<FreezeMode> {
        for (const auto& c : table) {
            if (d.src.str() == c.src && d.tgt.str() == c.tgt) return parse_mode(c.mode);
        }
        return std::nullopt;
    });
}

std::vector<LanguageId> frozen_cycle(std::span<const LanguageId> langs, std::span<const LanguagePair> unfrozen_pairs) {
    check_distinct(langs);
    if (langs.size() < 4 || langs.size() % 2 != 0) {
        throw Error("the frozen construction needs an even number of languages, at least 4 (got " +
                    std::to_string(langs.size()) + ")");
    }
    if (unfrozen_pairs.size() != langs.size() / 2) {
        throw Error("unfrozen pairs must be a perfect matching: expected " + std::to_string(langs.size() / 2) +
                    " pairs, got " + std::to_string(unfrozen_pairs.size()));
    }
    std::vector<std::pair<std::size_t, std::size_t>> matched;
    std::set<std::size_t> used;
    for (const auto& p : unfrozen_pairs) {
        auto a = position(langs, p.first), b = position(langs, p.second);
        if (a == b) throw Error("unfrozen pair " + pair_name(p) + " repeats a language");
        if (!used.insert(a).second || !used.insert(b).second) {
            throw Error("unfrozen pairs are not a matching: language in " + pair_name(p) + " appears twice");
        }
        matched.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(matched.begin(), matched.end());
    std::vector<LanguageId> cycle;
    for (const auto& m : matched) cycle.push_back(langs[m.first]);
    for (const auto& m : matched) cycle.push_back(langs[m.second]);
    return cycle;
}

TrainingSchedule frozen_schedule(std::span<const LanguageId> langs, std::span<const LanguagePair> unfrozen_pairs) {
    const auto cycle = frozen_cycle(langs, unfrozen_pairs);
    std::map<Direction, FreezeMode> modes;
    for (const auto& p : unfrozen_pairs) {
        modes[{p.first, p.second}] = FreezeMode::None;
        modes[{p.second, p.first}] = FreezeMode::None;
    }
    for (std::size_t m = 0; m < cycle.size(); ++m) {
        const auto& learner = cycle[m];
        const auto& frozen = cycle[(m + 1) % cycle.size()];
        modes[{learner, frozen}] = FreezeMode::FreezeTgtDecoder;
        modes[{frozen, learner}] = FreezeMode::FreezeSrcEncoder;
    }
    return nested(langs, [&](const Direction& d) -> std::optional<FreezeMode> {
        auto it = modes.find(d);
        if (it == modes.end()) return std::nullopt;
        return it->second;
    });
}

std::vector<LanguagePair> select_unfrozen_pairs(std::span<const LanguageId> langs,
                                                const std::map<Direction, double>& avg_valid_loss) {
    struct Ranked {
        LanguagePair pair;
        double loss;
    };
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < langs.size(); ++i) {
        for (std::size_t j = i + 1; j < langs.size(); ++j) {
            double total = 0.0;
            for (const Direction& d : {Direction{langs[i], langs[j]}, Direction{langs[j], langs[i]}}) {
                auto it = avg_valid_loss.find(d);
                if (it == avg_valid_loss.end()) throw Error("no validation loss for direction " + d.str());
                if (!std::isfinite(it->second)) throw Error("validation loss for " + d.str() + " is not finite");
                total += it->second;
            }
            ranked.push_back({make_pair(langs[i], langs[j]), total / 2.0});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.loss != b.loss) return a.loss > b.loss;
        return pair_name(a.pair) < pair_name(b.pair);
    });
    std::vector<LanguagePair> chosen;
    std::set<LanguageId> used;
    for (const auto& r : ranked) {
        if (chosen.size() == langs.size() / 2) break;
        if (used.contains(r.pair.first) || used.contains(r.pair.second)) continue;
        used.insert(r.pair.first);
        used.insert(r.pair.second);
        chosen.push_back(r.pair);
    }
    return chosen;
}

TrainingSchedule adaptive_update(const TrainingSchedule& current, const std::map<Direction, double>& avg_valid_loss) {
    const auto langs = current.languages();
    const auto pairs = select_unfrozen_pairs(langs, avg_valid_loss);
    return frozen_schedule(langs, pairs);
}

ValidationReport validate_schedule(const TrainingSchedule& schedule, std::span<const LanguageId> langs) {
    ValidationReport r;
    r.num_languages = langs.size();
    for (const auto& l : schedule.languages()) {
        if (std::find(langs.begin(), langs.end(), l) == langs.end()) {
            r.notes.push_back("schedule uses language " + l.str() + " outside the given list");
        }
    }
    std::map<LanguageId, bool> trains;
    for (const auto& l : langs) trains[l] = false;
    for (const auto& s : schedule.directions()) {
        if (s.mode != FreezeMode::FreezeSrcEncoder) trains[s.direction.src] = true;
        if (s.mode != FreezeMode::FreezeTgtDecoder) trains[s.direction.tgt] = true;
    }
    for (const auto& l : langs) {
        if (!trains[l]) r.never_trained.push_back(l);
    }
    r.all_languages_trainable = r.never_trained.empty();

    for (std::size_t i = 0; i < langs.size(); ++i) {
        for (std::size_t j = i + 1; j < langs.size(); ++j) {
            const auto& a = langs[i];
            const auto& b = langs[j];
            auto ab = schedule.mode({a, b});
            auto ba = schedule.mode({b, a});
            if (!ab && !ba) continue;
            ++r.pairs_covered;
            const auto name = pair_name(make_pair(a, b));
            if (!ab || !ba) {
                r.notes.push_back("pair " + name + " is trained in one direction only");
                continue;
            }
            // which language each direction freezes (if any)
            auto frozen_in = [&](const LanguageId& src, const LanguageId& tgt,
                                 FreezeMode m) -> std::optional<LanguageId> {
                if (m == FreezeMode::FreezeSrcEncoder) return src;
                if (m == FreezeMode::FreezeTgtDecoder) return tgt;
                return std::nullopt;
            };
            auto f1 = frozen_in(a, b, *ab);
            auto f2 = frozen_in(b, a, *ba);
            if (!f1 && !f2) {
                ++r.fully_trained;
            } else if (f1 && f2 && *f1 == *f2) {
                const auto& learner = *f1 == a ? b : a;
                r.learning_edges.emplace_back(learner, *f1);
            } else if (f1 && f2) {
                r.mixed_pairs.push_back(make_pair(a, b));
            } else {
                r.notes.push_back("pair " + name + " freezes only one of its two directions");
            }
        }
    }

    r.has_learning_graph = !r.learning_edges.empty();
    if (r.has_learning_graph) {
        std::map<LanguageId, int> in, out;
        std::map<LanguageId, LanguageId> next;
        for (const auto& [from, to] : r.learning_edges) {
            ++out[from];
            ++in[to];
            next[from] = to;
        }
        bool degrees = true;
        for (const auto& l : langs) degrees = degrees && in[l] == 1 && out[l] == 1;
        bool one_cycle = false;
        if (degrees && !langs.empty()) {
            std::set<LanguageId> visited;
            LanguageId cur = langs.front();
            while (visited.insert(cur).second) cur = next[cur];
            one_cycle = cur == langs.front() && visited.size() == langs.size();
        }
        r.single_cycle = degrees && one_cycle;
    }
    return r;
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    os << "languages=" << num_languages << "\n";
    os << "pairs_covered=" << pairs_covered << "\n";
    os << "fully_trained=" << fully_trained << "\n";
    os << "learning_graph=";
    if (learning_edges.empty()) os << "none";
    for (std::size_t i = 0; i < learning_edges.size(); ++i) {
        os << (i ? "," : "") << learning_edges[i].first.str() << "->" << learning_edges[i].second.str();
    }
    os << "\n";
    os << "single_cycle=" << (has_learning_graph ? (single_cycle ? "yes" : "no") : "not applicable") << "\n";
    os << "mixed_side=" << (mixed_pairs.empty() ? "no" : "yes");
    for (std::size_t i = 0; i < mixed_pairs.size(); ++i) os << (i ? "," : " (") << pair_name(mixed_pairs[i]);
    os << (mixed_pairs.empty() ? "" : ")") << "\n";
    os << "never_trained=";
    if (never_trained.empty()) os << "none";
    for (std::size_t i = 0; i < never_trained.size(); ++i) os << (i ? "," : "") << never_trained[i].str();
    os << "\n";
    os << "all_languages_trainable=" << (all_languages_trainable ? "yes" : "no") << "\n";
    for (const auto& n : notes) os << "note: " << n << "\n";
    return os.str();
}

} // namespace mmt::sched
