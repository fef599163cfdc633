#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "mmt/schedule/schedule.hpp"

using namespace mmt;
using namespace mmt::sched;

namespace {

std::vector<LanguageId> ids(std::initializer_list<const char*> names) {
    std::vector<LanguageId> out;
    for (auto n : names) out.emplace_back(n);
    return out;
}

std::vector<LanguageId> numbered(std::size_t n) {
    std::vector<LanguageId> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back("l" + std::to_string(i));
    return out;
}

std::string labels(const TrainingSchedule& s) {
    std::string out;
    for (const auto& d : s.directions()) out += d.direction.str() + ":" + std::string(label(d.mode)) + " ";
    return out;
}

// Every perfect matching of langs.
void matchings(std::vector<LanguageId> rest, std::vector<LanguagePair>& cur,
               std::vector<std::vector<LanguagePair>>& out) {
    if (rest.empty()) {
        out.push_back(cur);
        return;
    }
    auto first = rest.front();
    for (std::size_t i = 1; i < rest.size(); ++i) {
        auto next = rest;
        next.erase(next.begin() + static_cast<std::ptrdiff_t>(i));
        next.erase(next.begin());
        cur.push_back(make_pair(first, rest[i]));
        matchings(next, cur, out);
        cur.pop_back();
    }
}

std::vector<std::vector<LanguagePair>> all_matchings(const std::vector<LanguageId>& langs) {
    std::vector<std::vector<LanguagePair>> out;
    std::vector<LanguagePair> cur;
    matchings(langs, cur, out);
    return out;
}

// Undirected training-pair graph is connected after removing any single edge,
// i.e. every two languages are joined by two edge-disjoint paths.
bool two_edge_connected(const TrainingSchedule& s, const std::vector<LanguageId>& langs) {
    std::set<LanguagePair> edges;
    for (const auto& d : s.directions()) edges.insert(make_pair(d.direction.src, d.direction.tgt));
    for (const auto& removed : edges) {
        std::set<LanguageId> seen{langs.front()};
        std::vector<LanguageId> stack{langs.front()};
        while (!stack.empty()) {
            auto cur = stack.back();
            stack.pop_back();
            for (const auto& e : edges) {
                if (e == removed) continue;
                const LanguageId* other = e.first == cur ? &e.second : e.second == cur ? &e.first : nullptr;
                if (other && seen.insert(*other).second) stack.push_back(*other);
            }
        }
        if (seen.size() != langs.size()) return false;
    }
    return true;
}

} // namespace

TEST_CASE("freeze mode labels") {
    CHECK(label(FreezeMode::None) == "n-n");
    CHECK(label(FreezeMode::FreezeSrcEncoder) == "f-n");
    CHECK(label(FreezeMode::FreezeTgtDecoder) == "n-f");
    for (auto m : {FreezeMode::None, FreezeMode::FreezeSrcEncoder, FreezeMode::FreezeTgtDecoder}) {
        CHECK(parse_mode(label(m)) == m);
        CHECK(parse_mode(short_label(m)) == m);
    }
    CHECK_THROWS_AS(parse_mode("ff"), Error);
}

TEST_CASE("basic schedule covers every ordered pair in nested-loop order") {
    auto abc = ids({"a", "b", "c"});
    auto s = basic_schedule(abc);
    CHECK(labels(s) == "a-b:n-n a-c:n-n b-a:n-n b-c:n-n c-a:n-n c-b:n-n ");
    auto four = basic_schedule(ids({"de", "en", "es", "fr"}));
    CHECK(four.size() == 12);
    for (const auto& d : four.directions()) CHECK(d.mode == FreezeMode::None);
    for (std::size_t n = 2; n <= 7; ++n) {
        auto langs = numbered(n);
        auto sn = basic_schedule(langs);
        std::set<Direction> uniq;
        for (const auto& d : sn.directions()) uniq.insert(d.direction);
        CHECK(uniq.size() == n * (n - 1));
        CHECK(sn.size() == n * (n - 1));
    }
    CHECK_THROWS_AS(basic_schedule(ids({"en"})), Error);
    CHECK_THROWS_AS(basic_schedule(ids({"en", "de", "en"})), Error);
}

TEST_CASE("far and close presets match the published tables") {
    auto langs = ids({"de", "en", "es", "fr"});
    CHECK(labels(frozen_schedule(langs, Preset::Far)) ==
          "de-en:n-f de-es:n-f de-fr:n-n en-de:f-n en-es:n-n en-fr:f-n "
          "es-de:f-n es-en:n-n es-fr:f-n fr-de:n-n fr-en:n-f fr-es:f-n ");
    CHECK(labels(frozen_schedule(langs, Preset::Close)) ==
          "de-en:n-n de-es:f-n de-fr:n-f en-de:n-n en-es:n-f en-fr:f-n "
          "es-de:n-f es-en:f-n es-fr:n-n fr-de:f-n fr-en:n-f fr-es:n-n ");
    CHECK_THROWS_AS(frozen_schedule(ids({"de", "en", "es", "ru"}), Preset::Far), Error);
    CHECK_THROWS_AS(frozen_schedule(ids({"de", "en", "es"}), Preset::Close), Error);
    CHECK(parse_preset("far") == Preset::Far);
    CHECK(parse_preset("CLOSE") == Preset::Close);
}

TEST_CASE("close preset leaves de-en and es-fr unfrozen") {
    auto s = frozen_schedule(ids({"de", "en", "es", "fr"}), Preset::Close);
    auto r = validate_schedule(s, ids({"de", "en", "es", "fr"}));
    CHECK(r.fully_trained == 2);
    CHECK(*s.mode({LanguageId("de"), LanguageId("en")}) == FreezeMode::None);
    CHECK(*s.mode({LanguageId("fr"), LanguageId("es")}) == FreezeMode::None);
}

TEST_CASE("validate_schedule on the far preset") {
    auto langs = ids({"de", "en", "es", "fr"});
    auto r = validate_schedule(frozen_schedule(langs, Preset::Far), langs);
    CHECK(r.fully_trained == 2);
    REQUIRE(r.mixed_pairs.size() == 1);
    CHECK(pair_name(r.mixed_pairs[0]) == "es-fr");
    std::set<std::string> edges;
    for (const auto& [a, b] : r.learning_edges) edges.insert(a.str() + ">" + b.str());
    CHECK(edges == std::set<std::string>{"de>en", "de>es", "fr>en"});
    CHECK(r.has_learning_graph);
    CHECK_FALSE(r.single_cycle);
    CHECK(r.all_languages_trainable);
    const auto text = r.to_text();
    CHECK(text.find("fully_trained=2\n") != std::string::npos);
    CHECK(text.find("mixed_side=yes (es-fr)\n") != std::string::npos);
    CHECK(text.find("single_cycle=no\n") != std::string::npos);
}

TEST_CASE("validate_schedule on the basic schedule") {
    auto langs = ids({"de", "en", "es", "fr"});
    auto r = validate_schedule(basic_schedule(langs), langs);
    CHECK(r.fully_trained == 6);
    CHECK_FALSE(r.has_learning_graph);
    CHECK(r.to_text().find("single_cycle=not applicable") != std::string::npos);
    CHECK(r.to_text().find("mixed_side=no\n") != std::string::npos);
}

TEST_CASE("generic construction on four languages") {
    auto langs = numbered(4);
    std::vector<LanguagePair> m{make_pair(langs[0], langs[3]), make_pair(langs[1], langs[2])};
    auto s = frozen_schedule(langs, m);
    CHECK(s.size() == 12);
    auto cycle = frozen_cycle(langs, m);
    CHECK(cycle == std::vector<LanguageId>{langs[0], langs[1], langs[3], langs[2]});
    // l0 -> l1: l1 frozen in both directions
    CHECK(*s.mode({langs[0], langs[1]}) == FreezeMode::FreezeTgtDecoder);
    CHECK(*s.mode({langs[1], langs[0]}) == FreezeMode::FreezeSrcEncoder);
    auto r = validate_schedule(s, langs);
    CHECK(r.fully_trained == 2);
    CHECK(r.single_cycle);
    CHECK(r.mixed_pairs.empty());
}

TEST_CASE("generic construction, exhaustive over matchings for N = 4, 6, 8") {
    for (std::size_t n : {4, 6, 8}) {
        auto langs = numbered(n);
        auto ms = all_matchings(langs);
        CHECK(ms.size() == (n == 4 ? 3u : n == 6 ? 15u : 105u));
        for (const auto& m : ms) {
            auto s = frozen_schedule(langs, m);
            auto r = validate_schedule(s, langs);
            CHECK(r.fully_trained == n / 2);
            CHECK(r.learning_edges.size() == n);
            CHECK(r.single_cycle);
            CHECK(r.mixed_pairs.empty());
            CHECK(r.all_languages_trainable);
            CHECK(r.notes.empty());
            // each language: unfrozen in exactly one pair, frozen side of exactly one
            std::map<LanguageId, int> frozen_side, unfrozen;
            for (const auto& p : m) {
                ++unfrozen[p.first];
                ++unfrozen[p.second];
            }
            for (const auto& [learner, frozen] : r.learning_edges) ++frozen_side[frozen];
            for (const auto& l : langs) {
                CHECK(unfrozen[l] == 1);
                CHECK(frozen_side[l] == 1);
            }
            CHECK(two_edge_connected(s, langs));
            CHECK(s.size() == 3 * n);
        }
    }
}

TEST_CASE("generic construction errors") {
    auto langs = numbered(4);
    CHECK_THROWS_AS(frozen_schedule(langs, std::vector<LanguagePair>{make_pair(langs[0], langs[1])}), Error);
    CHECK_THROWS_AS(frozen_schedule(langs, std::vector<LanguagePair>{make_pair(langs[0], langs[1]),
                                                                     make_pair(langs[1], langs[2])}),
                    Error);
    auto odd = numbered(5);
    CHECK_THROWS_AS(frozen_schedule(odd, std::vector<LanguagePair>{make_pair(odd[0], odd[1]),
                                                                   make_pair(odd[2], odd[3])}),
                    Error);
    CHECK_THROWS_AS(frozen_schedule(langs, std::vector<LanguagePair>{make_pair(langs[0], langs[1]),
                                                                     make_pair(langs[2], LanguageId("zz"))}),
                    Error);
}

TEST_CASE("adaptive update") {
    auto langs = ids({"de", "en", "es", "fr"});
    auto far = frozen_schedule(langs, Preset::Far);
    auto losses_with = [&](std::map<std::string, double> pair_loss) {
        std::map<Direction, double> out;
        for (const auto& a : langs) {
            for (const auto& b : langs) {
                if (a == b) continue;
                auto name = pair_name(make_pair(a, b));
                out[{a, b}] = pair_loss.contains(name) ? pair_loss[name] : 1.0;
            }
        }
        return out;
    };

    SUBCASE("two worst pairs disjoint") {
        auto l = losses_with({{"de-fr", 5.0}, {"en-es", 4.0}});
        auto s = adaptive_update(far, l);
        std::vector<LanguagePair> m{make_pair(langs[0], langs[3]), make_pair(langs[1], langs[2])};
        CHECK(s == frozen_schedule(langs, m));
        CHECK(validate_schedule(s, langs).single_cycle);
    }
    SUBCASE("two worst pairs overlap") {
        // de-en worst, de-fr second (shares de), so es-fr is taken
        auto l = losses_with({{"de-en", 5.0}, {"de-fr", 4.0}, {"en-fr", 3.0}});
        auto pairs = select_unfrozen_pairs(langs, l);
        REQUIRE(pairs.size() == 2);
        CHECK(pair_name(pairs[0]) == "de-en");
        CHECK(pair_name(pairs[1]) == "es-fr");
        CHECK(validate_schedule(adaptive_update(far, l), langs).single_cycle);
    }
    SUBCASE("all equal breaks ties by pair name") {
        auto l = losses_with({});
        auto pairs = select_unfrozen_pairs(langs, l);
        CHECK(pair_name(pairs[0]) == "de-en");
        CHECK(pair_name(pairs[1]) == "es-fr");
        CHECK(adaptive_update(far, l) == adaptive_update(far, l));
    }
    SUBCASE("mean over both directions decides") {
        auto l = losses_with({});
        l[{LanguageId("en"), LanguageId("fr")}] = 9.0; // en-fr mean 5
        l[{LanguageId("de"), LanguageId("es")}] = 4.0; // de-es mean 2.5
        l[{LanguageId("es"), LanguageId("de")}] = 4.0; // de-es mean 4
        auto pairs = select_unfrozen_pairs(langs, l);
        CHECK(pair_name(pairs[0]) == "en-fr");
        CHECK(pair_name(pairs[1]) == "de-es");
    }
    SUBCASE("missing direction") {
        auto l = losses_with({});
        l.erase({LanguageId("fr"), LanguageId("de")});
        CHECK_THROWS_AS(adaptive_update(far, l), Error);
    }
    SUBCASE("any loss map on six languages gives a valid cycle") {
        auto six = numbered(6);
        auto base = frozen_schedule(six, std::vector<LanguagePair>{make_pair(six[0], six[1]),
                                                                   make_pair(six[2], six[3]),
                                                                   make_pair(six[4], six[5])});
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::map<Direction, double> l;
            for (const auto& a : six) {
                for (const auto& b : six) {
                    if (a != b) l[{a, b}] = static_cast<double>(rng.below(4));
                }
            }
            auto r = validate_schedule(adaptive_update(base, l), six);
            CHECK(r.single_cycle);
            CHECK(r.fully_trained == 3);
        }
    }
}

TEST_CASE("schedule file round trip and errors") {
    auto langs = ids({"de", "en", "es", "fr"});
    auto far = frozen_schedule(langs, Preset::Far);
    auto text = far.serialize();
    CHECK(text.rfind("de en nf\n", 0) == 0);
    CHECK(TrainingSchedule::parse(text) == far);
    CHECK(TrainingSchedule::parse("# comment\n\nde en nn  # trailing\n").size() == 1);
    CHECK_THROWS_AS(TrainingSchedule::parse("de en\n"), Error);
    CHECK_THROWS_AS(TrainingSchedule::parse("de de nn\n"), Error);
    CHECK_THROWS_AS(TrainingSchedule::parse("de en nn\nde en fn\n"), Error);
    CHECK_THROWS_AS(TrainingSchedule::parse("de en xx\n"), Error);
}
