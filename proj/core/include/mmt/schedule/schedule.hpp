#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmt/common.hpp"

namespace mmt::sched {

/// Which side of a direction is held fixed while training it.
enum class FreezeMode {
    None,             // n-n: both modules update
    FreezeSrcEncoder, // f-n: source encoder fixed, target decoder updates
    FreezeTgtDecoder, // n-f: source encoder updates, target decoder fixed
};

/// "n-n", "f-n" or "n-f".
std::string_view label(FreezeMode mode);
/// File token: "nn", "fn" or "nf".
std::string_view short_label(FreezeMode mode);
/// Accepts either spelling.
FreezeMode parse_mode(std::string_view text);

struct ScheduledDirection {
    Direction direction;
    FreezeMode mode = FreezeMode::None;

    bool operator==(const ScheduledDirection&) const = default;
};

/// Unordered language pair, stored with `first < second`.
using LanguagePair = std::pair<LanguageId, LanguageId>;
LanguagePair make_pair(const LanguageId& a, const LanguageId& b);
std::string pair_name(const LanguagePair& p);

/// Ordered directions, each (src, tgt) at most once, never src == tgt.
class TrainingSchedule {
  public:
    TrainingSchedule() = default;
    explicit TrainingSchedule(std::vector<ScheduledDirection> directions);

    const std::vector<ScheduledDirection>& directions() const { return directions_; }
    std::size_t size() const { return directions_.size(); }
    std::optional<FreezeMode> mode(const Direction& d) const;
    /// Languages in order of first appearance.
    std::vector<LanguageId> languages() const;

    std::string serialize() const;
    static TrainingSchedule parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static TrainingSchedule load(const std::filesystem::path& path);

    bool operator==(const TrainingSchedule&) const = default;

  private:
    std::vector<ScheduledDirection> directions_;
};

/// All N(N-1) directions unfrozen, in nested-loop order over `langs`.
TrainingSchedule basic_schedule(std::span<const LanguageId> langs);

enum class Preset { Far, Close };
std::string_view to_string(Preset preset);
Preset parse_preset(std::string_view name);

/// Literal frozen-procedure tables for {de, en, es, fr}; nested-loop order over `langs`.
TrainingSchedule frozen_schedule(std::span<const LanguageId> langs, Preset preset);

/// Generic construction: matched pairs train n-n in both directions. The
/// other languages form one cycle a1..ak b1..bk (a_i < b_i the matched pairs,
/// ordered by a_i's position in `langs`), and in cycle edge {L_m, L_m+1}
/// L_m+1 is frozen in both directions. Pairs outside the matching and the
/// cycle (only when N >= 6) are not scheduled.
TrainingSchedule frozen_schedule(std::span<const LanguageId> langs, std::span<const LanguagePair> unfrozen_pairs);

/// The cycle used by the generic construction, as languages L_0..L_N-1.
std::vector<LanguageId> frozen_cycle(std::span<const LanguageId> langs, std::span<const LanguagePair> unfrozen_pairs);

/// Picks the unfrozen matching from average validation losses: pairs ranked
/// by the mean of their two directions (highest first, ties by pair name),
/// taken greedily while disjoint. Returns the generic schedule for it.
TrainingSchedule adaptive_update(const TrainingSchedule& current, const std::map<Direction, double>& avg_valid_loss);

/// The matching adaptive_update would choose.
std::vector<LanguagePair> select_unfrozen_pairs(std::span<const LanguageId> langs,
                                                const std::map<Direction, double>& avg_valid_loss);

struct ValidationReport {
    std::size_t num_languages = 0;
    std::size_t pairs_covered = 0;  // unordered pairs with at least one direction
    std::size_t fully_trained = 0;  // both directions present and n-n
    std::vector<std::pair<LanguageId, LanguageId>> learning_edges; // learner -> frozen language
    bool has_learning_graph = false;
    bool single_cycle = false; // in = out = 1 everywhere and one cycle through all languages
    std::vector<LanguagePair> mixed_pairs; // each side frozen in one of the two directions
    std::vector<LanguageId> never_trained; // languages frozen in every direction they appear in
    bool all_languages_trainable = false;
    std::vector<std::string> notes;

    std::string to_text() const;
};

ValidationReport validate_schedule(const TrainingSchedule& schedule, std::span<const LanguageId> langs);

} // namespace mmt::sched
