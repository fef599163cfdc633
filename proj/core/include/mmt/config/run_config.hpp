#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/model/config.hpp"
#include "mmt/schedule/schedule.hpp"
#include "mmt/train/trainer.hpp"

namespace mmt::config {

enum class ScheduleKind { Basic, Far, Close, Adaptive, File };
std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view text);

/// Everything a training run needs. The text form is line-oriented
/// `key = value` under `[section]` headers; '#' starts a comment.
struct RunConfig {
    std::vector<LanguageId> languages;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "run";

    std::filesystem::path corpus_dir;   // empty: generate a toy corpus
    std::size_t toy_sentences = 500;
    std::size_t bpe_merges = 200;

    model::ModelConfig model = model::ModelConfig::desk();

    ScheduleKind schedule = ScheduleKind::Far;
    std::filesystem::path schedule_file;
    std::size_t max_steps = 2000;
    std::size_t token_budget = 256;
    std::size_t patience = 5;
    std::size_t eval_every = 100;
    double lr = 1e-3;
    std::size_t warmup_steps = 200;

    std::string serialize() const;
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Error when a referenced file is missing or the schedule uses a
    /// language outside `languages`.
    void validate() const;

    sched::TrainingSchedule build_schedule() const;
    train::TrainRunConfig train_config() const;

    bool operator==(const RunConfig&) const = default;
};

} // namespace mmt::config
