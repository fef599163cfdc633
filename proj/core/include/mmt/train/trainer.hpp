#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <utility>
#include <vector>

#include "mmt/corpus/batching.hpp"
#include "mmt/model/registry.hpp"
#include "mmt/schedule/schedule.hpp"
#include "mmt/train/adam.hpp"

namespace mmt::train {

/// Supplies the next training batch for a direction.
class BatchSource {
  public:
    virtual ~BatchSource() = default;
    virtual const corpus::Batch& next(const Direction& direction) = 0;
    /// Completed passes over the data for that direction.
    virtual std::size_t epoch(const Direction& direction) const = 0;
};

/// Train-split batches from an encoded corpus, one independent stream per direction.
class CorpusBatchSource : public BatchSource {
  public:
    CorpusBatchSource(std::shared_ptr<const corpus::EncodedCorpus> corpus, std::size_t token_budget,
                      std::uint64_t seed);

    const corpus::Batch& next(const Direction& direction) override;
    std::size_t epoch(const Direction& direction) const override;

  private:
    std::shared_ptr<const corpus::EncodedCorpus> corpus_;
    std::size_t budget_;
    std::uint64_t seed_;
    std::map<Direction, corpus::BatchStream> streams_;
};

/// One Adam state per encoder and per decoder, created on first update.
class ModuleOptimizers {
  public:
    explicit ModuleOptimizers(AdamConfig config) : config_(config) {}

    Adam& encoder(model::LanguageModulePair& pair);
    Adam& decoder(model::LanguageModulePair& pair);
    /// Number of updates applied to a module so far.
    std::size_t encoder_steps(const LanguageId& lang) const;
    std::size_t decoder_steps(const LanguageId& lang) const;

  private:
    AdamConfig config_;
    std::map<LanguageId, Adam> encoders_;
    std::map<LanguageId, Adam> decoders_;
};

struct DirectionLoss {
    Direction direction;
    sched::FreezeMode mode;
    double loss;
};

/// Teacher-forced loss of one batch: encode, decode, token-mean cross entropy.
ad::Tensor batch_loss(const model::LanguageModulePair& src, const model::LanguageModulePair& tgt,
                      const corpus::Batch& batch, model::ForwardMode src_mode, model::ForwardMode tgt_mode);

/// Runs every scheduled direction once, in schedule order, updating right
/// after each backward pass. A frozen side runs in eval mode and gets no
/// optimizer step, but gradient still flows through it.
/// Error on a missing language or a non-finite loss.
std::vector<DirectionLoss> multilingual_training_step(model::ModuleRegistry& registry,
                                                      const sched::TrainingSchedule& schedule, BatchSource& source,
                                                      ModuleOptimizers& optimizers, Rng& dropout_rng);

struct TrainRunConfig {
    sched::TrainingSchedule schedule;
    std::size_t max_steps = 2000;
    std::size_t token_budget = 256;
    std::size_t patience = 5;
    std::size_t eval_every = 100;
    std::uint64_t seed = 0;
    bool adaptive = false;
    AdamConfig adam{.base_lr = 1e-3, .warmup_steps = 200};

    /// Error naming the first invalid field.
    void validate() const;
};

/// Mean validation loss per direction.
using ValidationFn =
    std::function<std::map<Direction, double>(const model::ModuleRegistry&, const std::vector<Direction>&)>;

/// Token-weighted teacher-forced loss on a split, eval mode, no gradients.
ValidationFn split_loss_validator(std::shared_ptr<const corpus::EncodedCorpus> corpus, corpus::Split split,
                                  std::size_t token_budget);

struct StepRecord {
    std::size_t step;
    DirectionLoss loss;
};

struct EvalRecord {
    std::size_t step;
    double mean_loss;
    std::map<Direction, double> losses;
};

struct TrainHistory {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals; // evals[0] is the baseline before any update
    std::vector<std::pair<std::size_t, sched::TrainingSchedule>> schedules; // (from step, schedule)
    std::size_t steps_run = 0;
    bool early_stopped = false;

    /// Training losses of one direction in step order.
    std::vector<double> losses(const Direction& direction) const;
};

/// Steps until max_steps, or until `patience` consecutive periodic evals fail
/// to improve on the best mean validation loss so far (the baseline counts as
/// the first best). With `adaptive`, the schedule is rebuilt by
/// adaptive_update whenever the first direction's batches wrap an epoch.
/// Writes `step=<t> dir=<src>-<tgt> mode=<m> loss=<x>` lines to `log`.
TrainHistory train(model::ModuleRegistry& registry, BatchSource& source, const TrainRunConfig& config,
                   const ValidationFn& validate, std::ostream* log = nullptr);

/// Convenience overload: train-split batches and valid-split early stopping.
TrainHistory train(model::ModuleRegistry& registry, std::shared_ptr<const corpus::EncodedCorpus> corpus,
                   const TrainRunConfig& config, std::ostream* log = nullptr);

enum class TrainSide { Encoder, Decoder, Both };

/// Directions used to attach a new language to a frozen anchor:
/// new->anchor n-f trains the new encoder, anchor->new f-n the new decoder.
sched::TrainingSchedule add_language_schedule(const LanguageId& new_lang, const LanguageId& anchor, TrainSide side);

/// Adds `pair` to the registry and trains only its modules against the
/// anchor's frozen modules. `config.schedule` is replaced. Every existing
/// module is left bit-identical.
TrainHistory add_language(model::ModuleRegistry& registry, model::LanguageModulePair pair, const LanguageId& anchor,
                          TrainSide side, std::shared_ptr<const corpus::EncodedCorpus> corpus,
                          TrainRunConfig config, std::ostream* log = nullptr);

} // namespace mmt::train
