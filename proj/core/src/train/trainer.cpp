#include "mmt/train/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "mmt/autodiff/ops.hpp"

namespace mmt::train {

CorpusBatchSource::CorpusBatchSource(std::shared_ptr<const corpus::EncodedCorpus> corpus, std::size_t token_budget,
                                     std::uint64_t seed)
    : corpus_(std::move(corpus)), budget_(token_budget), seed_(seed) {
    if (!corpus_) throw ContractError("CorpusBatchSource: null corpus");
}

const corpus::Batch& CorpusBatchSource::next(const Direction& direction) {
    auto it = streams_.find(direction);
    if (it == streams_.end()) {
        it = streams_.emplace(direction, corpus::BatchStream(corpus_, corpus::Split::Train, direction, budget_, seed_))
                 .first;
    }
    return it->second.next();
}

std::size_t CorpusBatchSource::epoch(const Direction& direction) const {
    auto it = streams_.find(direction);
    return it == streams_.end() ? 0 : it->second.epoch();
}

Adam& ModuleOptimizers::encoder(model::LanguageModulePair& pair) {
    auto it = encoders_.find(pair.lang);
    if (it == encoders_.end()) it = encoders_.emplace(pair.lang, Adam(pair.encoder.params().tensors(), config_)).first;
    return it->second;
}

Adam& ModuleOptimizers::decoder(model::LanguageModulePair& pair) {
    auto it = decoders_.find(pair.lang);
    if (it == decoders_.end()) it = decoders_.emplace(pair.lang, Adam(pair.decoder.params().tensors(), config_)).first;
    return it->second;
}

std::size_t ModuleOptimizers::encoder_steps(const LanguageId& lang) const {
    auto it = encoders_.find(lang);
    return it == encoders_.end() ? 0 : it->second.steps();
}

std::size_t ModuleOptimizers::decoder_steps(const LanguageId& lang) const {
    auto it = decoders_.find(lang);
    return it == decoders_.end() ? 0 : it->second.steps();
}

ad::Tensor batch_loss(const model::LanguageModulePair& src, const model::LanguageModulePair& tgt,
                      const corpus::Batch& batch, model::ForwardMode src_mode, model::ForwardMode tgt_mode) {
    auto states = model::encode(src.encoder, batch.src, src_mode);
    auto logits = model::decoder_logits(tgt.decoder, states, batch.tgt_in, tgt_mode);
    return ad::cross_entropy(logits, batch.tgt_out.ids, tok::kPad);
}

std::vector<DirectionLoss> multilingual_training_step(model::ModuleRegistry& registry,
                                                      const sched::TrainingSchedule& schedule, BatchSource& source,
                                                      ModuleOptimizers& optimizers, Rng& dropout_rng) {
    using sched::FreezeMode;
    for (const auto& l : schedule.languages()) {
        if (!registry.contains(l)) throw Error("schedule uses language '" + l.str() + "' which has no modules");
    }
    std::vector<DirectionLoss> out;
    out.reserve(schedule.size());
    for (const auto& sd : schedule.directions()) {
        auto& src = registry.at(sd.direction.src);
        auto& tgt = registry.at(sd.direction.tgt);
        const bool update_enc = sd.mode != FreezeMode::FreezeSrcEncoder;
        const bool update_dec = sd.mode != FreezeMode::FreezeTgtDecoder;
        const model::ForwardMode train_mode{true, &dropout_rng};
        const auto& batch = source.next(sd.direction);
        auto loss = batch_loss(src, tgt, batch, update_enc ? train_mode : model::ForwardMode::eval(),
                               update_dec ? train_mode : model::ForwardMode::eval());
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw Error("non-finite loss in direction " + sd.direction.str() + " (mode " +
                        std::string(sched::label(sd.mode)) + ", batch of " + std::to_string(batch.records.size()) +
                        " sentences)");
        }
        auto grads = ad::backward(loss);
        if (update_enc) optimizers.encoder(src).step(grads);
        if (update_dec) optimizers.decoder(tgt).step(grads);
        out.push_back({sd.direction, sd.mode, value});
    }
    return out;
}

void TrainRunConfig::validate() const {
    if (schedule.size() == 0) throw Error("training config: schedule is empty");
    if (max_steps == 0) throw Error("training config: max_steps must be positive");
    if (token_budget == 0) throw Error("training config: token_budget must be positive");
    if (patience == 0) throw Error("training config: patience must be positive");
    if (eval_every == 0) throw Error("training config: eval_every must be positive");
    if (!(adam.base_lr > 0.0)) throw Error("training config: learning rate must be positive");
}

ValidationFn split_loss_validator(std::shared_ptr<const corpus::EncodedCorpus> corpus, corpus::Split split,
                                  std::size_t token_budget) {
    return [corpus = std::move(corpus), split, token_budget](const model::ModuleRegistry& registry,
                                                             const std::vector<Direction>& directions) {
        ad::NoGradGuard no_grad;
        std::map<Direction, double> out;
        for (const auto& d : directions) {
            const auto& src = registry.at(d.src);
            const auto& tgt = registry.at(d.tgt);
            double total = 0.0;
            double tokens = 0.0;
            for (const auto& b : corpus::make_batches(*corpus, split, d, token_budget, 0)) {
                const double n = static_cast<double>(b.tgt_out.real_tokens());
                total += n * batch_loss(src, tgt, b, {}, {}).item();
                tokens += n;
            }
            out[d] = total / tokens;
        }
        return out;
    };
}

std::vector<double> TrainHistory::losses(const Direction& direction) const {
    std::vector<double> out;
    for (const auto& s : steps) {
        if (s.loss.direction == direction) out.push_back(s.loss.loss);
    }
    return out;
}

namespace {

std::vector<Direction> directions_of(const sched::TrainingSchedule& s) {
    std::vector<Direction> out;
    for (const auto& d : s.directions()) out.push_back(d.direction);
    return out;
}

std::vector<Direction> all_directions(const std::vector<LanguageId>& langs) {
    std::vector<Direction> out;
    for (const auto& a : langs) {
        for (const auto& b : langs) {
            if (a != b) out.push_back({a, b});
        }
    }
    return out;
}

double mean_of(const std::map<Direction, double>& losses, const std::vector<Direction>& dirs) {
    double total = 0.0;
    for (const auto& d : dirs) {
        auto it = losses.find(d);
        if (it == losses.end()) throw Error("validation returned no loss for " + d.str());
        total += it->second;
    }
    return total / static_cast<double>(dirs.size());
}

} // namespace

TrainHistory train(model::ModuleRegistry& registry, BatchSource& source, const TrainRunConfig& config,
                   const ValidationFn& validate, std::ostream* log) {
    config.validate();
    if (!validate) throw ContractError("train: no validation function");
    TrainHistory history;
    sched::TrainingSchedule schedule = config.schedule;
    history.schedules.emplace_back(0, schedule);
    ModuleOptimizers optimizers(config.adam);
    Rng dropout_rng = Rng::derived(config.seed, "dropout");

    auto evaluate = [&](std::size_t step) {
        const auto dirs = directions_of(schedule);
        auto losses = validate(registry, dirs);
        history.evals.push_back({step, mean_of(losses, dirs), std::move(losses)});
        return history.evals.back().mean_loss;
    };

    double best = evaluate(0);
    std::size_t since_best = 0;
    const Direction first = schedule.directions().front().direction;
    std::size_t last_epoch = 0;

    for (std::size_t step = 1; step <= config.max_steps; ++step) {
        auto losses = multilingual_training_step(registry, schedule, source, optimizers, dropout_rng);
        for (auto& l : losses) {
            if (log) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.6f", l.loss);
                *log << "step=" << step << " dir=" << l.direction.str() << " mode=" << sched::label(l.mode)
                     << " loss=" << buf << "\n";
            }
            history.steps.push_back({step, std::move(l)});
        }
        history.steps_run = step;

        if (config.adaptive && source.epoch(first) != last_epoch) {
            last_epoch = source.epoch(first);
            const auto langs = schedule.languages();
            auto all = validate(registry, all_directions(langs));
            auto next = sched::adaptive_update(schedule, all);
            if (log) *log << "# epoch " << last_epoch << " schedule at step " << step << "\n" << next.serialize();
            if (!(next == schedule)) {
                schedule = std::move(next);
                history.schedules.emplace_back(step, schedule);
            }
        }

        if (step % config.eval_every == 0) {
            const double mean = evaluate(step);
            if (mean < best) {
                best = mean;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                history.early_stopped = true;
                break;
            }
        }
    }
    return history;
}

TrainHistory train(model::ModuleRegistry& registry, std::shared_ptr<const corpus::EncodedCorpus> corpus,
                   const TrainRunConfig& config, std::ostream* log) {
    CorpusBatchSource source(corpus, config.token_budget, config.seed);
    return train(registry, source, config, split_loss_validator(corpus, corpus::Split::Valid, config.token_budget),
                 log);
}

sched::TrainingSchedule add_language_schedule(const LanguageId& new_lang, const LanguageId& anchor, TrainSide side) {
    std::vector<sched::ScheduledDirection> dirs;
    if (side != TrainSide::Decoder) dirs.push_back({{new_lang, anchor}, sched::FreezeMode::FreezeTgtDecoder});
    if (side != TrainSide::Encoder) dirs.push_back({{anchor, new_lang}, sched::FreezeMode::FreezeSrcEncoder});
    return sched::TrainingSchedule(std::move(dirs));
}

TrainHistory add_language(model::ModuleRegistry& registry, model::LanguageModulePair pair, const LanguageId& anchor,
                          TrainSide side, std::shared_ptr<const corpus::EncodedCorpus> corpus,
                          TrainRunConfig config, std::ostream* log) {
    if (!registry.contains(anchor)) throw Error("anchor language '" + anchor.str() + "' is not in the registry");
    if (registry.contains(pair.lang)) throw Error("language '" + pair.lang.str() + "' is already in the registry");
    if (pair.config.d_model != registry.at(anchor).config.d_model) {
        throw Error("new language d_model " + std::to_string(pair.config.d_model) + " differs from the anchor's " +
                    std::to_string(registry.at(anchor).config.d_model));
    }
    const LanguageId lang = pair.lang;
    config.schedule = add_language_schedule(lang, anchor, side);
    config.adaptive = false;
    registry.add(std::move(pair));
    return train(registry, std::move(corpus), config, log);
}

} // namespace mmt::train
