#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "mmt/config/run_config.hpp"
#include "mmt/eval/translate.hpp"
#include "mmt/probe/probe.hpp"
#include "mmt/viz/projection.hpp"
#include "mmt/workflow/workflow.hpp"

namespace mmt::cli {
namespace {

namespace fs = std::filesystem;

std::vector<LanguageId> parse_langs(const std::string& text) {
    std::vector<LanguageId> out;
    std::istringstream is(text);
    for (std::string x; std::getline(is, x, ',');) {
        if (!x.empty()) out.emplace_back(x);
    }
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
    if (!os) throw Error("failed writing " + path.string());
}

// Flags shared by the training subcommands; unset ones keep the config value.
struct TrainFlags {
    std::string config_path;
    std::string langs;
    std::string schedule;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps, budget, patience, eval_every, warmup, merges;
    std::optional<double> lr;

    void add_to(CLI::App& app, bool with_schedule) {
        app.add_option("--config", config_path, "Run configuration file (key = value with [sections])");
        if (with_schedule) {
            app.add_option("--langs", langs, "Comma-separated languages to train (default: every corpus language)");
            app.add_option("--schedule", schedule, "basic, far, close, adaptive, or a schedule file");
        }
        app.add_option("--seed", seed, "Seed for every random choice");
        app.add_option("--steps", steps, "Maximum training steps");
        app.add_option("--budget", budget, "Token budget per batch");
        app.add_option("--patience", patience, "Evaluations without improvement before stopping");
        app.add_option("--eval-every", eval_every, "Steps between validation evaluations");
        app.add_option("--lr", lr, "Base learning rate");
        app.add_option("--warmup", warmup, "Linear warmup steps");
        app.add_option("--merges", merges, "BPE merges per language");
    }

    config::RunConfig resolve() const {
        config::RunConfig c = config_path.empty() ? config::RunConfig{} : config::RunConfig::load(config_path);
        if (!langs.empty()) c.languages = parse_langs(langs);
        if (!schedule.empty()) {
            try {
                c.schedule = config::parse_schedule_kind(schedule);
            } catch (const Error&) {
                c.schedule = config::ScheduleKind::File;
                c.schedule_file = schedule;
            }
        }
        if (seed) c.seed = *seed;
        if (steps) c.max_steps = *steps;
        if (budget) c.token_budget = *budget;
        if (patience) c.patience = *patience;
        if (eval_every) c.eval_every = *eval_every;
        if (lr) c.lr = *lr;
        if (warmup) c.warmup_steps = *warmup;
        if (merges) c.bpe_merges = *merges;
        return c;
    }
};

struct DecodeFlags {
    std::size_t beam = 4;
    std::size_t max_len = 64;
    double alpha = 1.0;
    bool greedy = false;

    void add_to(CLI::App& app) {
        app.add_option("--beam", beam, "Beam size")->check(CLI::PositiveNumber);
        app.add_option("--max-len", max_len, "Maximum generated tokens")->check(CLI::PositiveNumber);
        app.add_option("--length-penalty", alpha, "Length normalization exponent");
        app.add_flag("--greedy", greedy, "Greedy decoding instead of beam search");
    }
    eval::DecodeConfig get() const {
        if (greedy) return {eval::Strategy::Greedy, 1, max_len, alpha};
        return {eval::Strategy::Beam, beam, max_len, alpha};
    }
};

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Modular multilingual translation with per-language encoders and decoders"};
    app.name("mmt");
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "Generate a toy multi-parallel corpus with inference pairs");
    std::size_t gen_langs = 4, gen_sentences = 500, gen_nli_train = 900, gen_nli_test = 300;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--langs", gen_langs, "Number of toy languages, 2-5 (de en es fr ru)")->check(CLI::Range(2, 5));
    gen->add_option("--sentences", gen_sentences, "Multi-parallel sentences")->check(CLI::PositiveNumber);
    gen->add_option("--nli-train", gen_nli_train, "Inference pairs for probe training");
    gen->add_option("--nli-test", gen_nli_test, "Inference pairs for probe evaluation");
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--out", gen_out, "Output directory")->required();

    // train-initial
    auto* ti = app.add_subcommand("train-initial", "Train the initial languages jointly");
    TrainFlags ti_flags;
    std::string ti_corpus, ti_out;
    ti_flags.add_to(*ti, true);
    ti->add_option("--corpus", ti_corpus, "Corpus directory")->required();
    ti->add_option("--out", ti_out, "Model directory to write")->required();

    // add-language
    auto* al = app.add_subcommand("add-language", "Attach a new language to a frozen anchor");
    TrainFlags al_flags;
    std::string al_models, al_corpus, al_lang, al_anchor, al_side = "both", al_out;
    al_flags.add_to(*al, false);
    al->add_option("--models", al_models, "Model directory")->required();
    al->add_option("--corpus", al_corpus, "Corpus directory with the new language")->required();
    al->add_option("--lang", al_lang, "New language")->required();
    al->add_option("--anchor", al_anchor, "Existing language whose modules stay frozen")->required();
    al->add_option("--side", al_side, "encoder, decoder or both")->check(CLI::IsMember({"encoder", "decoder", "both"}));
    al->add_option("--out", al_out, "Write the extended model here instead of in place");

    // translate
    auto* tr = app.add_subcommand("translate", "Translate text with any encoder and decoder");
    std::string tr_models, tr_src, tr_tgt;
    std::vector<std::string> tr_text;
    DecodeFlags tr_decode;
    tr->add_option("--models", tr_models, "Model directory")->required();
    tr->add_option("--src", tr_src, "Source language")->required();
    tr->add_option("--tgt", tr_tgt, "Target language")->required();
    tr->add_option("--text", tr_text, "Sentence(s); read from standard input when absent");
    tr_decode.add_to(*tr);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "BLEU matrix over all directions");
    std::string ev_models, ev_corpus, ev_langs, ev_new, ev_anchor, ev_out, ev_split = "test";
    DecodeFlags ev_decode;
    ev->add_option("--models", ev_models, "Model directory")->required();
    ev->add_option("--corpus", ev_corpus, "Corpus directory")->required();
    ev->add_option("--langs", ev_langs, "Initial languages (default: every model language except --new)");
    ev->add_option("--new", ev_new, "Added language, evaluated against the anchor and zero-shot");
    ev->add_option("--anchor", ev_anchor, "Anchor the new language was trained with");
    ev->add_option("--split", ev_split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
    ev->add_option("--out", ev_out, "CSV output path");
    ev_decode.add_to(*ev);

    // probe
    auto* pr = app.add_subcommand("probe", "Train an inference probe on one frozen encoder, test on all");
    std::string pr_models, pr_data, pr_train_lang = "en", pr_compare, pr_out;
    std::uint64_t pr_seed = 1;
    probe::ProbeConfig pr_cfg;
    pr->add_option("--models", pr_models, "Model directory")->required();
    pr->add_option("--data", pr_data, "Directory with nli.train.<lang>.tsv and nli.test.<lang>.tsv")->required();
    pr->add_option("--train-lang", pr_train_lang, "Language whose encoder trains the probe");
    pr->add_option("--compare", pr_compare, "Second model directory, reported side by side with deltas");
    pr->add_option("--seed", pr_seed, "Random seed");
    pr->add_option("--epochs", pr_cfg.epochs, "Probe training epochs");
    pr->add_option("--hidden", pr_cfg.hidden, "Hidden units");
    pr->add_option("--out", pr_out, "CSV output path");

    // visualize
    auto* vz = app.add_subcommand(
        "visualize", "Project sentence representations or word embeddings to 2-D (PCA, standing in for UMAP)");
    std::string vz_models, vz_corpus, vz_out, vz_kind = "sentences", vz_split = "test";
    std::size_t vz_n = 100;
    vz->add_option("--models", vz_models, "Model directory")->required();
    vz->add_option("--corpus", vz_corpus, "Corpus directory (sentences)");
    vz->add_option("--kind", vz_kind, "sentences or words")->check(CLI::IsMember({"sentences", "words"}));
    vz->add_option("--sentences", vz_n, "Sentences per language")->check(CLI::PositiveNumber);
    vz->add_option("--split", vz_split, "Corpus split")->check(CLI::IsMember({"train", "valid", "test"}));
    vz->add_option("--out", vz_out, "Output stem; writes <stem>.csv and <stem>.svg")->required();

    // validate-schedule
    auto* vs = app.add_subcommand("validate-schedule", "Check a schedule's coverage and frozen cycle");
    std::string vs_file, vs_preset, vs_langs;
    vs->add_option("--file", vs_file, "Schedule file (src tgt mode per line)");
    vs->add_option("--preset", vs_preset, "basic, far or close");
    vs->add_option("--langs", vs_langs, "Languages for --preset (default de,en,es,fr)");
    vs->add_option("--write", vs_file, "With --preset, also write the schedule to this file");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "mmt: " << e.what() << "\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 1;
    }

    try {
        if (*gen) {
            auto data = workflow::make_toy_dataset(gen_langs, gen_sentences, gen_seed, gen_nli_train, gen_nli_test);
            workflow::save_toy_dataset(data, gen_out);
            out << "wrote " << data.corpus.size() << " sentences in " << data.corpus.langs().size()
                << " languages to " << gen_out << "\n";
        } else if (*ti) {
            auto cfg = ti_flags.resolve();
            const auto corpus = corpus::MultiParallelCorpus::load(ti_corpus);
            if (cfg.languages.empty()) cfg.languages = corpus.langs();
            cfg.corpus_dir = ti_corpus;
            cfg.output_dir = ti_out;
            fs::create_directories(ti_out);
            std::ofstream log(fs::path(ti_out) / "train.log", std::ios::binary);
            auto run = workflow::train_initial(corpus, cfg, &log);
            workflow::save_registry(run.registry, ti_out);
            cfg.save(fs::path(ti_out) / "run.cfg");
            run.history.schedules.front().second.save(fs::path(ti_out) / "schedule.txt");
            write_file(fs::path(ti_out) / "history.csv", workflow::history_csv(run.history));
            out << "trained " << run.registry.size() << " languages for " << run.history.steps_run << " steps"
                << (run.history.early_stopped ? " (early stop)" : "") << ", final validation loss "
                << run.history.evals.back().mean_loss << "\n";
        } else if (*al) {
            auto cfg = al_flags.resolve();
            const auto corpus = corpus::MultiParallelCorpus::load(al_corpus);
            auto registry = workflow::load_registry(al_models);
            cfg.languages = registry.languages();
            const fs::path dest = al_out.empty() ? fs::path(al_models) : fs::path(al_out);
            if (dest != fs::path(al_models)) workflow::save_registry(registry, dest);
            const auto side = al_side == "encoder"   ? train::TrainSide::Encoder
                              : al_side == "decoder" ? train::TrainSide::Decoder
                                                     : train::TrainSide::Both;
            std::ofstream log(dest / ("add." + al_lang + ".log"), std::ios::binary);
            auto h = workflow::add_new_language(registry, corpus, LanguageId(al_lang), LanguageId(al_anchor), side,
                                                cfg, &log);
            workflow::save_language(registry, LanguageId(al_lang), dest);
            out << "added " << al_lang << " via " << al_anchor << " in " << h.steps_run << " steps\n";
        } else if (*tr) {
            const auto registry = workflow::load_registry(tr_models);
            if (!registry.contains(LanguageId(tr_src))) throw Error("unknown source language '" + tr_src + "'");
            if (!registry.contains(LanguageId(tr_tgt))) throw Error("unknown target language '" + tr_tgt + "'");
            std::vector<std::string> lines = tr_text;
            if (lines.empty()) {
                for (std::string l; std::getline(std::cin, l);) lines.push_back(l);
            }
            for (const auto& l : eval::translate_all(registry, LanguageId(tr_src), LanguageId(tr_tgt), lines,
                                                     tr_decode.get())) {
                out << l << "\n";
            }
        } else if (*ev) {
            const auto registry = workflow::load_registry(ev_models);
            const auto corpus = corpus::MultiParallelCorpus::load(ev_corpus);
            std::vector<LanguageId> initial = ev_langs.empty() ? std::vector<LanguageId>{} : parse_langs(ev_langs);
            if (initial.empty()) {
                for (const auto& l : registry.languages()) {
                    if (l.str() != ev_new) initial.push_back(l);
                }
            }
            const LanguageId new_lang(ev_new), anchor(ev_anchor);
            if (!ev_new.empty() && ev_anchor.empty()) throw Error("--new needs --anchor");
            auto dirs = eval::standard_directions(initial, ev_new.empty() ? nullptr : &new_lang,
                                                  ev_new.empty() ? nullptr : &anchor);
            auto m = eval::evaluate_matrix(registry, corpus, dirs, ev_decode.get(), corpus::parse_split(ev_split));
            out << m.to_table();
            if (!ev_out.empty()) write_file(ev_out, m.to_csv());
        } else if (*pr) {
            const auto registry = workflow::load_registry(pr_models);
            const auto data = workflow::load_toy_dataset(pr_data);
            const LanguageId train_lang(pr_train_lang);
            if (!data.nli_train.contains(train_lang)) throw Error("no inference training data for " + pr_train_lang);
            std::map<LanguageId, std::vector<probe::InferencePair>> tests;
            for (const auto& l : registry.languages()) {
                if (data.nli_test.contains(l)) tests[l] = data.nli_test.at(l);
            }
            auto clf = probe::train_probe(registry.at(train_lang), data.nli_train.at(train_lang), pr_seed, pr_cfg);
            const auto acc = probe::evaluate_probe(clf, registry, tests);
            const double base = probe::majority_baseline(data.nli_test.at(train_lang));
            std::optional<std::map<LanguageId, double>> other;
            if (!pr_compare.empty()) {
                const auto reg2 = workflow::load_registry(pr_compare);
                auto clf2 = probe::train_probe(reg2.at(train_lang), data.nli_train.at(train_lang), pr_seed, pr_cfg);
                std::map<LanguageId, std::vector<probe::InferencePair>> shared;
                for (const auto& [l, t] : tests) {
                    if (reg2.contains(l)) shared[l] = t;
                }
                other = probe::evaluate_probe(clf2, reg2, shared);
            }
            out << "probe trained on " << pr_train_lang << "\n"
                << probe::accuracy_table(acc, base, other ? &*other : nullptr);
            if (!pr_out.empty()) write_file(pr_out, probe::accuracy_csv(acc, other ? &*other : nullptr));
        } else if (*vz) {
            const auto registry = workflow::load_registry(vz_models);
            std::vector<double> vectors;
            std::vector<std::string> labels;
            std::vector<LanguageId> langs;
            std::size_t dim = 0;
            std::optional<double> cosine;
            if (vz_kind == "sentences") {
                if (vz_corpus.empty()) throw Error("--kind sentences needs --corpus");
                const auto corpus = corpus::MultiParallelCorpus::load(vz_corpus);
                std::vector<std::vector<double>> per_lang;
                for (const auto& l : registry.languages()) {
                    if (!corpus.has_language(l)) continue;
                    auto lines = corpus.split_lines(l, corpus::parse_split(vz_split));
                    if (lines.size() > vz_n) lines.resize(vz_n);
                    auto v = probe::sentence_vectors(registry.at(l), lines);
                    dim = registry.at(l).config.d_model;
                    for (std::size_t i = 0; i < lines.size(); ++i) {
                        labels.push_back(std::to_string(i));
                        langs.push_back(l);
                    }
                    vectors.insert(vectors.end(), v.begin(), v.end());
                    per_lang.push_back(std::move(v));
                }
                double total = 0.0;
                std::size_t pairs = 0;
                for (std::size_t a = 0; a < per_lang.size(); ++a) {
                    for (std::size_t b = a + 1; b < per_lang.size(); ++b) {
                        total += viz::mean_cosine_distance(per_lang[a], per_lang[b], dim);
                        ++pairs;
                    }
                }
                if (pairs) cosine = total / static_cast<double>(pairs);
            } else {
                for (const auto& l : registry.languages()) {
                    const auto& p = registry.at(l);
                    dim = p.config.d_model;
                    auto table = p.encoder.embed.values();
                    for (std::size_t id = 4; id < p.config.vocab_size; ++id) {
                        labels.push_back(p.tokenizer ? p.tokenizer->symbol(static_cast<TokenId>(id)) : std::to_string(id));
                        langs.push_back(l);
                        vectors.insert(vectors.end(), table.begin() + static_cast<long>(id * dim),
                                       table.begin() + static_cast<long>((id + 1) * dim));
                    }
                }
            }
            const auto proj = viz::project_2d(vectors, dim, labels, langs);
            viz::render_scatter(proj, vz_out, vz_kind == "sentences" ? "sentence representations" : "word embeddings");
            out << "wrote " << proj.points.size() << " points to " << vz_out << ".csv and " << vz_out << ".svg\n";
            if (cosine) out << "mean cross-lingual cosine distance " << *cosine << "\n";
        } else if (*vs) {
            sched::TrainingSchedule s;
            std::vector<LanguageId> langs;
            if (!vs_preset.empty()) {
                langs = parse_langs(vs_langs.empty() ? "de,en,es,fr" : vs_langs);
                s = vs_preset == "basic" ? sched::basic_schedule(langs) : sched::frozen_schedule(langs, sched::parse_preset(vs_preset));
                if (!vs_file.empty()) s.save(vs_file);
            } else if (!vs_file.empty()) {
                s = sched::TrainingSchedule::load(vs_file);
                langs = vs_langs.empty() ? s.languages() : parse_langs(vs_langs);
            } else {
                err << "mmt: validate-schedule needs --file or --preset\n";
                return 1;
            }
            out << sched::validate_schedule(s, langs).to_text();
        }
    } catch (const std::exception& e) {
        err << "mmt: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace mmt::cli
