#include "mmt/probe/probe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mmt/autodiff/ops.hpp"
#include "mmt/train/adam.hpp"

namespace mmt::probe {

std::string_view to_string(Label label) {
    switch (label) {
    case Label::Entailment:
        return "entailment";
    case Label::Contradiction:
        return "contradiction";
    case Label::Neutral:
        return "neutral";
    }
    return "?";
}

Label parse_label(std::string_view text) {
    for (auto l : {Label::Entailment, Label::Contradiction, Label::Neutral}) {
        if (to_string(l) == text) return l;
    }
    throw Error("unknown inference label '" + std::string(text) + "'");
}

std::vector<double> combine_features(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw Error("combine_features: vectors of length " + std::to_string(u.size()) + " and " +
                    std::to_string(v.size()));
    }
    const std::size_t n = u.size();
    std::vector<double> h(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
        h[i] = u[i];
        h[n + i] = v[i];
        h[2 * n + i] = std::abs(u[i] - v[i]);
        h[3 * n + i] = u[i] * v[i];
    }
    return h;
}

namespace {

std::vector<double> glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> out(rows * cols);
    for (auto& x : out) x = rng.uniform(-a, a);
    return out;
}

} // namespace

ProbeClassifier::ProbeClassifier(std::size_t input_dim, std::size_t hidden, std::size_t num_labels, Rng& rng)
    : input_dim_(input_dim), num_labels_(num_labels) {
    if (num_labels < 2) throw ContractError("probe classifier needs at least 2 labels");
    if (input_dim == 0 || hidden == 0) throw ContractError("probe classifier dimensions must be positive");
    w1 = ad::Tensor::parameter({input_dim, hidden}, glorot(input_dim, hidden, rng));
    b1 = ad::Tensor::parameter({1, hidden}, std::vector<double>(hidden, 0.0));
    w2 = ad::Tensor::parameter({hidden, num_labels}, glorot(hidden, num_labels, rng));
    b2 = ad::Tensor::parameter({1, num_labels}, std::vector<double>(num_labels, 0.0));
}

ad::Tensor ProbeClassifier::logits(const ad::Tensor& features) const {
    if (features.cols() != input_dim_) {
        throw Error("probe expects " + std::to_string(input_dim_) + " features, got " +
                    std::to_string(features.cols()));
    }
    auto h = ad::relu(ad::add(ad::matmul(features, w1), b1));
    return ad::add(ad::matmul(h, w2), b2);
}

std::vector<std::vector<double>> ProbeClassifier::probabilities(std::span<const double> features,
                                                                std::size_t rows) const {
    ad::NoGradGuard no_grad;
    auto p = ad::softmax(
        logits(ad::Tensor::constant({rows, input_dim_}, std::vector<double>(features.begin(), features.end()))));
    auto d = p.data();
    std::vector<std::vector<double>> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r].assign(d.begin() + r * num_labels_, d.begin() + (r + 1) * num_labels_);
    return out;
}

std::vector<std::size_t> ProbeClassifier::predict(std::span<const double> features, std::size_t rows) const {
    std::vector<std::size_t> out;
    for (const auto& p : probabilities(features, rows)) {
        out.push_back(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    return out;
}

std::uint64_t ProbeClassifier::hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& t : parameters()) h = fnv1a(t.values().data(), t.numel() * sizeof(double), h);
    return h;
}

std::vector<double> sentence_vectors(const model::LanguageModulePair& pair, std::span<const std::string> texts) {
    if (!pair.tokenizer) throw Error("language " + pair.lang.str() + " has no tokenizer attached");
    ad::NoGradGuard no_grad;
    const std::size_t d = pair.config.d_model;
    std::vector<double> out;
    out.reserve(texts.size() * d);
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < texts.size(); start += kChunk) {
        std::vector<std::vector<TokenId>> ids;
        for (std::size_t i = start; i < std::min(texts.size(), start + kChunk); ++i) {
            auto x = pair.tokenizer->encode(texts[i]);
            if (x.size() > pair.config.max_len) x.resize(pair.config.max_len);
            ids.push_back(std::move(x));
        }
        auto states = model::encode(pair.encoder, model::TokenBatch::from_sequences(ids));
        auto pooled = model::mean_pool(states);
        out.insert(out.end(), pooled.data().begin(), pooled.data().end());
    }
    return out;
}

std::vector<double> pair_features(const model::LanguageModulePair& pair, std::span<const InferencePair> pairs) {
    std::vector<std::string> prem, hyp;
    for (const auto& p : pairs) {
        prem.push_back(p.premise);
        hyp.push_back(p.hypothesis);
    }
    const auto u = sentence_vectors(pair, prem);
    const auto v = sentence_vectors(pair, hyp);
    const std::size_t d = pair.config.d_model;
    std::vector<double> out;
    out.reserve(pairs.size() * 4 * d);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto h = combine_features(std::span(u).subspan(i * d, d), std::span(v).subspan(i * d, d));
        out.insert(out.end(), h.begin(), h.end());
    }
    return out;
}

ProbeClassifier train_probe(const model::LanguageModulePair& pair, std::span<const InferencePair> train_pairs,
                            std::uint64_t seed, const ProbeConfig& config) {
    std::set<Label> labels;
    for (const auto& p : train_pairs) labels.insert(p.label);
    if (labels.size() < 2) throw Error("probe training data has fewer than 2 distinct labels");
    if (config.batch_size == 0 || config.epochs == 0) throw ContractError("probe config: empty batches or epochs");

    const std::size_t dim = 4 * pair.config.d_model;
    const auto features = pair_features(pair, train_pairs);
    Rng rng = Rng::derived(seed, "probe");
    ProbeClassifier clf(dim, config.hidden, kNumLabels, rng);
    train::Adam adam(clf.parameters(), train::AdamConfig{.base_lr = config.lr, .warmup_steps = 0});

    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<double> x;
            x.reserve((end - start) * dim);
            std::vector<TokenId> y;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t r = order[i];
                x.insert(x.end(), features.begin() + r * dim, features.begin() + (r + 1) * dim);
                y.push_back(static_cast<TokenId>(train_pairs[r].label));
            }
            auto loss = ad::cross_entropy(clf.logits(ad::Tensor::constant({end - start, dim}, std::move(x))), y, -1);
            adam.step(ad::backward(loss));
        }
    }
    return clf;
}

double accuracy(const ProbeClassifier& clf, const model::LanguageModulePair& pair,
                std::span<const InferencePair> pairs) {
    if (pairs.empty()) throw Error("probe accuracy on an empty set");
    if (clf.input_dim() != 4 * pair.config.d_model) {
        throw Error("probe was trained on d_model " + std::to_string(clf.input_dim() / 4) + " but " +
                    pair.lang.str() + " has d_model " + std::to_string(pair.config.d_model));
    }
    const auto pred = clf.predict(pair_features(pair, pairs), pairs.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) hits += pred[i] == static_cast<std::size_t>(pairs[i].label);
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::map<LanguageId, double> evaluate_probe(const ProbeClassifier& clf, const model::ModuleRegistry& registry,
                                            const std::map<LanguageId, std::vector<InferencePair>>& test_pairs) {
    std::map<LanguageId, double> out;
    for (const auto& [lang, pairs] : test_pairs) out[lang] = accuracy(clf, registry.at(lang), pairs);
    return out;
}

double majority_baseline(std::span<const InferencePair> pairs) {
    if (pairs.empty()) throw Error("majority baseline of an empty set");
    std::array<std::size_t, kNumLabels> counts{};
    for (const auto& p : pairs) ++counts[static_cast<std::size_t>(p.label)];
    return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(pairs.size());
}

Label pivot_label(std::span<const int> premise, std::span<const int> hypothesis) {
    if (!hypothesis.empty() &&
        std::search(premise.begin(), premise.end(), hypothesis.begin(), hypothesis.end()) != premise.end()) {
        return Label::Entailment;
    }
    const std::set<int> p(premise.begin(), premise.end());
    for (int s : hypothesis) {
        if (p.contains(s)) return Label::Neutral;
    }
    return Label::Contradiction;
}

std::map<LanguageId, std::vector<InferencePair>> generate_inference_data(std::span<const corpus::ToyLanguageSpec> specs,
                                                                         std::size_t n_pairs, std::uint64_t seed) {
    if (specs.empty()) throw ContractError("generate_inference_data: no languages");
    const std::size_t alphabet = specs.front().lexicon.size();
    if (alphabet < 2 * corpus::kMaxLength) throw ContractError("generate_inference_data: alphabet too small");
    Rng rng = Rng::derived(seed, "inference");
    auto random_len = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };

    std::vector<std::pair<std::vector<int>, std::vector<int>>> pivots;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const auto want = static_cast<Label>(i % kNumLabels);
        std::vector<int> prem(random_len(4, corpus::kMaxLength));
        for (auto& s : prem) s = static_cast<int>(rng.below(alphabet));
        std::vector<int> hyp;
        if (want == Label::Entailment) {
            const std::size_t len = random_len(2, prem.size() - 1);
            const std::size_t at = rng.below(prem.size() - len + 1);
            hyp.assign(prem.begin() + static_cast<long>(at), prem.begin() + static_cast<long>(at + len));
        } else if (want == Label::Contradiction) {
            const std::set<int> used(prem.begin(), prem.end());
            hyp.resize(random_len(2, 6));
            for (auto& s : hyp) {
                do s = static_cast<int>(rng.below(alphabet));
                while (used.contains(s));
            }
        } else {
            // keep drawing until one symbol is shared but no contiguous match exists
            do {
                hyp.resize(random_len(2, 6));
                for (auto& s : hyp) s = static_cast<int>(rng.below(alphabet));
                hyp[rng.below(hyp.size())] = prem[rng.below(prem.size())];
            } while (pivot_label(prem, hyp) != Label::Neutral);
        }
        if (pivot_label(prem, hyp) != want) throw ContractError("generate_inference_data: label construction failed");
        pivots.emplace_back(std::move(prem), std::move(hyp));
        labels.push_back(want);
    }
    std::vector<std::size_t> order(n_pairs);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::map<LanguageId, std::vector<InferencePair>> out;
    for (const auto& spec : specs) {
        auto& rows = out[spec.lang];
        for (std::size_t i : order) {
            rows.push_back({spec.render(pivots[i].first), spec.render(pivots[i].second), labels[i]});
        }
    }
    return out;
}

void save_inference_tsv(std::span<const InferencePair> pairs, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    for (const auto& p : pairs) os << p.premise << '\t' << p.hypothesis << '\t' << to_string(p.label) << '\n';
    if (!os) throw Error("failed writing " + path.string());
}

std::vector<InferencePair> load_inference_tsv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path.string());
    std::vector<InferencePair> out;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (line.empty()) continue;
        const auto a = line.find('\t');
        const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
        if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos) {
            throw Error(path.string() + ":" + std::to_string(n) + ": expected 3 tab-separated fields");
        }
        out.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), parse_label(line.substr(b + 1))});
    }
    return out;
}

std::string accuracy_table(const std::map<LanguageId, double>& acc, double baseline,
                           const std::map<LanguageId, double>* other) {
    std::ostringstream os;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-6s %9s", "lang", "accuracy");
    os << buf;
    if (other) {
        std::snprintf(buf, sizeof buf, " %9s %8s", "other", "delta");
        os << buf;
    }
    os << "\n";
    for (const auto& [lang, a] : acc) {
        std::snprintf(buf, sizeof buf, "%-6s %9.2f", lang.str().c_str(), 100.0 * a);
        os << buf;
        if (other) {
            const auto it = other->find(lang);
            if (it != other->end()) {
                std::snprintf(buf, sizeof buf, " %9.2f %+8.2f", 100.0 * it->second, 100.0 * (a - it->second));
                os << buf;
            }
        }
        os << "\n";
    }
    std::snprintf(buf, sizeof buf, "majority baseline %.2f\n", 100.0 * baseline);
    os << buf;
    return os.str();
}

std::string accuracy_csv(const std::map<LanguageId, double>& acc, const std::map<LanguageId, double>* other) {
    std::string out = other ? "lang,accuracy,other,delta\n" : "lang,accuracy\n";
    char buf[96];
    for (const auto& [lang, a] : acc) {
        out += lang.str();
        std::snprintf(buf, sizeof buf, ",%.6f", a);
        out += buf;
        if (other) {
            const auto it = other->find(lang);
            if (it != other->end()) {
                std::snprintf(buf, sizeof buf, ",%.6f,%.6f", it->second, a - it->second);
                out += buf;
            } else {
                out += ",,";
            }
        }
        out += "\n";
    }
    return out;
}

} // namespace mmt::probe
