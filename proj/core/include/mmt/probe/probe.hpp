#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/autodiff/tensor.hpp"
#include "mmt/corpus/toy.hpp"
#include "mmt/model/registry.hpp"

namespace mmt::probe {

enum class Label { Entailment, Contradiction, Neutral };
inline constexpr std::size_t kNumLabels = 3;
std::string_view to_string(Label label);
Label parse_label(std::string_view text);

struct InferencePair {
    std::string premise;
    std::string hypothesis;
    Label label = Label::Neutral;
};

/// [u, v, |u - v|, u * v]. Error when the lengths differ.
std::vector<double> combine_features(std::span<const double> u, std::span<const double> v);

struct ProbeConfig {
    std::size_t hidden = 128;
    double lr = 1e-3;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
};

/// Two dense layers with ReLU between them; softmax over labels.
class ProbeClassifier {
  public:
    ProbeClassifier(std::size_t input_dim, std::size_t hidden, std::size_t num_labels, Rng& rng);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_labels() const { return num_labels_; }

    /// Logits for a [rows x input_dim] feature matrix.
    ad::Tensor logits(const ad::Tensor& features) const;
    /// Row-wise label probabilities.
    std::vector<std::vector<double>> probabilities(std::span<const double> features, std::size_t rows) const;
    std::vector<std::size_t> predict(std::span<const double> features, std::size_t rows) const;

    std::vector<ad::Tensor> parameters() const { return {w1, b1, w2, b2}; }
    std::uint64_t hash() const;

    ad::Tensor w1, b1, w2, b2;

  private:
    std::size_t input_dim_;
    std::size_t num_labels_;
};

/// Mean-pooled encoder states of each text, BOS and EOS included,
/// row-major [texts x d_model]. Runs in eval mode without gradients.
std::vector<double> sentence_vectors(const model::LanguageModulePair& pair, std::span<const std::string> texts);

/// Feature rows for every pair through one language's encoder.
std::vector<double> pair_features(const model::LanguageModulePair& pair, std::span<const InferencePair> pairs);

/// Trains a classifier on features from the given (frozen) encoder.
/// Error when the data holds fewer than two distinct labels.
ProbeClassifier train_probe(const model::LanguageModulePair& pair, std::span<const InferencePair> train_pairs,
                            std::uint64_t seed, const ProbeConfig& config = {});

double accuracy(const ProbeClassifier& clf, const model::LanguageModulePair& pair,
                std::span<const InferencePair> pairs);

/// Accuracy per language, each computed through that language's own encoder.
std::map<LanguageId, double> evaluate_probe(const ProbeClassifier& clf, const model::ModuleRegistry& registry,
                                            const std::map<LanguageId, std::vector<InferencePair>>& test_pairs);

/// Share of the most frequent label.
double majority_baseline(std::span<const InferencePair> pairs);

/// Entailment when the hypothesis is a contiguous run of the premise,
/// contradiction when the two share no symbol, neutral otherwise.
Label pivot_label(std::span<const int> premise, std::span<const int> hypothesis);

/// Balanced synthetic inference pairs rendered in every language of `specs`,
/// line-aligned across languages.
std::map<LanguageId, std::vector<InferencePair>> generate_inference_data(std::span<const corpus::ToyLanguageSpec> specs,
                                                                         std::size_t n_pairs, std::uint64_t seed);

/// TSV `premise<TAB>hypothesis<TAB>label`.
void save_inference_tsv(std::span<const InferencePair> pairs, const std::filesystem::path& path);
std::vector<InferencePair> load_inference_tsv(const std::filesystem::path& path);

/// Aligned per-language accuracy table; `other` adds a column and the difference.
std::string accuracy_table(const std::map<LanguageId, double>& acc, double baseline,
                           const std::map<LanguageId, double>* other = nullptr);
/// CSV `lang,accuracy` (plus `other,delta` when given).
std::string accuracy_csv(const std::map<LanguageId, double>& acc, const std::map<LanguageId, double>* other = nullptr);

} // namespace mmt::probe
