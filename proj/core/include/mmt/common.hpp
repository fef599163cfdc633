#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmt {

/// Runtime failure: bad input data, malformed files, missing resources.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a precondition of the API (wrong shapes, ids out of range).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Language code ("de", "en", ...) naming one encoder/decoder pair.
class LanguageId {
  public:
    LanguageId() = default;
    explicit LanguageId(std::string code) : code_(std::move(code)) {}

    const std::string& str() const { return code_; }
    bool empty() const { return code_.empty(); }

    auto operator<=>(const LanguageId&) const = default;

  private:
    std::string code_;
};

using TokenId = std::int32_t;

/// Translation direction src -> tgt.
struct Direction {
    LanguageId src;
    LanguageId tgt;

    std::string str() const { return src.str() + "-" + tgt.str(); }
    auto operator<=>(const Direction&) const = default;
};

// 64-bit FNV-1a. Stable across platforms, used for seeds and content hashes.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    return fnv1a(std::string_view(static_cast<const char*>(data), n), h);
}

/// Hash of the raw bytes of a float array; bit-level change detector.
inline std::uint64_t hash_values(const std::vector<double>& v) {
    return fnv1a(v.data(), v.size() * sizeof(double));
}

/// Deterministic random source. mt19937_64 output is fixed by the standard;
/// the conversions below avoid the implementation-defined std distributions
/// so that runs are reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Seed derived from a base seed and a label (e.g. a language code).
    static Rng derived(std::uint64_t seed, std::string_view label) {
        return Rng(fnv1a(label, fnv1a(&seed, sizeof(seed))));
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        if (n == 0) throw ContractError("Rng::below: empty range");
        // rejection sampling keeps the distribution exact
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

} // namespace mmt

template <>
struct std::hash<mmt::LanguageId> {
    std::size_t operator()(const mmt::LanguageId& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};
