#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <set>

#include "mmt/autodiff/grad_check.hpp"
#include "mmt/autodiff/ops.hpp"
#include "mmt/model/checkpoint.hpp"
#include "mmt/model/registry.hpp"
#include "mmt/tokenizer/bpe.hpp"

using namespace mmt;
using namespace mmt::model;

namespace {

ModelConfig small_config(std::size_t vocab = 17) {
    ModelConfig c;
    c.num_layers = 2;
    c.num_heads = 4;
    c.d_model = 32;
    c.d_ff = 48;
    c.dropout = 0.0;
    c.max_len = 16;
    c.vocab_size = vocab;
    return c;
}

std::vector<LanguageId> langs(std::initializer_list<const char*> names) {
    std::vector<LanguageId> out;
    for (auto n : names) out.emplace_back(n);
    return out;
}

std::vector<double> row(const Tensor& t, std::size_t r) {
    auto d = t.data();
    return std::vector<double>(d.begin() + r * t.cols(), d.begin() + (r + 1) * t.cols());
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool bit_identical(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& [na, ta] = a.entries()[i];
        const auto& [nb, tb] = b.entries()[i];
        if (na != nb || ta.shape() != tb.shape()) return false;
        if (std::memcmp(ta.values().data(), tb.values().data(), ta.numel() * sizeof(double)) != 0) return false;
    }
    return true;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / ("mmt_test_model_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("config presets and validation") {
    auto d = ModelConfig::desk();
    CHECK(d.num_layers == 2);
    CHECK(d.num_heads == 4);
    CHECK(d.d_model == 64);
    CHECK(d.d_ff == 128);
    CHECK(d.dropout == doctest::Approx(0.1));
    auto f = ModelConfig::full_scale();
    CHECK(f.num_layers == 6);
    CHECK(f.num_heads == 8);
    CHECK(f.d_model == 512);
    CHECK(f.dropout == doctest::Approx(0.3));
    CHECK(f.vocab_size == 32000);

    auto bad = small_config();
    bad.num_heads = 5;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = small_config();
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = small_config();
    bad.vocab_size = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    CHECK(small_config().first_difference(small_config()).empty());
    auto other = small_config();
    other.d_model = 64;
    CHECK(small_config().first_difference(other) == "d_model");
}

TEST_CASE("init_modules is seeded and builds N encoders and N decoders") {
    auto ls = langs({"de", "en", "es", "fr"});
    auto a = init_modules(ls, small_config(), 7);
    auto b = init_modules(ls, small_config(), 7);
    CHECK(a.num_encoders() == 4);
    CHECK(a.num_decoders() == 4);
    for (const auto& l : ls) {
        CHECK(bit_identical(a.at(l).encoder.params(), b.at(l).encoder.params()));
        CHECK(bit_identical(a.at(l).decoder.params(), b.at(l).decoder.params()));
    }
    CHECK(a.parameter_hashes() == b.parameter_hashes());

    auto c = init_modules(ls, small_config(), 8);
    CHECK(a.parameter_hashes() != c.parameter_hashes());

    auto dup = langs({"de", "en", "de"});
    CHECK_THROWS_AS(init_modules(dup, small_config(), 7), Error);
    CHECK_THROWS_AS(init_modules(std::span<const LanguageId>{}, small_config(), 7), ContractError);
}

TEST_CASE("a module pair does not depend on which other languages exist") {
    auto ls = langs({"de", "en"});
    auto reg = init_modules(ls, small_config(), 3);
    auto alone = make_module_pair(LanguageId("en"), small_config(), 3);
    CHECK(bit_identical(reg.at(LanguageId("en")).encoder.params(), alone.encoder.params()));
    CHECK(bit_identical(reg.at(LanguageId("en")).decoder.params(), alone.decoder.params()));
}

TEST_CASE("no parameter storage is shared between modules") {
    auto ls = langs({"de", "en", "es", "fr"});
    auto reg = init_modules(ls, small_config(), 1);
    std::set<const void*> seen;
    std::size_t total = 0;
    for (const auto& l : ls) {
        for (const auto* ps : {&reg.at(l).encoder.params(), &reg.at(l).decoder.params()}) {
            for (const auto& [name, t] : ps->entries()) {
                seen.insert(t.id());
                seen.insert(t.values().data());
                total += 2;
            }
        }
    }
    CHECK(seen.size() == total);

    auto copy = reg.at(LanguageId("de")).clone();
    const auto& orig = reg.at(LanguageId("de")).encoder.params().entries();
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(copy.encoder.params().entries()[i].second.id() != orig[i].second.id());
    }
}

TEST_CASE("decoder owns its cross-attention and output projection") {
    auto pair = make_module_pair(LanguageId("en"), small_config(), 2);
    std::set<std::string> names;
    for (const auto& [n, t] : pair.decoder.params().entries()) names.insert(n);
    CHECK(names.contains("decoder.layers.0.cross_attn.wq"));
    CHECK(names.contains("decoder.out_w"));
    CHECK(pair.decoder.out_w.id() != pair.decoder.embed.id());
}

TEST_CASE("init values follow the documented scheme") {
    auto pair = make_module_pair(LanguageId("en"), small_config(), 2);
    for (const auto& [name, t] : pair.encoder.params().entries()) {
        const auto& v = t.values();
        if (name.ends_with(".gain")) {
            CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 1.0; }));
        } else if (name.ends_with(".bq") || name.ends_with(".b1") || name.ends_with(".bias")) {
            CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
        } else if (name.ends_with(".wq")) {
            double limit = std::sqrt(6.0 / 64.0);
            CHECK(std::all_of(v.begin(), v.end(), [&](double x) { return std::abs(x) <= limit; }));
        }
    }
    const auto& ob = pair.decoder.out_b.values();
    CHECK(std::all_of(ob.begin(), ob.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("encode shapes, determinism and errors") {
    auto pair = make_module_pair(LanguageId("en"), small_config(), 4);
    std::vector<TokenId> one{5};
    auto s = encode(pair.encoder, TokenBatch::single(one));
    CHECK(s.states.rows() == 1);
    CHECK(s.states.cols() == 32);

    std::vector<TokenId> seq{1, 5, 6, 7, 2};
    auto a = encode(pair.encoder, TokenBatch::single(seq));
    auto b = encode(pair.encoder, TokenBatch::single(seq));
    CHECK(a.states.values() == b.states.values());

    CHECK_THROWS_AS(encode(pair.encoder, TokenBatch::single(std::vector<TokenId>{})), Error);
    CHECK_THROWS_AS(encode(pair.encoder, TokenBatch::single(std::vector<TokenId>{1, 17})), Error);
    CHECK_THROWS_AS(encode(pair.encoder, TokenBatch::single(std::vector<TokenId>(17, 4))), Error);
}

TEST_CASE("training mode without an rng is rejected when dropout is on") {
    auto c = small_config();
    c.dropout = 0.2;
    auto pair = make_module_pair(LanguageId("en"), c, 4);
    std::vector<TokenId> seq{1, 5, 2};
    CHECK_THROWS_AS(encode(pair.encoder, TokenBatch::single(seq), ForwardMode{true, nullptr}), ContractError);
    Rng rng(1);
    auto train = encode(pair.encoder, TokenBatch::single(seq), ForwardMode{true, &rng});
    auto eval = encode(pair.encoder, TokenBatch::single(seq));
    CHECK(train.states.values() != eval.states.values());
}

TEST_CASE("padding never changes real-token states or pooled vectors") {
    auto pair = make_module_pair(LanguageId("en"), small_config(), 5);
    std::vector<TokenId> seq{1, 8, 9, 10, 2};
    auto alone = encode(pair.encoder, TokenBatch::single(seq));

    // Same sentence next to a longer one, so it gets padded.
    std::vector<std::vector<TokenId>> batch{seq, {1, 4, 5, 6, 7, 8, 9, 11, 12, 2}};
    auto tb = TokenBatch::from_sequences(batch);
    auto padded = encode(pair.encoder, tb);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        CHECK(max_abs_diff(row(alone.states, t), row(padded.states, t)) < 1e-6);
    }

    // Junk in the padded slots (still masked) leaves everything unchanged.
    auto junk = tb;
    for (std::size_t t = seq.size(); t < tb.length; ++t) junk.ids[t] = 13;
    auto junked = encode(pair.encoder, junk);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        CHECK(max_abs_diff(row(padded.states, t), row(junked.states, t)) < 1e-12);
    }

    auto pool_alone = mean_pool(alone);
    auto pool_padded = mean_pool(padded);
    CHECK(max_abs_diff(pool_alone.values(), row(pool_padded, 0)) < 1e-6);
}

TEST_CASE("mean_pool examples") {
    ContextualStates s{ad::Tensor::constant({2, 2}, {1, 2, 3, 4}), 1, 2, {1, 1}};
    CHECK(mean_pool(s).values() == std::vector<double>{2, 3});
    s = ContextualStates{ad::Tensor::constant({2, 2}, {1, 2, 9, 9}), 1, 2, {1, 0}};
    CHECK(mean_pool(s).values() == std::vector<double>{1, 2});
    s = ContextualStates{ad::Tensor::constant({3, 2}, {0.25, -7, 0.25, -7, 0.25, -7}), 1, 3, {1, 1, 1}};
    CHECK(mean_pool(s).values() == std::vector<double>{0.25, -7});
    s = ContextualStates{ad::Tensor::constant({2, 2}, {1, 2, 3, 4}), 1, 2, {0, 0}};
    CHECK_THROWS_AS(mean_pool(s), Error);
}

TEST_CASE("decoder is causal") {
    auto pair = make_module_pair(LanguageId("en"), small_config(), 6);
    std::vector<TokenId> src{1, 4, 5, 6, 2};
    auto states = encode(pair.encoder, TokenBatch::single(src));
    std::vector<TokenId> prefix{1, 7, 8, 9, 10, 11, 12, 13};
    auto base = decoder_logits(pair.decoder, states, TokenBatch::single(prefix));
    CHECK(base.rows() == prefix.size());
    CHECK(base.cols() == 17);
    for (double v : base.values()) CHECK(std::isfinite(v));

    for (std::size_t changed = 1; changed < prefix.size(); ++changed) {
        auto p2 = prefix;
        p2[changed] = p2[changed] == 14 ? 15 : 14;
        auto other = decoder_logits(pair.decoder, states, TokenBatch::single(p2));
        for (std::size_t t = 0; t < changed; ++t) CHECK(row(base, t) == row(other, t));
        CHECK(row(base, changed) != row(other, changed));
    }
}

TEST_CASE("any encoder composes with any decoder of equal width") {
    auto a = make_module_pair(LanguageId("de"), small_config(11), 1);
    auto b = make_module_pair(LanguageId("en"), small_config(23), 1);
    auto states = encode(a.encoder, TokenBatch::single(std::vector<TokenId>{1, 5, 10, 2}));
    auto logits = decoder_logits(b.decoder, states, TokenBatch::single(std::vector<TokenId>{1, 20, 22}));
    CHECK(logits.cols() == 23);
    for (double v : logits.values()) CHECK(std::isfinite(v));

    auto wide = small_config(11);
    wide.d_model = 64;
    auto c = make_module_pair(LanguageId("fr"), wide, 1);
    CHECK_THROWS_AS(decoder_logits(c.decoder, states, TokenBatch::single(std::vector<TokenId>{1, 4})), Error);
}

TEST_CASE("full encoder, decoder and loss pass a gradient check") {
    auto c = small_config(9);
    c.d_ff = 64;
    auto src_pair = make_module_pair(LanguageId("de"), c, 11);
    auto tgt_pair = make_module_pair(LanguageId("en"), c, 12);
    std::vector<std::vector<TokenId>> src{{1, 4, 5, 6, 2}, {1, 7, 8, 2}};
    std::vector<std::vector<TokenId>> tgt_in{{1, 4, 6, 8}, {1, 5, 7}};
    std::vector<std::vector<TokenId>> tgt_out{{4, 6, 8, 2}, {5, 7, 2}};
    auto sb = TokenBatch::from_sequences(src);
    auto tb = TokenBatch::from_sequences(tgt_in);
    auto ob = TokenBatch::from_sequences(tgt_out);

    auto loss = [&] {
        auto states = encode(src_pair.encoder, sb);
        return ad::cross_entropy(decoder_logits(tgt_pair.decoder, states, tb), ob.ids, tok::kPad);
    };
    auto params = src_pair.encoder.params().tensors();
    auto dec = tgt_pair.decoder.params().tensors();
    params.insert(params.end(), dec.begin(), dec.end());
    // A step of 1e-4 keeps rounding noise small on tiny gradients; the retries
    // cover ReLU inputs that sit within 1e-4 of zero.
    auto r = ad::finite_diff_check(loss, params, {.eps = 1e-4, .retry_eps = {1e-5, 1e-6}, .retry_above = 1e-5});
    INFO("worst param " << r.param_index << " coord " << r.coord << " analytic " << r.analytic << " numeric "
                         << r.numeric);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.coords_checked > 10000);
}

TEST_CASE("checkpoint round trip is bit-identical") {
    TempDir dir;
    auto corpus = std::vector<std::string>{"abc abd", "bca"};
    auto tk = std::make_shared<const tok::Tokenizer>(tok::train_bpe(LanguageId("en"), corpus, 3));
    auto pair = make_module_pair(LanguageId("en"), small_config(), 9, tk);
    auto path = dir.path / "en.ckpt";
    checkpoint_save(pair, path);
    auto loaded = checkpoint_load(path, pair.config, tk);
    CHECK(loaded.lang == pair.lang);
    CHECK(loaded.tokenizer_hash == tk->hash());
    CHECK(bit_identical(loaded.encoder.params(), pair.encoder.params()));
    CHECK(bit_identical(loaded.decoder.params(), pair.decoder.params()));

    // Same forward results after reload.
    std::vector<TokenId> seq{1, 4, 5, 2};
    auto a = decoder_logits(pair.decoder, encode(pair.encoder, TokenBatch::single(seq)), TokenBatch::single(seq));
    auto b =
        decoder_logits(loaded.decoder, encode(loaded.encoder, TokenBatch::single(seq)), TokenBatch::single(seq));
    CHECK(a.values() == b.values());

    // Saving twice gives identical bytes.
    checkpoint_save(loaded, dir.path / "again.ckpt");
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(path) == slurp(dir.path / "again.ckpt"));

    auto h = checkpoint_peek(path);
    CHECK(h.lang == LanguageId("en"));
    CHECK(h.config == pair.config);
}

TEST_CASE("float32 checkpoints round values to single precision") {
    TempDir dir;
    auto pair = make_module_pair(LanguageId("en"), small_config(), 9);
    checkpoint_save(pair, dir.path / "f32.ckpt", CheckpointDtype::F32);
    auto loaded = checkpoint_load(dir.path / "f32.ckpt", pair.config);
    const auto& orig = pair.encoder.embed.values();
    const auto& back = loaded.encoder.embed.values();
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(orig[i])));
}

TEST_CASE("checkpoint load reports mismatches and corruption") {
    TempDir dir;
    auto pair = make_module_pair(LanguageId("en"), small_config(), 9);
    auto path = dir.path / "en.ckpt";
    checkpoint_save(pair, path);

    auto wrong = small_config();
    wrong.d_model = 64;
    try {
        checkpoint_load(path, wrong);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("d_model") != std::string::npos);
    }

    auto other_tok = std::make_shared<const tok::Tokenizer>(
        tok::train_bpe(LanguageId("en"), std::vector<std::string>{"xyz"}, 0));
    CHECK_THROWS_AS(checkpoint_load(path, pair.config, other_tok), Error);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << b;
    };
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    write(flipped);
    try {
        checkpoint_load(path, pair.config);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
    write(bytes.substr(0, 40));
    CHECK_THROWS_AS(checkpoint_load(path, pair.config), Error);
    write("not a checkpoint at all");
    CHECK_THROWS_AS(checkpoint_load(path, pair.config), Error);
    CHECK_THROWS_AS(checkpoint_load(dir.path / "missing.ckpt", pair.config), Error);
}
