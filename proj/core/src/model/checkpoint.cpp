#include "mmt/model/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace mmt::model {
namespace {

constexpr char kMagic[8] = {'M', 'M', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr int kVersion = 1;

class Writer {
  public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string& buffer() { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw Error(what_ + ": truncated checkpoint");
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto v = data_.substr(pos_, n);
        pos_ += n;
        return v;
    }
    std::uint32_t u32() {
        auto b = bytes(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }
    std::uint64_t u64() {
        auto b = bytes(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }
    std::string str() {
        auto n = u32();
        return std::string(bytes(n));
    }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    std::string_view data_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

std::string header_text(const LanguageModulePair& pair, CheckpointDtype dtype) {
    const auto& c = pair.config;
    std::ostringstream os;
    os << "version=" << kVersion << "\n"
       << "lang=" << pair.lang.str() << "\n"
       << "tokenizer_hash=" << pair.tokenizer_hash << "\n"
       << "dtype=" << (dtype == CheckpointDtype::F64 ? "f64" : "f32") << "\n"
       << "num_layers=" << c.num_layers << "\n"
       << "num_heads=" << c.num_heads << "\n"
       << "d_model=" << c.d_model << "\n"
       << "d_ff=" << c.d_ff << "\n"
       << "dropout=" << hex_double(c.dropout) << "\n"
       << "max_len=" << c.max_len << "\n"
       << "vocab_size=" << c.vocab_size << "\n";
    return os.str();
}

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& what) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(what + ": header is missing '" + key + "'");
    try {
        std::size_t used = 0;
        auto v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw Error(what + ": bad value for '" + key + "': " + it->second);
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Parsed {
    CheckpointHeader header;
    std::map<std::string, std::pair<ad::Shape, std::vector<double>>> arrays;
};

Parsed parse(const std::filesystem::path& path, bool with_arrays) {
    const std::string what = "checkpoint " + path.string();
    std::string data = read_file(path);
    if (data.size() < sizeof kMagic + 8 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
        throw Error(what + ": not a checkpoint file (bad magic)");
    }
    std::string_view body(data.data(), data.size() - 8);
    Reader tail(std::string_view(data).substr(data.size() - 8), what);
    if (tail.u64() != fnv1a(body)) throw Error(what + ": checksum mismatch, file is corrupted");

    Reader r(body, what);
    r.bytes(sizeof kMagic);
    std::string text = r.str();
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) {
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(what + ": malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    Parsed out;
    auto& h = out.header;
    h.version = static_cast<int>(parse_size(kv, "version", what));
    if (h.version != kVersion) throw Error(what + ": unsupported format version " + std::to_string(h.version));
    if (!kv.contains("lang") || kv["lang"].empty()) throw Error(what + ": header is missing 'lang'");
    h.lang = LanguageId(kv["lang"]);
    h.tokenizer_hash = parse_size(kv, "tokenizer_hash", what);
    if (kv["dtype"] == "f64") {
        h.dtype = CheckpointDtype::F64;
    } else if (kv["dtype"] == "f32") {
        h.dtype = CheckpointDtype::F32;
    } else {
        throw Error(what + ": unknown dtype '" + kv["dtype"] + "'");
    }
    h.config.num_layers = parse_size(kv, "num_layers", what);
    h.config.num_heads = parse_size(kv, "num_heads", what);
    h.config.d_model = parse_size(kv, "d_model", what);
    h.config.d_ff = parse_size(kv, "d_ff", what);
    h.config.max_len = parse_size(kv, "max_len", what);
    h.config.vocab_size = parse_size(kv, "vocab_size", what);
    if (!kv.contains("dropout")) throw Error(what + ": header is missing 'dropout'");
    h.config.dropout = std::strtod(kv["dropout"].c_str(), nullptr);
    if (!with_arrays) return out;

    const std::size_t width = h.dtype == CheckpointDtype::F64 ? 8 : 4;
    std::uint32_t count = r.u32();
    for (std::uint32_t a = 0; a < count; ++a) {
        std::string name = r.str();
        std::uint32_t rank = r.u32();
        if (rank > 8) throw Error(what + ": array '" + name + "' has implausible rank");
        ad::Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        std::size_t n = ad::shape_numel(shape);
        if (n > r.remaining() / width) throw Error(what + ": truncated data for array '" + name + "'");
        std::vector<double> values(n);
        for (auto& v : values) {
            if (width == 8) {
                v = std::bit_cast<double>(r.u64());
            } else {
                v = static_cast<double>(std::bit_cast<float>(r.u32()));
            }
        }
        if (!out.arrays.emplace(name, std::make_pair(shape, std::move(values))).second) {
            throw Error(what + ": duplicate array '" + name + "'");
        }
    }
    if (r.remaining() != 0) throw Error(what + ": trailing bytes after arrays");
    return out;
}

} // namespace

void checkpoint_save(const LanguageModulePair& pair, const std::filesystem::path& path, CheckpointDtype dtype) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.str(header_text(pair, dtype));
    const auto& enc = pair.encoder.params().entries();
    const auto& dec = pair.decoder.params().entries();
    w.u32(static_cast<std::uint32_t>(enc.size() + dec.size()));
    for (const auto* entries : {&enc, &dec}) {
        for (const auto& [name, t] : *entries) {
            w.str(name);
            w.u32(static_cast<std::uint32_t>(t.shape().size()));
            for (auto d : t.shape()) w.u64(d);
            for (double v : t.values()) {
                if (!std::isfinite(v)) {
                    throw Error("checkpoint_save: non-finite value in '" + name + "' of language " + pair.lang.str());
                }
                if (dtype == CheckpointDtype::F64) {
                    w.u64(std::bit_cast<std::uint64_t>(v));
                } else {
                    w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
                }
            }
        }
    }
    w.u64(fnv1a(std::string_view(w.buffer())));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

CheckpointHeader checkpoint_peek(const std::filesystem::path& path) { return parse(path, false).header; }

LanguageModulePair checkpoint_load(const std::filesystem::path& path, const ModelConfig& expected,
                                   std::shared_ptr<const tok::Tokenizer> tokenizer) {
    Parsed p = parse(path, true);
    const std::string what = "checkpoint " + path.string();
    if (auto field = p.header.config.first_difference(expected); !field.empty()) {
        throw Error(what + ": config mismatch in field '" + field + "'");
    }
    if (tokenizer) {
        if (tokenizer->lang() != p.header.lang) {
            throw Error(what + ": holds language " + p.header.lang.str() + " but tokenizer is for " +
                        tokenizer->lang().str());
        }
        if (tokenizer->hash() != p.header.tokenizer_hash) {
            throw Error(what + ": tokenizer hash does not match the one it was trained with");
        }
    }
    ValueSource src = [&](const std::string& name, const ad::Shape& shape) {
        auto it = p.arrays.find(name);
        if (it == p.arrays.end()) throw Error(what + ": missing array '" + name + "'");
        if (it->second.first != shape) {
            throw Error(what + ": array '" + name + "' has shape " + ad::shape_string(it->second.first) +
                        ", expected " + ad::shape_string(shape));
        }
        return it->second.second;
    };
    Encoder enc(p.header.config, src);
    Decoder dec(p.header.config, src);
    std::size_t used = enc.params().size() + dec.params().size();
    if (used != p.arrays.size()) throw Error(what + ": contains arrays the model does not use");
    return LanguageModulePair{p.header.lang, p.header.config, std::move(enc), std::move(dec), std::move(tokenizer),
                              p.header.tokenizer_hash};
}

} // namespace mmt::model
