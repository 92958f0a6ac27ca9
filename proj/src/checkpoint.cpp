#include "awcol/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "awcol/config.hpp"
#include "awcol/errors.hpp"

namespace awcol {
namespace {

constexpr char kMagic[4] = {'A', 'W', 'C', 'L'};
constexpr std::uint32_t kMaxLayers = 1024;
constexpr std::uint32_t kMaxDim = 1u << 20;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    template <typename T>
    void le(T v) {
        static_assert(std::is_integral_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void block(std::span<const double> values) {
        for (double v : values) f64(v);
    }
    std::vector<unsigned char> take() { return std::move(buf_); }
    const std::vector<unsigned char>& buffer() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const unsigned char> b) : b_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    void block(std::span<double> out) {
        need(out.size() * 8);
        for (double& v : out) v = f64();
    }
    void magic() {
        need(4);
        if (std::memcmp(b_.data(), kMagic, 4) != 0) throw ParseError("not a checkpoint: bad magic bytes");
        pos_ += 4;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const unsigned char> b_;
    std::size_t pos_ = 0;
};

void write_layers(Writer& w, const std::vector<LayerParams>& layers) {
    for (auto block : param_blocks(layers)) w.block(block);
}

void read_layers(Reader& r, std::vector<LayerParams>& layers) {
    for (auto block : param_blocks(layers)) r.block(block);
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
    const auto& enc = ckpt.model.encoder;
    validate_encoder(enc);
    const auto& adam = ckpt.model.adam;
    if (!congruent(enc.layers, adam.first_moment.layers) || !congruent(enc.layers, adam.second_moment.layers)) {
        throw ShapeError("checkpoint: optimizer moments do not match the encoder");
    }
    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint32_t>(ckpt.version);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.model.model_id));
    w.le<std::uint64_t>(ckpt.seed);
    w.le<std::uint64_t>(ckpt.config_hash);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(enc.layers.size()));
    for (const auto& l : enc.layers) {
        w.le<std::uint32_t>(static_cast<std::uint32_t>(l.out_dim()));
        w.le<std::uint32_t>(static_cast<std::uint32_t>(l.in_dim()));
    }
    write_layers(w, enc.layers);
    w.le<std::uint64_t>(adam.step);
    w.f64(adam.learning_rate);
    w.f64(adam.beta1);
    w.f64(adam.beta2);
    w.f64(adam.epsilon);
    write_layers(w, adam.first_moment.layers);
    write_layers(w, adam.second_moment.layers);
    const auto sum = fnv1a64(w.buffer().data(), w.buffer().size());
    w.le<std::uint64_t>(sum);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
    Reader r(bytes);
    r.magic();
    Checkpoint ckpt;
    ckpt.version = r.le<std::uint32_t>();
    if (ckpt.version != kCheckpointVersion) {
        throw ParseError("checkpoint format version " + std::to_string(ckpt.version) + " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
    }
    const auto id = r.le<std::uint32_t>();
    if (id != 1 && id != 2) throw ParseError("checkpoint: model id " + std::to_string(id) + " is invalid");
    ckpt.model.model_id = static_cast<int>(id);
    ckpt.seed = r.le<std::uint64_t>();
    ckpt.config_hash = r.le<std::uint64_t>();
    const auto n_layers = r.le<std::uint32_t>();
    if (n_layers == 0 || n_layers > kMaxLayers) throw ParseError("checkpoint: implausible layer count");

    auto& enc = ckpt.model.encoder;
    std::size_t expected = 0;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const auto out = r.le<std::uint32_t>();
        const auto in = r.le<std::uint32_t>();
        if (out == 0 || in == 0 || out > kMaxDim || in > kMaxDim) throw ParseError("checkpoint: implausible layer shape");
        expected += std::size_t(out) * in + out;
        enc.layers.push_back({Matrix(out, in), std::vector<double>(out, 0.0)});
    }
    // parameters + two moments + adam scalars + checksum
    r.need(expected * 8 * 3 + 8 * 5 + 8);
    validate_encoder(enc);
    read_layers(r, enc.layers);
    auto& adam = ckpt.model.adam;
    adam.first_moment = Gradients::zeros_like(enc);
    adam.second_moment = Gradients::zeros_like(enc);
    adam.step = r.le<std::uint64_t>();
    adam.learning_rate = r.f64();
    adam.beta1 = r.f64();
    adam.beta2 = r.f64();
    adam.epsilon = r.f64();
    read_layers(r, adam.first_moment.layers);
    read_layers(r, adam.second_moment.layers);
    const std::size_t body = r.pos();
    const auto stored = r.le<std::uint64_t>();
    if (r.pos() != bytes.size()) throw ParseError("checkpoint: trailing bytes after checksum");
    if (stored != fnv1a64(bytes.data(), body)) throw ParseError("checkpoint: checksum mismatch (corrupt file)");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace awcol
