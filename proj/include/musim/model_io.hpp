#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "musim/error.hpp"
#include "musim/model.hpp"

namespace musim {

// Binary tensor formats. All multi-byte fields are little-endian; floats are
// IEEE-754 binary32 written byte-exact, so write/read round trips preserve
// every bit.
//
//   activations ("MACT"): magic, u16 version, u32 L, T, n, H,
//                         then L*n*H floats in [layer][position][dim] order.
//   weights     ("MWTS"): magic, u16 version, u32 L, T, H, V, heads,
//                         then tensors in declaration order: token table,
//                         position table, per layer (ln1 gain/bias, wq, wk,
//                         wv, wo, ln2 gain/bias, w1, b1, w2, b2), final
//                         layer-norm gain/bias.

inline constexpr std::uint16_t kTensorFormatVersion = 1;

namespace io_detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    os.write(bytes, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>(v >> (8 * i));
    os.write(bytes, 4);
}

inline void put_floats(std::ostream& os, const std::vector<float>& values) {
    for (float f : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(os, bits);
    }
}

inline std::uint16_t get_u16(std::istream& is) {
    unsigned char bytes[2];
    if (!is.read(reinterpret_cast<char*>(bytes), 2))
        throw Error(Errc::truncated_payload, "header cut off");
    return static_cast<std::uint16_t>(bytes[0] | bytes[1] << 8);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char bytes[4];
    if (!is.read(reinterpret_cast<char*>(bytes), 4))
        throw Error(Errc::truncated_payload, "header cut off");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = v << 8 | bytes[i];
    return v;
}

inline void get_floats(std::istream& is, std::vector<float>& out, std::size_t count,
                       const char* what) {
    out.resize(count);
    std::vector<unsigned char> raw(count * 4);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size())
        throw Error(Errc::truncated_payload, std::string(what) + ": payload shorter than header declares");
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(raw[i * 4]) |
                                   static_cast<std::uint32_t>(raw[i * 4 + 1]) << 8 |
                                   static_cast<std::uint32_t>(raw[i * 4 + 2]) << 16 |
                                   static_cast<std::uint32_t>(raw[i * 4 + 3]) << 24;
        std::memcpy(&out[i], &bits, 4);
    }
}

inline void expect_magic(std::istream& is, const char* magic) {
    char buf[4];
    if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
        throw Error(Errc::bad_magic, std::string("expected magic '") + magic + "'");
}

inline void expect_eof(std::istream& is, const char* what) {
    if (is.peek() != std::char_traits<char>::eof())
        throw Error(Errc::shape_mismatch, std::string(what) + ": trailing bytes after payload");
}

}  // namespace io_detail

inline void write_activations(const LayerActivations& acts, std::ostream& os) {
    using namespace io_detail;
    os.write("MACT", 4);
    put_u16(os, kTensorFormatVersion);
    put_u32(os, acts.layers);
    put_u32(os, acts.max_context);
    put_u32(os, acts.seq_len);
    put_u32(os, acts.hidden);
    put_floats(os, acts.data);
    if (!os) throw Error(Errc::io_failure, "activation write failed");
}

inline LayerActivations read_activations(std::istream& is) {
    using namespace io_detail;
    expect_magic(is, "MACT");
    const std::uint16_t version = get_u16(is);
    if (version != kTensorFormatVersion)
        throw Error(Errc::bad_magic, "unsupported activation format version " + std::to_string(version));
    LayerActivations acts;
    acts.layers = get_u32(is);
    acts.max_context = get_u32(is);
    acts.seq_len = get_u32(is);
    acts.hidden = get_u32(is);
    if (!acts.layers || !acts.seq_len || !acts.hidden || acts.seq_len > acts.max_context)
        throw Error(Errc::shape_mismatch, "activation header shape is inconsistent");
    const std::size_t count =
        static_cast<std::size_t>(acts.layers) * acts.seq_len * acts.hidden;
    get_floats(is, acts.data, count, "activations");
    expect_eof(is, "activations");
    return acts;
}

inline void write_activations_file(const LayerActivations& acts, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw Error(Errc::io_failure, "cannot write " + file.string());
    write_activations(acts, os);
}

inline LayerActivations read_activations_file(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw Error(Errc::io_failure, "cannot open " + file.string());
    return read_activations(is);
}

inline void write_weights(const ModelWeights& w, std::ostream& os) {
    using namespace io_detail;
    os.write("MWTS", 4);
    put_u16(os, kTensorFormatVersion);
    put_u32(os, w.shape.layers);
    put_u32(os, w.shape.max_context);
    put_u32(os, w.shape.hidden);
    put_u32(os, w.shape.vocab);
    put_u32(os, w.shape.heads);
    put_floats(os, w.token_embedding);
    put_floats(os, w.position_embedding);
    for (const auto& layer : w.layers) {
        put_floats(os, layer.ln1_gain);
        put_floats(os, layer.ln1_bias);
        put_floats(os, layer.wq);
        put_floats(os, layer.wk);
        put_floats(os, layer.wv);
        put_floats(os, layer.wo);
        put_floats(os, layer.ln2_gain);
        put_floats(os, layer.ln2_bias);
        put_floats(os, layer.w1);
        put_floats(os, layer.b1);
        put_floats(os, layer.w2);
        put_floats(os, layer.b2);
    }
    put_floats(os, w.final_ln_gain);
    put_floats(os, w.final_ln_bias);
    if (!os) throw Error(Errc::io_failure, "weights write failed");
}

inline ModelWeights read_weights(std::istream& is) {
    using namespace io_detail;
    expect_magic(is, "MWTS");
    const std::uint16_t version = get_u16(is);
    if (version != kTensorFormatVersion)
        throw Error(Errc::bad_magic, "unsupported weights format version " + std::to_string(version));
    ModelWeights w;
    w.shape.layers = get_u32(is);
    w.shape.max_context = get_u32(is);
    w.shape.hidden = get_u32(is);
    w.shape.vocab = get_u32(is);
    w.shape.heads = get_u32(is);
    w.shape.validate();
    const std::size_t H = w.shape.hidden, F = w.shape.ff_hidden();
    get_floats(is, w.token_embedding, static_cast<std::size_t>(w.shape.vocab) * H, "weights");
    get_floats(is, w.position_embedding, static_cast<std::size_t>(w.shape.max_context) * H, "weights");
    w.layers.resize(w.shape.layers);
    for (auto& layer : w.layers) {
        get_floats(is, layer.ln1_gain, H, "weights");
        get_floats(is, layer.ln1_bias, H, "weights");
        get_floats(is, layer.wq, H * H, "weights");
        get_floats(is, layer.wk, H * H, "weights");
        get_floats(is, layer.wv, H * H, "weights");
        get_floats(is, layer.wo, H * H, "weights");
        get_floats(is, layer.ln2_gain, H, "weights");
        get_floats(is, layer.ln2_bias, H, "weights");
        get_floats(is, layer.w1, H * F, "weights");
        get_floats(is, layer.b1, F, "weights");
        get_floats(is, layer.w2, F * H, "weights");
        get_floats(is, layer.b2, H, "weights");
    }
    get_floats(is, w.final_ln_gain, H, "weights");
    get_floats(is, w.final_ln_bias, H, "weights");
    expect_eof(is, "weights");
    return w;
}

inline void write_weights_file(const ModelWeights& w, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw Error(Errc::io_failure, "cannot write " + file.string());
    write_weights(w, os);
}

// Embedding dump ("MEMB"): same conventions as MACT with a [count][dim]
// float payload. Values pass through binary32, so doubles round to float
// precision on write.

inline void write_embedding_dump(const std::vector<std::vector<double>>& embeddings,
                                 std::ostream& os) {
    using namespace io_detail;
    os.write("MEMB", 4);
    put_u16(os, kTensorFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(embeddings.size()));
    const std::uint32_t dim =
        embeddings.empty() ? 0 : static_cast<std::uint32_t>(embeddings.front().size());
    put_u32(os, dim);
    for (const auto& e : embeddings) {
        if (e.size() != dim) throw Error(Errc::dimension_mismatch, "ragged embedding matrix");
        for (double v : e) {
            std::uint32_t bits;
            const float f = static_cast<float>(v);
            std::memcpy(&bits, &f, 4);
            put_u32(os, bits);
        }
    }
    if (!os) throw Error(Errc::io_failure, "embedding dump write failed");
}

inline std::vector<std::vector<double>> read_embedding_dump(std::istream& is) {
    using namespace io_detail;
    expect_magic(is, "MEMB");
    const std::uint16_t version = get_u16(is);
    if (version != kTensorFormatVersion)
        throw Error(Errc::bad_magic, "unsupported embedding format version " + std::to_string(version));
    const std::uint32_t count = get_u32(is);
    const std::uint32_t dim = get_u32(is);
    std::vector<std::vector<double>> out(count);
    std::vector<float> row;
    for (auto& e : out) {
        get_floats(is, row, dim, "embeddings");
        e.assign(row.begin(), row.end());
    }
    expect_eof(is, "embeddings");
    return out;
}

inline ModelWeights read_weights_file(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw Error(Errc::io_failure, "cannot open " + file.string());
    return read_weights(is);
}

}  // namespace musim
