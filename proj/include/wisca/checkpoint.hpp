// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wisca/attention.hpp"
#include "wisca/errors.hpp"
#include "wisca/matrix.hpp"

// Checkpoint container: 8-byte little-endian header length, minified JSON
// header (tensor name -> dtype/shape/data_offsets, optional __metadata__
// string map), then one contiguous data region. Canonical form, which the
// writer always emits: __metadata__ first, tensor names sorted, per-tensor
// keys in dtype/shape/data_offsets order, offsets contiguous in name order,
// header space-padded to an 8-byte boundary.
namespace wisca {

enum class Dtype { f64, f32, f16, bf16 };

inline std::size_t dtype_width(Dtype d) {
    switch (d) {
        case Dtype::f64: return 8;
        case Dtype::f32: return 4;
        case Dtype::f16: return 2;
        case Dtype::bf16: return 2;
    }
    return 0;
}

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f64: return "F64";
        case Dtype::f32: return "F32";
        case Dtype::f16: return "F16";
        case Dtype::bf16: return "BF16";
    }
    return "?";
}

inline Dtype dtype_from_name(const std::string& s, const std::string& tensor) {
    if (s == "F64") return Dtype::f64;
    if (s == "F32") return Dtype::f32;
    if (s == "F16") return Dtype::f16;
    if (s == "BF16") return Dtype::bf16;
    throw ParseError("tensor '" + tensor + "': unsupported dtype '" + s + "'");
}

namespace detail {

// Round-to-nearest-even narrowing straight from the f64 bit pattern.
// A float32 intermediate would double-round at the overflow threshold
// (e.g. 65519.999 must stay finite in f16), so the shift happens once.
template <int EBITS, int MBITS>
inline std::uint16_t small_from_f64(double d) {
    constexpr int BIAS = (1 << (EBITS - 1)) - 1;
    constexpr std::uint32_t EXP_ALL = (1u << EBITS) - 1;
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
    const std::uint16_t sign =
        static_cast<std::uint16_t>((bits >> 63) << (EBITS + MBITS));
    const int e = static_cast<int>((bits >> 52) & 0x7ff);
    const std::uint64_t frac = bits & ((1ULL << 52) - 1);
    if (e == 0x7ff) {
        if (frac == 0) return sign | static_cast<std::uint16_t>(EXP_ALL << MBITS);
        return sign | static_cast<std::uint16_t>(EXP_ALL << MBITS) |
               static_cast<std::uint16_t>(1u << (MBITS - 1)); // canonical quiet nan
    }
    if (e == 0) return sign; // f64 subnormals are far below the target range
    const int te = e - 1023 + BIAS;
    std::uint64_t sig = (1ULL << 52) | frac;
    int drop = 52 - MBITS;
    std::uint64_t base = 0;
    if (te >= 1) {
        base = static_cast<std::uint64_t>(te - 1) << MBITS;
    } else {
        drop += 1 - te; // denormalize into the target subnormal range
        if (drop >= 54) return sign;
    }
    std::uint64_t q = sig >> drop;
    const std::uint64_t rem = sig & ((1ULL << drop) - 1);
    const std::uint64_t half = 1ULL << (drop - 1);
    if (rem > half || (rem == half && (q & 1))) q++;
    const std::uint64_t out = base + q; // mantissa carry walks into the exponent
    if ((out >> MBITS) >= EXP_ALL)
        return sign | static_cast<std::uint16_t>(EXP_ALL << MBITS); // overflow -> inf
    return sign | static_cast<std::uint16_t>(out);
}

template <int EBITS, int MBITS>
inline double f64_from_small(std::uint16_t h) {
    constexpr int BIAS = (1 << (EBITS - 1)) - 1;
    constexpr std::uint32_t EXP_ALL = (1u << EBITS) - 1;
    const bool neg = (h >> (EBITS + MBITS)) & 1;
    const std::uint32_t e = (h >> MBITS) & EXP_ALL;
    const std::uint32_t m = h & ((1u << MBITS) - 1);
    double v;
    if (e == EXP_ALL) {
        v = m ? std::numeric_limits<double>::quiet_NaN()
              : std::numeric_limits<double>::infinity();
    } else if (e == 0) {
        v = std::ldexp(static_cast<double>(m), 1 - BIAS - MBITS);
    } else {
        v = std::ldexp(static_cast<double>((1u << MBITS) | m),
                       static_cast<int>(e) - BIAS - MBITS);
    }
    return neg ? -v : v;
}

} // namespace detail

inline std::uint16_t f16_bits_from_f64(double d) { return detail::small_from_f64<5, 10>(d); }
inline double f64_from_f16_bits(std::uint16_t h) { return detail::f64_from_small<5, 10>(h); }
inline std::uint16_t bf16_bits_from_f64(double d) { return detail::small_from_f64<8, 7>(d); }
inline double f64_from_bf16_bits(std::uint16_t h) { return detail::f64_from_small<8, 7>(h); }

struct TensorInfo {
    Dtype dtype = Dtype::f32;
    std::vector<std::size_t> shape;
    std::size_t begin = 0, end = 0; // byte range within the data region

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
};

struct CheckpointFile {
    std::vector<std::string> names; // document order
    std::map<std::string, TensorInfo> tensors;
    std::map<std::string, std::string> metadata;
    std::vector<std::uint8_t> payload;

    bool has(const std::string& name) const { return tensors.count(name) > 0; }

    const TensorInfo& info(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ResolveError("no tensor named '" + name + "'");
        return it->second;
    }

    // decode to f64 compute precision; 1-D tensors become 1 x n
    Matrix read_matrix(const std::string& name) const {
        const TensorInfo& t = info(name);
        if (t.shape.size() > 2)
            throw ParseError("tensor '" + name + "': only 1-D and 2-D tensors supported");
        std::size_t rows = t.shape.size() == 2 ? t.shape[0] : 1;
        std::size_t cols = t.shape.size() == 2 ? t.shape[1] : (t.shape.empty() ? 1 : t.shape[0]);
        Matrix m(rows, cols);
        const std::uint8_t* p = payload.data() + t.begin;
        for (std::size_t i = 0; i < m.data.size(); i++) {
            switch (t.dtype) {
                case Dtype::f64: {
                    std::uint64_t b;
                    std::memcpy(&b, p + 8 * i, 8);
                    m.data[i] = std::bit_cast<double>(b);
                    break;
                }
                case Dtype::f32: {
                    std::uint32_t b;
                    std::memcpy(&b, p + 4 * i, 4);
                    m.data[i] = static_cast<double>(std::bit_cast<float>(b));
                    break;
                }
                case Dtype::f16: {
                    std::uint16_t b;
                    std::memcpy(&b, p + 2 * i, 2);
                    m.data[i] = f64_from_f16_bits(b);
                    break;
                }
                case Dtype::bf16: {
                    std::uint16_t b;
                    std::memcpy(&b, p + 2 * i, 2);
                    m.data[i] = f64_from_bf16_bits(b);
                    break;
                }
            }
        }
        return m;
    }

    // encode back to the tensor's stored dtype, round-to-nearest-even
    void write_matrix(const std::string& name, const Matrix& m) {
        const TensorInfo& t = info(name);
        if (m.size() != t.numel())
            throw ShapeError("tensor '" + name + "': element count mismatch on store");
        std::uint8_t* p = payload.data() + t.begin;
        for (std::size_t i = 0; i < m.data.size(); i++) {
            switch (t.dtype) {
                case Dtype::f64: {
                    std::uint64_t b = std::bit_cast<std::uint64_t>(m.data[i]);
                    std::memcpy(p + 8 * i, &b, 8);
                    break;
                }
                case Dtype::f32: {
                    // hardware f64->f32 cast is a single correct rounding
                    std::uint32_t b = std::bit_cast<std::uint32_t>(
                        static_cast<float>(m.data[i]));
                    std::memcpy(p + 4 * i, &b, 4);
                    break;
                }
                case Dtype::f16: {
                    std::uint16_t b = f16_bits_from_f64(m.data[i]);
                    std::memcpy(p + 2 * i, &b, 2);
                    break;
                }
                case Dtype::bf16: {
                    std::uint16_t b = bf16_bits_from_f64(m.data[i]);
                    std::memcpy(p + 2 * i, &b, 2);
                    break;
                }
            }
        }
    }

    void add_tensor(const std::string& name, Dtype dt, std::vector<std::size_t> shape,
                    const Matrix& values) {
        TensorInfo t;
        t.dtype = dt;
        t.shape = std::move(shape);
        t.begin = payload.size();
        t.end = t.begin + t.numel() * dtype_width(dt);
        if (values.size() != t.numel())
            throw ShapeError("tensor '" + name + "': element count mismatch");
        payload.resize(t.end);
        tensors[name] = t;
        names.push_back(name);
        write_matrix(name, values);
    }
};

inline CheckpointFile read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (raw.size() < 8) throw ParseError("'" + path + "': shorter than the length prefix");
    std::uint64_t hlen = 0;
    for (int i = 7; i >= 0; i--) hlen = (hlen << 8) | raw[static_cast<std::size_t>(i)];
    if (hlen > raw.size() - 8)
        throw ParseError("'" + path + "': header length " + std::to_string(hlen) +
                         " exceeds file size");
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(raw.begin() + 8, raw.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("'" + path + "': header is not valid JSON: " + e.what());
    }
    if (!hdr.is_object()) throw ParseError("'" + path + "': header is not a JSON object");

    CheckpointFile cp;
    cp.payload.assign(raw.begin() + 8 + static_cast<std::ptrdiff_t>(hlen), raw.end());
    const std::size_t data_len = cp.payload.size();
    for (auto it = hdr.begin(); it != hdr.end(); ++it) {
        const std::string& name = it.key();
        if (name == "__metadata__") {
            for (auto m = it->begin(); m != it->end(); ++m)
                cp.metadata[m.key()] = m->get<std::string>();
            continue;
        }
        const nlohmann::json& j = *it;
        if (!j.contains("dtype") || !j.contains("shape") || !j.contains("data_offsets"))
            throw ParseError("tensor '" + name + "': missing dtype/shape/data_offsets");
        TensorInfo t;
        t.dtype = dtype_from_name(j["dtype"].get<std::string>(), name);
        for (const auto& s : j["shape"]) t.shape.push_back(s.get<std::size_t>());
        t.begin = j["data_offsets"][0].get<std::size_t>();
        t.end = j["data_offsets"][1].get<std::size_t>();
        if (t.end < t.begin || t.end > data_len)
            throw ParseError("tensor '" + name + "': data_offsets out of bounds");
        if (t.end - t.begin != t.numel() * dtype_width(t.dtype))
            throw ParseError("tensor '" + name + "': byte range does not match shape");
        cp.tensors[name] = t;
        cp.names.push_back(name);
    }
    // overlap check over begin-sorted ranges
    std::vector<std::pair<std::size_t, std::string>> spans;
    for (const auto& [name, t] : cp.tensors) spans.push_back({t.begin, name});
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); i++) {
        const TensorInfo& prev = cp.tensors[spans[i - 1].second];
        if (spans[i].first < prev.end)
            throw ParseError("tensor '" + spans[i].second + "': overlaps '" +
                             spans[i - 1].second + "'");
    }
    return cp;
}

inline void write_checkpoint(const CheckpointFile& cp, const std::string& path) {
    std::vector<std::string> order;
    for (const auto& [name, t] : cp.tensors) order.push_back(name); // sorted by map
    nlohmann::ordered_json hdr = nlohmann::ordered_json::object();
    if (!cp.metadata.empty()) {
        nlohmann::ordered_json meta = nlohmann::ordered_json::object();
        for (const auto& [k, v] : cp.metadata) meta[k] = v;
        hdr["__metadata__"] = meta;
    }
    std::size_t off = 0;
    std::vector<std::uint8_t> data;
    for (const std::string& name : order) {
        const TensorInfo& t = cp.tensors.at(name);
        std::size_t len = t.end - t.begin;
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        j["dtype"] = dtype_name(t.dtype);
        j["shape"] = t.shape;
        j["data_offsets"] = {off, off + len};
        hdr[name] = j;
        data.insert(data.end(), cp.payload.begin() + static_cast<std::ptrdiff_t>(t.begin),
                    cp.payload.begin() + static_cast<std::ptrdiff_t>(t.end));
        off += len;
    }
    std::string txt = hdr.dump();
    while (txt.size() % 8 != 0) txt.push_back(' ');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    std::uint64_t hlen = txt.size();
    char lenb[8];
    for (int i = 0; i < 8; i++) lenb[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
    out.write(lenb, 8);
    out.write(txt.data(), static_cast<std::streamsize>(txt.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

} // namespace wisca
