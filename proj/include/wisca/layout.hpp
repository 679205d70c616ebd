// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wisca/attention.hpp"
#include "wisca/checkpoint.hpp"
#include "wisca/errors.hpp"
#include "wisca/transform.hpp"

// Layout descriptors bind checkpoint tensor names to attention roles.
// Patterns may contain a {layer} placeholder; resolution walks layer
// 0, 1, ... until a layer matches nothing. Weights are exposed in the
// library's [in x out] orientation regardless of how the file stores them.
namespace wisca {

struct FusedSpec {
    std::string pattern;
    // column ranges of each projection inside the fused tensor, in the
    // logical [in x out] orientation
    std::size_t q_begin = 0, q_end = 0;
    std::size_t k_begin = 0, k_end = 0;
    std::size_t v_begin = 0, v_end = 0;
};

struct LayoutDescriptor {
    std::size_t n_q_heads = 0, n_kv_heads = 0, head_dim = 0;
    bool stored_transposed = true; // file keeps [out x in] as most trainers do
    std::string q, k, v, o;
    std::string b_q, b_k, b_v, b_o;
    std::optional<FusedSpec> fused;
    std::string lora_a, lora_b;
    std::vector<std::string> strategies;

    bool has_attention() const { return !o.empty(); }
    bool has_lora() const { return !lora_a.empty(); }
    bool has_bias() const { return !b_q.empty() || !b_k.empty() || !b_v.empty() || !b_o.empty(); }

    void validate() const {
        const bool separate = !q.empty() || !k.empty() || !v.empty();
        if (separate && fused)
            throw ParseError("descriptor gives both separate q/k/v patterns and fused_qkv");
        if (separate && (q.empty() || k.empty() || v.empty()))
            throw ParseError("descriptor gives a partial q/k/v pattern set");
        if ((separate || fused) && o.empty())
            throw ParseError("descriptor lacks an o pattern");
        if (!separate && !fused && !o.empty())
            throw ParseError("descriptor gives o but no q/k/v source");
        if (lora_a.empty() != lora_b.empty())
            throw ParseError("descriptor gives only one of lora_a/lora_b");
        if (!has_attention() && !has_lora())
            throw ParseError("descriptor defines neither attention nor lora patterns");
        if (has_attention() && (n_q_heads == 0 || n_kv_heads == 0 || head_dim == 0))
            throw ParseError("descriptor lacks head geometry (n_q_heads/n_kv_heads/head_dim)");
        if (has_attention() && n_q_heads % n_kv_heads != 0)
            throw ParseError("descriptor: n_q_heads must be a multiple of n_kv_heads");
    }

    static LayoutDescriptor from_json(const nlohmann::json& j) {
        LayoutDescriptor d;
        auto str = [&](const char* key) -> std::string {
            return j.contains(key) ? j.at(key).get<std::string>() : std::string();
        };
        if (j.contains("n_q_heads")) d.n_q_heads = j.at("n_q_heads").get<std::size_t>();
        if (j.contains("n_kv_heads")) d.n_kv_heads = j.at("n_kv_heads").get<std::size_t>();
        if (j.contains("head_dim")) d.head_dim = j.at("head_dim").get<std::size_t>();
        if (j.contains("stored_transposed"))
            d.stored_transposed = j.at("stored_transposed").get<bool>();
        d.q = str("q"); d.k = str("k"); d.v = str("v"); d.o = str("o");
        d.b_q = str("b_q"); d.b_k = str("b_k"); d.b_v = str("b_v"); d.b_o = str("b_o");
        d.lora_a = str("lora_a"); d.lora_b = str("lora_b");
        if (j.contains("fused_qkv")) {
            const auto& f = j.at("fused_qkv");
            FusedSpec fs;
            fs.pattern = f.at("pattern").get<std::string>();
            fs.q_begin = f.at("q_cols").at(0).get<std::size_t>();
            fs.q_end = f.at("q_cols").at(1).get<std::size_t>();
            fs.k_begin = f.at("k_cols").at(0).get<std::size_t>();
            fs.k_end = f.at("k_cols").at(1).get<std::size_t>();
            fs.v_begin = f.at("v_cols").at(0).get<std::size_t>();
            fs.v_end = f.at("v_cols").at(1).get<std::size_t>();
            d.fused = fs;
        }
        if (j.contains("strategies"))
            for (const auto& s : j.at("strategies")) d.strategies.push_back(s.get<std::string>());
        d.validate();
        return d;
    }

    static LayoutDescriptor load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open layout descriptor '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("'" + path + "': bad descriptor JSON: " + e.what());
        }
        return from_json(j);
    }
};

namespace detail {

inline std::string subst_layer(std::string pat, std::size_t layer) {
    const std::string key = "{layer}";
    const std::string val = std::to_string(layer);
    std::size_t pos = 0;
    while ((pos = pat.find(key, pos)) != std::string::npos) {
        pat.replace(pos, key.size(), val);
        pos += val.size();
    }
    return pat;
}

inline Matrix load_oriented(const CheckpointFile& cp, const std::string& name,
                            bool stored_transposed) {
    Matrix m = cp.read_matrix(name);
    return stored_transposed ? transpose(m) : m;
}

inline void store_oriented(CheckpointFile& cp, const std::string& name, const Matrix& m,
                           bool stored_transposed) {
    cp.write_matrix(name, stored_transposed ? transpose(m) : m);
}

} // namespace detail

struct ResolvedNames {
    std::string q, k, v, o, b_q, b_k, b_v, b_o, fused, lora_a, lora_b;
};

struct ResolvedLayer {
    std::size_t layer = 0;
    ResolvedNames names;
    std::optional<AttentionLayout> layout;
    std::optional<AttentionWeights> weights;
    std::optional<LoraPair> lora;
};

namespace detail {

inline bool try_resolve_layer(const CheckpointFile& cp, const LayoutDescriptor& d,
                              std::size_t layer, ResolvedLayer& out) {
    ResolvedNames n;
    std::vector<std::pair<std::string*, const std::string*>> slots = {
        {&n.q, &d.q},       {&n.k, &d.k},       {&n.v, &d.v},       {&n.o, &d.o},
        {&n.b_q, &d.b_q},   {&n.b_k, &d.b_k},   {&n.b_v, &d.b_v},   {&n.b_o, &d.b_o},
        {&n.lora_a, &d.lora_a}, {&n.lora_b, &d.lora_b}};
    std::string fused_pat = d.fused ? d.fused->pattern : std::string();
    slots.push_back({&n.fused, &fused_pat});
    std::size_t want = 0, have = 0;
    std::string first_missing;
    for (auto& [dst, pat] : slots) {
        if (pat->empty()) continue;
        want++;
        *dst = subst_layer(*pat, layer);
        if (cp.has(*dst)) have++;
        else if (first_missing.empty()) first_missing = *dst;
    }
    if (want == 0) throw ParseError("descriptor has no patterns");
    if (have == 0) return false;
    if (have != want)
        throw ResolveError("layer " + std::to_string(layer) + ": tensor '" +
                           first_missing + "' not found in checkpoint");

    out.layer = layer;
    out.names = n;
    if (d.has_attention()) {
        AttentionWeights w;
        if (d.fused) {
            Matrix f = load_oriented(cp, n.fused, d.stored_transposed);
            const FusedSpec& fs = *d.fused;
            if (fs.v_end > f.cols || fs.q_end > fs.k_begin || fs.k_end > fs.v_begin ||
                fs.q_begin >= fs.q_end || fs.k_begin >= fs.k_end || fs.v_begin >= fs.v_end)
                throw ResolveError("tensor '" + n.fused + "': fused column ranges invalid for width " +
                                   std::to_string(f.cols));
            w.w_q = slice_cols(f, fs.q_begin, fs.q_end);
            w.w_k = slice_cols(f, fs.k_begin, fs.k_end);
            w.w_v = slice_cols(f, fs.v_begin, fs.v_end);
        } else {
            w.w_q = load_oriented(cp, n.q, d.stored_transposed);
            w.w_k = load_oriented(cp, n.k, d.stored_transposed);
            w.w_v = load_oriented(cp, n.v, d.stored_transposed);
        }
        w.w_o = load_oriented(cp, n.o, d.stored_transposed);
        if (!n.b_q.empty()) w.b_q = cp.read_matrix(n.b_q);
        if (!n.b_k.empty()) w.b_k = cp.read_matrix(n.b_k);
        if (!n.b_v.empty()) w.b_v = cp.read_matrix(n.b_v);
        if (!n.b_o.empty()) w.b_o = cp.read_matrix(n.b_o);
        AttentionLayout lo;
        lo.d_model = w.w_q.rows;
        lo.n_q_heads = d.n_q_heads;
        lo.n_kv_heads = d.n_kv_heads;
        lo.head_dim = d.head_dim;
        lo.has_bias = !w.b_q.empty() || !w.b_o.empty();
        try {
            lo.validate();
            wisca::check_attention_shapes(w, lo);
        } catch (const Error& e) {
            throw ResolveError("layer " + std::to_string(layer) + ": " + e.what());
        }
        out.layout = lo;
        out.weights = std::move(w);
    }
    if (d.has_lora()) {
        LoraPair p;
        p.a = load_oriented(cp, n.lora_a, d.stored_transposed);
        p.b = load_oriented(cp, n.lora_b, d.stored_transposed);
        if (p.a.cols != p.b.rows)
            throw ResolveError("tensor '" + n.lora_a + "': rank " + std::to_string(p.a.cols) +
                               " does not match '" + n.lora_b + "' rank " +
                               std::to_string(p.b.rows));
        out.lora = std::move(p);
    }
    return true;
}

} // namespace detail

inline std::vector<ResolvedLayer> resolve_layout(const CheckpointFile& cp,
                                                 const LayoutDescriptor& d) {
    d.validate();
    bool layered = false;
    for (const std::string* p : {&d.q, &d.k, &d.v, &d.o, &d.b_q, &d.b_k, &d.b_v, &d.b_o,
                                 &d.lora_a, &d.lora_b})
        if (p->find("{layer}") != std::string::npos) layered = true;
    if (d.fused && d.fused->pattern.find("{layer}") != std::string::npos) layered = true;

    std::vector<ResolvedLayer> out;
    if (!layered) {
        ResolvedLayer rl;
        if (!detail::try_resolve_layer(cp, d, 0, rl)) {
            std::string probe = d.has_attention() ? (d.fused ? d.fused->pattern : d.q) : d.lora_a;
            throw ResolveError("tensor '" + probe + "' not found in checkpoint");
        }
        out.push_back(std::move(rl));
        return out;
    }
    for (std::size_t layer = 0;; layer++) {
        ResolvedLayer rl;
        if (!detail::try_resolve_layer(cp, d, layer, rl)) break;
        out.push_back(std::move(rl));
    }
    if (out.empty()) throw ResolveError("no layers matched the descriptor");
    return out;
}

// Write back only the roles a transform touched; everything else keeps its
// original bytes. For a fused tensor the untouched slices re-encode to the
// same bits because decode is exact.
inline void store_layer(CheckpointFile& cp, const LayoutDescriptor& d,
                        const ResolvedLayer& rl, const std::set<Role>& touched) {
    if (rl.weights) {
        const AttentionWeights& w = *rl.weights;
        const bool q_t = touched.count(Role::q), k_t = touched.count(Role::k),
                   v_t = touched.count(Role::v), o_t = touched.count(Role::o);
        if (d.fused) {
            if (q_t || k_t || v_t) {
                Matrix f = detail::load_oriented(cp, rl.names.fused, d.stored_transposed);
                const FusedSpec& fs = *d.fused;
                if (q_t) detail::paste_cols(f, w.w_q, fs.q_begin);
                if (k_t) detail::paste_cols(f, w.w_k, fs.k_begin);
                if (v_t) detail::paste_cols(f, w.w_v, fs.v_begin);
                detail::store_oriented(cp, rl.names.fused, f, d.stored_transposed);
            }
        } else {
            if (q_t) detail::store_oriented(cp, rl.names.q, w.w_q, d.stored_transposed);
            if (k_t) detail::store_oriented(cp, rl.names.k, w.w_k, d.stored_transposed);
            if (v_t) detail::store_oriented(cp, rl.names.v, w.w_v, d.stored_transposed);
        }
        if (o_t) detail::store_oriented(cp, rl.names.o, w.w_o, d.stored_transposed);
        if (q_t && !rl.names.b_q.empty()) cp.write_matrix(rl.names.b_q, w.b_q);
        if (k_t && !rl.names.b_k.empty()) cp.write_matrix(rl.names.b_k, w.b_k);
        if (v_t && !rl.names.b_v.empty()) cp.write_matrix(rl.names.b_v, w.b_v);
        // b_o is never rescaled, so it is never re-stored
    }
    if (rl.lora && (touched.count(Role::lora_a) || touched.count(Role::lora_b))) {
        detail::store_oriented(cp, rl.names.lora_a, rl.lora->a, d.stored_transposed);
        detail::store_oriented(cp, rl.names.lora_b, rl.lora->b, d.stored_transposed);
    }
}

} // namespace wisca
