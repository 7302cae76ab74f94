#pragma once

#include <cmath>
#include <map>
#include <type_traits>
#include <memory>
#include <string>
#include <vector>

#include "streampoint/common.hpp"
#include "streampoint/tensor.hpp"

namespace streampoint::net {

struct ModelConfig {
    int patch = 8;
    int width = 64;       // token channels C
    int enc_depth = 4;
    int dec_depth = 4;    // B; heads tap layers B/2 and B
    int n_heads = 4;
    int mlp_ratio = 4;
    int head_conv_hidden = 32;
    int pose_hidden = 64;
    double alpha = 0.2;           // confidence regularizer weight
    bool mutual_first_two = false;  // batched-only: frames 1 and 2 attend to each other
    std::string default_policy = "causal";

    int head_dim() const { return width / n_heads; }

    void validate() const {
        if (patch < 1) throw ConfigError("model: patch must be >= 1");
        if (width < 2 || n_heads < 1 || width % n_heads != 0)
            throw ConfigError("model: width must be a positive multiple of n_heads");
        if (head_dim() % 2 != 0) throw ConfigError("model: head dim must be even for rotary");
        if (enc_depth < 1 || dec_depth < 1) throw ConfigError("model: depths must be >= 1");
        if (dec_depth % 2 != 0) throw ConfigError("model: dec_depth must be even (mid tap)");
        if (mlp_ratio < 1) throw ConfigError("model: mlp_ratio must be >= 1");
        if (head_conv_hidden < 1 || pose_hidden < 1) throw ConfigError("model: head widths");
        if (!(alpha > 0)) throw ConfigError("model: alpha must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

// Tokens for one frame: K x C, K = (H/p) * (W/p), rows in row-major grid
// order (gy major).
template <typename S>
using TokenGrid = ad::Tensor<S>;

template <typename S>
struct LinearP {
    ad::Tensor<S> w, b;
};

template <typename S>
struct LayerNormP {
    ad::Tensor<S> g, b;
};

// QK-normalized attention: q and k rows are unit-normalized per head, then
// scaled by learned scalars, so |logit| <= sq * sk.
template <typename S>
struct AttnP {
    LinearP<S> q, k, v, o;
    ad::Tensor<S> sq, sk;
};

template <typename S>
struct EncBlockP {
    LayerNormP<S> ln1, ln2;
    AttnP<S> attn;
    LinearP<S> mlp1, mlp2;
};

template <typename S>
struct DecBlockP {
    LayerNormP<S> ln_self, ln_q, ln_ctx, ln_mlp;
    AttnP<S> self_attn, cross_attn;
    LinearP<S> mlp1, mlp2;
};

template <typename S>
struct PointHeadP {
    LinearP<S> proj;          // [2C x p*p*4]
    LinearP<S> conv1, conv2;  // 3x3 convs as [9*cin x cout]
};

template <typename S>
struct PoseHeadP {
    LinearP<S> fc1, fc2;  // C -> hidden -> 9
};

// Registry in construction order; names are stable and sorted maps are used
// wherever serialization order matters.
template <typename S>
struct ParamStore {
    std::vector<std::pair<std::string, ad::Tensor<S>>> entries;

    ad::Tensor<S> add(const std::string& name, ad::Shape shape, std::vector<S> data) {
        auto t = ad::Tensor<S>::leaf(std::move(shape), std::move(data));
        entries.emplace_back(name, t);
        return t;
    }

    ad::Tensor<S> find(const std::string& name) const {
        for (const auto& [n, t] : entries)
            if (n == name) return t;
        throw ContractError("parameter not found: " + name);
    }

    std::vector<ad::Tensor<S>> tensors() const {
        std::vector<ad::Tensor<S>> out;
        out.reserve(entries.size());
        for (const auto& [n, t] : entries) out.push_back(t);
        return out;
    }
};

// Precomputed rotary tables for a (gh x gw) token grid: axial 2-d rotary,
// even pair indices within each head rotate by row position, odd ones by
// column position. Tables are [K x C/2] matching rope_apply's pairing.
template <typename S>
struct RopeTables {
    std::shared_ptr<const std::vector<S>> cos_t, sin_t;
    int rows = 0;
};

inline constexpr double kRopeBase = 100.0;

template <typename S>
RopeTables<S> make_rope_tables(int gh, int gw, int width, int n_heads) {
    const int k = gh * gw;
    const int hd = width / n_heads;
    const int pairs_per_head = hd / 2;
    const int half = width / 2;
    auto cos_t = std::make_shared<std::vector<S>>(static_cast<std::size_t>(k) * half);
    auto sin_t = std::make_shared<std::vector<S>>(static_cast<std::size_t>(k) * half);
    for (int tok = 0; tok < k; ++tok) {
        int gy = tok / gw, gx = tok % gw;
        for (int h = 0; h < n_heads; ++h)
            for (int m = 0; m < pairs_per_head; ++m) {
                // axial split: even pair index follows the row coordinate,
                // odd the column, each with its own frequency
                int axis_pair = m / 2;
                double pos = (m % 2 == 0) ? gy : gx;
                double freq =
                    std::pow(kRopeBase, -2.0 * axis_pair / std::max(1, pairs_per_head));
                double angle = pos * freq;
                std::size_t idx = static_cast<std::size_t>(tok) * half + h * pairs_per_head + m;
                (*cos_t)[idx] = static_cast<S>(std::cos(angle));
                (*sin_t)[idx] = static_cast<S>(std::sin(angle));
            }
    }
    return RopeTables<S>{cos_t, sin_t, k};
}

// q_in projected queries [Kq x C]; k_all/v_all projected keys and values
// [M x C] with k_all already unit-normalized per head. mask_bias, when
// present, is added to every score row (0 = visible, large negative =
// masked). Returns the concatenated head outputs before the output
// projection.
template <typename S>
ad::Tensor<S> attention_mix(const ad::Tensor<S>& q_in, const ad::Tensor<S>& k_all,
                            const ad::Tensor<S>& v_all, const ad::Tensor<S>& sq,
                            const ad::Tensor<S>& sk, int n_heads,
                            std::type_identity_t<const ad::Tensor<S>*> mask_bias) {
    const int c = q_in.dim(1);
    const int hd = c / n_heads;
    std::vector<ad::Tensor<S>> heads;
    heads.reserve(n_heads);
    ad::Tensor<S> gain = ad::mul(sq, sk);
    for (int h = 0; h < n_heads; ++h) {
        auto qh = ad::rows_unit(ad::slice_cols(q_in, h * hd, (h + 1) * hd));
        auto kh = ad::slice_cols(k_all, h * hd, (h + 1) * hd);
        auto scores = ad::mul_by_scalar(ad::matmul(qh, ad::transpose(kh)), gain);
        if (mask_bias) scores = ad::add_row_broadcast(scores, *mask_bias);
        auto probs = ad::softmax_rows(scores);
        heads.push_back(ad::matmul(probs, ad::slice_cols(v_all, h * hd, (h + 1) * hd)));
    }
    ad::Tensor<S> out = heads[0];
    for (int h = 1; h < n_heads; ++h) out = ad::concat_cols(out, heads[h]);
    return out;
}

// Unit-normalizes each head's column block row-wise.
template <typename S>
ad::Tensor<S> rows_unit_per_head(const ad::Tensor<S>& x, int n_heads) {
    const int hd = x.dim(1) / n_heads;
    ad::Tensor<S> out;
    for (int h = 0; h < n_heads; ++h) {
        auto xh = ad::rows_unit(ad::slice_cols(x, h * hd, (h + 1) * hd));
        out = h == 0 ? xh : ad::concat_cols(out, xh);
    }
    return out;
}

// Keys for attention_mix: projected and per-head unit-normalized once, so
// they can be cached and reused across query frames.
template <typename S>
ad::Tensor<S> project_keys(const ad::Tensor<S>& x, const LinearP<S>& k, int n_heads) {
    return rows_unit_per_head(ad::add_row_broadcast(ad::matmul(x, k.w), k.b), n_heads);
}

template <typename S>
ad::Tensor<S> linear(const ad::Tensor<S>& x, const LinearP<S>& p) {
    return ad::add_row_broadcast(ad::matmul(x, p.w), p.b);
}

template <typename S>
ad::Tensor<S> mlp(const ad::Tensor<S>& x, const LinearP<S>& fc1, const LinearP<S>& fc2) {
    return linear(ad::gelu(linear(x, fc1)), fc2);
}

// Weight-shared per-frame encoder with rotary positions on q/k only.
template <typename S>
struct Model {
    ModelConfig cfg;
    ParamStore<S> params;

    ad::Tensor<S> patch_embed_w, patch_embed_b;
    ad::Tensor<S> register_token;  // added to frame-1 tokens, marks the world anchor
    std::vector<EncBlockP<S>> enc;
    std::vector<DecBlockP<S>> dec;
    PointHeadP<S> head_local, head_global;
    PoseHeadP<S> head_pose;

    explicit Model(const ModelConfig& config, std::uint64_t seed = 0);

    // Image h*w*3 in [0,1] -> [K x 3p^2] constant token pixels.
    ad::Tensor<S> patchify(const std::vector<float>& rgb, int h, int w) const;

    // Full encoder stack for one frame.
    TokenGrid<S> encode(const std::vector<float>& rgb, int h, int w) const;
    TokenGrid<S> encode_tokens(const ad::Tensor<S>& patches, int gh, int gw) const;
};

namespace detail {

template <typename S>
std::vector<S> normal_init(Rng& rng, std::int64_t n, double std_dev) {
    std::vector<S> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = static_cast<S>(rng.normal() * std_dev);
    return out;
}

template <typename S>
LinearP<S> make_linear(ParamStore<S>& ps, Rng& rng, const std::string& name, int in, int out,
                       double std_dev = 0.02) {
    LinearP<S> p;
    p.w = ps.add(name + ".w", {in, out}, normal_init<S>(rng, std::int64_t(in) * out, std_dev));
    p.b = ps.add(name + ".b", {out}, std::vector<S>(out, S(0)));
    return p;
}

template <typename S>
LayerNormP<S> make_ln(ParamStore<S>& ps, const std::string& name, int c) {
    LayerNormP<S> p;
    p.g = ps.add(name + ".g", {c}, std::vector<S>(c, S(1)));
    p.b = ps.add(name + ".b", {c}, std::vector<S>(c, S(0)));
    return p;
}

template <typename S>
AttnP<S> make_attn(ParamStore<S>& ps, Rng& rng, const std::string& name, int c) {
    AttnP<S> p;
    p.q = make_linear(ps, rng, name + ".q", c, c);
    p.k = make_linear(ps, rng, name + ".k", c, c);
    p.v = make_linear(ps, rng, name + ".v", c, c);
    p.o = make_linear(ps, rng, name + ".o", c, c);
    // product of the two scales starts at sqrt(head_dim)
    return p;
}

}  // namespace detail

template <typename S>
Model<S>::Model(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(seed);
    const int c = cfg.width;
    const int p = cfg.patch;

    patch_embed_w = params.add("patch_embed.w", {3 * p * p, c},
                               detail::normal_init<S>(rng, std::int64_t(3) * p * p * c, 0.02));
    patch_embed_b = params.add("patch_embed.b", {c}, std::vector<S>(c, S(0)));
    register_token = params.add("register_token", {c}, detail::normal_init<S>(rng, c, 0.02));

    const S scale_init = static_cast<S>(std::pow(cfg.head_dim(), 0.25));
    auto add_scales = [&](AttnP<S>& a, const std::string& name) {
        a.sq = params.add(name + ".sq", {1}, {scale_init});
        a.sk = params.add(name + ".sk", {1}, {scale_init});
    };

    for (int i = 0; i < cfg.enc_depth; ++i) {
        std::string base = "enc." + std::to_string(i);
        EncBlockP<S> b;
        b.ln1 = detail::make_ln<S>(params, base + ".ln1", c);
        b.attn = detail::make_attn(params, rng, base + ".attn", c);
        add_scales(b.attn, base + ".attn");
        b.ln2 = detail::make_ln<S>(params, base + ".ln2", c);
        b.mlp1 = detail::make_linear(params, rng, base + ".mlp1", c, c * cfg.mlp_ratio);
        b.mlp2 = detail::make_linear(params, rng, base + ".mlp2", c * cfg.mlp_ratio, c);
        enc.push_back(b);
    }
    for (int i = 0; i < cfg.dec_depth; ++i) {
        std::string base = "dec." + std::to_string(i);
        DecBlockP<S> b;
        b.ln_self = detail::make_ln<S>(params, base + ".ln_self", c);
        b.self_attn = detail::make_attn(params, rng, base + ".self", c);
        add_scales(b.self_attn, base + ".self");
        b.ln_q = detail::make_ln<S>(params, base + ".ln_q", c);
        b.ln_ctx = detail::make_ln<S>(params, base + ".ln_ctx", c);
        b.cross_attn = detail::make_attn(params, rng, base + ".cross", c);
        add_scales(b.cross_attn, base + ".cross");
        b.ln_mlp = detail::make_ln<S>(params, base + ".ln_mlp", c);
        b.mlp1 = detail::make_linear(params, rng, base + ".mlp1", c, c * cfg.mlp_ratio);
        b.mlp2 = detail::make_linear(params, rng, base + ".mlp2", c * cfg.mlp_ratio, c);
        dec.push_back(b);
    }

    auto make_point_head = [&](const std::string& base) {
        PointHeadP<S> h;
        h.proj = detail::make_linear(params, rng, base + ".proj", 2 * c, p * p * 4);
        h.conv1 = detail::make_linear(params, rng, base + ".conv1", 9 * 4, cfg.head_conv_hidden);
        h.conv2 =
            detail::make_linear(params, rng, base + ".conv2", 9 * cfg.head_conv_hidden, 4, 0.01);
        return h;
    };
    head_local = make_point_head("head_local");
    head_global = make_point_head("head_global");

    head_pose.fc1 = detail::make_linear(params, rng, "head_pose.fc1", c, cfg.pose_hidden);
    head_pose.fc2 = detail::make_linear(params, rng, "head_pose.fc2", cfg.pose_hidden, 9, 0.01);
}

template <typename S>
ad::Tensor<S> Model<S>::patchify(const std::vector<float>& rgb, int h, int w) const {
    const int p = cfg.patch;
    if (h % p || w % p) throw ShapeError("patchify: image not a multiple of patch size");
    if (rgb.size() != static_cast<std::size_t>(h) * w * 3)
        throw ShapeError("patchify: rgb size mismatch");
    const int gh = h / p, gw = w / p;
    const int k = gh * gw, d = 3 * p * p;
    std::vector<S> out(static_cast<std::size_t>(k) * d);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            S* tok = out.data() + (gy * gw + gx) * d;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < 3; ++ch)
                        tok[(py * p + px) * 3 + ch] =
                            static_cast<S>(rgb[((gy * p + py) * w + gx * p + px) * 3 + ch]);
        }
    return ad::Tensor<S>::from_data({k, d}, std::move(out));
}

template <typename S>
TokenGrid<S> Model<S>::encode_tokens(const ad::Tensor<S>& patches, int gh, int gw) const {
    auto rope = make_rope_tables<S>(gh, gw, cfg.width, cfg.n_heads);
    ad::Tensor<S> x = linear(patches, LinearP<S>{patch_embed_w, patch_embed_b});
    for (const auto& blk : enc) {
        auto xn = ad::layernorm_rows(x, blk.ln1.g, blk.ln1.b);
        auto q = ad::rope_apply(linear(xn, blk.attn.q), rope.cos_t, rope.sin_t);
        // k normalized per head after the rotary twist
        auto k_unit = rows_unit_per_head(
            ad::rope_apply(linear(xn, blk.attn.k), rope.cos_t, rope.sin_t), cfg.n_heads);
        auto v = linear(xn, blk.attn.v);
        auto mixed = attention_mix(q, k_unit, v, blk.attn.sq, blk.attn.sk, cfg.n_heads, nullptr);
        x = ad::add(x, linear(mixed, blk.attn.o));
        x = ad::add(x, mlp(ad::layernorm_rows(x, blk.ln2.g, blk.ln2.b), blk.mlp1, blk.mlp2));
    }
    return x;
}

template <typename S>
TokenGrid<S> Model<S>::encode(const std::vector<float>& rgb, int h, int w) const {
    return encode_tokens(patchify(rgb, h, w), h / cfg.patch, w / cfg.patch);
}

}  // namespace streampoint::net
