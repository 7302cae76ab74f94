#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "streampoint/model.hpp"

namespace streampoint::net {

enum class PolicyKind { FullCausal, Window, FullAttention };

// What the cross-attention context holds for frame t:
//   FullCausal:    every frame < t
//   Window(k):     frame 1 (pinned) plus the k most recent frames < t
//   FullAttention: every frame != t (offline; outputs only at finalize)
// Frame 1 always attends its own tokens as context.
struct CachePolicy {
    PolicyKind kind = PolicyKind::FullCausal;
    int window = 0;

    static CachePolicy full_causal() { return {PolicyKind::FullCausal, 0}; }
    static CachePolicy window_k(int k) {
        if (k < 1) throw ConfigError("window policy needs k >= 1");
        return {PolicyKind::Window, k};
    }
    static CachePolicy full_attention() { return {PolicyKind::FullAttention, 0}; }

    // "causal" | "window:K" | "fa"
    static CachePolicy parse(const std::string& s);
    std::string str() const;

    bool operator==(const CachePolicy&) const = default;
};

// Context tokens contributed by frames other than t itself. FullAttention
// needs the sequence length.
std::int64_t attended_token_count(const CachePolicy& policy, int t, int tokens_per_frame,
                                  int n_frames = -1);

// m[t-1][u-1] nonzero when frame t attends frame u's tokens (1-based frames).
std::vector<std::vector<std::uint8_t>> frame_mask(const CachePolicy& policy, int n,
                                                  bool mutual_first_two = false);

// Projected cross-attention K/V per decoder layer. Keys are stored already
// per-head unit-normalized, so a cached frame costs no recompute when later
// frames attend to it.
template <typename S>
struct KVCache {
    struct Entry {
        int frame = 0;
        ad::Tensor<S> k, v;
    };
    std::vector<std::vector<Entry>> layers;

    explicit KVCache(int n_layers = 0) : layers(n_layers) {}

    std::vector<int> frames(int layer = 0) const {
        std::vector<int> out;
        for (const auto& e : layers.at(layer)) out.push_back(e.frame);
        return out;
    }

    // every layer caches the same frame set, pinned frame first then ascending
    void check_consistent() const {
        for (std::size_t i = 1; i < layers.size(); ++i)
            if (frames(static_cast<int>(i)) != frames(0))
                throw ContractError("KVCache: layers hold different frame sets");
        for (const auto& layer : layers)
            for (std::size_t j = 1; j < layer.size(); ++j)
                if (layer[j].frame <= layer[j - 1].frame)
                    throw ContractError("KVCache: frame order not increasing");
    }

    // Per-layer residency: every layer holds the same frame set, so the
    // policy bound applies to each layer's token count, not the sum. Memory
    // is this figure times 2*B*C floats.
    std::int64_t resident_tokens() const {
        std::int64_t worst = 0;
        for (const auto& layer : layers) {
            std::int64_t n = 0;
            for (const auto& e : layer) n += e.k.dim(0);
            worst = std::max(worst, n);
        }
        return worst;
    }
};

template <typename S>
using Pyramid = std::vector<ad::Tensor<S>>;  // G^0 .. G^B, each [K x C]

struct FrameStats {
    int t = 0;
    double wall_ms = 0;
    std::int64_t attended_tokens = 0;  // context tokens from other frames
    std::int64_t resident_tokens = 0;  // cached K rows in the fullest layer
};

// One decoder layer: frame-wise self-attention, cross-attention over the
// provided context, MLP, all pre-norm residual.
template <typename S>
ad::Tensor<S> decoder_block_forward(const DecBlockP<S>& blk, const ModelConfig& cfg,
                                    const ad::Tensor<S>& g, const ad::Tensor<S>& ctx_k,
                                    const ad::Tensor<S>& ctx_v,
                                    const ad::Tensor<S>* mask_bias = nullptr) {
    auto sn = ad::layernorm_rows(g, blk.ln_self.g, blk.ln_self.b);
    auto q_self = linear(sn, blk.self_attn.q);
    auto k_self = project_keys(sn, blk.self_attn.k, cfg.n_heads);
    auto v_self = linear(sn, blk.self_attn.v);
    auto mixed_self = attention_mix(q_self, k_self, v_self, blk.self_attn.sq, blk.self_attn.sk,
                                    cfg.n_heads, nullptr);
    auto x = ad::add(g, linear(mixed_self, blk.self_attn.o));

    auto q_cross = linear(ad::layernorm_rows(x, blk.ln_q.g, blk.ln_q.b), blk.cross_attn.q);
    auto mixed_cross = attention_mix(q_cross, ctx_k, ctx_v, blk.cross_attn.sq,
                                     blk.cross_attn.sk, cfg.n_heads, mask_bias);
    x = ad::add(x, linear(mixed_cross, blk.cross_attn.o));

    x = ad::add(x, mlp(ad::layernorm_rows(x, blk.ln_mlp.g, blk.ln_mlp.b), blk.mlp1, blk.mlp2));
    return x;
}

// Cross K/V source for one layer: the layer's context norm of the incoming
// features.
template <typename S>
std::pair<ad::Tensor<S>, ad::Tensor<S>> decoder_ctx_kv(const DecBlockP<S>& blk,
                                                       const ModelConfig& cfg,
                                                       const ad::Tensor<S>& g) {
    auto src = ad::layernorm_rows(g, blk.ln_ctx.g, blk.ln_ctx.b);
    return {project_keys(src, blk.cross_attn.k, cfg.n_heads), linear(src, blk.cross_attn.v)};
}

template <typename S>
struct FrameInput {
    std::vector<float> rgb;
    int h = 0, w = 0;
};

// Online decoding with per-layer KV caching. Causal and window policies
// return the feature pyramid as each frame arrives; full attention buffers
// tokens and yields everything at finalize().
template <typename S>
class StreamSession {
public:
    StreamSession(const Model<S>& model, CachePolicy policy)
        : model_(&model), policy_(policy), cache_(model.cfg.dec_depth) {
        if (model.cfg.mutual_first_two)
            throw ContractError(
                "streaming is strictly causal; mutual_first_two is batched-only");
    }

    std::optional<Pyramid<S>> ingest(const std::vector<float>& rgb, int h, int w) {
        return ingest_tokens(model_->encode(rgb, h, w));
    }

    // Token-level entry point; `tokens` is one frame's encoder output.
    std::optional<Pyramid<S>> ingest_tokens(ad::Tensor<S> tokens) {
        if (finalized_) throw ContractError("ingest after finalize");
        auto t0 = std::chrono::steady_clock::now();
        ++t_;
        const int k_tokens = tokens.dim(0);
        if (t_ == 1) tokens_per_frame_ = k_tokens;
        else if (k_tokens != tokens_per_frame_)
            throw ShapeError("ingest: token count changed mid-stream");

        if (t_ == 1)
            tokens = ad::add_row_broadcast(tokens, model_->register_token);

        if (policy_.kind == PolicyKind::FullAttention) {
            fa_buffer_.push_back(tokens);
            return std::nullopt;
        }

        Pyramid<S> pyr;
        pyr.reserve(model_->cfg.dec_depth + 1);
        ad::Tensor<S> g = tokens;
        pyr.push_back(g);
        for (int i = 0; i < model_->cfg.dec_depth; ++i) {
            auto [kv_k, kv_v] = decoder_ctx_kv(model_->dec[i], model_->cfg, g);
            if (t_ == 1) cache_.layers[i].push_back({t_, kv_k, kv_v});
            std::vector<ad::Tensor<S>> ks, vs;
            for (const auto& e : cache_.layers[i]) {
                ks.push_back(e.k);
                vs.push_back(e.v);
            }
            auto x = decoder_block_forward(model_->dec[i], model_->cfg, g,
                                           ad::concat_rows(ks), ad::concat_rows(vs));
            if (t_ > 1) {
                cache_.layers[i].push_back({t_, kv_k, kv_v});
                evict(i);
            }
            g = x;
            pyr.push_back(g);
        }
        cache_.check_consistent();

        FrameStats st;
        st.t = t_;
        st.attended_tokens =
            attended_token_count(policy_, t_, tokens_per_frame_, t_);
        st.resident_tokens = cache_.resident_tokens();
        st.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0).count();
        stats_.push_back(st);
        return pyr;
    }

    // Full-attention output pass: every frame attends every other frame via
    // the same cache-gather machinery, one layer at a time.
    std::vector<Pyramid<S>> finalize() {
        if (policy_.kind != PolicyKind::FullAttention)
            throw ContractError("finalize is a full-attention operation");
        if (finalized_) throw ContractError("finalize called twice");
        if (fa_buffer_.size() < 2)
            throw ContractError("full attention needs at least 2 frames");
        finalized_ = true;
        auto t0 = std::chrono::steady_clock::now();
        const int n = static_cast<int>(fa_buffer_.size());
        std::vector<Pyramid<S>> pyrs(n);
        std::vector<ad::Tensor<S>> xs = fa_buffer_;
        for (int t = 0; t < n; ++t) pyrs[t].push_back(xs[t]);
        for (int i = 0; i < model_->cfg.dec_depth; ++i) {
            auto& layer = cache_.layers[i];
            layer.clear();
            for (int t = 0; t < n; ++t) {
                auto [kv_k, kv_v] = decoder_ctx_kv(model_->dec[i], model_->cfg, xs[t]);
                layer.push_back({t + 1, kv_k, kv_v});
            }
            std::vector<ad::Tensor<S>> next(n);
            for (int t = 0; t < n; ++t) {
                std::vector<ad::Tensor<S>> ks, vs;
                for (const auto& e : layer)
                    if (e.frame != t + 1) {
                        ks.push_back(e.k);
                        vs.push_back(e.v);
                    }
                next[t] = decoder_block_forward(model_->dec[i], model_->cfg, xs[t],
                                                ad::concat_rows(ks), ad::concat_rows(vs));
            }
            xs = std::move(next);
            for (int t = 0; t < n; ++t) pyrs[t].push_back(xs[t]);
        }
        double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0).count();
        for (int t = 0; t < n; ++t) {
            FrameStats st;
            st.t = t + 1;
            st.attended_tokens = attended_token_count(policy_, t + 1, tokens_per_frame_, n);
            st.resident_tokens = cache_.resident_tokens();
            st.wall_ms = ms / n;
            stats_.push_back(st);
        }
        return pyrs;
    }

    int frames_seen() const { return t_; }
    const CachePolicy& policy() const { return policy_; }
    const KVCache<S>& cache() const { return cache_; }
    const std::vector<FrameStats>& stats() const { return stats_; }
    const Model<S>& model() const { return *model_; }

private:
    void evict(int layer) {
        if (policy_.kind != PolicyKind::Window) return;
        auto& entries = cache_.layers[layer];
        auto non_pinned = [&] {
            int c = 0;
            for (const auto& e : entries) c += e.frame != 1;
            return c;
        };
        while (non_pinned() > policy_.window) {
            for (auto it = entries.begin(); it != entries.end(); ++it)
                if (it->frame != 1) {
                    entries.erase(it);  // oldest non-pinned: whole-frame eviction
                    break;
                }
        }
    }

    const Model<S>* model_;
    CachePolicy policy_;
    KVCache<S> cache_;
    std::vector<ad::Tensor<S>> fa_buffer_;
    std::vector<FrameStats> stats_;
    int t_ = 0;
    int tokens_per_frame_ = 0;
    bool finalized_ = false;
};

// Offline route: all frames at once, policy expressed as an explicit additive
// attention mask over the concatenated context. Used for training and as the
// reference the streaming path is checked against.
template <typename S>
std::vector<Pyramid<S>> batched_decode(const Model<S>& model,
                                       const std::vector<ad::Tensor<S>>& token_grids,
                                       const CachePolicy& policy) {
    const int n = static_cast<int>(token_grids.size());
    if (n < 2) throw ContractError("batched_decode: needs at least 2 frames");
    const int k_tokens = token_grids[0].dim(0);
    for (const auto& t : token_grids)
        if (t.dim(0) != k_tokens || t.dim(1) != model.cfg.width)
            throw ShapeError("batched_decode: inconsistent token grids");

    auto mask = frame_mask(policy, n, model.cfg.mutual_first_two);
    const S neg = S(-1e30);
    std::vector<ad::Tensor<S>> bias(n);
    for (int t = 0; t < n; ++t) {
        std::vector<S> row(static_cast<std::size_t>(n) * k_tokens, S(0));
        for (int u = 0; u < n; ++u)
            if (!mask[t][u])
                std::fill(row.begin() + static_cast<std::size_t>(u) * k_tokens,
                          row.begin() + static_cast<std::size_t>(u + 1) * k_tokens, neg);
        bias[t] = ad::Tensor<S>::from_data({n * k_tokens}, std::move(row));
    }

    std::vector<ad::Tensor<S>> xs = token_grids;
    xs[0] = ad::add_row_broadcast(xs[0], model.register_token);
    std::vector<Pyramid<S>> pyrs(n);
    for (int t = 0; t < n; ++t) pyrs[t].push_back(xs[t]);

    for (int i = 0; i < model.cfg.dec_depth; ++i) {
        std::vector<ad::Tensor<S>> ks, vs;
        ks.reserve(n);
        vs.reserve(n);
        for (int t = 0; t < n; ++t) {
            auto [kv_k, kv_v] = decoder_ctx_kv(model.dec[i], model.cfg, xs[t]);
            ks.push_back(kv_k);
            vs.push_back(kv_v);
        }
        auto k_all = ad::concat_rows(ks);
        auto v_all = ad::concat_rows(vs);
        std::vector<ad::Tensor<S>> next(n);
        for (int t = 0; t < n; ++t)
            next[t] = decoder_block_forward(model.dec[i], model.cfg, xs[t], k_all, v_all,
                                            &bias[t]);
        xs = std::move(next);
        for (int t = 0; t < n; ++t) pyrs[t].push_back(xs[t]);
    }
    return pyrs;
}

template <typename S>
std::vector<Pyramid<S>> batched_forward(const Model<S>& model,
                                        const std::vector<FrameInput<S>>& frames,
                                        const CachePolicy& policy) {
    std::vector<ad::Tensor<S>> tokens;
    tokens.reserve(frames.size());
    for (const auto& f : frames) tokens.push_back(model.encode(f.rgb, f.h, f.w));
    return batched_decode(model, tokens, policy);
}

}  // namespace streampoint::net
