#include "streampoint/decoder.hpp"

#include <algorithm>

namespace streampoint::net {

CachePolicy CachePolicy::parse(const std::string& s) {
    if (s == "causal") return full_causal();
    if (s == "fa") return full_attention();
    if (s.rfind("window:", 0) == 0) {
        const std::string num = s.substr(7);
        if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("bad window policy: " + s);
        long k = std::stol(num);
        if (k < 1 || k > 1 << 20) throw ConfigError("window size out of range: " + s);
        return window_k(static_cast<int>(k));
    }
    throw ConfigError("unknown cache policy: " + s + " (want causal | window:K | fa)");
}

std::string CachePolicy::str() const {
    switch (kind) {
        case PolicyKind::FullCausal: return "causal";
        case PolicyKind::Window: return "window:" + std::to_string(window);
        case PolicyKind::FullAttention: return "fa";
    }
    return "causal";
}

std::int64_t attended_token_count(const CachePolicy& policy, int t, int tokens_per_frame,
                                  int n_frames) {
    if (t < 1) throw ContractError("attended_token_count: t must be >= 1");
    if (tokens_per_frame < 1) throw ContractError("attended_token_count: empty frames");
    const std::int64_t k = tokens_per_frame;
    switch (policy.kind) {
        case PolicyKind::FullCausal:
            return static_cast<std::int64_t>(t - 1) * k;
        case PolicyKind::Window: {
            const int w = policy.window;
            const int prior = t - 1;
            // all priors fit in the window, or the window plus the pinned
            // first frame
            const int frames = std::min(prior, w + (prior > w ? 1 : 0));
            return static_cast<std::int64_t>(frames) * k;
        }
        case PolicyKind::FullAttention:
            if (n_frames < t)
                throw ContractError("attended_token_count: full attention needs n_frames");
            return static_cast<std::int64_t>(n_frames - 1) * k;
    }
    throw ContractError("attended_token_count: bad policy");
}

std::vector<std::vector<std::uint8_t>> frame_mask(const CachePolicy& policy, int n,
                                                  bool mutual_first_two) {
    if (n < 1) throw ContractError("frame_mask: n must be >= 1");
    std::vector<std::vector<std::uint8_t>> m(n, std::vector<std::uint8_t>(n, 0));
    for (int t = 1; t <= n; ++t) {
        auto& row = m[t - 1];
        switch (policy.kind) {
            case PolicyKind::FullCausal:
                for (int u = 1; u < t; ++u) row[u - 1] = 1;
                if (t == 1) row[0] = 1;  // first frame reads its own tokens
                break;
            case PolicyKind::Window: {
                if (t == 1) {
                    row[0] = 1;
                    break;
                }
                row[0] = 1;  // pinned world anchor
                for (int u = std::max(1, t - policy.window); u < t; ++u) row[u - 1] = 1;
                break;
            }
            case PolicyKind::FullAttention:
                for (int u = 1; u <= n; ++u)
                    if (u != t) row[u - 1] = 1;
                break;
        }
    }
    if (mutual_first_two && policy.kind != PolicyKind::FullAttention && n >= 2) {
        // pairwise bootstrap of the first two frames: each reads the other
        std::fill(m[0].begin(), m[0].end(), 0);
        std::fill(m[1].begin(), m[1].end(), 0);
        m[0][1] = 1;
        m[1][0] = 1;
    }
    return m;
}

}  // namespace streampoint::net
