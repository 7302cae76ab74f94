#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "streampoint/tensor.hpp"

namespace streampoint::ad {

// AdamW: Adam moments with bias correction, weight decay applied directly to
// the parameter (decoupled from the adaptive step).
template <typename S>
class AdamW {
public:
    struct Hyper {
        S lr = S(1e-3);
        S beta1 = S(0.9);
        S beta2 = S(0.999);
        S eps = S(1e-8);
        S weight_decay = S(0);
    };

    AdamW(std::vector<Tensor<S>> params, Hyper h) : params_(std::move(params)), hp_(h) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            if (!p.requires_grad()) throw ContractError("AdamW: parameter without grad");
            m_.emplace_back(p.size(), S(0));
            v_.emplace_back(p.size(), S(0));
        }
    }

    // lr_mult scales the base rate for warmup schedules.
    void step(S lr_mult = S(1)) {
        ++t_;
        S bc1 = S(1) - std::pow(hp_.beta1, static_cast<S>(t_));
        S bc2 = S(1) - std::pow(hp_.beta2, static_cast<S>(t_));
        S lr = hp_.lr * lr_mult;
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& node = *params_[k].node();
            node.ensure_grad();
            S* p = node.val.data();
            const S* g = node.grad.data();
            S* m = m_[k].data();
            S* v = v_[k].data();
            std::int64_t n = node.size();
            for (std::int64_t i = 0; i < n; ++i) {
                m[i] = hp_.beta1 * m[i] + (S(1) - hp_.beta1) * g[i];
                v[i] = hp_.beta2 * v[i] + (S(1) - hp_.beta2) * g[i] * g[i];
                S mhat = m[i] / bc1;
                S vhat = v[i] / bc2;
                p[i] -= lr * (mhat / (std::sqrt(vhat) + hp_.eps) + hp_.weight_decay * p[i]);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::int64_t step_count() const { return t_; }
    const Hyper& hyper() const { return hp_; }
    const std::vector<Tensor<S>>& params() const { return params_; }

    // Moment access for checkpointing; order matches the constructor list.
    const std::vector<std::vector<S>>& moment1() const { return m_; }
    const std::vector<std::vector<S>>& moment2() const { return v_; }
    void restore(std::int64_t t, std::vector<std::vector<S>> m, std::vector<std::vector<S>> v) {
        if (m.size() != params_.size() || v.size() != params_.size())
            throw ShapeError("AdamW::restore: state count mismatch");
        for (std::size_t k = 0; k < params_.size(); ++k)
            if (static_cast<std::int64_t>(m[k].size()) != params_[k].size() ||
                static_cast<std::int64_t>(v[k].size()) != params_[k].size())
                throw ShapeError("AdamW::restore: state shape mismatch");
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    std::vector<Tensor<S>> params_;
    Hyper hp_;
    std::vector<std::vector<S>> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace streampoint::ad
