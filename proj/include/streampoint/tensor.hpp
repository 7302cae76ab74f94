#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "streampoint/common.hpp"

namespace streampoint::ad {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Mat<S>>;
template <typename S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

// One value in the computation graph. Backward closures capture parents as
// shared_ptr and self as a raw pointer; the tape keeps self alive, so there is
// no ownership cycle.
template <typename S>
struct Node {
    Shape shape;
    std::vector<S> val;
    std::vector<S> grad;
    bool requires_grad = false;
    bool touched = false;
    std::int64_t tape_pos = -1;
    std::function<void()> back;

    std::int64_t size() const { return static_cast<std::int64_t>(val.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(val.size(), S(0));
    }

    void accumulate(const S* g, std::int64_t n) {
        ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) grad[i] += g[i];
        touched = true;
    }
};

template <typename S>
class Tensor;

// Records graph nodes in creation order, which is already a topological
// order. A tape is active for its lexical scope; ops built with no active
// tape compute values only (the inference path).
template <typename S>
class Tape {
public:
    Tape() : prev_(current_) { current_ = this; }
    ~Tape() { current_ = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_; }

    void record(const std::shared_ptr<Node<S>>& n) {
        n->tape_pos = static_cast<std::int64_t>(nodes_.size());
        nodes_.push_back(n);
    }

    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse creation
    // order. Each recorded node's closure runs at most once.
    void backward(const Tensor<S>& loss);

private:
    std::vector<std::shared_ptr<Node<S>>> nodes_;
    Tape* prev_;
    static thread_local Tape* current_;
};

template <typename S>
thread_local Tape<S>* Tape<S>::current_ = nullptr;

template <typename S>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape) {
        auto n = std::make_shared<Node<S>>();
        n->val.assign(numel(shape), S(0));
        n->shape = std::move(shape);
        return Tensor(n);
    }

    static Tensor full(Shape shape, S v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.node_->val.begin(), t.node_->val.end(), v);
        return t;
    }

    static Tensor scalar(S v) { return full({1}, v); }

    static Tensor from_data(Shape shape, std::vector<S> data) {
        if (static_cast<std::int64_t>(data.size()) != numel(shape))
            throw ShapeError("from_data: " + shape_str(shape) + " needs " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(data.size()));
        auto n = std::make_shared<Node<S>>();
        n->shape = std::move(shape);
        n->val = std::move(data);
        return Tensor(n);
    }

    // Leaf parameter: participates in grad accumulation across tapes.
    static Tensor leaf(Shape shape, std::vector<S> data) {
        Tensor t = from_data(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return node_->size(); }
    int dim(int i) const { return node_->shape.at(i); }
    int ndim() const { return static_cast<int>(node_->shape.size()); }

    const std::vector<S>& val() const { return node_->val; }
    std::vector<S>& mutable_val() { return node_->val; }
    S* data() { return node_->val.data(); }
    const S* data() const { return node_->val.data(); }

    S item() const {
        if (size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
        return node_->val[0];
    }

    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<S>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        std::fill(node_->grad.begin(), node_->grad.end(), S(0));
        node_->touched = false;
    }
    bool grad_touched() const { return node_->touched; }

    // Value copy severed from the graph.
    Tensor detach() const { return from_data(node_->shape, node_->val); }

    std::shared_ptr<Node<S>>& node() { return node_; }
    const std::shared_ptr<Node<S>>& node() const { return node_; }

    ConstMatMap<S> mat2d() const {
        if (ndim() != 2) throw ShapeError("mat2d on " + shape_str(shape()));
        return ConstMatMap<S>(data(), dim(0), dim(1));
    }

private:
    std::shared_ptr<Node<S>> node_;
};

template <typename S>
void Tape<S>::backward(const Tensor<S>& loss) {
    if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
    auto& ln = *loss.node();
    if (ln.tape_pos < 0) {
        if (ln.requires_grad) {
            S one = S(1);
            ln.accumulate(&one, 1);
        }
        return;  // constant loss: nothing upstream
    }
    S one = S(1);
    ln.accumulate(&one, 1);
    for (std::int64_t i = ln.tape_pos; i >= 0; --i) {
        Node<S>& n = *nodes_[i];
        if (n.touched && n.back) n.back();
    }
}

namespace detail {

// Builds an op node. The backward closure is dropped when no input needs
// gradients or no tape is active, so inference pays only for the forward.
template <typename S>
Tensor<S> make_op(Shape shape, std::vector<S> val, bool any_input_grad,
                  const std::function<std::function<void()>(Node<S>*)>& make_back) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    Tape<S>* tape = Tape<S>::current();
    if (any_input_grad && tape) {
        n->requires_grad = true;
        n->back = make_back(n.get());
        tape->record(n);
    }
    return Tensor<S>(n);
}

template <typename S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
    return a.shape() == b.shape();
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (!same_shape(a, b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise ----

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<S> out(a.val());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] += b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad || bn->requires_grad,
        [an, bn](Node<S>* self) {
            return [an, bn, self]() {
                if (an->requires_grad) an->accumulate(self->grad.data(), self->size());
                if (bn->requires_grad) bn->accumulate(self->grad.data(), self->size());
            };
        });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<S> out(a.val());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] -= b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad || bn->requires_grad,
        [an, bn](Node<S>* self) {
            return [an, bn, self]() {
                if (an->requires_grad) an->accumulate(self->grad.data(), self->size());
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        bn->grad[i] -= self->grad[i];
                    bn->touched = true;
                }
            };
        });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<S> out(a.val());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] *= b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad || bn->requires_grad,
        [an, bn](Node<S>* self) {
            return [an, bn, self]() {
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        an->grad[i] += self->grad[i] * bn->val[i];
                    an->touched = true;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        bn->grad[i] += self->grad[i] * an->val[i];
                    bn->touched = true;
                }
            };
        });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    std::vector<S> out(a.val());
    for (auto& v : out) v *= c;
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an, c](Node<S>* self) {
            return [an, c, self]() {
                an->ensure_grad();
                for (std::int64_t i = 0; i < self->size(); ++i)
                    an->grad[i] += self->grad[i] * c;
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
    std::vector<S> out(a.val());
    for (auto& v : out) v += c;
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an](Node<S>* self) {
            return [an, self]() { an->accumulate(self->grad.data(), self->size()); };
        });
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(S c, const Tensor<S>& a) { return scale(a, c); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S c) { return scale(a, c); }

// y = a * s with scalar tensor s (s may require grad).
template <typename S>
Tensor<S> mul_by_scalar(const Tensor<S>& a, const Tensor<S>& s) {
    if (s.size() != 1) throw ShapeError("mul_by_scalar: s must be scalar");
    S sv = s.data()[0];
    std::vector<S> out(a.val());
    for (auto& v : out) v *= sv;
    auto an = a.node(), sn = s.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad || sn->requires_grad,
        [an, sn](Node<S>* self) {
            return [an, sn, self]() {
                S sv = sn->val[0];
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        an->grad[i] += self->grad[i] * sv;
                    an->touched = true;
                }
                if (sn->requires_grad) {
                    S acc = S(0);
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        acc += self->grad[i] * an->val[i];
                    sn->accumulate(&acc, 1);
                }
            };
        });
}

// y = a / s with scalar tensor s. s == 0 is a contract violation.
template <typename S>
Tensor<S> div_by_scalar(const Tensor<S>& a, const Tensor<S>& s) {
    if (s.size() != 1) throw ShapeError("div_by_scalar: s must be scalar");
    S sv = s.data()[0];
    if (sv == S(0)) throw ContractError("div_by_scalar: zero divisor");
    std::vector<S> out(a.val());
    for (auto& v : out) v /= sv;
    auto an = a.node(), sn = s.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad || sn->requires_grad,
        [an, sn](Node<S>* self) {
            return [an, sn, self]() {
                S sv = sn->val[0];
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        an->grad[i] += self->grad[i] / sv;
                    an->touched = true;
                }
                if (sn->requires_grad) {
                    S acc = S(0);
                    for (std::int64_t i = 0; i < self->size(); ++i)
                        acc += self->grad[i] * self->val[i];
                    acc = -acc / sv;
                    sn->accumulate(&acc, 1);
                }
            };
        });
}

// exp with input clamps so any finite input yields a finite positive value
// (and a zero derivative past either clamp).
template <typename S>
Tensor<S> exp_clamped(const Tensor<S>& a, S cap_hi = S(30), S cap_lo = S(-30)) {
    std::vector<S> out(a.val());
    for (auto& v : out) v = std::exp(std::clamp(v, cap_lo, cap_hi));
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an, cap_hi, cap_lo](Node<S>* self) {
            return [an, cap_hi, cap_lo, self]() {
                an->ensure_grad();
                for (std::int64_t i = 0; i < self->size(); ++i)
                    if (an->val[i] < cap_hi && an->val[i] > cap_lo)
                        an->grad[i] += self->grad[i] * self->val[i];
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> log_op(const Tensor<S>& a) {
    std::vector<S> out(a.val());
    for (auto& v : out) {
        if (v <= S(0)) throw ContractError("log: non-positive input");
        v = std::log(v);
    }
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an](Node<S>* self) {
            return [an, self]() {
                an->ensure_grad();
                for (std::int64_t i = 0; i < self->size(); ++i)
                    an->grad[i] += self->grad[i] / an->val[i];
                an->touched = true;
            };
        });
}

inline constexpr double kInvSqrt2 = 0.7071067811865475244;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
    std::vector<S> out(a.val());
    for (auto& v : out) {
        double x = static_cast<double>(v);
        v = static_cast<S>(x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)));
    }
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an](Node<S>* self) {
            return [an, self]() {
                an->ensure_grad();
                for (std::int64_t i = 0; i < self->size(); ++i) {
                    double x = static_cast<double>(an->val[i]);
                    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    an->grad[i] += self->grad[i] * static_cast<S>(cdf + x * pdf);
                }
                an->touched = true;
            };
        });
}

// ---- reductions ----

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
    S acc = S(0);
    for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
    auto an = a.node();
    return detail::make_op<S>(
        {1}, {acc}, an->requires_grad, [an](Node<S>* self) {
            return [an, self]() {
                an->ensure_grad();
                S g = self->grad[0];
                for (auto& v : an->grad) v += g;
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
    if (a.size() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

// column means of [R x C] -> [1 x C]
template <typename S>
Tensor<S> mean_over_rows(const Tensor<S>& a) {
    if (a.ndim() != 2) throw ShapeError("mean_over_rows expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    if (r == 0) throw ShapeError("mean_over_rows: zero rows");
    std::vector<S> out(static_cast<std::size_t>(c), S(0));
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[j] += a.data()[i * c + j];
    S inv = S(1) / static_cast<S>(r);
    for (auto& v : out) v *= inv;
    auto an = a.node();
    return detail::make_op<S>(
        {1, c}, std::move(out), an->requires_grad, [an, r, c, inv = S(1) / static_cast<S>(r)](Node<S>* self) {
            return [an, r, c, inv, self]() {
                an->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        an->grad[i * c + j] += self->grad[j] * inv;
                an->touched = true;
            };
        });
}

// ---- linear algebra ----

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<S> out(static_cast<std::size_t>(m) * n);
    MatMap<S>(out.data(), m, n).noalias() =
        ConstMatMap<S>(a.data(), m, k) * ConstMatMap<S>(b.data(), k, n);
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>(
        {m, n}, std::move(out), an->requires_grad || bn->requires_grad,
        [an, bn, m, k, n](Node<S>* self) {
            return [an, bn, m, k, n, self]() {
                ConstMatMap<S> g(self->grad.data(), m, n);
                if (an->requires_grad) {
                    an->ensure_grad();
                    MatMap<S>(an->grad.data(), m, k).noalias() +=
                        g * ConstMatMap<S>(bn->val.data(), k, n).transpose();
                    an->touched = true;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    MatMap<S>(bn->grad.data(), k, n).noalias() +=
                        ConstMatMap<S>(an->val.data(), m, k).transpose() * g;
                    bn->touched = true;
                }
            };
        });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
    if (a.ndim() != 2) throw ShapeError("transpose expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    std::vector<S> out(static_cast<std::size_t>(r) * c);
    MatMap<S>(out.data(), c, r) = ConstMatMap<S>(a.data(), r, c).transpose();
    auto an = a.node();
    return detail::make_op<S>(
        {c, r}, std::move(out), an->requires_grad, [an, r, c](Node<S>* self) {
            return [an, r, c, self]() {
                an->ensure_grad();
                MatMap<S>(an->grad.data(), r, c).noalias() +=
                    ConstMatMap<S>(self->grad.data(), c, r).transpose();
                an->touched = true;
            };
        });
}

// a[R x C] + v broadcast over rows; v is [C] or [1 x C]
template <typename S>
Tensor<S> add_row_broadcast(const Tensor<S>& a, const Tensor<S>& v) {
    if (a.ndim() != 2) throw ShapeError("add_row_broadcast expects 2-d lhs");
    int r = a.dim(0), c = a.dim(1);
    if (v.size() != c) throw ShapeError("add_row_broadcast: width mismatch");
    std::vector<S> out(a.val());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[i * c + j] += v.data()[j];
    auto an = a.node(), vn = v.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad || vn->requires_grad,
        [an, vn, r, c](Node<S>* self) {
            return [an, vn, r, c, self]() {
                if (an->requires_grad) an->accumulate(self->grad.data(), self->size());
                if (vn->requires_grad) {
                    vn->ensure_grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j) vn->grad[j] += self->grad[i * c + j];
                    vn->touched = true;
                }
            };
        });
}

// ---- shape ops ----

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    if (numel(shape) != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    std::vector<S> out(a.val());
    auto an = a.node();
    return detail::make_op<S>(
        std::move(shape), std::move(out), an->requires_grad, [an](Node<S>* self) {
            return [an, self]() { an->accumulate(self->grad.data(), self->size()); };
        });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, int c0, int c1) {
    if (a.ndim() != 2) throw ShapeError("slice_cols expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad range");
    int w = c1 - c0;
    std::vector<S> out(static_cast<std::size_t>(r) * w);
    for (int i = 0; i < r; ++i)
        std::copy(a.data() + i * c + c0, a.data() + i * c + c1, out.begin() + i * w);
    auto an = a.node();
    return detail::make_op<S>(
        {r, w}, std::move(out), an->requires_grad, [an, r, c, c0, w](Node<S>* self) {
            return [an, r, c, c0, w, self]() {
                an->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < w; ++j)
                        an->grad[i * c + c0 + j] += self->grad[i * w + j];
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, int r0, int r1) {
    if (a.ndim() != 2) throw ShapeError("slice_rows expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    if (r0 < 0 || r1 > r || r0 >= r1) throw ShapeError("slice_rows: bad range");
    int h = r1 - r0;
    std::vector<S> out(a.data() + static_cast<std::size_t>(r0) * c,
                       a.data() + static_cast<std::size_t>(r1) * c);
    auto an = a.node();
    return detail::make_op<S>(
        {h, c}, std::move(out), an->requires_grad, [an, r0, c, h](Node<S>* self) {
            return [an, r0, c, h, self]() {
                an->ensure_grad();
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * c; ++i)
                    an->grad[static_cast<std::int64_t>(r0) * c + i] += self->grad[i];
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
        throw ShapeError("concat_cols: row mismatch");
    int r = a.dim(0), ca = a.dim(1), cb = b.dim(1), c = ca + cb;
    std::vector<S> out(static_cast<std::size_t>(r) * c);
    for (int i = 0; i < r; ++i) {
        std::copy(a.data() + i * ca, a.data() + (i + 1) * ca, out.begin() + i * c);
        std::copy(b.data() + i * cb, b.data() + (i + 1) * cb, out.begin() + i * c + ca);
    }
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>(
        {r, c}, std::move(out), an->requires_grad || bn->requires_grad,
        [an, bn, r, ca, cb, c](Node<S>* self) {
            return [an, bn, r, ca, cb, c, self]() {
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < ca; ++j)
                            an->grad[i * ca + j] += self->grad[i * c + j];
                    an->touched = true;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < cb; ++j)
                            bn->grad[i * cb + j] += self->grad[i * c + ca + j];
                    bn->touched = true;
                }
            };
        });
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty list");
    int c = parts[0].dim(1);
    int r = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(1) != c) throw ShapeError("concat_rows: width mismatch");
        r += p.dim(0);
        any_grad = any_grad || p.requires_grad();
    }
    std::vector<S> out;
    out.reserve(static_cast<std::size_t>(r) * c);
    for (const auto& p : parts) out.insert(out.end(), p.val().begin(), p.val().end());
    std::vector<std::shared_ptr<Node<S>>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.node());
    return detail::make_op<S>(
        {r, c}, std::move(out), any_grad, [nodes, c](Node<S>* self) {
            return [nodes, c, self]() {
                std::int64_t off = 0;
                for (const auto& n : nodes) {
                    std::int64_t len = n->size();
                    if (n->requires_grad) n->accumulate(self->grad.data() + off, len);
                    off += len;
                }
            };
        });
}

// ---- softmax / normalization ----

// Row-stabilized softmax over a 2-d tensor. axis 1: each row sums to one;
// axis 0 works on columns.
template <typename S>
Tensor<S> softmax(const Tensor<S>& a, int axis) {
    if (a.ndim() != 2) throw ShapeError("softmax expects 2-d");
    if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
    int r = a.dim(0), c = a.dim(1);
    std::vector<S> out(static_cast<std::size_t>(r) * c);
    auto run_row = [&](const S* in, S* y, int n, int stride) {
        S m = in[0];
        for (int i = 1; i < n; ++i) m = std::max(m, in[i * stride]);
        S z = S(0);
        for (int i = 0; i < n; ++i) {
            S e = std::exp(in[i * stride] - m);
            y[i * stride] = e;
            z += e;
        }
        for (int i = 0; i < n; ++i) y[i * stride] /= z;
    };
    if (axis == 1)
        for (int i = 0; i < r; ++i) run_row(a.data() + i * c, out.data() + i * c, c, 1);
    else
        for (int j = 0; j < c; ++j) run_row(a.data() + j, out.data() + j, r, c);
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an, r, c, axis](Node<S>* self) {
            return [an, r, c, axis, self]() {
                an->ensure_grad();
                auto back_row = [](const S* y, const S* g, S* gx, int n, int stride) {
                    S dot = S(0);
                    for (int i = 0; i < n; ++i) dot += y[i * stride] * g[i * stride];
                    for (int i = 0; i < n; ++i)
                        gx[i * stride] += y[i * stride] * (g[i * stride] - dot);
                };
                if (axis == 1)
                    for (int i = 0; i < r; ++i)
                        back_row(self->val.data() + i * c, self->grad.data() + i * c,
                                 an->grad.data() + i * c, c, 1);
                else
                    for (int j = 0; j < c; ++j)
                        back_row(self->val.data() + j, self->grad.data() + j,
                                 an->grad.data() + j, r, c);
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) { return softmax(a, 1); }

// Each row scaled to unit L2 norm; rows below eps are scaled by 1/eps
// (linear) instead of blowing up.
template <typename S>
Tensor<S> rows_unit(const Tensor<S>& a, S eps = S(1e-6)) {
    if (a.ndim() != 2) throw ShapeError("rows_unit expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    std::vector<S> out(a.val());
    std::vector<S> norms(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        S sq = S(0);
        for (int j = 0; j < c; ++j) sq += out[i * c + j] * out[i * c + j];
        S n = std::sqrt(sq);
        norms[i] = n;
        S inv = S(1) / std::max(n, eps);
        for (int j = 0; j < c; ++j) out[i * c + j] *= inv;
    }
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad,
        [an, r, c, eps, norms = std::move(norms)](Node<S>* self) {
            return [an, r, c, eps, norms, self]() {
                an->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    const S* y = self->val.data() + i * c;
                    const S* g = self->grad.data() + i * c;
                    S* gx = an->grad.data() + i * c;
                    if (norms[i] > eps) {
                        S dot = S(0);
                        for (int j = 0; j < c; ++j) dot += y[j] * g[j];
                        S inv = S(1) / norms[i];
                        for (int j = 0; j < c; ++j) gx[j] += (g[j] - y[j] * dot) * inv;
                    } else {
                        S inv = S(1) / eps;
                        for (int j = 0; j < c; ++j) gx[j] += g[j] * inv;
                    }
                }
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> layernorm_rows(const Tensor<S>& a, const Tensor<S>& gamma, const Tensor<S>& beta,
                         S eps = S(1e-5)) {
    if (a.ndim() != 2) throw ShapeError("layernorm_rows expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    if (gamma.size() != c || beta.size() != c)
        throw ShapeError("layernorm_rows: affine size mismatch");
    std::vector<S> out(static_cast<std::size_t>(r) * c);
    std::vector<S> inv_std(static_cast<std::size_t>(r));
    std::vector<S> xhat(static_cast<std::size_t>(r) * c);
    for (int i = 0; i < r; ++i) {
        const S* x = a.data() + i * c;
        S mu = S(0);
        for (int j = 0; j < c; ++j) mu += x[j];
        mu /= static_cast<S>(c);
        S var = S(0);
        for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<S>(c);
        S is = S(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < c; ++j) {
            S xh = (x[j] - mu) * is;
            xhat[i * c + j] = xh;
            out[i * c + j] = xh * gamma.data()[j] + beta.data()[j];
        }
    }
    auto an = a.node(), gn = gamma.node(), bn = beta.node();
    bool rg = an->requires_grad || gn->requires_grad || bn->requires_grad;
    return detail::make_op<S>(
        a.shape(), std::move(out), rg,
        [an, gn, bn, r, c, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<S>* self) {
            return [an, gn, bn, r, c, inv_std, xhat, self]() {
                if (gn->requires_grad) gn->ensure_grad();
                if (bn->requires_grad) bn->ensure_grad();
                if (an->requires_grad) an->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    const S* g = self->grad.data() + i * c;
                    const S* xh = xhat.data() + i * c;
                    if (gn->requires_grad)
                        for (int j = 0; j < c; ++j) gn->grad[j] += g[j] * xh[j];
                    if (bn->requires_grad)
                        for (int j = 0; j < c; ++j) bn->grad[j] += g[j];
                    if (an->requires_grad) {
                        S mean_u = S(0), mean_ux = S(0);
                        for (int j = 0; j < c; ++j) {
                            S u = g[j] * gn->val[j];
                            mean_u += u;
                            mean_ux += u * xh[j];
                        }
                        mean_u /= static_cast<S>(c);
                        mean_ux /= static_cast<S>(c);
                        S* gx = an->grad.data() + i * c;
                        for (int j = 0; j < c; ++j) {
                            S u = g[j] * gn->val[j];
                            gx[j] += (u - mean_u - xh[j] * mean_ux) * inv_std[i];
                        }
                    }
                }
                if (gn->requires_grad) gn->touched = true;
                if (bn->requires_grad) bn->touched = true;
                if (an->requires_grad) an->touched = true;
            };
        });
}

// ---- norms ----

// Per-row Euclidean norm of [R x C] -> [R]. Exact zero rows stay zero with a
// zero subgradient.
template <typename S>
Tensor<S> rows_l2norm(const Tensor<S>& a) {
    if (a.ndim() != 2) throw ShapeError("rows_l2norm expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    std::vector<S> out(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        S sq = S(0);
        for (int j = 0; j < c; ++j) sq += a.data()[i * c + j] * a.data()[i * c + j];
        out[i] = std::sqrt(sq);
    }
    auto an = a.node();
    return detail::make_op<S>(
        {r}, std::move(out), an->requires_grad, [an, r, c](Node<S>* self) {
            return [an, r, c, self]() {
                an->ensure_grad();
                const S guard = S(1e-12);
                for (int i = 0; i < r; ++i) {
                    S n = self->val[i];
                    if (n <= guard) continue;
                    S coef = self->grad[i] / n;
                    for (int j = 0; j < c; ++j)
                        an->grad[i * c + j] += coef * an->val[i * c + j];
                }
                an->touched = true;
            };
        });
}

// Whole-tensor Euclidean norm -> scalar, same subgradient convention.
template <typename S>
Tensor<S> l2norm(const Tensor<S>& a) {
    S sq = S(0);
    for (std::int64_t i = 0; i < a.size(); ++i) sq += a.data()[i] * a.data()[i];
    S n = std::sqrt(sq);
    auto an = a.node();
    return detail::make_op<S>(
        {1}, {n}, an->requires_grad, [an](Node<S>* self) {
            return [an, self]() {
                S n = self->val[0];
                if (n <= S(1e-12)) return;
                an->ensure_grad();
                S coef = self->grad[0] / n;
                for (std::size_t i = 0; i < an->val.size(); ++i)
                    an->grad[i] += coef * an->val[i];
                an->touched = true;
            };
        });
}

// ---- rotary tables ----

// Pairwise rotation of adjacent columns (2m, 2m+1) by per-entry angles.
// cos/sin tables are [R x C/2] plain data; pairs never straddle heads as long
// as the head width is even.
template <typename S>
Tensor<S> rope_apply(const Tensor<S>& a, const std::shared_ptr<const std::vector<S>>& cos_t,
                     const std::shared_ptr<const std::vector<S>>& sin_t) {
    if (a.ndim() != 2) throw ShapeError("rope_apply expects 2-d");
    int r = a.dim(0), c = a.dim(1);
    if (c % 2) throw ShapeError("rope_apply: odd width");
    int hp = c / 2;
    if (static_cast<std::int64_t>(cos_t->size()) != static_cast<std::int64_t>(r) * hp ||
        cos_t->size() != sin_t->size())
        throw ShapeError("rope_apply: table size mismatch");
    std::vector<S> out(a.val());
    for (int i = 0; i < r; ++i)
        for (int m = 0; m < hp; ++m) {
            S cs = (*cos_t)[i * hp + m], sn = (*sin_t)[i * hp + m];
            S x = out[i * c + 2 * m], y = out[i * c + 2 * m + 1];
            out[i * c + 2 * m] = x * cs - y * sn;
            out[i * c + 2 * m + 1] = x * sn + y * cs;
        }
    auto an = a.node();
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an, r, c, hp, cos_t, sin_t](Node<S>* self) {
            return [an, r, c, hp, cos_t, sin_t, self]() {
                an->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int m = 0; m < hp; ++m) {
                        S cs = (*cos_t)[i * hp + m], sn = (*sin_t)[i * hp + m];
                        S gx = self->grad[i * c + 2 * m], gy = self->grad[i * c + 2 * m + 1];
                        an->grad[i * c + 2 * m] += gx * cs + gy * sn;
                        an->grad[i * c + 2 * m + 1] += -gx * sn + gy * cs;
                    }
                an->touched = true;
            };
        });
}

// ---- spatial ops ----

// [K x p*p*c] tokens over a (gh x gw) grid -> dense {gh*p, gw*p, c} image.
template <typename S>
Tensor<S> pixel_unshuffle(const Tensor<S>& a, int gh, int gw, int p, int c) {
    if (a.ndim() != 2 || a.dim(0) != gh * gw || a.dim(1) != p * p * c)
        throw ShapeError("pixel_unshuffle: token grid mismatch");
    int h = gh * p, w = gw * p;
    std::vector<S> out(static_cast<std::size_t>(h) * w * c);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            const S* tok = a.data() + (gy * gw + gx) * (p * p * c);
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < c; ++ch)
                        out[((gy * p + py) * w + gx * p + px) * c + ch] =
                            tok[(py * p + px) * c + ch];
        }
    auto an = a.node();
    return detail::make_op<S>(
        {h, w, c}, std::move(out), an->requires_grad, [an, gh, gw, p, c, w](Node<S>* self) {
            return [an, gh, gw, p, c, w, self]() {
                an->ensure_grad();
                for (int gy = 0; gy < gh; ++gy)
                    for (int gx = 0; gx < gw; ++gx) {
                        S* tok = an->grad.data() + (gy * gw + gx) * (p * p * c);
                        for (int py = 0; py < p; ++py)
                            for (int px = 0; px < p; ++px)
                                for (int ch = 0; ch < c; ++ch)
                                    tok[(py * p + px) * c + ch] +=
                                        self->grad[((gy * p + py) * w + gx * p + px) * c + ch];
                    }
                an->touched = true;
            };
        });
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& a, int c0, int c1) {
    if (a.ndim() != 3) throw ShapeError("slice_channels expects {H,W,C}");
    int h = a.dim(0), w = a.dim(1), c = a.dim(2);
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_channels: bad range");
    int k = c1 - c0;
    std::vector<S> out(static_cast<std::size_t>(h) * w * k);
    for (int i = 0; i < h * w; ++i)
        std::copy(a.data() + i * c + c0, a.data() + i * c + c1, out.begin() + i * k);
    auto an = a.node();
    return detail::make_op<S>(
        {h, w, k}, std::move(out), an->requires_grad, [an, h, w, c, c0, k](Node<S>* self) {
            return [an, h, w, c, c0, k, self]() {
                an->ensure_grad();
                for (int i = 0; i < h * w; ++i)
                    for (int j = 0; j < k; ++j)
                        an->grad[i * c + c0 + j] += self->grad[i * k + j];
                an->touched = true;
            };
        });
}

// 3x3 same-padding convolution on {H,W,Cin}. Weights are a [9*Cin x Cout]
// matrix laid out (ky*3+kx)*Cin + ci; this keeps both passes as matmuls over
// an im2col buffer.
template <typename S>
Tensor<S> conv3x3(const Tensor<S>& a, const Tensor<S>& w, const Tensor<S>& b) {
    if (a.ndim() != 3) throw ShapeError("conv3x3 expects {H,W,C}");
    int h = a.dim(0), wd = a.dim(1), cin = a.dim(2);
    if (w.ndim() != 2 || w.dim(0) != 9 * cin) throw ShapeError("conv3x3: weight mismatch");
    int cout = w.dim(1);
    if (b.size() != cout) throw ShapeError("conv3x3: bias mismatch");
    std::int64_t hw = static_cast<std::int64_t>(h) * wd;
    auto col = std::make_shared<std::vector<S>>(hw * 9 * cin, S(0));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wd; ++x) {
            S* row = col->data() + (y * wd + x) * 9 * cin;
            for (int ky = 0; ky < 3; ++ky) {
                int sy = y + ky - 1;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    int sx = x + kx - 1;
                    if (sx < 0 || sx >= wd) continue;
                    std::copy(a.data() + (sy * wd + sx) * cin,
                              a.data() + (sy * wd + sx + 1) * cin,
                              row + (ky * 3 + kx) * cin);
                }
            }
        }
    std::vector<S> out(hw * cout);
    MatMap<S>(out.data(), hw, cout).noalias() =
        ConstMatMap<S>(col->data(), hw, 9 * cin) * ConstMatMap<S>(w.data(), 9 * cin, cout);
    for (std::int64_t i = 0; i < hw; ++i)
        for (int j = 0; j < cout; ++j) out[i * cout + j] += b.data()[j];
    auto an = a.node(), wn = w.node(), bn = b.node();
    bool rg = an->requires_grad || wn->requires_grad || bn->requires_grad;
    return detail::make_op<S>(
        {h, wd, cout}, std::move(out), rg,
        [an, wn, bn, h, wd, cin, cout, hw, col](Node<S>* self) {
            return [an, wn, bn, h, wd, cin, cout, hw, col, self]() {
                ConstMatMap<S> g(self->grad.data(), hw, cout);
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (std::int64_t i = 0; i < hw; ++i)
                        for (int j = 0; j < cout; ++j) bn->grad[j] += self->grad[i * cout + j];
                    bn->touched = true;
                }
                if (wn->requires_grad) {
                    wn->ensure_grad();
                    MatMap<S>(wn->grad.data(), 9 * cin, cout).noalias() +=
                        ConstMatMap<S>(col->data(), hw, 9 * cin).transpose() * g;
                    wn->touched = true;
                }
                if (an->requires_grad) {
                    an->ensure_grad();
                    Mat<S> dcol = g * ConstMatMap<S>(wn->val.data(), 9 * cin, cout).transpose();
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < wd; ++x) {
                            const S* row = dcol.data() + (y * wd + x) * 9 * cin;
                            for (int ky = 0; ky < 3; ++ky) {
                                int sy = y + ky - 1;
                                if (sy < 0 || sy >= h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    int sx = x + kx - 1;
                                    if (sx < 0 || sx >= wd) continue;
                                    S* dst = an->grad.data() + (sy * wd + sx) * cin;
                                    const S* src = row + (ky * 3 + kx) * cin;
                                    for (int ci = 0; ci < cin; ++ci) dst[ci] += src[ci];
                                }
                            }
                        }
                    an->touched = true;
                }
            };
        });
}

// Normalize a 4-vector to a unit quaternion with non-negative first (w)
// component. Degenerate inputs fall back to identity with no gradient.
template <typename S>
Tensor<S> quat_normalize(const Tensor<S>& a) {
    if (a.size() != 4) throw ShapeError("quat_normalize expects 4 values");
    S sq = S(0);
    for (int i = 0; i < 4; ++i) sq += a.data()[i] * a.data()[i];
    S n = std::sqrt(sq);
    auto an = a.node();
    if (n < S(1e-8)) {
        std::vector<S> idq = {S(1), S(0), S(0), S(0)};
        return detail::make_op<S>(a.shape(), std::move(idq), an->requires_grad,
                                  [](Node<S>*) { return []() {}; });
    }
    S sign = a.data()[0] < S(0) ? S(-1) : S(1);
    std::vector<S> out(4);
    for (int i = 0; i < 4; ++i) out[i] = sign * a.data()[i] / n;
    return detail::make_op<S>(
        a.shape(), std::move(out), an->requires_grad, [an, n, sign](Node<S>* self) {
            return [an, n, sign, self]() {
                an->ensure_grad();
                // y = sign * a / n;  dy/da = sign*(I - aa^T/n^2)/n
                S dot = S(0);
                for (int i = 0; i < 4; ++i) dot += self->grad[i] * an->val[i];
                dot /= n * n;
                for (int i = 0; i < 4; ++i)
                    an->grad[i] += sign * (self->grad[i] - an->val[i] * dot) / n;
                an->touched = true;
            };
        });
}

}  // namespace streampoint::ad
