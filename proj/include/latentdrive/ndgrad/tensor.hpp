#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "latentdrive/random.hpp"

namespace latentdrive::ndgrad {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor shape has non-positive dim " + shape_str(s));
        n *= static_cast<size_t>(d);
    }
    return n;
}

namespace detail {

// C(MxN) += A(MxK) * B(KxN)
template <typename T>
void mm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* __restrict crow = c + static_cast<size_t>(i) * n;
        const T* __restrict arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            T av = arow[p];
            const T* __restrict brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(MxN) += A(MxK) * B(NxK)^T
template <typename T>
void mm_abt(const T* __restrict a, const T* __restrict b, T* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* __restrict arow = a + static_cast<size_t>(i) * k;
        T* __restrict crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* __restrict brow = b + static_cast<size_t>(j) * k;
            T acc = 0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C(KxN) += A(MxK)^T * B(MxN)
template <typename T>
void mm_atb(const T* __restrict a, const T* __restrict b, T* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* __restrict arow = a + static_cast<size_t>(i) * k;
        const T* __restrict brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = arow[p];
            T* __restrict crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// 3x3 kernel, stride 2, pad 1 everywhere in this project.
inline constexpr int kConvKernel = 3;
inline constexpr int kConvStride = 2;
inline constexpr int kConvPad = 1;

inline int conv_out_dim(int in) { return (in + 2 * kConvPad - kConvKernel) / kConvStride + 1; }

// x [C,H,W] -> cols [C*9, OH*OW]
template <typename T>
void im2col(const T* x, int c_in, int h, int w, T* cols) {
    const int oh = conv_out_dim(h), ow = conv_out_dim(w);
    const size_t plane = static_cast<size_t>(oh) * ow;
    for (int c = 0; c < c_in; ++c) {
        const T* xc = x + static_cast<size_t>(c) * h * w;
        for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
                T* row = cols + (static_cast<size_t>(c) * 9 + ki * 3 + kj) * plane;
                for (int i = 0; i < oh; ++i) {
                    int ih = i * 2 + ki - 1;
                    T* dst = row + static_cast<size_t>(i) * ow;
                    if (ih < 0 || ih >= h) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<size_t>(ih) * w;
                    for (int j = 0; j < ow; ++j) {
                        int iw = j * 2 + kj - 1;
                        dst[j] = (iw >= 0 && iw < w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

// cols [C*9, OH*OW] scatter-added back into x [C,H,W]
template <typename T>
void col2im(const T* cols, int c_in, int h, int w, T* x) {
    const int oh = conv_out_dim(h), ow = conv_out_dim(w);
    const size_t plane = static_cast<size_t>(oh) * ow;
    for (int c = 0; c < c_in; ++c) {
        T* xc = x + static_cast<size_t>(c) * h * w;
        for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
                const T* row = cols + (static_cast<size_t>(c) * 9 + ki * 3 + kj) * plane;
                for (int i = 0; i < oh; ++i) {
                    int ih = i * 2 + ki - 1;
                    if (ih < 0 || ih >= h) continue;
                    const T* src = row + static_cast<size_t>(i) * ow;
                    T* dst = xc + static_cast<size_t>(ih) * w;
                    for (int j = 0; j < ow; ++j) {
                        int iw = j * 2 + kj - 1;
                        if (iw >= 0 && iw < w) dst[iw] += src[j];
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily by backward
    bool requires_grad = false;
    bool leaf = true;
    bool backward_done = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;

    size_t numel() const { return value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

namespace detail {
// Scoped off-switch for graph recording (target computation, evaluation).
inline thread_local bool grad_recording = true;
}  // namespace detail

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_recording) { detail::grad_recording = false; }
    ~NoGradGuard() { detail::grad_recording = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_recording_enabled() { return detail::grad_recording; }

/// Handle to a node in the computation graph. Copies are shallow; the graph
/// above a tensor stays alive for as long as the tensor does.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }

    static Tensor filled(Shape shape, T v) {
        auto n = std::make_shared<Node<T>>();
        n->value.assign(shape_numel(shape), v);
        n->shape = std::move(shape);
        return Tensor(std::move(n));
    }

    static Tensor from_data(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != data.size())
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    /// Trainable leaf.
    static Tensor param(Shape shape, std::vector<T> data) {
        Tensor t = from_data(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        return t;
    }

    static Tensor uniform(Shape shape, T lo, T hi, RandomStream& rng, bool trainable = true) {
        std::vector<T> d(shape_numel(shape));
        for (auto& v : d) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        return trainable ? param(std::move(shape), std::move(d)) : from_data(std::move(shape), std::move(d));
    }

    static Tensor normal(Shape shape, T mu, T sigma, RandomStream& rng, bool trainable = true) {
        std::vector<T> d(shape_numel(shape));
        for (auto& v : d) v = static_cast<T>(rng.normal(static_cast<double>(mu), static_cast<double>(sigma)));
        return trainable ? param(std::move(shape), std::move(d)) : from_data(std::move(shape), std::move(d));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
    size_t ndim() const { return node_->shape.size(); }
    size_t numel() const { return node_->numel(); }

    std::span<const T> data() const { return {node_->value.data(), node_->value.size()}; }

    /// In-place mutation is only legal on leaves; interior nodes belong to a
    /// recorded graph.
    std::span<T> mutable_data() {
        if (!node_->leaf) throw std::runtime_error("mutable_data on non-leaf tensor");
        return {node_->value.data(), node_->value.size()};
    }

    T item() const {
        if (numel() != 1)
            throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<const T> grad() const {
        if (!has_grad()) throw std::runtime_error("tensor has no gradient; run backward first");
        return {node_->grad.data(), node_->grad.size()};
    }
    std::span<T> mutable_grad() {
        node_->ensure_grad();
        return {node_->grad.data(), node_->grad.size()};
    }
    void zero_grad() { node_->grad.clear(); }

    /// Deep copy as an independent leaf (grad not copied).
    Tensor clone() const {
        Tensor t = from_data(node_->shape, node_->value);
        t.node_->requires_grad = node_->requires_grad;
        return t;
    }

    /// Same values, detached from the graph, never requires grad.
    Tensor detach() const { return from_data(node_->shape, node_->value); }

    /// Reverse-mode sweep from a scalar. Populates grad on every reachable
    /// tensor with requires_grad. Gradients accumulate across calls; a second
    /// sweep from the same result node is rejected.
    void backward() const {
        Node<T>* root = node_.get();
        if (root->numel() != 1)
            throw std::invalid_argument("backward() requires a scalar loss, got shape " + shape_str(root->shape));
        if (root->backward_done)
            throw std::runtime_error("backward() called twice on the same loss without re-running forward");
        if (!root->requires_grad && root->parents.empty())
            throw std::runtime_error("backward() on a tensor with no recorded graph");
        root->backward_done = true;

        // reverse post-order over the parent DAG
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> visited;
        std::vector<std::pair<Node<T>*, size_t>> stack;
        stack.emplace_back(root, 0);
        visited.insert(root);
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<T>* p = n->parents[idx++].get();
                if (!visited.count(p) && !p->parents.empty()) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        root->ensure_grad();
        root->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backprop) n->backprop(*n);
        }
    }

    std::shared_ptr<Node<T>> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}
    std::shared_ptr<Node<T>> node_;

    template <typename U>
    friend Tensor<U> make_op(Shape shape, std::vector<U> value,
                             std::vector<Tensor<U>> inputs,
                             std::function<void(Node<U>&)> backprop);
};

/// Build a graph node from an op result. Links to inputs are recorded only
/// when gradients can flow, so inference graphs carry no history.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                  std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    if (shape_numel(shape) != value.size()) throw std::logic_error("make_op shape/value mismatch");
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->leaf = false;
    bool track = detail::grad_recording;
    bool any = false;
    if (track)
        for (const auto& t : inputs) any = any || t.requires_grad();
    if (track && any) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& t : inputs) n->parents.push_back(t.node());
        n->backprop = std::move(backprop);
    }
    return Tensor<T>(std::move(n));
}

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename T>
void accumulate(Node<T>& parent, const std::vector<T>& contribution) {
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    for (size_t i = 0; i < contribution.size(); ++i) parent.grad[i] += contribution[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    auto da = a.data(), db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        for (int p = 0; p < 2; ++p) {
            Node<T>& par = *self.parents[p];
            if (!par.requires_grad) continue;
            par.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    auto da = a.data(), db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
    return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    auto da = a.data(), db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<T> out(a.numel());
    auto da = a.data(), db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] / db[i];
    return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
        }
    });
}

/// y = scale * x + shift, elementwise.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
    std::vector<T> out(x.numel());
    auto dx = x.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = scale * dx[i] + shift;
    return make_op<T>(x.shape(), std::move(out), {x}, [scale](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += scale * self.grad[i];
    });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return affine(a, s, T(0)); }
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& a) { return affine(a, s, T(0)); }
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, T s) { return affine(a, T(1), s); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) { return affine(a, T(-1), T(0)); }

namespace detail {

template <typename T, typename FwdFn, typename DerivFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn f, DerivFn dfdx_from /* (xval, yval) -> deriv */) {
    std::vector<T> out(x.numel());
    auto dx = x.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(dx[i]);
    return make_op<T>(x.shape(), std::move(out), {x}, [dfdx_from](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p.grad[i] += self.grad[i] * dfdx_from(p.value[i], self.value[i]);
    });
}

}  // namespace detail

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::sqrt(v); },
                            [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::tanh(v); },
                            [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                            [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return v > T(0) ? v : T(0); },
                            [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    return detail::unary_op(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                            [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

/// Gradient passes inside [lo, hi], zero outside (saturated).
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    return detail::unary_op(x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
                            [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// reductions and shape ops

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.data()) s += v;
    return make_op<T>({1}, {s}, {x}, [](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        T g = self.grad[0];
        for (auto& gv : p.grad) gv += g;
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.data()) s += v;
    T inv = T(1) / static_cast<T>(x.numel());
    return make_op<T>({1}, {s * inv}, {x}, [inv](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        T g = self.grad[0] * inv;
        for (auto& gv : p.grad) gv += g;
    });
}

/// [B,N] -> [B], sum over the second axis.
template <typename T>
Tensor<T> sum_cols(const Tensor<T>& x) {
    if (x.ndim() != 2) throw std::invalid_argument("sum_cols expects 2-d input, got " + shape_str(x.shape()));
    int b = x.dim(0), n = x.dim(1);
    std::vector<T> out(static_cast<size_t>(b), T(0));
    auto dx = x.data();
    for (int i = 0; i < b; ++i) {
        T s = 0;
        for (int j = 0; j < n; ++j) s += dx[static_cast<size_t>(i) * n + j];
        out[static_cast<size_t>(i)] = s;
    }
    return make_op<T>({b}, std::move(out), {x}, [n](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        int b2 = self.shape[0];
        for (int i = 0; i < b2; ++i) {
            T g = self.grad[static_cast<size_t>(i)];
            T* gp = p.grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) gp[j] += g;
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_op<T>(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

/// [B,n1] ++ [B,n2] -> [B, n1+n2]
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
        throw std::invalid_argument("concat_cols: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    int rows = a.dim(0), n1 = a.dim(1), n2 = b.dim(1);
    std::vector<T> out(static_cast<size_t>(rows) * (n1 + n2));
    auto da = a.data(), db = b.data();
    for (int i = 0; i < rows; ++i) {
        std::copy_n(da.data() + static_cast<size_t>(i) * n1, n1, out.data() + static_cast<size_t>(i) * (n1 + n2));
        std::copy_n(db.data() + static_cast<size_t>(i) * n2, n2,
                    out.data() + static_cast<size_t>(i) * (n1 + n2) + n1);
    }
    return make_op<T>({rows, n1 + n2}, std::move(out), {a, b}, [n1, n2](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        int rows2 = self.shape[0];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < rows2; ++i) {
            const T* g = self.grad.data() + static_cast<size_t>(i) * (n1 + n2);
            if (pa.requires_grad)
                for (int j = 0; j < n1; ++j) pa.grad[static_cast<size_t>(i) * n1 + j] += g[j];
            if (pb.requires_grad)
                for (int j = 0; j < n2; ++j) pb.grad[static_cast<size_t>(i) * n2 + j] += g[n1 + j];
        }
    });
}

/// q [B,A], idx [B] -> [B] picking q[i, idx[i]].
template <typename T>
Tensor<T> gather_cols(const Tensor<T>& q, std::vector<int> idx) {
    if (q.ndim() != 2) throw std::invalid_argument("gather_cols expects 2-d input, got " + shape_str(q.shape()));
    int b = q.dim(0), a = q.dim(1);
    if (static_cast<int>(idx.size()) != b)
        throw std::invalid_argument("gather_cols: index count " + std::to_string(idx.size()) +
                                    " does not match batch " + std::to_string(b));
    std::vector<T> out(static_cast<size_t>(b));
    auto dq = q.data();
    for (int i = 0; i < b; ++i) {
        if (idx[static_cast<size_t>(i)] < 0 || idx[static_cast<size_t>(i)] >= a)
            throw std::invalid_argument("gather_cols: index out of range");
        out[static_cast<size_t>(i)] = dq[static_cast<size_t>(i) * a + idx[static_cast<size_t>(i)]];
    }
    return make_op<T>({b}, std::move(out), {q}, [idx = std::move(idx), a](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i)
            p.grad[i * a + static_cast<size_t>(idx[i])] += self.grad[i];
    });
}

/// Elementwise min; gradient follows the smaller input (ties go to a).
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "minimum");
    std::vector<T> out(a.numel());
    auto da = a.data(), db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(da[i], db[i]);
    return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            bool take_a = pa.value[i] <= pb.value[i];
            if (take_a && pa.requires_grad) pa.grad[i] += self.grad[i];
            if (!take_a && pb.requires_grad) pb.grad[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra / layers

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(m) * n, T(0));
    detail::mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_op<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            detail::mm_abt(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            detail::mm_atb(pa.value.data(), self.grad.data(), pb.grad.data(), m, k, n);
        }
    });
}

/// x [B,in] * w [in,out] + b [out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
        throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " does not match weight " +
                                    shape_str(w.shape()));
    if (b.ndim() != 1 || b.dim(0) != w.dim(1))
        throw std::invalid_argument("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                                    shape_str(w.shape()));
    int batch = x.dim(0), in = x.dim(1), out_n = w.dim(1);
    std::vector<T> out(static_cast<size_t>(batch) * out_n);
    auto bias = b.data();
    for (int i = 0; i < batch; ++i)
        std::copy_n(bias.data(), out_n, out.data() + static_cast<size_t>(i) * out_n);
    detail::mm_acc(x.data().data(), w.data().data(), out.data(), batch, in, out_n);
    return make_op<T>({batch, out_n}, std::move(out), {x, w, b}, [batch, in, out_n](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        if (px.requires_grad) {
            px.ensure_grad();
            detail::mm_abt(self.grad.data(), pw.value.data(), px.grad.data(), batch, out_n, in);
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            detail::mm_atb(px.value.data(), self.grad.data(), pw.grad.data(), batch, in, out_n);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int i = 0; i < batch; ++i)
                for (int j = 0; j < out_n; ++j)
                    pb.grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i) * out_n + j];
        }
    });
}

/// 3x3 stride-2 same-padded convolution. x [B,C,H,W], k [OC,C,3,3], b [OC].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
    if (x.ndim() != 4 || k.ndim() != 4 || k.dim(2) != 3 || k.dim(3) != 3 || x.dim(1) != k.dim(1))
        throw std::invalid_argument("conv2d: input " + shape_str(x.shape()) + " does not match kernel " +
                                    shape_str(k.shape()));
    if (b.ndim() != 1 || b.dim(0) != k.dim(0))
        throw std::invalid_argument("conv2d: bias " + shape_str(b.shape()) + " does not match kernel " +
                                    shape_str(k.shape()));
    const int batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oc = k.dim(0);
    const int oh = detail::conv_out_dim(h), ow = detail::conv_out_dim(w);
    const size_t plane = static_cast<size_t>(oh) * ow;
    const size_t in_plane = static_cast<size_t>(c_in) * h * w;
    std::vector<T> out(static_cast<size_t>(batch) * oc * plane);
    std::vector<T> cols(static_cast<size_t>(c_in) * 9 * plane);
    auto bias = b.data();
    for (int bi = 0; bi < batch; ++bi) {
        detail::im2col(x.data().data() + bi * in_plane, c_in, h, w, cols.data());
        T* ob = out.data() + static_cast<size_t>(bi) * oc * plane;
        for (int o = 0; o < oc; ++o) std::fill_n(ob + static_cast<size_t>(o) * plane, plane, bias[o]);
        detail::mm_acc(k.data().data(), cols.data(), ob, oc, c_in * 9, static_cast<int>(plane));
    }
    return make_op<T>({batch, oc, oh, ow}, std::move(out), {x, k, b},
                      [batch, c_in, h, w, oc, oh, ow](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pk = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        const size_t plane = static_cast<size_t>(oh) * ow;
        const size_t in_plane = static_cast<size_t>(c_in) * h * w;
        if (px.requires_grad) px.ensure_grad();
        if (pk.requires_grad) pk.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        std::vector<T> cols(static_cast<size_t>(c_in) * 9 * plane);
        std::vector<T> gcols(cols.size());
        for (int bi = 0; bi < batch; ++bi) {
            const T* gb = self.grad.data() + static_cast<size_t>(bi) * oc * plane;
            if (pk.requires_grad || px.requires_grad)
                detail::im2col(px.value.data() + bi * in_plane, c_in, h, w, cols.data());
            if (pk.requires_grad)
                detail::mm_abt(gb, cols.data(), pk.grad.data(), oc, static_cast<int>(plane), c_in * 9);
            if (px.requires_grad) {
                std::fill(gcols.begin(), gcols.end(), T(0));
                detail::mm_atb(pk.value.data(), gb, gcols.data(), oc, c_in * 9, static_cast<int>(plane));
                detail::col2im(gcols.data(), c_in, h, w, px.grad.data() + bi * in_plane);
            }
            if (pb.requires_grad)
                for (int o = 0; o < oc; ++o) {
                    T s = 0;
                    const T* row = gb + static_cast<size_t>(o) * plane;
                    for (size_t p = 0; p < plane; ++p) s += row[p];
                    pb.grad[static_cast<size_t>(o)] += s;
                }
        }
    });
}

/// Transposed 3x3 stride-2 convolution, doubles spatial dims (the mirror of
/// conv2d above). x [B,C,h,w], k [C,OC,3,3], b [OC] -> [B,OC,2h,2w].
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
    if (x.ndim() != 4 || k.ndim() != 4 || k.dim(2) != 3 || k.dim(3) != 3 || x.dim(1) != k.dim(0))
        throw std::invalid_argument("conv2d_transpose: input " + shape_str(x.shape()) +
                                    " does not match kernel " + shape_str(k.shape()));
    const int batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oc = k.dim(1);
    if (b.ndim() != 1 || b.dim(0) != oc)
        throw std::invalid_argument("conv2d_transpose: bias " + shape_str(b.shape()) +
                                    " does not match kernel " + shape_str(k.shape()));
    const int oh = 2 * h, ow = 2 * w;
    const size_t small = static_cast<size_t>(h) * w;
    const size_t big_plane = static_cast<size_t>(oh) * ow;
    std::vector<T> out(static_cast<size_t>(batch) * oc * big_plane);
    std::vector<T> gcols(static_cast<size_t>(oc) * 9 * small);
    auto bias = b.data();
    for (int bi = 0; bi < batch; ++bi) {
        T* ob = out.data() + static_cast<size_t>(bi) * oc * big_plane;
        for (int o = 0; o < oc; ++o) std::fill_n(ob + static_cast<size_t>(o) * big_plane, big_plane, bias[o]);
        std::fill(gcols.begin(), gcols.end(), T(0));
        detail::mm_atb(k.data().data(), x.data().data() + static_cast<size_t>(bi) * c_in * small,
                       gcols.data(), c_in, oc * 9, static_cast<int>(small));
        detail::col2im(gcols.data(), oc, oh, ow, ob);
    }
    return make_op<T>({batch, oc, oh, ow}, std::move(out), {x, k, b},
                      [batch, c_in, h, w, oc, oh, ow](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pk = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        const size_t small = static_cast<size_t>(h) * w;
        const size_t big_plane = static_cast<size_t>(oh) * ow;
        if (px.requires_grad) px.ensure_grad();
        if (pk.requires_grad) pk.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        std::vector<T> cols(static_cast<size_t>(oc) * 9 * small);
        for (int bi = 0; bi < batch; ++bi) {
            const T* gb = self.grad.data() + static_cast<size_t>(bi) * oc * big_plane;
            detail::im2col(gb, oc, oh, ow, cols.data());
            if (px.requires_grad)
                detail::mm_acc(pk.value.data(), cols.data(),
                               px.grad.data() + static_cast<size_t>(bi) * c_in * small, c_in, oc * 9,
                               static_cast<int>(small));
            if (pk.requires_grad)
                detail::mm_abt(px.value.data() + static_cast<size_t>(bi) * c_in * small, cols.data(),
                               pk.grad.data(), c_in, static_cast<int>(small), oc * 9);
            if (pb.requires_grad)
                for (int o = 0; o < oc; ++o) {
                    T s = 0;
                    const T* row = gb + static_cast<size_t>(o) * big_plane;
                    for (size_t p = 0; p < big_plane; ++p) s += row[p];
                    pb.grad[static_cast<size_t>(o)] += s;
                }
        }
    });
}

/// Feature-wise batch normalization over [B,F]. Training mode normalizes by
/// batch statistics and folds them into the running estimates; inference mode
/// is the affine map through the running estimates.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean_t, Tensor<T>& running_var_t, bool train,
                     T momentum = T(0.99), T eps = T(1e-5)) {
    if (x.ndim() != 2)
        throw std::invalid_argument("batch_norm expects 2-d input, got " + shape_str(x.shape()));
    const int b = x.dim(0), f = x.dim(1);
    if (gamma.ndim() != 1 || gamma.dim(0) != f || beta.ndim() != 1 || beta.dim(0) != f)
        throw std::invalid_argument("batch_norm: scale/shift shape " + shape_str(gamma.shape()) +
                                    " does not match features " + std::to_string(f));
    if (running_mean_t.numel() != static_cast<size_t>(f) || running_var_t.numel() != static_cast<size_t>(f))
        throw std::invalid_argument("batch_norm: running stats do not match feature count");
    auto running_mean = running_mean_t.mutable_data();
    auto running_var = running_var_t.mutable_data();

    auto dx = x.data();
    auto dg = gamma.data();
    auto db = beta.data();
    std::vector<T> out(static_cast<size_t>(b) * f);

    if (!train) {
        std::vector<T> scale(static_cast<size_t>(f)), xhat(static_cast<size_t>(b) * f);
        for (int j = 0; j < f; ++j)
            scale[static_cast<size_t>(j)] = dg[j] / std::sqrt(running_var[static_cast<size_t>(j)] + eps);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < f; ++j) {
                size_t ix = static_cast<size_t>(i) * f + j;
                xhat[ix] = (dx[ix] - running_mean[static_cast<size_t>(j)]) /
                           std::sqrt(running_var[static_cast<size_t>(j)] + eps);
                out[ix] = dg[j] * xhat[ix] + db[j];
            }
        return make_op<T>({b, f}, std::move(out), {x, gamma, beta},
                          [b, f, scale = std::move(scale), xhat = std::move(xhat)](Node<T>& self) {
            Node<T>& px = *self.parents[0];
            Node<T>& pg = *self.parents[1];
            Node<T>& pbN = *self.parents[2];
            if (px.requires_grad) {
                px.ensure_grad();
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < f; ++j)
                        px.grad[static_cast<size_t>(i) * f + j] +=
                            self.grad[static_cast<size_t>(i) * f + j] * scale[static_cast<size_t>(j)];
            }
            if (pg.requires_grad) {
                pg.ensure_grad();
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < f; ++j) {
                        size_t ix = static_cast<size_t>(i) * f + j;
                        pg.grad[static_cast<size_t>(j)] += self.grad[ix] * xhat[ix];
                    }
            }
            if (pbN.requires_grad) {
                pbN.ensure_grad();
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < f; ++j)
                        pbN.grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i) * f + j];
            }
        });
    }

    std::vector<T> mu(static_cast<size_t>(f), T(0)), var(static_cast<size_t>(f), T(0));
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < f; ++j) mu[static_cast<size_t>(j)] += dx[static_cast<size_t>(i) * f + j];
    for (auto& m : mu) m /= static_cast<T>(b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < f; ++j) {
            T d = dx[static_cast<size_t>(i) * f + j] - mu[static_cast<size_t>(j)];
            var[static_cast<size_t>(j)] += d * d;
        }
    for (auto& v : var) v /= static_cast<T>(b);

    std::vector<T> istd(static_cast<size_t>(f));
    for (int j = 0; j < f; ++j) istd[static_cast<size_t>(j)] = T(1) / std::sqrt(var[static_cast<size_t>(j)] + eps);

    std::vector<T> xhat(static_cast<size_t>(b) * f);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < f; ++j) {
            size_t ix = static_cast<size_t>(i) * f + j;
            xhat[ix] = (dx[ix] - mu[static_cast<size_t>(j)]) * istd[static_cast<size_t>(j)];
            out[ix] = dg[j] * xhat[ix] + db[j];
        }

    for (int j = 0; j < f; ++j) {
        running_mean[static_cast<size_t>(j)] =
            momentum * running_mean[static_cast<size_t>(j)] + (T(1) - momentum) * mu[static_cast<size_t>(j)];
        running_var[static_cast<size_t>(j)] =
            momentum * running_var[static_cast<size_t>(j)] + (T(1) - momentum) * var[static_cast<size_t>(j)];
    }

    return make_op<T>({b, f}, std::move(out), {x, gamma, beta},
                      [b, f, xhat = std::move(xhat), istd = std::move(istd)](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pg = *self.parents[1];
        Node<T>& pbN = *self.parents[2];
        std::vector<T> sum_g(static_cast<size_t>(f), T(0)), sum_gx(static_cast<size_t>(f), T(0));
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < f; ++j) {
                size_t ix = static_cast<size_t>(i) * f + j;
                sum_g[static_cast<size_t>(j)] += self.grad[ix];
                sum_gx[static_cast<size_t>(j)] += self.grad[ix] * xhat[ix];
            }
        if (pg.requires_grad) {
            pg.ensure_grad();
            for (int j = 0; j < f; ++j) pg.grad[static_cast<size_t>(j)] += sum_gx[static_cast<size_t>(j)];
        }
        if (pbN.requires_grad) {
            pbN.ensure_grad();
            for (int j = 0; j < f; ++j) pbN.grad[static_cast<size_t>(j)] += sum_g[static_cast<size_t>(j)];
        }
        if (px.requires_grad) {
            px.ensure_grad();
            T invb = T(1) / static_cast<T>(b);
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < f; ++j) {
                    size_t ix = static_cast<size_t>(i) * f + j;
                    T gj = pg.value[static_cast<size_t>(j)] * istd[static_cast<size_t>(j)];
                    px.grad[ix] += gj * (self.grad[ix] - invb * sum_g[static_cast<size_t>(j)] -
                                         xhat[ix] * invb * sum_gx[static_cast<size_t>(j)]);
                }
        }
    });
}

// ---------------------------------------------------------------------------
// diagnostics

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
void assert_finite(const Tensor<T>& t, const std::string& context) {
    if (!all_finite(t))
        throw std::runtime_error("non-finite values in " + context);
}

}  // namespace latentdrive::ndgrad
