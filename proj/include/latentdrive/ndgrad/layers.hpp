#pragma once

#include <string>
#include <utility>
#include <vector>

#include "latentdrive/ndgrad/tensor.hpp"

namespace latentdrive::ndgrad {

enum class Act { kNone, kRelu, kLeakyRelu, kTanh, kSigmoid };

inline constexpr double kLeakySlope = 0.01;

template <typename T>
Tensor<T> apply_act(const Tensor<T>& x, Act act) {
    switch (act) {
        case Act::kNone: return x;
        case Act::kRelu: return relu(x);
        case Act::kLeakyRelu: return leaky_relu(x, static_cast<T>(kLeakySlope));
        case Act::kTanh: return tanh(x);
        case Act::kSigmoid: return sigmoid(x);
    }
    throw std::logic_error("unknown activation");
}

/// One fully connected stage of an Mlp.
struct LayerSpec {
    int in = 0;
    int out = 0;
    Act act = Act::kNone;
    bool with_batch_norm = false;
};

namespace detail {
template <typename T>
T fan_in_bound(int fan_in) {
    return static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
}
}  // namespace detail

template <typename T>
struct Dense {
    Tensor<T> w, b;

    static Dense init(int in, int out, RandomStream& rng) {
        T bound = detail::fan_in_bound<T>(in);
        return {Tensor<T>::uniform({in, out}, -bound, bound, rng),
                Tensor<T>::uniform({out}, -bound, bound, rng)};
    }

    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct Conv {
    Tensor<T> k, b;  // k [OC,C,3,3]

    static Conv init(int c_in, int c_out, RandomStream& rng) {
        T bound = detail::fan_in_bound<T>(c_in * 9);
        return {Tensor<T>::uniform({c_out, c_in, 3, 3}, -bound, bound, rng),
                Tensor<T>::uniform({c_out}, -bound, bound, rng)};
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, k, b); }
};

template <typename T>
struct ConvTranspose {
    Tensor<T> k, b;  // k [C,OC,3,3]

    static ConvTranspose init(int c_in, int c_out, RandomStream& rng) {
        T bound = detail::fan_in_bound<T>(c_in * 9);
        return {Tensor<T>::uniform({c_in, c_out, 3, 3}, -bound, bound, rng),
                Tensor<T>::uniform({c_out}, -bound, bound, rng)};
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d_transpose(x, k, b); }
};

template <typename T>
struct BatchNorm1d {
    Tensor<T> gamma, beta, running_mean, running_var;

    static BatchNorm1d init(int features) {
        BatchNorm1d bn;
        bn.gamma = Tensor<T>::param({features}, std::vector<T>(static_cast<size_t>(features), T(1)));
        bn.beta = Tensor<T>::param({features}, std::vector<T>(static_cast<size_t>(features), T(0)));
        bn.running_mean = Tensor<T>::filled({features}, T(0));
        bn.running_var = Tensor<T>::filled({features}, T(1));
        return bn;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        return batch_norm(x, gamma, beta, running_mean, running_var, train);
    }
};

/// Every tensor a network owns, with a stable name. Trainable parameters have
/// requires_grad set; running statistics ride along for checkpoints and
/// target-network updates.
template <typename T>
using NamedState = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
std::vector<Tensor<T>> trainable_of(const NamedState<T>& state) {
    std::vector<Tensor<T>> out;
    for (const auto& [name, t] : state)
        if (t.requires_grad()) out.push_back(t);
    return out;
}

/// dst <- (1 - tau) * dst + tau * src, entry by entry. tau = 1 is a hard copy.
template <typename T>
void soft_update(NamedState<T>& dst, const NamedState<T>& src, T tau) {
    if (dst.size() != src.size())
        throw std::invalid_argument("soft_update: state size mismatch " + std::to_string(dst.size()) +
                                    " vs " + std::to_string(src.size()));
    for (size_t i = 0; i < dst.size(); ++i) {
        auto& [dn, dt] = dst[i];
        const auto& [sn, st] = src[i];
        if (dn != sn || dt.shape() != st.shape())
            throw std::invalid_argument("soft_update: entry mismatch at '" + dn + "' vs '" + sn + "'");
        auto d = dt.mutable_data();
        auto s = st.data();
        for (size_t j = 0; j < d.size(); ++j) d[j] = (T(1) - tau) * d[j] + tau * s[j];
    }
}

template <typename T>
void hard_copy(NamedState<T>& dst, const NamedState<T>& src) {
    soft_update(dst, src, T(1));
}

/// Dense stack with optional per-layer batch norm (linear -> norm -> act).
template <typename T>
class Mlp {
public:
    Mlp() = default;

    Mlp(const std::vector<LayerSpec>& specs, RandomStream& rng) {
        layers_.reserve(specs.size());
        for (const auto& s : specs) {
            Stage st;
            st.dense = Dense<T>::init(s.in, s.out, rng);
            st.act = s.act;
            if (s.with_batch_norm) {
                st.bn = BatchNorm1d<T>::init(s.out);
                st.has_bn = true;
            }
            layers_.push_back(std::move(st));
        }
    }

    Tensor<T> forward(const Tensor<T>& x, bool train = true) {
        Tensor<T> h = x;
        for (auto& st : layers_) {
            h = st.dense.forward(h);
            if (st.has_bn) h = st.bn.forward(h, train);
            h = apply_act(h, st.act);
        }
        return h;
    }

    NamedState<T> state(const std::string& prefix = "") {
        NamedState<T> out;
        for (size_t i = 0; i < layers_.size(); ++i) {
            std::string base = prefix + "layer" + std::to_string(i) + ".";
            out.emplace_back(base + "w", layers_[i].dense.w);
            out.emplace_back(base + "b", layers_[i].dense.b);
            if (layers_[i].has_bn) {
                out.emplace_back(base + "bn_gamma", layers_[i].bn.gamma);
                out.emplace_back(base + "bn_beta", layers_[i].bn.beta);
                out.emplace_back(base + "bn_mean", layers_[i].bn.running_mean);
                out.emplace_back(base + "bn_var", layers_[i].bn.running_var);
            }
        }
        return out;
    }

    size_t depth() const { return layers_.size(); }

private:
    struct Stage {
        Dense<T> dense;
        BatchNorm1d<T> bn;
        bool has_bn = false;
        Act act = Act::kNone;
    };
    std::vector<Stage> layers_;
};

template <typename T>
void zero_grads(const std::vector<Tensor<T>>& params) {
    for (auto p : params) p.zero_grad();
}

}  // namespace latentdrive::ndgrad
