#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "latentdrive/ndgrad/tensor.hpp"

namespace latentdrive::ndgrad {

/// Adam with bias correction. Consumes gradients: each step requires every
/// managed parameter to carry a gradient and clears them afterwards, so a
/// missing backward pass surfaces immediately instead of reusing stale grads.
template <typename T>
class Adam {
public:
    Adam() = default;

    explicit Adam(std::vector<Tensor<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
                  T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            if (!p.requires_grad())
                throw std::invalid_argument("Adam given a parameter that does not require grad");
            m_.emplace_back(p.numel(), T(0));
            v_.emplace_back(p.numel(), T(0));
        }
    }

    void step() {
        ++t_;
        T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor<T> p = params_[i];
            if (!p.has_grad())
                throw std::runtime_error("Adam step with missing gradient on parameter " + std::to_string(i));
            auto g = p.grad();
            auto val = p.mutable_data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < val.size(); ++j) {
                m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
                T mhat = m[j] / bc1;
                T vhat = v[j] / bc2;
                val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            p.zero_grad();
        }
    }

    long steps_taken() const { return t_; }
    T lr() const { return lr_; }
    void set_lr(T lr) { lr_ = lr; }
    const std::vector<Tensor<T>>& params() const { return params_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    long t_ = 0;
    T lr_ = T(1e-3), beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
};

}  // namespace latentdrive::ndgrad
