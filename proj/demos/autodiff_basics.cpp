// Minimal tour of the autodiff core: fit a small MLP to y = sin(2x) with
// Adam, evaluating under NoGradGuard. Prints the loss every few hundred
// steps; the final fit error should land well under 1e-2.

#include <cmath>
#include <cstdio>
#include <vector>

#include "latentdrive/ndgrad/adam.hpp"
#include "latentdrive/ndgrad/layers.hpp"
#include "latentdrive/random.hpp"

using namespace latentdrive;
using ndgrad::Act;

int main() {
    RandomStream rng(1);

    const int n = 256;
    std::vector<float> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = static_cast<float>(rng.uniform(-M_PI, M_PI));
        ys[i] = static_cast<float>(std::sin(2.0 * xs[i]));
    }
    auto x = ndgrad::Tensor<float>::from_data({n, 1}, xs);
    auto y = ndgrad::Tensor<float>::from_data({n, 1}, ys);

    ndgrad::Mlp<float> net({{1, 32, Act::kTanh, false},
                            {32, 32, Act::kTanh, false},
                            {32, 1, Act::kNone, false}},
                           rng);
    auto params = ndgrad::trainable_of(net.state());
    ndgrad::Adam<float> opt(params, 1e-2f);

    for (int step = 1; step <= 2000; ++step) {
        ndgrad::zero_grads(params);
        auto loss = ndgrad::mean(ndgrad::square(ndgrad::sub(net.forward(x), y)));
        loss.backward();
        opt.step();
        if (step % 400 == 0) std::printf("step %4d  mse %.6f\n", step, static_cast<double>(loss.item()));
    }

    ndgrad::NoGradGuard ng;
    double worst = 0.0;
    for (int i = 0; i < 64; ++i) {
        float q = static_cast<float>(-M_PI + 2.0 * M_PI * i / 63.0);
        auto p = net.forward(ndgrad::Tensor<float>::from_data({1, 1}, {q}));
        worst = std::max(worst, std::abs(static_cast<double>(p.item()) - std::sin(2.0 * q)));
    }
    std::printf("max |error| on a grid: %.4f\n", worst);
    return worst < 0.1 ? 0 : 1;
}
