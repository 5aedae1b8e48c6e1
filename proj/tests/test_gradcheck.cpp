// Finite-difference verification of reverse-mode gradients, op by op and for
// small composite networks. All checks run in double precision.

#include <catch2/catch_amalgamated.hpp>

#include "latentdrive/ndgrad/layers.hpp"
#include "latentdrive/ndgrad/tensor.hpp"
#include "support/fd_check.hpp"

using namespace latentdrive;
using ndgrad::Tensor;
using fdtest::fd_check;

namespace {

// Values bounded away from zero so kinked ops (relu, clamp, min) are checked
// at differentiable points.
Tensor<double> signed_offset_uniform(ndgrad::Shape shape, RandomStream& rng) {
    std::vector<double> d(ndgrad::shape_numel(shape));
    for (auto& v : d) {
        double mag = rng.uniform(0.3, 1.2);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor<double>::param(std::move(shape), std::move(d));
}

Tensor<double> positive_uniform(ndgrad::Shape shape, RandomStream& rng) {
    std::vector<double> d(ndgrad::shape_numel(shape));
    for (auto& v : d) v = rng.uniform(0.4, 1.6);
    return Tensor<double>::param(std::move(shape), std::move(d));
}

constexpr double kOpTol = 1e-6;

}  // namespace

TEST_CASE("elementwise binary op gradients match finite differences") {
    RandomStream rng(101);
    auto a = signed_offset_uniform({3, 4}, rng);
    auto b = positive_uniform({3, 4}, rng);
    auto w = signed_offset_uniform({3, 4}, rng);  // fixed mixing weights

    struct Case {
        const char* name;
        std::function<Tensor<double>()> loss;
    };
    std::vector<Case> cases = {
        {"add", [&] { return sum(mul(w, add(a, b))); }},
        {"sub", [&] { return sum(mul(w, sub(a, b))); }},
        {"mul", [&] { return sum(mul(w, mul(a, b))); }},
        {"div", [&] { return sum(mul(w, div(a, b))); }},
    };
    for (auto& c : cases) {
        INFO(c.name);
        auto res = fd_check({{"a", a}, {"b", b}}, c.loss, rng);
        CHECK(res.max_rel_err < kOpTol);
    }
}

TEST_CASE("unary op gradients match finite differences") {
    RandomStream rng(102);

    SECTION("smooth ops on mixed-sign input") {
        auto x = signed_offset_uniform({2, 5}, rng);
        auto w = signed_offset_uniform({2, 5}, rng);
        std::vector<std::pair<const char*, std::function<Tensor<double>()>>> cases = {
            {"exp", [&] { return sum(mul(w, exp(x))); }},
            {"square", [&] { return sum(mul(w, square(x))); }},
            {"tanh", [&] { return sum(mul(w, tanh(x))); }},
            {"sigmoid", [&] { return sum(mul(w, sigmoid(x))); }},
            {"relu", [&] { return sum(mul(w, relu(x))); }},
            {"leaky_relu", [&] { return sum(mul(w, leaky_relu(x, 0.01))); }},
            {"affine", [&] { return sum(mul(w, affine(x, 2.5, -0.7))); }},
            {"clamp", [&] { return sum(mul(w, clamp(x, -0.9, 0.9))); }},
        };
        for (auto& [name, loss] : cases) {
            INFO(name);
            auto res = fd_check({{"x", x}}, loss, rng);
            CHECK(res.max_rel_err < kOpTol);
        }
    }

    SECTION("ops requiring positive input") {
        auto x = positive_uniform({2, 5}, rng);
        auto w = signed_offset_uniform({2, 5}, rng);
        std::vector<std::pair<const char*, std::function<Tensor<double>()>>> cases = {
            {"log", [&] { return sum(mul(w, log(x))); }},
            {"sqrt", [&] { return sum(mul(w, sqrt(x))); }},
        };
        for (auto& [name, loss] : cases) {
            INFO(name);
            auto res = fd_check({{"x", x}}, loss, rng);
            CHECK(res.max_rel_err < kOpTol);
        }
    }
}

TEST_CASE("reduction and shape op gradients match finite differences") {
    RandomStream rng(103);
    auto x = signed_offset_uniform({3, 4}, rng);
    auto y = signed_offset_uniform({3, 2}, rng);
    auto wide = signed_offset_uniform({3, 6}, rng);
    std::vector<int> idx = {1, 3, 0};

    std::vector<std::pair<const char*, std::function<Tensor<double>()>>> cases = {
        {"sum", [&] { return sum(x); }},
        {"mean", [&] { return mean(square(x)); }},
        {"sum_cols", [&] { return sum(square(sum_cols(x))); }},
        {"reshape", [&] { return sum(square(reshape(x, {2, 6}))); }},
        {"concat_cols", [&] { return sum(square(mul(wide, concat_cols(x, y)))); }},
        {"gather_cols", [&] { return sum(square(gather_cols(x, idx))); }},
    };
    for (auto& [name, loss] : cases) {
        INFO(name);
        auto res = fd_check({{"x", x}, {"y", y}, {"wide", wide}}, loss, rng);
        CHECK(res.max_rel_err < kOpTol);
    }
}

TEST_CASE("minimum gradient routes to both branches") {
    RandomStream rng(104);
    auto a = signed_offset_uniform({4, 3}, rng);
    auto b = signed_offset_uniform({4, 3}, rng);
    auto loss = [&] { return sum(square(minimum(a, b))); };
    auto res = fd_check({{"a", a}, {"b", b}}, loss, rng);
    CHECK(res.max_rel_err < kOpTol);
}

TEST_CASE("matmul and linear gradients match finite differences") {
    RandomStream rng(105);
    auto x = signed_offset_uniform({4, 3}, rng);
    auto w = signed_offset_uniform({3, 5}, rng);
    auto b = signed_offset_uniform({5}, rng);

    SECTION("matmul") {
        auto loss = [&] { return sum(square(matmul(x, w))); };
        auto res = fd_check({{"x", x}, {"w", w}}, loss, rng);
        CHECK(res.max_rel_err < kOpTol);
    }
    SECTION("linear") {
        auto loss = [&] { return sum(square(linear(x, w, b))); };
        auto res = fd_check({{"x", x}, {"w", w}, {"b", b}}, loss, rng);
        CHECK(res.max_rel_err < kOpTol);
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    RandomStream rng(106);
    auto x = signed_offset_uniform({2, 3, 6, 6}, rng);
    auto k = signed_offset_uniform({4, 3, 3, 3}, rng);
    auto b = signed_offset_uniform({4}, rng);
    auto loss = [&] { return sum(square(conv2d(x, k, b))); };
    auto res = fd_check({{"x", x}, {"k", k}, {"b", b}}, loss, rng, 64);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("conv2d_transpose gradients match finite differences") {
    RandomStream rng(107);
    auto x = signed_offset_uniform({2, 4, 3, 3}, rng);
    auto k = signed_offset_uniform({4, 3, 3, 3}, rng);
    auto b = signed_offset_uniform({3}, rng);
    auto loss = [&] { return sum(square(conv2d_transpose(x, k, b))); };
    auto res = fd_check({{"x", x}, {"k", k}, {"b", b}}, loss, rng, 64);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("batch_norm gradients match finite differences") {
    RandomStream rng(108);
    auto x = signed_offset_uniform({8, 5}, rng);
    auto gamma = positive_uniform({5}, rng);
    auto beta = signed_offset_uniform({5}, rng);
    auto rm = Tensor<double>::from_data({5}, {0.1, -0.2, 0.05, 0.3, -0.1});
    auto rv = Tensor<double>::from_data({5}, {1.1, 0.9, 1.3, 0.7, 1.0});

    SECTION("training mode (batch statistics)") {
        // Training mode folds batch stats into the running estimates, but the
        // loss value itself never reads them, so the loss stays pure.
        auto loss = [&] { return sum(square(batch_norm(x, gamma, beta, rm, rv, true))); };
        auto res = fd_check({{"x", x}, {"gamma", gamma}, {"beta", beta}}, loss, rng);
        CHECK(res.max_rel_err < 1e-5);
    }
    SECTION("inference mode (running statistics)") {
        auto loss = [&] { return sum(square(batch_norm(x, gamma, beta, rm, rv, false))); };
        auto res = fd_check({{"x", x}, {"gamma", gamma}, {"beta", beta}}, loss, rng);
        CHECK(res.max_rel_err < kOpTol);
    }
}

TEST_CASE("mlp regression loss gradients match finite differences") {
    RandomStream rng(109);
    ndgrad::Mlp<double> net(
        {{6, 8, ndgrad::Act::kRelu}, {8, 8, ndgrad::Act::kTanh}, {8, 2, ndgrad::Act::kNone}}, rng);
    auto x = signed_offset_uniform({5, 6}, rng);
    x.set_requires_grad(false);
    auto target = signed_offset_uniform({5, 2}, rng);
    target.set_requires_grad(false);

    auto loss = [&] {
        auto pred = net.forward(x, true);
        return mean(square(sub(pred, target)));
    };
    auto res = fd_check(net.state("mlp."), loss, rng);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("batch-normalized mlp loss gradients match finite differences") {
    RandomStream rng(110);
    ndgrad::Mlp<double> net({{4, 6, ndgrad::Act::kLeakyRelu, true},
                             {6, 6, ndgrad::Act::kLeakyRelu, true},
                             {6, 1, ndgrad::Act::kTanh}},
                            rng);
    auto x = signed_offset_uniform({7, 4}, rng);
    x.set_requires_grad(false);
    auto loss = [&] { return mean(square(net.forward(x, true))); };
    auto res = fd_check(net.state("pol."), loss, rng);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("small conv autoencoder loss gradients match finite differences") {
    RandomStream rng(111);
    auto enc = ndgrad::Conv<double>::init(2, 3, rng);
    auto head_w = signed_offset_uniform({3 * 4 * 4, 6}, rng);
    auto head_b = signed_offset_uniform({6}, rng);
    auto un_w = signed_offset_uniform({6, 3 * 4 * 4}, rng);
    auto un_b = signed_offset_uniform({3 * 4 * 4}, rng);
    auto dec = ndgrad::ConvTranspose<double>::init(3, 2, rng);
    auto x = positive_uniform({2, 2, 8, 8}, rng);
    x.set_requires_grad(false);

    auto loss = [&] {
        auto h = relu(enc.forward(x));                       // [2,3,4,4]
        auto flat = reshape(h, {2, 3 * 4 * 4});
        auto code = tanh(linear(flat, head_w, head_b));      // [2,6]
        auto up = relu(linear(code, un_w, un_b));
        auto grid = reshape(up, {2, 3, 4, 4});
        auto recon = sigmoid(dec.forward(grid));             // [2,2,8,8]
        return sum(square(sub(recon, x)));
    };
    auto res = fd_check({{"enc.k", enc.k},
                         {"enc.b", enc.b},
                         {"head.w", head_w},
                         {"head.b", head_b},
                         {"un.w", un_w},
                         {"un.b", un_b},
                         {"dec.k", dec.k},
                         {"dec.b", dec.b}},
                        loss, rng, 48);
    INFO("worst coordinate: " << res.worst << " abs err " << res.max_abs_err);
    CHECK(res.max_rel_err < 1e-4);
}
