#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "latentdrive/birdview/birdview.hpp"
#include "latentdrive/ndgrad/adam.hpp"
#include "latentdrive/ndgrad/layers.hpp"
#include "latentdrive/ndgrad/tensor.hpp"
#include "latentdrive/random.hpp"

namespace latentdrive::latent {

inline constexpr int kLatentDim = 64;
inline constexpr int kImageRes = birdview::kFrameRes;  // 64
inline constexpr int kImageChannels = birdview::kChannels;
// encoder channel ladder; each stage halves the spatial resolution
inline constexpr int kChanLadder[4] = {32, 64, 128, 256};
inline constexpr int kBottleneck = kChanLadder[3] * 4 * 4;  // 256 feature maps at 4x4

/// Convolutional variational autoencoder over 64x64x3 camera frames.
/// Encoder: four stride-2 convs with relu, then dense mean / log-variance
/// heads. Decoder mirrors it with transposed convs and a sigmoid output.
template <typename T>
struct Vae {
    ndgrad::Conv<T> enc1, enc2, enc3, enc4;
    ndgrad::Dense<T> mean_head, logvar_head, expand;
    ndgrad::ConvTranspose<T> dec1, dec2, dec3, dec4;

    static Vae init(RandomStream& rng) {
        Vae v;
        v.enc1 = ndgrad::Conv<T>::init(kImageChannels, kChanLadder[0], rng);
        v.enc2 = ndgrad::Conv<T>::init(kChanLadder[0], kChanLadder[1], rng);
        v.enc3 = ndgrad::Conv<T>::init(kChanLadder[1], kChanLadder[2], rng);
        v.enc4 = ndgrad::Conv<T>::init(kChanLadder[2], kChanLadder[3], rng);
        v.mean_head = ndgrad::Dense<T>::init(kBottleneck, kLatentDim, rng);
        v.logvar_head = ndgrad::Dense<T>::init(kBottleneck, kLatentDim, rng);
        v.expand = ndgrad::Dense<T>::init(kLatentDim, kBottleneck, rng);
        v.dec1 = ndgrad::ConvTranspose<T>::init(kChanLadder[3], kChanLadder[2], rng);
        v.dec2 = ndgrad::ConvTranspose<T>::init(kChanLadder[2], kChanLadder[1], rng);
        v.dec3 = ndgrad::ConvTranspose<T>::init(kChanLadder[1], kChanLadder[0], rng);
        v.dec4 = ndgrad::ConvTranspose<T>::init(kChanLadder[0], kImageChannels, rng);
        return v;
    }

    /// x [B,3,64,64] -> (mean [B,64], logvar [B,64])
    std::pair<ndgrad::Tensor<T>, ndgrad::Tensor<T>> encode(const ndgrad::Tensor<T>& x) {
        auto h = relu(enc1.forward(x));
        h = relu(enc2.forward(h));
        h = relu(enc3.forward(h));
        h = relu(enc4.forward(h));
        auto flat = reshape(h, {x.dim(0), kBottleneck});
        return {mean_head.forward(flat), logvar_head.forward(flat)};
    }

    /// z [B,64] -> reconstruction [B,3,64,64] in [0,1]
    ndgrad::Tensor<T> decode(const ndgrad::Tensor<T>& z) {
        auto h = relu(expand.forward(z));
        auto grid = reshape(h, {z.dim(0), kChanLadder[3], 4, 4});
        auto d = relu(dec1.forward(grid));
        d = relu(dec2.forward(d));
        d = relu(dec3.forward(d));
        return sigmoid(dec4.forward(d));
    }

    ndgrad::NamedState<T> state(const std::string& prefix = "vae.") {
        ndgrad::NamedState<T> s;
        auto put = [&](const std::string& n, ndgrad::Tensor<T>& t) { s.emplace_back(prefix + n, t); };
        put("enc1.k", enc1.k); put("enc1.b", enc1.b);
        put("enc2.k", enc2.k); put("enc2.b", enc2.b);
        put("enc3.k", enc3.k); put("enc3.b", enc3.b);
        put("enc4.k", enc4.k); put("enc4.b", enc4.b);
        put("mean.w", mean_head.w); put("mean.b", mean_head.b);
        put("logvar.w", logvar_head.w); put("logvar.b", logvar_head.b);
        put("expand.w", expand.w); put("expand.b", expand.b);
        put("dec1.k", dec1.k); put("dec1.b", dec1.b);
        put("dec2.k", dec2.k); put("dec2.b", dec2.b);
        put("dec3.k", dec3.k); put("dec3.b", dec3.b);
        put("dec4.k", dec4.k); put("dec4.b", dec4.b);
        return s;
    }

    std::vector<ndgrad::Tensor<T>> trainable() { return ndgrad::trainable_of(state()); }
};

/// Reparameterized draw: z = mean + exp(logvar / 2) * noise.
template <typename T>
ndgrad::Tensor<T> sample_latent(const ndgrad::Tensor<T>& mean, const ndgrad::Tensor<T>& logvar,
                                const ndgrad::Tensor<T>& noise) {
    return add(mean, mul(exp(affine(logvar, T(0.5), T(0))), noise));
}

/// KL(q(z|x) || N(0, I)) summed over batch and latent dims:
/// 0.5 * sum(mean^2 + exp(logvar) - 1 - logvar). Exactly zero at (0, 0).
template <typename T>
ndgrad::Tensor<T> kl_sum(const ndgrad::Tensor<T>& mean, const ndgrad::Tensor<T>& logvar) {
    auto per_dim = add(square(mean), sub(exp(logvar), logvar));
    return sum(affine(per_dim, T(0.5), T(-0.5)));
}

struct ElboParts {
    double kl = 0.0;   // summed KL, per sample
    double sse = 0.0;  // summed squared reconstruction error, per sample
    double mse = 0.0;  // per-pixel-channel mean squared error
    double elbo = 0.0; // training loss value: (kl + sse) / batch
};

/// Negative evidence lower bound with a unit-variance Gaussian likelihood,
/// averaged over the batch: (KL + SSE) / B. noise must be [B, kLatentDim].
template <typename T>
std::pair<ndgrad::Tensor<T>, ElboParts> elbo_loss(Vae<T>& vae, const ndgrad::Tensor<T>& x,
                                                  const ndgrad::Tensor<T>& noise) {
    auto [mean, logvar] = vae.encode(x);
    auto z = sample_latent(mean, logvar, noise);
    auto recon = vae.decode(z);
    auto kl = kl_sum(mean, logvar);
    auto sse = sum(square(sub(recon, x)));
    int b = x.dim(0);
    auto loss = affine(add(kl, sse), T(1) / static_cast<T>(b), T(0));

    ElboParts parts;
    parts.kl = static_cast<double>(kl.item()) / b;
    parts.sse = static_cast<double>(sse.item()) / b;
    parts.mse = static_cast<double>(sse.item()) / static_cast<double>(x.numel());
    parts.elbo = static_cast<double>(loss.item());
    return {loss, parts};
}

/// The representation the control stack consumes: the posterior mean.
struct LatentState {
    std::vector<float> z;
};

inline LatentState encode_mean(Vae<float>& vae, const birdview::BirdViewFrame& frame) {
    ndgrad::NoGradGuard ng;
    auto x = ndgrad::Tensor<float>::from_data({1, kImageChannels, kImageRes, kImageRes}, frame.chw);
    auto [mean, logvar] = vae.encode(x);
    (void)logvar;
    return LatentState{std::vector<float>(mean.data().begin(), mean.data().end())};
}

struct VaeEpochStats {
    int epoch = 0;
    double elbo = 0.0;
    double kl = 0.0;
    double mse = 0.0;
};

/// Minibatch Adam training over a frame dataset. Shuffles every epoch,
/// draws fresh reparameterization noise per batch, aborts on non-finite
/// loss. Returns one stats row per epoch.
template <typename T>
std::vector<VaeEpochStats> train_vae(Vae<T>& vae, const birdview::Dataset& data, int epochs,
                                     double lr, int batch_size, RandomStream& rng,
                                     std::ostream* log = nullptr) {
    if (data.count() == 0) throw std::invalid_argument("train_vae: empty dataset");
    if (data.width != static_cast<uint32_t>(kImageRes) || data.height != static_cast<uint32_t>(kImageRes) ||
        data.channels != static_cast<uint32_t>(kImageChannels))
        throw std::invalid_argument("train_vae: dataset is " + std::to_string(data.width) + "x" +
                                    std::to_string(data.height) + "x" + std::to_string(data.channels) +
                                    ", expected 64x64x3");
    ndgrad::Adam<T> opt(vae.trainable(), static_cast<T>(lr));
    std::vector<size_t> order(data.count());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<VaeEpochStats> history;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double ep_elbo = 0, ep_kl = 0, ep_sse = 0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
            size_t b = std::min(static_cast<size_t>(batch_size), order.size() - start);
            std::vector<T> xs;
            xs.reserve(b * data.frame_size());
            for (size_t i = 0; i < b; ++i) {
                auto f = data.frame_chw(order[start + i]);
                for (float v : f) xs.push_back(static_cast<T>(v));
            }
            auto x = ndgrad::Tensor<T>::from_data(
                {static_cast<int>(b), kImageChannels, kImageRes, kImageRes}, std::move(xs));
            auto noise = ndgrad::Tensor<T>::normal({static_cast<int>(b), kLatentDim}, T(0), T(1), rng,
                                                   false);
            auto [loss, parts] = elbo_loss(vae, x, noise);
            if (!std::isfinite(parts.elbo))
                throw std::runtime_error("train_vae: non-finite loss at epoch " + std::to_string(epoch));
            loss.backward();
            opt.step();
            ep_elbo += parts.elbo * b;
            ep_kl += parts.kl * b;
            ep_sse += parts.sse * b;
            seen += b;
        }
        VaeEpochStats st;
        st.epoch = epoch;
        st.elbo = ep_elbo / static_cast<double>(seen);
        st.kl = ep_kl / static_cast<double>(seen);
        st.mse = ep_sse / (static_cast<double>(seen) * kImageChannels * kImageRes * kImageRes);
        history.push_back(st);
        if (log)
            (*log) << "epoch " << epoch << " elbo " << st.elbo << " kl " << st.kl << " mse " << st.mse
                   << "\n";
    }
    return history;
}

}  // namespace latentdrive::latent
