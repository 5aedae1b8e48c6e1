// Command-line front end: dataset collection, VAE pretraining, RL training,
// checkpoint evaluation, and bird-view rendering.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/birdview/birdview.hpp"
#include "latentdrive/harness/trainer.hpp"
#include "latentdrive/latent/dataset.hpp"

using namespace latentdrive;

namespace {

int usage() {
    std::cerr <<
        "usage: latentdrive <command> [flags]\n"
        "\n"
        "  collect-dataset --frames N --out F [--seed S]\n"
        "      drive the roundabout with a noisy route follower, save N bird-view frames\n"
        "  train-vae --data F --epochs N --lr X --out F [--seed S] [--batch N]\n"
        "      train the encoder on a collected dataset, save its checkpoint\n"
        "  train --algo {ddqn|td3|sac} --config F --seed N --out DIR\n"
        "      run RL training; flags override config file values\n"
        "  eval --checkpoint F --episodes N --seed N [--config F]\n"
        "      roll out the checkpoint's policy without exploration, report success rates\n"
        "  render --scenario F --out F.ppm\n"
        "      rasterize the bird view of a scenario after an optional scripted warmup\n";
    return 2;
}

/// --key value pairs into a map; every flag takes exactly one value.
std::map<std::string, std::string> parse_flags(int argc, char** argv, int first) {
    std::map<std::string, std::string> flags;
    for (int i = first; i < argc; ++i) {
        std::string key = argv[i];
        if (key.rfind("--", 0) != 0) throw std::invalid_argument("expected a --flag, got '" + key + "'");
        if (i + 1 >= argc) throw std::invalid_argument("flag " + key + " needs a value");
        flags[key.substr(2)] = argv[++i];
    }
    return flags;
}

std::string need(const std::map<std::string, std::string>& flags, const std::string& key) {
    auto it = flags.find(key);
    if (it == flags.end()) throw std::invalid_argument("missing required flag --" + key);
    return it->second;
}

std::string opt(const std::map<std::string, std::string>& flags, const std::string& key,
                const std::string& fallback) {
    auto it = flags.find(key);
    return it == flags.end() ? fallback : it->second;
}

long to_long(const std::string& s, const std::string& what) {
    try {
        size_t used = 0;
        long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("bad integer for " + what + ": '" + s + "'");
    }
}

double to_double(const std::string& s, const std::string& what) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("bad number for " + what + ": '" + s + "'");
    }
}

int cmd_collect(const std::map<std::string, std::string>& flags) {
    latent::CollectConfig cc;
    cc.frames = static_cast<int>(to_long(need(flags, "frames"), "--frames"));
    cc.seed = static_cast<uint64_t>(to_long(opt(flags, "seed", "1"), "--seed"));
    std::string out = need(flags, "out");

    auto frames = latent::collect_frames(cc);
    birdview::save_dataset(out, frames);
    std::cout << "wrote " << frames.size() << " frames (" << birdview::kFrameRes << "x"
              << birdview::kFrameRes << "x" << birdview::kChannels << ") to " << out << "\n";
    return 0;
}

int cmd_train_vae(const std::map<std::string, std::string>& flags) {
    std::string data_path = need(flags, "data");
    int epochs = static_cast<int>(to_long(need(flags, "epochs"), "--epochs"));
    double lr = to_double(need(flags, "lr"), "--lr");
    std::string out = need(flags, "out");
    uint64_t seed = static_cast<uint64_t>(to_long(opt(flags, "seed", "1"), "--seed"));
    int batch = static_cast<int>(to_long(opt(flags, "batch", "64"), "--batch"));

    auto data = birdview::load_dataset(data_path);
    RandomStream rng(seed);
    auto vae = latent::Vae<float>::init(rng);
    auto stats = latent::train_vae(vae, data, epochs, lr, batch, rng, &std::cout);
    ndgrad::save_params(out, vae.state());
    if (!stats.empty())
        std::cout << "final elbo " << stats.back().elbo << " mse " << stats.back().mse << "\n";
    std::cout << "wrote encoder checkpoint to " << out << "\n";
    return 0;
}

int cmd_train(const std::map<std::string, std::string>& flags) {
    harness::RunConfig cfg;
    if (flags.count("config")) cfg = harness::RunConfig::from_file(flags.at("config"));
    if (flags.count("algo")) cfg.algo = flags.at("algo");
    if (flags.count("seed")) cfg.seed = static_cast<uint64_t>(to_long(flags.at("seed"), "--seed"));
    if (flags.count("out")) cfg.out_dir = flags.at("out");
    if (flags.count("vae")) cfg.vae_checkpoint = flags.at("vae");
    cfg.validate();

    auto art = harness::train(cfg, &std::cout);
    std::cout << "finished " << art.steps << " steps, " << art.episodes << " episodes\n"
              << "checkpoint: " << art.checkpoint_path << "\n"
              << "metrics:    " << art.metrics_path << "\n";
    return 0;
}

void print_report(const harness::EvalReport& r) {
    std::printf("episodes        %d\n", r.episodes);
    std::printf("avg return      %.4f\n", r.avg_return);
    std::printf("entrance rate   %.3f\n", r.rate_entrance);
    std::printf("first-exit rate %.3f\n", r.rate_first);
    std::printf("second-exit     %.3f\n", r.rate_second);
    std::printf("desired-exit    %.3f\n", r.rate_desired);
    std::printf("goal rate       %.3f\n", r.rate_goal);
}

int cmd_eval(const std::map<std::string, std::string>& flags) {
    std::string ckpt = need(flags, "checkpoint");
    int episodes = static_cast<int>(to_long(need(flags, "episodes"), "--episodes"));
    uint64_t seed = static_cast<uint64_t>(to_long(need(flags, "seed"), "--seed"));
    harness::RunConfig cfg;
    if (flags.count("config")) cfg = harness::RunConfig::from_file(flags.at("config"));

    auto report = harness::evaluate_checkpoint(ckpt, cfg, episodes, seed);
    print_report(report);
    return 0;
}

int cmd_render(const std::map<std::string, std::string>& flags) {
    // scenario file keys: seed, n_traffic, warmup_frames (scripted route
    // following before the snapshot, so renders need not show frame 0)
    KvFile sc = KvFile::load(need(flags, "scenario"));
    std::string out = need(flags, "out");
    uint64_t seed = static_cast<uint64_t>(sc.get_long("seed", 1));
    int warmup = static_cast<int>(sc.get_long("warmup_frames", 0));

    drivesim::WorldConfig wc;
    wc.traffic_count = static_cast<int>(sc.get_long("n_traffic", wc.traffic_count));
    drivesim::World world(drivesim::build_roundabout(), wc, seed);
    birdview::HistoryBuffer hist;
    hist.fill(birdview::snapshot_of(world));

    drivesim::PurePursuitDriver driver;
    for (int f = 0; f < warmup && !world.done(); ++f) {
        world.step_frame(driver.act(world.ego(), world.map().route));
        hist.push(birdview::snapshot_of(world));
    }

    auto frame = birdview::render(world.map(), hist);
    birdview::write_ppm(out, birdview::kFrameRes, birdview::kFrameRes, birdview::frame_bytes(frame));
    std::cout << "wrote " << birdview::kFrameRes << "x" << birdview::kFrameRes << " ppm to " << out
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) return usage();
    std::string cmd = argv[1];
    try {
        auto flags = parse_flags(argc, argv, 2);
        if (cmd == "collect-dataset") return cmd_collect(flags);
        if (cmd == "train-vae") return cmd_train_vae(flags);
        if (cmd == "train") return cmd_train(flags);
        if (cmd == "eval") return cmd_eval(flags);
        if (cmd == "render") return cmd_render(flags);
        std::cerr << "unknown command '" << cmd << "'\n";
        return usage();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
