#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "latentdrive/harness/evaluator.hpp"

namespace latentdrive::harness {

inline constexpr const char* kMetricsHeader =
    "step,episode,return,return_smoothed,success_entrance,success_first,success_second,"
    "success_desired,success_goal";

/// Exponential smoothing matching the plotted curves: the first sample seeds
/// the average, after that s <- 0.9 s + 0.1 x.
class EmaSmoother {
public:
    explicit EmaSmoother(double factor = 0.9) : factor_(factor) {}

    double push(double x) {
        value_ = seeded_ ? factor_ * value_ + (1.0 - factor_) * x : x;
        seeded_ = true;
        return value_;
    }

    bool seeded() const { return seeded_; }
    double value() const { return value_; }

private:
    double factor_;
    double value_ = 0.0;
    bool seeded_ = false;
};

/// Append-only training log, one row per finished episode, carrying the most
/// recent evaluation's checkpoint success rates. Deterministic formatting so
/// same-seed runs produce byte-identical files.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path) : os_(path, std::ios::trunc) {
        if (!os_) throw std::runtime_error("cannot open metrics file: " + path);
        os_ << kMetricsHeader << '\n';
        require_ok();
    }

    void append(long step, long episode, double ret, const EvalReport& eval) {
        if (step <= last_step_ && last_step_ >= 0)
            throw std::invalid_argument("metric steps must be strictly increasing: " +
                                        std::to_string(step) + " after " + std::to_string(last_step_));
        if (!std::isfinite(ret)) throw std::invalid_argument("non-finite return in metrics");
        double smoothed = smoother_.push(ret);
        char buf[256];
        std::snprintf(buf, sizeof buf, "%ld,%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", step, episode,
                      ret, smoothed, eval.rate_entrance, eval.rate_first, eval.rate_second,
                      eval.rate_desired, eval.rate_goal);
        os_ << buf << '\n';
        os_.flush();
        require_ok();
        last_step_ = step;
        ++rows_;
    }

    long rows() const { return rows_; }
    double smoothed() const { return smoother_.value(); }

private:
    void require_ok() const {
        if (!os_) throw std::runtime_error("metrics write failed");
    }

    std::ofstream os_;
    EmaSmoother smoother_;
    long last_step_ = -1;
    long rows_ = 0;
};

}  // namespace latentdrive::harness
