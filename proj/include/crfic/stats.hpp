#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "crfic/common.hpp"

namespace crfic {

// Welford accumulator; stderr_mean() is the usual sd/sqrt(n).
class RunningStat {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const {
        return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    }
    double stderr_mean() const {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Pairwise (cascade) sum. Fixed association order, so the result depends only
// on the element order, never on chunking across threads.
inline double pairwise_sum(std::span<const double> x) {
    if (x.size() <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t h = x.size() / 2;
    return pairwise_sum(x.first(h)) + pairwise_sum(x.subspan(h));
}

struct BatchMeans {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::size_t batches = 0;
};

// Batch-means standard error for a correlated sequence: split into nb equal
// batches, treat batch averages as approximately independent.
inline BatchMeans batch_means(std::span<const double> x, std::size_t nb) {
    BatchMeans r;
    if (x.empty() || nb < 2) return r;
    nb = std::min(nb, x.size());
    const std::size_t len = x.size() / nb;
    RunningStat rs;
    for (std::size_t b = 0; b < nb; ++b)
        rs.add(pairwise_sum(x.subspan(b * len, len)) / static_cast<double>(len));
    r.mean = rs.mean();
    r.stderr_mean = rs.stderr_mean();
    r.batches = nb;
    return r;
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
// Sorts a copy; D = sup |F_n - F|.
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
    require(!sample.empty(), "ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, f - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
    }
    return d;
}

// 1% asymptotic critical value.
inline double ks_threshold(std::size_t n) {
    return 1.63 / std::sqrt(static_cast<double>(n));
}

} // namespace crfic
