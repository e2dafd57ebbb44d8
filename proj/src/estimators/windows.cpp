#include <algorithm>
#include <cmath>

#include "popmon/estimators.hpp"

namespace popmon {

PopulationSeries PopulationSeries::from_snapshots(std::span<const PopulationDistribution> snapshots,
                                                  std::size_t partition_count, double delta) {
    if (!(delta > 0.0)) throw EstimatorError("grid spacing must be positive");
    PopulationSeries s;
    s.delta = delta;
    s.partition_count = partition_count;
    if (snapshots.empty()) return s;
    double lo = snapshots.front().time, hi = lo;
    for (const auto& d : snapshots) {
        lo = std::min(lo, d.time);
        hi = std::max(hi, d.time);
    }
    s.start = lo;
    const auto length = static_cast<std::size_t>(std::llround((hi - lo) / delta)) + 1;
    s.mu.assign(length, std::vector<double>(partition_count, 0.0));
    s.sigma.assign(length, std::vector<double>(partition_count, 0.0));
    s.present.assign(length, false);
    for (const auto& d : snapshots) {
        const double pos = (d.time - lo) / delta;
        const auto k = static_cast<std::size_t>(std::llround(pos));
        if (std::abs(pos - static_cast<double>(k)) > 1e-6) {
            throw EstimatorError("snapshot at t=" + std::to_string(d.time) + " is off the grid");
        }
        for (const auto& [v, e] : d.entries) {
            if (v >= partition_count) throw EstimatorError("snapshot partition out of range");
            s.mu[k][v] = e.mu;
            s.sigma[k][v] = std::sqrt(std::max(e.sigma2, 0.0));
        }
        s.present[k] = true;
    }
    return s;
}

PopulationSeries PopulationSeries::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > length()) throw EstimatorError("series slice out of range");
    PopulationSeries s;
    s.start = time(begin);
    s.delta = delta;
    s.partition_count = partition_count;
    const auto b = static_cast<std::ptrdiff_t>(begin);
    const auto e = static_cast<std::ptrdiff_t>(begin + count);
    s.mu.assign(mu.begin() + b, mu.begin() + e);
    s.sigma.assign(sigma.begin() + b, sigma.begin() + e);
    s.present.assign(present.begin() + b, present.begin() + e);
    return s;
}

namespace {

void require_length(const PopulationSeries& series, std::size_t n) {
    if (n == 0) throw EstimatorError("window length must be positive");
    if (series.length() < n + 1) {
        throw EstimatorError("series of " + std::to_string(series.length()) + " grid points is shorter than N + 1 = " +
                             std::to_string(n + 1));
    }
}

bool all_present(const PopulationSeries& series, std::size_t from, std::size_t to) {
    for (std::size_t k = from; k <= to; ++k) {
        if (!series.present[k]) return false;
    }
    return true;
}

}  // namespace

std::vector<SeWindow> build_se_windows(const PopulationSeries& series, std::size_t n) {
    require_length(series, n);
    std::vector<SeWindow> out;
    for (std::size_t k = n; k < series.length(); ++k) {
        const bool complete = all_present(series, k - n, k);
        for (PartitionIndex v = 0; v < series.partition_count; ++v) {
            SeWindow w;
            w.partition = v;
            w.time = series.time(k);
            for (std::size_t i = k - n; i < k; ++i) w.inputs.push_back({series.mu[i][v], series.sigma[i][v]});
            w.target = {series.mu[k][v], series.sigma[k][v]};
            w.complete = complete;
            out.push_back(std::move(w));
        }
    }
    return out;
}

std::vector<MeWindow> build_me_windows(const PopulationSeries& series, std::size_t n) {
    require_length(series, n);
    std::vector<MeWindow> out;
    for (std::size_t k = n; k < series.length(); ++k) {
        MeWindow w;
        w.time = series.time(k);
        for (std::size_t i = k - n; i < k; ++i) {
            nn::Matrix x(series.partition_count, 2);
            for (PartitionIndex v = 0; v < series.partition_count; ++v) {
                x(v, 0) = series.mu[i][v];
                x(v, 1) = series.sigma[i][v];
            }
            w.inputs.push_back(std::move(x));
        }
        w.target_mu = series.mu[k];
        w.target_sigma = series.sigma[k];
        w.complete = all_present(series, k - n, k);
        out.push_back(std::move(w));
    }
    return out;
}

SplitSizes split_by_time(std::size_t length, double train_fraction, double validation_fraction) {
    if (train_fraction < 0.0 || validation_fraction < 0.0 || train_fraction + validation_fraction > 1.0 + 1e-12) {
        throw EstimatorError("invalid split fractions");
    }
    SplitSizes s;
    s.train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(length) + 1e-9));
    s.validation = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(length) + 1e-9));
    s.test = length - s.train - s.validation;
    return s;
}

}  // namespace popmon
