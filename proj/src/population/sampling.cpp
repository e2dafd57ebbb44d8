#include <algorithm>
#include <cmath>
#include <numeric>

#include "popmon/population.hpp"

namespace popmon {

TimeBounds pass_time_bounds(const IndoorPath& path, std::size_t k, double t_prev, double t_b, double max_speed) {
    if (k >= path.doors.size()) throw PathError("door position out of range");
    if (path.legs.size() != path.doors.size() + 1) throw PathError("path legs not populated");
    const double suffix = std::accumulate(path.legs.begin() + static_cast<std::ptrdiff_t>(k) + 1, path.legs.end(), 0.0);
    TimeBounds b{t_prev + path.legs[k] / max_speed, t_b - suffix / max_speed};
    if (b.lower > b.upper + 1e-9) throw PathError("infeasible path: door cannot be reached in time");
    return b;
}

std::vector<double> sample_door_times(const IndoorPath& path, double t_a, double t_b, double max_speed,
                                      StreamRng& rng) {
    std::vector<double> times;
    times.reserve(path.doors.size());
    double prev = t_a;
    for (std::size_t k = 0; k < path.doors.size(); ++k) {
        TimeBounds b = pass_time_bounds(path, k, prev, t_b, max_speed);
        b.upper = std::max(b.upper, b.lower);
        prev = rng.uniform(b.lower, b.upper);
        times.push_back(prev);
    }
    return times;
}

PartitionIndex locate_partition(const IndoorPath& path, std::span<const double> door_times, double t_a, double t_b,
                                double t) {
    if (door_times.size() != path.doors.size()) throw PathError("door time count mismatch");
    if (t < t_a || t > t_b) throw PathError("time outside the bracketing interval");
    if (t >= t_b) return path.partitions.back();
    // first door passed strictly after t; the object is still before it
    const auto it = std::upper_bound(door_times.begin(), door_times.end(), t);
    return path.partitions[static_cast<std::size_t>(it - door_times.begin())];
}

PartitionIndex find_partition(const IndoorPath& path, double t_a, double t_b, double max_speed, double t,
                              StreamRng& rng) {
    const auto times = sample_door_times(path, t_a, t_b, max_speed, rng);
    return locate_partition(path, times, t_a, t_b, t);
}

PresenceVector presence_from_paths(const PathDistribution& dist,
                                   std::span<const std::map<PartitionIndex, double>> cond) {
    if (cond.size() != dist.paths.size()) throw PathError("conditional count does not match path count");
    PresenceVector out;
    for (std::size_t j = 0; j < cond.size(); ++j) {
        double total = 0.0;
        for (const auto& [v, p] : cond[j]) {
            if (p < 0.0 || p > 1.0) throw PathError("conditional probability outside [0, 1]");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) throw PathError("conditional probabilities do not sum to 1");
        for (const auto& [v, p] : cond[j]) out.probs[v] += dist.probs[j] * p;
    }
    return out;
}

PopulationEntry normal_from_presences(std::span<const double> probs) {
    PopulationEntry e;
    for (double p : probs) {
        e.mu += p;
        e.sigma2 += p * (1.0 - p);
    }
    return e;
}

std::vector<double> exact_poisson_binomial(std::span<const double> probs) {
    if (probs.size() > 25) throw std::invalid_argument("exact Poisson-Binomial limited to 25 trials");
    std::vector<double> pmf(probs.size() + 1, 0.0);
    pmf[0] = 1.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
        for (std::size_t k = i + 1; k > 0; --k) pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        pmf[0] *= 1.0 - p;
    }
    return pmf;
}

}  // namespace popmon
