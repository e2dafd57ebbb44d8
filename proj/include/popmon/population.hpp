#pragma once

// Bounded path enumeration, Monte-Carlo door-time sampling and the Normal
// approximation of partition populations.

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "popmon/indoor_model.hpp"
#include "popmon/rng.hpp"
#include "popmon/trajectory.hpp"

namespace popmon {

inline constexpr double kDefaultMaxSpeed = 1.53;
inline constexpr std::size_t kDefaultSampleCount = 200;
inline constexpr std::size_t kDefaultMaxHops = 8;
/// Length floor used when weighting zero-length paths.
inline constexpr double kMinPathLength = 0.1;

class PathError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Source location, door sequence and target location. `partitions` has one
/// more entry than `doors`: partitions[i] is walked before doors[i].
struct IndoorPath {
    Location source;
    std::vector<DoorIndex> doors;
    std::vector<PartitionIndex> partitions;
    Location target;
    /// Straight legs source -> d1 -> ... -> dm -> target (doors.size() + 1).
    std::vector<double> legs;
    double length = 0.0;
};

struct PathDistribution {
    std::vector<IndoorPath> paths;
    std::vector<double> probs;
};

/// Every door-sequence path from l_a to l_b with length <= budget, no repeated
/// door and at most max_hops doors, ordered by door-id sequence.
std::vector<IndoorPath> enumerate_paths(const Topology& topo, const Location& l_a, const Location& l_b, double budget,
                                        std::size_t max_hops = kDefaultMaxHops);

/// Sum of the straight legs source -> d1 -> ... -> dm -> target. Throws
/// PathError if consecutive elements are not connected.
double path_length(const Topology& topo, const IndoorPath& path);

/// Builds an IndoorPath from door ids, deriving the partition chain.
IndoorPath make_path(const Topology& topo, const Location& source, std::span<const std::string> door_ids,
                     const Location& target);

/// Probabilities proportional to 1 / max(length, kMinPathLength).
PathDistribution path_probabilities(std::vector<IndoorPath> paths);

struct TimeBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// Admissible pass time of door `k` (0-based) given that the previous point
/// on the path (the source when k == 0) was passed at t_prev.
TimeBounds pass_time_bounds(const IndoorPath& path, std::size_t k, double t_prev, double t_b, double max_speed);

/// Sequentially samples one pass time per door, uniformly within its bounds.
std::vector<double> sample_door_times(const IndoorPath& path, double t_a, double t_b, double max_speed,
                                      StreamRng& rng);

/// Partition occupied at t given the door pass times. Intervals are half-open
/// and t == t_b maps to the target's partition.
PartitionIndex locate_partition(const IndoorPath& path, std::span<const double> door_times, double t_a, double t_b,
                                double t);

PartitionIndex find_partition(const IndoorPath& path, double t_a, double t_b, double max_speed, double t,
                              StreamRng& rng);

struct PresenceVector {
    std::string object;
    double time = 0.0;
    std::map<PartitionIndex, double> probs;
};

/// Mixes per-path conditional presences by the path probabilities.
/// cond[j] is the conditional distribution over partitions for path j.
PresenceVector presence_from_paths(const PathDistribution& dist,
                                   std::span<const std::map<PartitionIndex, double>> cond);

struct PopulationEntry {
    double mu = 0.0;
    double sigma2 = 0.0;
};

struct PopulationDistribution {
    double time = 0.0;
    std::map<PartitionIndex, PopulationEntry> entries;
};

/// Mean and variance of a sum of independent Bernoulli presences.
PopulationEntry normal_from_presences(std::span<const double> probs);

/// Exact PMF of the number of successes, length n + 1. n <= 25.
std::vector<double> exact_poisson_binomial(std::span<const double> probs);

struct ExtractorConfig {
    double max_speed = kDefaultMaxSpeed;
    std::size_t samples = kDefaultSampleCount;
    std::size_t max_hops = kDefaultMaxHops;
    std::uint64_t seed = 1;
};

/// Presence and population extraction over a trajectory store. Results are a
/// pure function of (store, config, t): random streams are keyed by object,
/// path and time, so the requested partition subset never changes them.
/// Thread-safe.
class PopulationExtractor {
public:
    PopulationExtractor(const Topology& topo, const TrajectoryStore& store, ExtractorConfig config = {});

    /// Presence vector of every object bracketing t.
    std::vector<PresenceVector> presences(double t) const;

    /// Per-partition (mu, sigma^2) restricted to `partitions`.
    PopulationDistribution extract(std::span<const PartitionIndex> partitions, double t) const;
    /// All partitions.
    PopulationDistribution extract(double t) const;

    const ExtractorConfig& config() const noexcept { return config_; }
    std::uint64_t extract_calls() const noexcept { return extract_calls_.load(); }
    std::uint64_t empty_path_objects() const noexcept { return empty_path_objects_.load(); }
    std::uint64_t unlocatable_pairs() const noexcept { return unlocatable_pairs_.load(); }
    void reset_counters() noexcept;

private:
    const PathDistribution& paths_for(const BracketingPair& pair) const;
    std::vector<PresenceVector> presences(double t, const std::vector<bool>* wanted) const;

    const Topology& topo_;
    const TrajectoryStore& store_;
    ExtractorConfig config_;
    mutable std::mutex path_mutex_;
    mutable std::map<std::pair<std::string, double>, PathDistribution> path_cache_;
    mutable std::atomic<std::uint64_t> extract_calls_{0};
    mutable std::atomic<std::uint64_t> empty_path_objects_{0};
    mutable std::atomic<std::uint64_t> unlocatable_pairs_{0};
};

/// `partition_id,t,mu,sigma2` rows with a header.
void write_population_csv(std::ostream& out, const Topology& topo, std::span<const PopulationDistribution> series);
std::vector<PopulationDistribution> read_population_csv(std::istream& in, const Topology& topo);

}  // namespace popmon
