#pragma once

// Continuous monitoring of populated partitions around a moving query user.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "popmon/estimators.hpp"
#include "popmon/indoor_model.hpp"
#include "popmon/population.hpp"
#include "popmon/trajectory.hpp"

namespace popmon {

class QueryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CmppQuery {
    double range = 60.0;          // r, meters
    double threshold = 2.0;       // theta, persons
    double confidence = 0.5;      // eta
    double t_start = 0.0;
    double t_end = 3600.0;
    double interval = 60.0;       // delta t between results
    std::size_t divisor = 4;      // z: the clock advances interval / z per tick

    void validate() const;
};

/// f(P > theta) for P ~ N(mu, sigma^2), clamped to 1 / 0 beyond +-4 standard
/// deviations. sigma == 0 is a point mass at mu.
double pmf_exceed(double mu, double sigma, double theta);

struct CachedResult {
    double prob = 0.0;
    double time = 0.0;
};

class ResultCache {
public:
    const CachedResult* find(PartitionIndex v) const;
    void put(PartitionIndex v, CachedResult r) { entries_[v] = r; }
    std::size_t size() const noexcept { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    std::unordered_map<PartitionIndex, CachedResult> entries_;
};

/// (partition, time) -> (mu, sigma) memo of extracted populations, keyed on
/// milliseconds. Safe for concurrent use. A disabled cache never hits and
/// never stores.
class FeatureCache {
public:
    explicit FeatureCache(bool enabled = true) : enabled_(enabled) {}

    std::optional<FeaturePoint> find(PartitionIndex v, double t) const;
    void put(PartitionIndex v, double t, FeaturePoint p);
    bool enabled() const noexcept { return enabled_; }
    std::size_t size() const;
    std::uint64_t hits() const noexcept { return hits_.load(); }
    std::uint64_t misses() const noexcept { return misses_.load(); }

private:
    using Key = std::pair<PartitionIndex, long long>;
    bool enabled_;
    mutable std::mutex mutex_;
    std::map<Key, FeaturePoint> entries_;
    mutable std::atomic<std::uint64_t> hits_{0};
    mutable std::atomic<std::uint64_t> misses_{0};
};

/// Per-partition count of objects whose latest fix at or before t lies in
/// that partition.
std::vector<std::size_t> last_baseline(const TrajectoryStore& store, const Topology& topo, double t);

enum class PredictorMode { se, me, last };
std::string to_string(PredictorMode mode);

struct EngineConfig {
    PredictorMode mode = PredictorMode::me;
    double validity = 120.0;
    double delta = 60.0;  // feature grid spacing
    double sigma_floor = 1e-6;
};

/// Models and data an engine draws predictions from. Only the members used
/// by the chosen mode need to be set.
struct PredictorBackend {
    SeModel* se = nullptr;
    MeModel* me = nullptr;
    const PopulationExtractor* extractor = nullptr;
    const TrajectoryStore* store = nullptr;
    FeatureCache* features = nullptr;
};

struct Emission {
    double t_q = 0.0;
    std::vector<PartitionIndex> populated;  // ascending partition index
    double elapsed_ms = 0.0;
    std::uint64_t predict_calls = 0;
    std::uint64_t cache_hits = 0;
};

using LocationProvider = std::function<std::optional<Location>(double)>;

class CmppEngine {
public:
    CmppEngine(const Topology& topo, CmppQuery query, EngineConfig config, PredictorBackend backend);

    /// Runs the monitoring loop on a simulated clock.
    std::vector<Emission> run(const LocationProvider& user);

    /// Range search from l; returns populated partitions in discovery order.
    std::vector<PartitionIndex> search(const Location& l, double t_q);
    /// Partitions reached by the range search regardless of population, in
    /// discovery order. Makes no predictions.
    std::vector<PartitionIndex> reachable(const Location& l) const;

    bool is_populated(PartitionIndex v, double t_q);
    void population(PartitionIndex v, double t_q);

    Prediction se_predict(PartitionIndex v, double t_q);
    std::pair<std::vector<double>, std::vector<double>> me_predict(double t_q);
    /// Most recent global prediction timestamp at or before t_q.
    double global_prediction_time(double t_q) const;

    const ResultCache& results() const noexcept { return results_; }
    std::uint64_t predict_calls() const noexcept { return predict_calls_; }
    std::uint64_t feature_hits() const noexcept { return feature_hits_; }
    std::uint64_t extract_calls() const noexcept { return extract_calls_; }
    std::uint64_t paused_ticks() const noexcept { return paused_ticks_; }
    const CmppQuery& query() const noexcept { return query_; }
    const EngineConfig& config() const noexcept { return config_; }

private:
    FeaturePoint feature(PartitionIndex v, double t);
    void fill_grid_time(double t, std::vector<FeaturePoint>& out);
    template <class Visit>
    void expand(const Location& l, Visit&& visit) const;

    const Topology& topo_;
    CmppQuery query_;
    EngineConfig config_;
    PredictorBackend backend_;
    FeatureCache local_features_{false};
    std::size_t validity_steps_ = 0;  // M
    ResultCache results_;
    std::optional<std::pair<double, std::vector<std::size_t>>> last_counts_;
    std::uint64_t predict_calls_ = 0;
    std::uint64_t feature_hits_ = 0;
    std::uint64_t extract_calls_ = 0;
    std::uint64_t paused_ticks_ = 0;
};

}  // namespace popmon
