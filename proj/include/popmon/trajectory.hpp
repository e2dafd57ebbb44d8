#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "popmon/indoor_model.hpp"
#include "popmon/rng.hpp"

namespace popmon {

/// One reported fix (o, l, t).
struct PositioningRecord {
    std::string object;
    Location location;
    double time = 0.0;
};

struct TimedLocation {
    Location location;
    double time = 0.0;
};

/// Time-ordered fixes of one object, strictly increasing in time.
struct Trajectory {
    std::string object;
    std::vector<TimedLocation> records;
};

/// Two consecutive fixes of one object whose interval contains a query time.
struct BracketingPair {
    std::string object;
    Location start;
    double start_time = 0.0;
    Location end;
    double end_time = 0.0;
};

class TrajectoryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrajectoryStore {
public:
    TrajectoryStore() = default;

    /// Sorts rows per object by time. Duplicate (object, time) pairs and
    /// non-finite values are rejected.
    static TrajectoryStore ingest(std::span<const PositioningRecord> rows);

    const std::map<std::string, Trajectory>& trajectories() const noexcept { return by_object_; }
    std::size_t object_count() const noexcept { return by_object_.size(); }
    std::size_t record_count() const noexcept;
    const Trajectory* find(const std::string& object) const;

    /// At most one pair per object with start_time <= t <= end_time. When t
    /// equals an interior fix time, the pair starting at that fix is used.
    std::vector<BracketingPair> bracketing_pairs(double t) const;

    /// Most recent fix at or before t, if any.
    std::optional<TimedLocation> last_at_or_before(const std::string& object, double t) const;

    std::vector<PositioningRecord> rows() const;

private:
    std::map<std::string, Trajectory> by_object_;
};

/// `object_id,x,y,floor,timestamp_s` with a header line.
std::vector<PositioningRecord> read_trajectory_csv(std::istream& in);
void write_trajectory_csv(std::ostream& out, std::span<const PositioningRecord> rows);

/// Parameters of the synthetic movement generator.
struct MovementConfig {
    std::size_t object_count = 60;
    double dwell_min = 1.0;
    double dwell_max = 500.0;
    double speed = 1.2;
    double interval_min = 5.0;
    double interval_max = 48.0;
    double duration = 4.0 * 3600.0;
    std::uint64_t seed = 1;
    /// Optional per-partition weights for choosing the next waypoint's
    /// partition; empty means uniform.
    std::vector<double> partition_weights;
    /// Optional schedule: partition weights that change every `period`
    /// seconds, cycling. Overrides partition_weights when nonempty.
    std::vector<std::vector<double>> weight_schedule;
    double schedule_period = 600.0;
    /// Prefix of generated object ids.
    std::string id_prefix = "o";

    void validate() const;
};

/// A leg of straight motion (or a pause when from == to) inside one partition.
struct TraceSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    Location from;
    Location to;
    PartitionIndex partition = 0;
};

/// Continuous ground truth for one object: contiguous segments covering
/// [0, duration].
class DenseTrace {
public:
    DenseTrace() = default;
    DenseTrace(std::string object, std::vector<TraceSegment> segments);

    const std::string& object() const noexcept { return object_; }
    const std::vector<TraceSegment>& segments() const noexcept { return segments_; }
    double start_time() const;
    double end_time() const;

    /// Half-open segments: a door crossing at time t belongs to the next partition.
    std::optional<PartitionIndex> partition_at(double t) const;
    std::optional<Location> location_at(double t) const;

private:
    const TraceSegment* segment_at(double t) const;

    std::string object_;
    std::vector<TraceSegment> segments_;
};

/// Straight-line walk between two locations through the shortest door
/// sequence, starting at t_start at constant speed.
std::vector<TraceSegment> plan_walk(const Topology& topo, const Location& from, const Location& to, double t_start,
                                    double speed);

/// Uniform point strictly inside a partition.
Location sample_interior(const Topology& topo, PartitionIndex v, StreamRng& rng);

struct Movement {
    std::vector<DenseTrace> dense;
    std::vector<PositioningRecord> sparse;
};

/// Deterministic in (topo, config). Objects never leave the building.
Movement generate_movement(const Topology& topo, const MovementConfig& config);

/// Sparse fixes sampled from one dense trace with uniform gaps.
std::vector<PositioningRecord> sample_trace(const DenseTrace& trace, double interval_min, double interval_max,
                                            StreamRng& rng);

/// Number of objects whose true partition at t is v.
std::size_t true_population(std::span<const DenseTrace> traces, PartitionIndex v, double t);

/// `object_id,partition_id,t_start,t_end` rows, consecutive segments in the same partition merged.
void write_ground_truth_csv(std::ostream& out, const Topology& topo, std::span<const DenseTrace> traces);
/// Partition-only traces: segment locations are not stored in the CSV and
/// are left at the origin, so only partition_at is meaningful.
std::vector<DenseTrace> read_ground_truth_csv(std::istream& in, const Topology& topo);

}  // namespace popmon
