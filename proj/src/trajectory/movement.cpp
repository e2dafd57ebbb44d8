#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "popmon/trajectory.hpp"

namespace popmon {
namespace {

// Minimum clearance of sampled waypoints from partition walls.
constexpr double kWallClearance = 0.05;

PartitionIndex pick_partition(const std::vector<double>& weights, std::size_t count, StreamRng& rng) {
    if (weights.empty()) return static_cast<PartitionIndex>(rng.below(count));
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) return i;
    }
    return 0;
}

const std::vector<double>& weights_at(const MovementConfig& config, double t) {
    if (config.weight_schedule.empty()) return config.partition_weights;
    const auto slot = static_cast<std::size_t>(std::floor(t / config.schedule_period));
    return config.weight_schedule[slot % config.weight_schedule.size()];
}

void push_leg(std::vector<TraceSegment>& out, const Location& from, const Location& to, PartitionIndex v,
              double& t, double speed) {
    const double dt = euclidean(from, to) / speed;
    if (dt <= 0.0) return;
    out.push_back({t, t + dt, from, to, v});
    t += dt;
}

}  // namespace

void MovementConfig::validate() const {
    auto fail = [](const std::string& what) { throw TrajectoryError("invalid movement config: " + what); };
    if (dwell_min < 0.0 || dwell_max < dwell_min) fail("dwell range");
    if (!(speed > 0.0)) fail("speed must be positive");
    if (!(interval_min > 0.0) || interval_max < interval_min) fail("interval range");
    if (!(duration > 0.0)) fail("duration must be positive");
    if (!(schedule_period > 0.0)) fail("schedule period must be positive");
    auto check_weights = [&](const std::vector<double>& w) {
        if (w.empty()) return;
        double total = 0.0;
        for (double x : w) {
            if (!(x >= 0.0) || !std::isfinite(x)) fail("negative or non-finite partition weight");
            total += x;
        }
        if (!(total > 0.0)) fail("partition weights sum to zero");
    };
    check_weights(partition_weights);
    for (const auto& w : weight_schedule) {
        if (w.empty()) fail("empty weight schedule slot");
        check_weights(w);
    }
}

DenseTrace::DenseTrace(std::string object, std::vector<TraceSegment> segments)
    : object_(std::move(object)), segments_(std::move(segments)) {}

double DenseTrace::start_time() const { return segments_.empty() ? 0.0 : segments_.front().t_start; }
double DenseTrace::end_time() const { return segments_.empty() ? 0.0 : segments_.back().t_end; }

const TraceSegment* DenseTrace::segment_at(double t) const {
    if (segments_.empty() || t < segments_.front().t_start || t > segments_.back().t_end) return nullptr;
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double value, const TraceSegment& s) { return value < s.t_start; });
    if (it == segments_.begin()) return nullptr;
    return &*std::prev(it);
}

std::optional<PartitionIndex> DenseTrace::partition_at(double t) const {
    const TraceSegment* s = segment_at(t);
    if (s == nullptr) return std::nullopt;
    return s->partition;
}

std::optional<Location> DenseTrace::location_at(double t) const {
    const TraceSegment* s = segment_at(t);
    if (s == nullptr) return std::nullopt;
    const double span = s->t_end - s->t_start;
    const double a = span > 0.0 ? std::clamp((t - s->t_start) / span, 0.0, 1.0) : 0.0;
    Location l = s->from;
    l.x = s->from.x + a * (s->to.x - s->from.x);
    l.y = s->from.y + a * (s->to.y - s->from.y);
    if (a >= 1.0) l.floor = s->to.floor;
    return l;
}

std::vector<TraceSegment> plan_walk(const Topology& topo, const Location& from, const Location& to, double t_start,
                                    double speed) {
    const auto route = shortest_route(topo, from, to);
    if (!route) throw TrajectoryError("unreachable waypoint pair");
    std::vector<TraceSegment> out;
    double t = t_start;
    Location at = from;
    for (std::size_t i = 0; i <= route->doors.size(); ++i) {
        const PartitionIndex v = route->partitions[i];
        Location next = i < route->doors.size() ? topo.door(route->doors[i]).position : to;
        next.floor = i < route->doors.size() ? next.floor : to.floor;
        const Partition& p = topo.partition(v);
        const Point2 mid{(at.x + next.x) / 2.0, (at.y + next.y) / 2.0};
        if (euclidean(at, next) > 0.0 && geometry::distance_to_boundary(p.boundary, mid) < 1e-3) {
            // two doors on one wall: cut through the room instead of walking along it
            const Point2 c = geometry::centroid(p.boundary);
            const Location via{c.x, c.y, p.floor};
            push_leg(out, at, via, v, t, speed);
            push_leg(out, via, next, v, t, speed);
        } else {
            push_leg(out, at, next, v, t, speed);
        }
        at = next;
        if (i < route->doors.size()) at.floor = topo.partition(route->partitions[i + 1]).floor;
    }
    return out;
}

Location sample_interior(const Topology& topo, PartitionIndex v, StreamRng& rng) {
    const Partition& p = topo.partition(v);
    double lo_x = p.boundary.front().x, hi_x = lo_x, lo_y = p.boundary.front().y, hi_y = lo_y;
    for (const Point2& q : p.boundary) {
        lo_x = std::min(lo_x, q.x);
        hi_x = std::max(hi_x, q.x);
        lo_y = std::min(lo_y, q.y);
        hi_y = std::max(hi_y, q.y);
    }
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const Point2 q{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
        if (geometry::contains(p.boundary, q) && geometry::distance_to_boundary(p.boundary, q) > kWallClearance) {
            const Location l{q.x, q.y, p.floor};
            if (topo.try_host_partition(l) == v) return l;
        }
    }
    throw TrajectoryError("could not sample an interior point of partition " + p.id);
}

std::vector<PositioningRecord> sample_trace(const DenseTrace& trace, double interval_min, double interval_max,
                                            StreamRng& rng) {
    std::vector<PositioningRecord> out;
    double t = trace.start_time() + rng.uniform(0.0, interval_max);
    while (t <= trace.end_time()) {
        if (auto l = trace.location_at(t)) out.push_back({trace.object(), *l, t});
        t += rng.uniform(interval_min, interval_max);
    }
    return out;
}

Movement generate_movement(const Topology& topo, const MovementConfig& config) {
    config.validate();
    if (topo.partition_count() == 0) throw TrajectoryError("building has no partitions");
    auto check_len = [&](const std::vector<double>& w) {
        if (!w.empty() && w.size() != topo.partition_count()) {
            throw TrajectoryError("partition weight count does not match the building");
        }
    };
    check_len(config.partition_weights);
    for (const auto& w : config.weight_schedule) check_len(w);

    Movement movement;
    const std::size_t width = std::to_string(config.object_count == 0 ? 0 : config.object_count - 1).size();
    for (std::size_t i = 0; i < config.object_count; ++i) {
        StreamRng rng(derive_key(config.seed, i));
        std::string id = std::to_string(i);
        id = config.id_prefix + std::string(width - id.size(), '0') + id;

        std::vector<TraceSegment> segments;
        double t = 0.0;
        Location at = sample_interior(topo, pick_partition(weights_at(config, t), topo.partition_count(), rng), rng);
        while (t < config.duration) {
            const double dwell = rng.uniform(config.dwell_min, config.dwell_max);
            const PartitionIndex here = topo.host_partition(at);
            segments.push_back({t, t + dwell, at, at, here});
            t += dwell;
            if (t >= config.duration) break;
            const PartitionIndex target = pick_partition(weights_at(config, t), topo.partition_count(), rng);
            const Location next = sample_interior(topo, target, rng);
            auto walk = plan_walk(topo, at, next, t, config.speed);
            segments.insert(segments.end(), walk.begin(), walk.end());
            if (!walk.empty()) t = walk.back().t_end;
            at = next;
        }
        // clip to the horizon; a moving leg cut short keeps its interpolation
        std::vector<TraceSegment> clipped;
        for (TraceSegment s : segments) {
            if (s.t_start >= config.duration) break;
            if (s.t_end > config.duration) {
                const double a = (config.duration - s.t_start) / (s.t_end - s.t_start);
                s.to.x = s.from.x + a * (s.to.x - s.from.x);
                s.to.y = s.from.y + a * (s.to.y - s.from.y);
                s.to.floor = s.from.floor;
                s.t_end = config.duration;
            }
            clipped.push_back(s);
        }
        DenseTrace trace(id, std::move(clipped));
        StreamRng sample_rng = rng.split(0x5a11);
        for (PositioningRecord& r : sample_trace(trace, config.interval_min, config.interval_max, sample_rng)) {
            // a fix landing exactly on a door point has no unique host; nudge it
            while (!topo.try_host_partition(r.location) && r.time + 1e-3 <= trace.end_time()) {
                r.time += 1e-3;
                r.location = *trace.location_at(r.time);
            }
            if (topo.try_host_partition(r.location)) movement.sparse.push_back(std::move(r));
        }
        movement.dense.push_back(std::move(trace));
    }
    return movement;
}

std::size_t true_population(std::span<const DenseTrace> traces, PartitionIndex v, double t) {
    std::size_t n = 0;
    for (const DenseTrace& tr : traces) {
        if (tr.partition_at(t) == v) ++n;
    }
    return n;
}

void write_ground_truth_csv(std::ostream& out, const Topology& topo, std::span<const DenseTrace> traces) {
    out << "object_id,partition_id,t_start,t_end\n";
    char buf[96];
    for (const DenseTrace& tr : traces) {
        const auto& segs = tr.segments();
        for (std::size_t i = 0; i < segs.size();) {
            std::size_t j = i;
            while (j + 1 < segs.size() && segs[j + 1].partition == segs[i].partition) ++j;
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", segs[i].t_start, segs[j].t_end);
            out << tr.object() << ',' << topo.partition(segs[i].partition).id << buf;
            i = j + 1;
        }
    }
}

std::vector<DenseTrace> read_ground_truth_csv(std::istream& in, const Topology& topo) {
    std::map<std::string, std::vector<TraceSegment>> by_object;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("object_id", 0) == 0) continue;
        std::istringstream row(line);
        std::string object, partition, t0, t1;
        if (!std::getline(row, object, ',') || !std::getline(row, partition, ',') || !std::getline(row, t0, ',') ||
            !std::getline(row, t1)) {
            throw TrajectoryError("malformed ground-truth row on line " + std::to_string(line_no));
        }
        TraceSegment seg;
        try {
            seg.t_start = std::stod(t0);
            seg.t_end = std::stod(t1);
        } catch (const std::exception&) {
            throw TrajectoryError("malformed time on line " + std::to_string(line_no));
        }
        seg.partition = topo.partition_index(partition);
        by_object[object].push_back(seg);
    }
    std::vector<DenseTrace> out;
    for (auto& [object, segs] : by_object) {
        std::sort(segs.begin(), segs.end(),
                  [](const TraceSegment& a, const TraceSegment& b) { return a.t_start < b.t_start; });
        out.emplace_back(object, std::move(segs));
    }
    return out;
}

}  // namespace popmon
