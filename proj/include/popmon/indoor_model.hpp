#pragma once

// Indoor space model: partitions, doors, the directional door/partition
// mappings and the undirected indoor graph shared by the extractor, the
// movement simulator and the multi-way estimator.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace popmon {

using PartitionIndex = std::size_t;
using DoorIndex = std::size_t;

inline constexpr double kGeometryEpsilon = 1e-6;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// A 2D point on a given floor (meters).
struct Location {
    double x = 0.0;
    double y = 0.0;
    int floor = 0;

    friend bool operator==(const Location&, const Location&) = default;
};

/// Planar Euclidean distance; floors are ignored (stairs carry no vertical length).
double euclidean(const Location& a, const Location& b);

enum class DoorKind { normal, stair, exterior };

std::string_view to_string(DoorKind kind);

struct Door {
    std::string id;
    Location position;
    DoorKind kind = DoorKind::normal;
    std::vector<PartitionIndex> enterable_partitions;  // D2P enter
    std::vector<PartitionIndex> leaveable_partitions;  // D2P leave
};

struct Partition {
    std::string id;
    int floor = 0;
    std::vector<Point2> boundary;
    std::vector<DoorIndex> enterable_doors;  // P2D enter
    std::vector<DoorIndex> leaveable_doors;  // P2D leave
};

/// One undirected connection of the indoor graph: a door joining two
/// distinct partitions.
struct GraphEdge {
    PartitionIndex a = 0;
    PartitionIndex b = 0;
    DoorIndex door = 0;
};

class TopologyError : public std::runtime_error {
public:
    TopologyError(const std::string& message, std::string offending_id)
        : std::runtime_error(message + " [" + offending_id + "]"), offending_id_(std::move(offending_id)) {}

    const std::string& offending_id() const noexcept { return offending_id_; }

private:
    std::string offending_id_;
};

enum class LocationErrorCode { outside_all_partitions, on_boundary, invalid_floor };

class LocationError : public std::runtime_error {
public:
    LocationError(LocationErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    LocationErrorCode code() const noexcept { return code_; }

private:
    LocationErrorCode code_;
};

/// Immutable venue description. Built only through `Topology::build` (or
/// `load_topology`), which validates every invariant.
class Topology {
public:
    /// Validates ids, mapping duality, polygons and door placement, then
    /// derives the graph edges. Throws TopologyError naming the offending id.
    static Topology build(int floor_count, std::vector<Partition> partitions, std::vector<Door> doors);

    int floor_count() const noexcept { return floor_count_; }
    std::size_t partition_count() const noexcept { return partitions_.size(); }
    std::size_t door_count() const noexcept { return doors_.size(); }

    const std::vector<Partition>& partitions() const noexcept { return partitions_; }
    const std::vector<Door>& doors() const noexcept { return doors_; }
    const Partition& partition(PartitionIndex v) const { return partitions_.at(v); }
    const Door& door(DoorIndex d) const { return doors_.at(d); }
    const std::vector<GraphEdge>& graph_edges() const noexcept { return edges_; }

    std::optional<PartitionIndex> find_partition(std::string_view id) const;
    std::optional<DoorIndex> find_door(std::string_view id) const;
    PartitionIndex partition_index(std::string_view id) const;
    DoorIndex door_index(std::string_view id) const;

    /// Partition strictly containing `l`. Throws LocationError when the point
    /// is outside every partition or lies on a partition boundary.
    PartitionIndex host_partition(const Location& l) const;

    /// Non-throwing variant of host_partition.
    std::optional<PartitionIndex> try_host_partition(const Location& l) const;

    bool door_incident(PartitionIndex v, DoorIndex d) const;

    /// Straight-line length between two doors of the same partition.
    double door_to_door_distance(PartitionIndex v, DoorIndex from, DoorIndex to) const;

    /// Symmetric 0/1 matrix over partitions with zero diagonal. One-way doors
    /// still produce an undirected edge.
    std::vector<std::vector<int>> adjacency_matrix() const;

private:
    Topology() = default;

    int floor_count_ = 1;
    std::vector<Partition> partitions_;
    std::vector<Door> doors_;
    std::vector<GraphEdge> edges_;
    std::unordered_map<std::string, PartitionIndex> partition_lookup_;
    std::unordered_map<std::string, DoorIndex> door_lookup_;
};

/// Parses the topology JSON document (see README for the schema).
Topology load_topology(std::string_view json_text);
Topology load_topology_file(const std::string& path);
std::string topology_to_json(const Topology& topo);

namespace geometry {

double polygon_area(const std::vector<Point2>& polygon);
bool polygon_is_simple(const std::vector<Point2>& polygon);
double distance_to_boundary(const std::vector<Point2>& polygon, Point2 p);
/// Even-odd containment test; callers decide boundary handling separately.
bool contains(const std::vector<Point2>& polygon, Point2 p);
Point2 centroid(const std::vector<Point2>& polygon);

}  // namespace geometry

/// Shortest door sequence between two locations, following doors in their
/// allowed direction. Ties go to the lexicographically smaller door-id
/// sequence.
struct Route {
    std::vector<DoorIndex> doors;
    std::vector<PartitionIndex> partitions;  // doors.size() + 1 entries
    double length = 0.0;
};

std::optional<Route> shortest_route(const Topology& topo, const Location& from, const Location& to);

}  // namespace popmon
