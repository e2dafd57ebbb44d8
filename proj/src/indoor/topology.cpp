#include "popmon/indoor_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace popmon {
namespace {

using nlohmann::json;

bool contains_index(const std::vector<std::size_t>& v, std::size_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

DoorKind parse_kind(const std::string& s, const std::string& door_id) {
    if (s == "normal") return DoorKind::normal;
    if (s == "stair") return DoorKind::stair;
    if (s == "exterior") return DoorKind::exterior;
    throw TopologyError("unknown door kind '" + s + "'", door_id);
}

}  // namespace

std::string_view to_string(DoorKind kind) {
    switch (kind) {
        case DoorKind::normal: return "normal";
        case DoorKind::stair: return "stair";
        case DoorKind::exterior: return "exterior";
    }
    return "normal";
}

Topology Topology::build(int floor_count, std::vector<Partition> partitions, std::vector<Door> doors) {
    if (floor_count < 1) throw TopologyError("floor count must be positive", "floors");

    Topology topo;
    topo.floor_count_ = floor_count;
    topo.partitions_ = std::move(partitions);
    topo.doors_ = std::move(doors);

    for (PartitionIndex v = 0; v < topo.partitions_.size(); ++v) {
        const Partition& p = topo.partitions_[v];
        if (p.id.empty()) throw TopologyError("partition id must not be empty", "partition#" + std::to_string(v));
        if (!topo.partition_lookup_.emplace(p.id, v).second) throw TopologyError("duplicate partition id", p.id);
        if (p.floor < 0 || p.floor >= floor_count) throw TopologyError("partition floor out of range", p.id);
        for (const Point2& q : p.boundary) {
            if (!std::isfinite(q.x) || !std::isfinite(q.y)) throw TopologyError("non-finite polygon vertex", p.id);
        }
        if (!geometry::polygon_is_simple(p.boundary)) throw TopologyError("partition polygon is not simple", p.id);
        if (std::abs(geometry::polygon_area(p.boundary)) < kGeometryEpsilon) {
            throw TopologyError("partition polygon is degenerate", p.id);
        }
    }
    for (DoorIndex d = 0; d < topo.doors_.size(); ++d) {
        const Door& door = topo.doors_[d];
        if (door.id.empty()) throw TopologyError("door id must not be empty", "door#" + std::to_string(d));
        if (!topo.door_lookup_.emplace(door.id, d).second) throw TopologyError("duplicate door id", door.id);
    }

    // Index bounds were checked by the loader; re-check for direct builders.
    for (const Door& door : topo.doors_) {
        for (PartitionIndex v : door.enterable_partitions) {
            if (v >= topo.partitions_.size()) throw TopologyError("door references unknown partition", door.id);
        }
        for (PartitionIndex v : door.leaveable_partitions) {
            if (v >= topo.partitions_.size()) throw TopologyError("door references unknown partition", door.id);
        }
    }
    for (const Partition& p : topo.partitions_) {
        for (DoorIndex d : p.enterable_doors) {
            if (d >= topo.doors_.size()) throw TopologyError("partition references unknown door", p.id);
        }
        for (DoorIndex d : p.leaveable_doors) {
            if (d >= topo.doors_.size()) throw TopologyError("partition references unknown door", p.id);
        }
    }

    // Mapping duality, checked from both sides.
    for (DoorIndex d = 0; d < topo.doors_.size(); ++d) {
        const Door& door = topo.doors_[d];
        for (PartitionIndex v : door.enterable_partitions) {
            if (!contains_index(topo.partitions_[v].enterable_doors, d)) {
                throw TopologyError("enterable mapping mismatch with partition " + topo.partitions_[v].id, door.id);
            }
        }
        for (PartitionIndex v : door.leaveable_partitions) {
            if (!contains_index(topo.partitions_[v].leaveable_doors, d)) {
                throw TopologyError("leaveable mapping mismatch with partition " + topo.partitions_[v].id, door.id);
            }
        }
    }
    for (PartitionIndex v = 0; v < topo.partitions_.size(); ++v) {
        const Partition& p = topo.partitions_[v];
        for (DoorIndex d : p.enterable_doors) {
            if (!contains_index(topo.doors_[d].enterable_partitions, v)) {
                throw TopologyError("enterable mapping mismatch with door " + topo.doors_[d].id, p.id);
            }
        }
        for (DoorIndex d : p.leaveable_doors) {
            if (!contains_index(topo.doors_[d].leaveable_partitions, v)) {
                throw TopologyError("leaveable mapping mismatch with door " + topo.doors_[d].id, p.id);
            }
        }
    }

    // Door arity, floors and placement.
    for (DoorIndex d = 0; d < topo.doors_.size(); ++d) {
        const Door& door = topo.doors_[d];
        if (!std::isfinite(door.position.x) || !std::isfinite(door.position.y)) {
            throw TopologyError("non-finite door position", door.id);
        }
        if (door.position.floor < 0 || door.position.floor >= floor_count) {
            throw TopologyError("door floor out of range", door.id);
        }
        std::set<PartitionIndex> incident(door.enterable_partitions.begin(), door.enterable_partitions.end());
        incident.insert(door.leaveable_partitions.begin(), door.leaveable_partitions.end());
        if (door.kind == DoorKind::exterior) {
            if (incident.size() != 1) throw TopologyError("exterior door must touch exactly one partition", door.id);
        } else if (incident.size() != 2) {
            throw TopologyError("door must connect exactly two partitions", door.id);
        }
        const Point2 pos{door.position.x, door.position.y};
        for (PartitionIndex v : incident) {
            const Partition& p = topo.partitions_[v];
            const double gap = geometry::distance_to_boundary(p.boundary, pos);
            if (door.kind == DoorKind::stair) {
                if (gap > kGeometryEpsilon && !geometry::contains(p.boundary, pos)) {
                    throw TopologyError("stair door lies outside partition " + p.id, door.id);
                }
            } else {
                if (p.floor != door.position.floor) throw TopologyError("door floor differs from partition " + p.id, door.id);
                if (gap > kGeometryEpsilon) throw TopologyError("door is not on the boundary of partition " + p.id, door.id);
            }
        }
        if (incident.size() == 2) {
            topo.edges_.push_back(GraphEdge{*incident.begin(), *std::next(incident.begin()), d});
        }
    }
    return topo;
}

std::optional<PartitionIndex> Topology::find_partition(std::string_view id) const {
    auto it = partition_lookup_.find(std::string(id));
    if (it == partition_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<DoorIndex> Topology::find_door(std::string_view id) const {
    auto it = door_lookup_.find(std::string(id));
    if (it == door_lookup_.end()) return std::nullopt;
    return it->second;
}

PartitionIndex Topology::partition_index(std::string_view id) const {
    if (auto v = find_partition(id)) return *v;
    throw TopologyError("unknown partition id", std::string(id));
}

DoorIndex Topology::door_index(std::string_view id) const {
    if (auto d = find_door(id)) return *d;
    throw TopologyError("unknown door id", std::string(id));
}

std::optional<PartitionIndex> Topology::try_host_partition(const Location& l) const {
    try {
        return host_partition(l);
    } catch (const LocationError&) {
        return std::nullopt;
    }
}

PartitionIndex Topology::host_partition(const Location& l) const {
    if (l.floor < 0 || l.floor >= floor_count_) {
        throw LocationError(LocationErrorCode::invalid_floor, "location floor out of range");
    }
    if (!std::isfinite(l.x) || !std::isfinite(l.y)) {
        throw LocationError(LocationErrorCode::outside_all_partitions, "non-finite location");
    }
    const Point2 p{l.x, l.y};
    std::optional<PartitionIndex> host;
    for (PartitionIndex v = 0; v < partitions_.size(); ++v) {
        const Partition& part = partitions_[v];
        if (part.floor != l.floor) continue;
        const bool inside = geometry::contains(part.boundary, p);
        const double gap = geometry::distance_to_boundary(part.boundary, p);
        if (gap <= kGeometryEpsilon) {
            throw LocationError(LocationErrorCode::on_boundary, "location lies on the boundary of " + part.id);
        }
        if (!inside) continue;
        if (host) {
            throw LocationError(LocationErrorCode::on_boundary,
                                "location is claimed by both " + partitions_[*host].id + " and " + part.id);
        }
        host = v;
    }
    if (!host) throw LocationError(LocationErrorCode::outside_all_partitions, "location is outside all partitions");
    return *host;
}

bool Topology::door_incident(PartitionIndex v, DoorIndex d) const {
    const Partition& p = partitions_.at(v);
    return contains_index(p.enterable_doors, d) || contains_index(p.leaveable_doors, d);
}

double Topology::door_to_door_distance(PartitionIndex v, DoorIndex from, DoorIndex to) const {
    if (!door_incident(v, from)) throw TopologyError("door not incident to partition " + partitions_.at(v).id, doors_.at(from).id);
    if (!door_incident(v, to)) throw TopologyError("door not incident to partition " + partitions_.at(v).id, doors_.at(to).id);
    return euclidean(doors_[from].position, doors_[to].position);
}

std::vector<std::vector<int>> Topology::adjacency_matrix() const {
    const std::size_t n = partitions_.size();
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (const GraphEdge& e : edges_) {
        a[e.a][e.b] = 1;
        a[e.b][e.a] = 1;
    }
    return a;
}

Topology load_topology(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw TopologyError(std::string("malformed topology document: ") + e.what(), "document");
    }

    auto require = [](const json& obj, const char* key, const std::string& owner) -> const json& {
        if (!obj.is_object() || !obj.contains(key)) {
            throw TopologyError(std::string("missing field '") + key + "'", owner);
        }
        return obj.at(key);
    };

    try {
        const int floors = require(doc, "floors", "document").get<int>();
        const json& jparts = require(doc, "partitions", "document");
        const json& jdoors = require(doc, "doors", "document");
        if (!jparts.is_array() || !jdoors.is_array()) throw TopologyError("partitions and doors must be arrays", "document");

        std::unordered_map<std::string, PartitionIndex> pidx;
        std::unordered_map<std::string, DoorIndex> didx;
        for (std::size_t i = 0; i < jparts.size(); ++i) {
            const std::string id = require(jparts[i], "id", "partition#" + std::to_string(i)).get<std::string>();
            if (!pidx.emplace(id, i).second) throw TopologyError("duplicate partition id", id);
        }
        for (std::size_t i = 0; i < jdoors.size(); ++i) {
            const std::string id = require(jdoors[i], "id", "door#" + std::to_string(i)).get<std::string>();
            if (!didx.emplace(id, i).second) throw TopologyError("duplicate door id", id);
        }

        auto door_refs = [&](const json& arr, const std::string& owner) {
            std::vector<DoorIndex> out;
            for (const auto& ref : arr) {
                const std::string id = ref.get<std::string>();
                auto it = didx.find(id);
                if (it == didx.end()) throw TopologyError("dangling door id '" + id + "' in partition " + owner, id);
                out.push_back(it->second);
            }
            return out;
        };
        auto partition_refs = [&](const json& arr, const std::string& owner) {
            std::vector<PartitionIndex> out;
            for (const auto& ref : arr) {
                const std::string id = ref.get<std::string>();
                auto it = pidx.find(id);
                if (it == pidx.end()) throw TopologyError("dangling partition id '" + id + "' in door " + owner, id);
                out.push_back(it->second);
            }
            return out;
        };

        std::vector<Partition> partitions;
        for (const json& jp : jparts) {
            Partition p;
            p.id = jp.at("id").get<std::string>();
            p.floor = require(jp, "floor", p.id).get<int>();
            for (const json& vertex : require(jp, "polygon", p.id)) {
                if (!vertex.is_array() || vertex.size() != 2) throw TopologyError("polygon vertex must be [x, y]", p.id);
                p.boundary.push_back({vertex[0].get<double>(), vertex[1].get<double>()});
            }
            p.enterable_doors = door_refs(require(jp, "enterable_doors", p.id), p.id);
            p.leaveable_doors = door_refs(require(jp, "leaveable_doors", p.id), p.id);
            partitions.push_back(std::move(p));
        }

        std::vector<Door> doors;
        for (const json& jd : jdoors) {
            Door d;
            d.id = jd.at("id").get<std::string>();
            d.position.x = require(jd, "x", d.id).get<double>();
            d.position.y = require(jd, "y", d.id).get<double>();
            d.position.floor = jd.value("floor", 0);
            d.kind = parse_kind(jd.value("kind", std::string("normal")), d.id);
            d.enterable_partitions = partition_refs(require(jd, "enterable_partitions", d.id), d.id);
            d.leaveable_partitions = partition_refs(require(jd, "leaveable_partitions", d.id), d.id);
            doors.push_back(std::move(d));
        }
        return Topology::build(floors, std::move(partitions), std::move(doors));
    } catch (const json::exception& e) {
        throw TopologyError(std::string("schema violation: ") + e.what(), "document");
    }
}

Topology load_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TopologyError("cannot open topology file", path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_topology(buffer.str());
}

std::string topology_to_json(const Topology& topo) {
    json doc;
    doc["floors"] = topo.floor_count();
    doc["partitions"] = json::array();
    for (const Partition& p : topo.partitions()) {
        json jp;
        jp["id"] = p.id;
        jp["floor"] = p.floor;
        jp["polygon"] = json::array();
        for (const Point2& q : p.boundary) jp["polygon"].push_back({q.x, q.y});
        jp["enterable_doors"] = json::array();
        for (DoorIndex d : p.enterable_doors) jp["enterable_doors"].push_back(topo.door(d).id);
        jp["leaveable_doors"] = json::array();
        for (DoorIndex d : p.leaveable_doors) jp["leaveable_doors"].push_back(topo.door(d).id);
        doc["partitions"].push_back(std::move(jp));
    }
    doc["doors"] = json::array();
    for (const Door& d : topo.doors()) {
        json jd;
        jd["id"] = d.id;
        jd["x"] = d.position.x;
        jd["y"] = d.position.y;
        jd["floor"] = d.position.floor;
        jd["kind"] = std::string(to_string(d.kind));
        jd["enterable_partitions"] = json::array();
        for (PartitionIndex v : d.enterable_partitions) jd["enterable_partitions"].push_back(topo.partition(v).id);
        jd["leaveable_partitions"] = json::array();
        for (PartitionIndex v : d.leaveable_partitions) jd["leaveable_partitions"].push_back(topo.partition(v).id);
        doc["doors"].push_back(std::move(jd));
    }
    return doc.dump(2);
}

}  // namespace popmon
