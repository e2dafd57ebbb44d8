#include <algorithm>
#include <cmath>

#include "popmon/harness.hpp"

namespace popmon {

PartitionIndex BuildingBuilder::add_room(const std::string& id, double x0, double y0, double x1, double y1,
                                         int floor) {
    Partition p;
    p.id = id;
    p.floor = floor;
    p.boundary = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    partitions_.push_back(std::move(p));
    return partitions_.size() - 1;
}

DoorIndex BuildingBuilder::add_door(const std::string& id, double x, double y, PartitionIndex a, PartitionIndex b,
                                    int floor) {
    const DoorIndex d = doors_.size();
    Door door;
    door.id = id;
    door.position = {x, y, floor};
    door.enterable_partitions = {a, b};
    door.leaveable_partitions = {a, b};
    doors_.push_back(std::move(door));
    for (PartitionIndex v : {a, b}) {
        partitions_.at(v).enterable_doors.push_back(d);
        partitions_.at(v).leaveable_doors.push_back(d);
    }
    return d;
}

DoorIndex BuildingBuilder::add_exterior_door(const std::string& id, double x, double y, PartitionIndex v, int floor) {
    const DoorIndex d = doors_.size();
    Door door;
    door.id = id;
    door.position = {x, y, floor};
    door.kind = DoorKind::exterior;
    door.enterable_partitions = {v};
    door.leaveable_partitions = {v};
    doors_.push_back(std::move(door));
    partitions_.at(v).enterable_doors.push_back(d);
    partitions_.at(v).leaveable_doors.push_back(d);
    return d;
}

Topology BuildingBuilder::build(int floors) const { return Topology::build(floors, partitions_, doors_); }

Topology example_building() {
    BuildingBuilder b;
    const auto v0 = b.add_room("v0", 8, 4, 16, 10);
    const auto v1 = b.add_room("v1", 0, 4, 8, 10);
    const auto v2 = b.add_room("v2", 24, 0, 34, 4);
    const auto v3 = b.add_room("v3", 8, 10, 24, 16);
    const auto v4 = b.add_room("v4", 16, 4, 24, 10);
    const auto v5 = b.add_room("v5", 24, 4, 34, 10);
    const auto v6 = b.add_room("v6", 0, 0, 24, 4);
    // two door abscissae are chosen so the worked path lengths come out exact
    b.add_door("d0", 8, 6, v0, v1);
    b.add_door("d1", 2.045187709998746, 4, v1, v6);
    b.add_door("d2", 24, 2, v6, v2);
    b.add_door("d3", 10.8, 4, v0, v6);
    b.add_door("d4", 14, 10, v3, v0);
    b.add_door("d5", 20.522366818760638, 4, v4, v6);
    b.add_door("d6", 29, 4, v2, v5);
    b.add_door("d7", 18, 10, v3, v4);
    b.add_exterior_door("d8", 34, 2, v2);
    return b.build();
}

Topology ring_building() {
    BuildingBuilder b;
    const auto r0 = b.add_room("r0", 0, 0, 10, 10);
    const auto r1 = b.add_room("r1", 10, 0, 20, 10);
    const auto r2 = b.add_room("r2", 20, 0, 30, 10);
    const auto r3 = b.add_room("r3", 20, 10, 30, 20);
    const auto r4 = b.add_room("r4", 10, 10, 20, 20);
    const auto r5 = b.add_room("r5", 0, 10, 10, 20);
    b.add_door("d0", 10, 5, r0, r1);
    b.add_door("d1", 20, 5, r1, r2);
    b.add_door("d2", 25, 10, r2, r3);
    b.add_door("d3", 20, 15, r3, r4);
    b.add_door("d4", 10, 15, r4, r5);
    b.add_door("d5", 5, 10, r5, r0);
    return b.build();
}

Topology corridor_building(const CorridorSpec& spec) {
    if (spec.segments == 0 || !(spec.segment_length > 0.0) || !(spec.corridor_width > 0.0) ||
        !(spec.room_depth > 0.0)) {
        throw ExperimentError("building", "corridor dimensions must be positive");
    }
    BuildingBuilder b;
    const double len = spec.segment_length, w = spec.corridor_width, depth = spec.room_depth;
    std::vector<PartitionIndex> corridor, below, above;
    for (std::size_t i = 0; i < spec.segments; ++i) {
        const double x0 = static_cast<double>(i) * len, x1 = x0 + len;
        corridor.push_back(b.add_room("c" + std::to_string(i), x0, depth, x1, depth + w));
        below.push_back(b.add_room("b" + std::to_string(i), x0, 0, x1, depth));
        above.push_back(b.add_room("a" + std::to_string(i), x0, depth + w, x1, 2 * depth + w));
    }
    std::size_t next_door = 0;
    auto door_id = [&] {
        char buf[16];
        std::snprintf(buf, sizeof buf, "d%02zu", next_door++);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < spec.segments; ++i) {
        const double mid = (static_cast<double>(i) + 0.5) * len;
        b.add_door(door_id(), mid, depth, below[i], corridor[i]);
        b.add_door(door_id(), mid, depth + w, corridor[i], above[i]);
        if (i + 1 < spec.segments) {
            const double x = static_cast<double>(i + 1) * len;
            b.add_door(door_id(), x, depth + w / 2, corridor[i], corridor[i + 1]);
            if (spec.side_links) {
                b.add_door(door_id(), x, depth / 2, below[i], below[i + 1]);
                b.add_door(door_id(), x, depth + w + depth / 2, above[i], above[i + 1]);
            }
        }
    }
    return b.build();
}

PopulationSeries migrating_crowd_series(const CrowdSpec& spec) {
    if (spec.partitions < 3 || spec.dwell_min == 0 || spec.dwell_max < spec.dwell_min) {
        throw ExperimentError("crowd", "invalid crowd parameters");
    }
    const std::size_t n = spec.partitions;
    StreamRng rng(derive_key(spec.seed, fnv1a64("crowd")));
    PopulationSeries s;
    s.start = 0.0;
    s.delta = spec.delta;
    s.partition_count = n;
    std::size_t at = static_cast<std::size_t>(rng.below(n));
    std::size_t left = spec.dwell_min + static_cast<std::size_t>(rng.below(spec.dwell_max - spec.dwell_min + 1));
    for (std::size_t k = 0; k < spec.steps; ++k) {
        std::vector<double> mu(n, 0.0), var(n, 0.0);
        auto add = [&](std::size_t v, double p) {
            mu[v] += p;
            var[v] += p * (1.0 - p);
        };
        for (std::size_t c = 0; c < spec.crowd_size; ++c) {
            add(at, 0.85);
            add((at + 1) % n, 0.075);
            add((at + n - 1) % n, 0.075);
        }
        for (std::size_t b = 0; b < spec.background; ++b) {
            const auto v = static_cast<std::size_t>(rng.below(n));
            const double p = rng.uniform(0.5, 0.9);
            add(v, p);
            add((v + 1) % n, 1.0 - p);
        }
        std::vector<double> sigma(n);
        for (std::size_t v = 0; v < n; ++v) sigma[v] = std::sqrt(var[v]);
        s.mu.push_back(std::move(mu));
        s.sigma.push_back(std::move(sigma));
        s.present.push_back(true);
        if (--left == 0) {
            at = (at + 1) % n;
            left = spec.dwell_min + static_cast<std::size_t>(rng.below(spec.dwell_max - spec.dwell_min + 1));
        }
    }
    return s;
}

}  // namespace popmon
