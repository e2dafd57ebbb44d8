#include <algorithm>
#include <cmath>
#include <functional>

#include "popmon/population.hpp"

namespace popmon {
namespace {

bool door_sequence_less(const Topology& topo, const IndoorPath& a, const IndoorPath& b) {
    const std::size_t n = std::min(a.doors.size(), b.doors.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& x = topo.door(a.doors[i]).id;
        const std::string& y = topo.door(b.doors[i]).id;
        if (x != y) return x < y;
    }
    if (a.doors.size() != b.doors.size()) return a.doors.size() < b.doors.size();
    return a.partitions < b.partitions;
}

bool contains_index(const std::vector<std::size_t>& v, std::size_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::vector<IndoorPath> enumerate_paths(const Topology& topo, const Location& l_a, const Location& l_b, double budget,
                                        std::size_t max_hops) {
    if (!(budget >= 0.0)) throw PathError("negative path budget");
    const PartitionIndex source = topo.host_partition(l_a);
    const PartitionIndex target = topo.host_partition(l_b);
    const double slack = 1e-9 * std::max(1.0, budget);

    std::vector<IndoorPath> out;
    IndoorPath current{l_a, {}, {source}, l_b, {}, 0.0};

    std::function<void(const Location&, double)> dfs = [&](const Location& at, double prefix) {
        const PartitionIndex here = current.partitions.back();
        if (here == target) {
            const double total = prefix + euclidean(at, l_b);
            if (total <= budget + slack) {
                IndoorPath found = current;
                found.legs.push_back(euclidean(at, l_b));
                found.length = total;
                out.push_back(std::move(found));
            }
        }
        if (current.doors.size() >= max_hops) return;
        for (DoorIndex d : topo.partition(here).leaveable_doors) {
            if (contains_index(current.doors, d)) continue;
            const Location& pos = topo.door(d).position;
            const double reach = prefix + euclidean(at, pos);
            if (reach + euclidean(pos, l_b) > budget + slack) continue;
            for (PartitionIndex next : topo.door(d).enterable_partitions) {
                if (next == here) continue;
                current.doors.push_back(d);
                current.partitions.push_back(next);
                current.legs.push_back(reach - prefix);
                dfs(pos, reach);
                current.doors.pop_back();
                current.partitions.pop_back();
                current.legs.pop_back();
            }
        }
    };
    dfs(l_a, 0.0);

    std::sort(out.begin(), out.end(),
              [&](const IndoorPath& a, const IndoorPath& b) { return door_sequence_less(topo, a, b); });
    return out;
}

double path_length(const Topology& topo, const IndoorPath& path) {
    if (path.partitions.size() != path.doors.size() + 1) throw PathError("partition chain length mismatch");
    if (topo.try_host_partition(path.source) != path.partitions.front()) {
        throw PathError("source is not in the first partition of the path");
    }
    if (topo.try_host_partition(path.target) != path.partitions.back()) {
        throw PathError("target is not in the last partition of the path");
    }
    double total = 0.0;
    Location at = path.source;
    for (std::size_t i = 0; i < path.doors.size(); ++i) {
        const Door& door = topo.door(path.doors[i]);
        const PartitionIndex from = path.partitions[i];
        const PartitionIndex to = path.partitions[i + 1];
        if (!contains_index(door.leaveable_partitions, from) || !contains_index(door.enterable_partitions, to)) {
            throw PathError("door " + door.id + " does not connect " + topo.partition(from).id + " to " +
                            topo.partition(to).id);
        }
        total += euclidean(at, door.position);
        at = door.position;
    }
    return total + euclidean(at, path.target);
}

IndoorPath make_path(const Topology& topo, const Location& source, std::span<const std::string> door_ids,
                     const Location& target) {
    IndoorPath path{source, {}, {topo.host_partition(source)}, target, {}, 0.0};
    for (const std::string& id : door_ids) {
        const DoorIndex d = topo.door_index(id);
        const Door& door = topo.door(d);
        const PartitionIndex here = path.partitions.back();
        if (!contains_index(door.leaveable_partitions, here)) {
            throw PathError("door " + id + " cannot be left from " + topo.partition(here).id);
        }
        std::optional<PartitionIndex> next;
        for (PartitionIndex v : door.enterable_partitions) {
            if (v != here) next = v;
        }
        if (!next) throw PathError("door " + id + " leads nowhere from " + topo.partition(here).id);
        path.doors.push_back(d);
        path.partitions.push_back(*next);
    }
    Location at = source;
    for (DoorIndex d : path.doors) {
        path.legs.push_back(euclidean(at, topo.door(d).position));
        at = topo.door(d).position;
    }
    path.legs.push_back(euclidean(at, target));
    path.length = path_length(topo, path);
    return path;
}

PathDistribution path_probabilities(std::vector<IndoorPath> paths) {
    if (paths.empty()) throw PathError("no paths to weight");
    PathDistribution dist;
    double total = 0.0;
    for (const IndoorPath& p : paths) {
        const double w = 1.0 / std::max(p.length, kMinPathLength);
        dist.probs.push_back(w);
        total += w;
    }
    for (double& p : dist.probs) p /= total;
    dist.paths = std::move(paths);
    return dist;
}

}  // namespace popmon
