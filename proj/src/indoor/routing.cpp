#include "popmon/indoor_model.hpp"

#include <map>
#include <queue>
#include <tuple>

namespace popmon {
namespace {

struct Label {
    double cost = 0.0;
    std::vector<DoorIndex> doors;
    std::vector<PartitionIndex> partitions;
};

// (door just crossed, partition entered); the target uses door == npos.
using State = std::pair<DoorIndex, PartitionIndex>;
constexpr DoorIndex kTarget = static_cast<DoorIndex>(-1);

bool id_sequence_less(const Topology& topo, const std::vector<DoorIndex>& a, const std::vector<DoorIndex>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& x = topo.door(a[i]).id;
        const std::string& y = topo.door(b[i]).id;
        if (x != y) return x < y;
    }
    return a.size() < b.size();
}

bool better(const Topology& topo, const Label& a, const Label& b) {
    if (a.cost < b.cost - 1e-9) return true;
    if (a.cost > b.cost + 1e-9) return false;
    return id_sequence_less(topo, a.doors, b.doors);
}

}  // namespace

std::optional<Route> shortest_route(const Topology& topo, const Location& from, const Location& to) {
    const PartitionIndex source = topo.host_partition(from);
    const PartitionIndex target = topo.host_partition(to);
    if (source == target) return Route{{}, {source}, euclidean(from, to)};

    std::map<State, Label> best;
    std::map<State, bool> settled;
    auto cmp = [&](const std::pair<Label, State>& a, const std::pair<Label, State>& b) {
        return better(topo, b.first, a.first);
    };
    std::priority_queue<std::pair<Label, State>, std::vector<std::pair<Label, State>>, decltype(cmp)> heap(cmp);

    auto relax = [&](const State& s, Label label) {
        auto it = best.find(s);
        if (it == best.end() || better(topo, label, it->second)) {
            best[s] = label;
            heap.emplace(std::move(label), s);
        }
    };

    for (DoorIndex d : topo.partition(source).leaveable_doors) {
        for (PartitionIndex next : topo.door(d).enterable_partitions) {
            if (next == source) continue;
            relax({d, next}, Label{euclidean(from, topo.door(d).position), {d}, {source, next}});
        }
    }

    while (!heap.empty()) {
        auto [label, state] = heap.top();
        heap.pop();
        if (settled[state]) continue;
        settled[state] = true;
        if (state.first == kTarget) {
            return Route{std::move(label.doors), std::move(label.partitions), label.cost};
        }
        const auto [door, here] = state;
        const Location& at = topo.door(door).position;
        if (here == target) {
            Label done = label;
            done.cost += euclidean(at, to);
            relax({kTarget, target}, std::move(done));
        }
        for (DoorIndex d : topo.partition(here).leaveable_doors) {
            if (d == door) continue;
            for (PartitionIndex next : topo.door(d).enterable_partitions) {
                if (next == here) continue;
                Label step = label;
                step.cost += euclidean(at, topo.door(d).position);
                step.doors.push_back(d);
                step.partitions.push_back(next);
                relax({d, next}, std::move(step));
            }
        }
    }
    return std::nullopt;
}

}  // namespace popmon
