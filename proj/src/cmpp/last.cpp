#include "popmon/cmpp.hpp"

namespace popmon {

std::vector<std::size_t> last_baseline(const TrajectoryStore& store, const Topology& topo, double t) {
    std::vector<std::size_t> counts(topo.partition_count(), 0);
    for (const auto& [object, tr] : store.trajectories()) {
        const auto last = store.last_at_or_before(object, t);
        if (!last) continue;
        if (auto v = topo.try_host_partition(last->location)) ++counts[*v];
    }
    return counts;
}

}  // namespace popmon
