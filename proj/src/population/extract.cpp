#include <algorithm>
#include <bit>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "popmon/population.hpp"

namespace popmon {

PopulationExtractor::PopulationExtractor(const Topology& topo, const TrajectoryStore& store, ExtractorConfig config)
    : topo_(topo), store_(store), config_(config) {
    if (!(config_.max_speed > 0.0)) throw std::invalid_argument("max speed must be positive");
    if (config_.samples == 0) throw std::invalid_argument("sample count must be at least 1");
}

void PopulationExtractor::reset_counters() noexcept {
    extract_calls_ = 0;
    empty_path_objects_ = 0;
    unlocatable_pairs_ = 0;
}

const PathDistribution& PopulationExtractor::paths_for(const BracketingPair& pair) const {
    const std::pair<std::string, double> key{pair.object, pair.start_time};
    {
        std::lock_guard lock(path_mutex_);
        if (auto it = path_cache_.find(key); it != path_cache_.end()) return it->second;
    }
    const double budget = config_.max_speed * (pair.end_time - pair.start_time);
    auto paths = enumerate_paths(topo_, pair.start, pair.end, budget, config_.max_hops);
    PathDistribution dist;
    if (!paths.empty()) dist = path_probabilities(std::move(paths));
    std::lock_guard lock(path_mutex_);
    return path_cache_.emplace(key, std::move(dist)).first->second;
}

std::vector<PresenceVector> PopulationExtractor::presences(double t) const { return presences(t, nullptr); }

// With `wanted`, paths that never enter a wanted partition are not sampled.
// They would add nothing to wanted entries, and every path has its own random
// stream, so the wanted entries come out bit-identical to a full extraction.
std::vector<PresenceVector> PopulationExtractor::presences(double t, const std::vector<bool>* wanted) const {
    std::vector<PresenceVector> out;
    for (const BracketingPair& pair : store_.bracketing_pairs(t)) {
        if (!topo_.try_host_partition(pair.start) || !topo_.try_host_partition(pair.end)) {
            ++unlocatable_pairs_;
            continue;
        }
        const PathDistribution& dist = paths_for(pair);
        if (dist.paths.empty()) {
            ++empty_path_objects_;
            continue;
        }
        const std::uint64_t object_key = fnv1a64(pair.object);
        PresenceVector pv;
        for (std::size_t j = 0; j < dist.paths.size(); ++j) {
            if (wanted != nullptr &&
                std::none_of(dist.paths[j].partitions.begin(), dist.paths[j].partitions.end(),
                             [&](PartitionIndex v) { return (*wanted)[v]; })) {
                continue;
            }
            StreamRng rng(derive_key(config_.seed, object_key, j, std::bit_cast<std::uint64_t>(t)));
            std::map<PartitionIndex, std::size_t> hits;
            for (std::size_t s = 0; s < config_.samples; ++s) {
                ++hits[find_partition(dist.paths[j], pair.start_time, pair.end_time, config_.max_speed, t, rng)];
            }
            for (const auto& [v, n] : hits) {
                pv.probs[v] += dist.probs[j] * (static_cast<double>(n) / static_cast<double>(config_.samples));
            }
        }
        if (pv.probs.empty()) continue;
        pv.object = pair.object;
        pv.time = t;
        out.push_back(std::move(pv));
    }
    return out;
}

PopulationDistribution PopulationExtractor::extract(std::span<const PartitionIndex> partitions, double t) const {
    ++extract_calls_;
    PopulationDistribution dist;
    dist.time = t;
    std::vector<bool> wanted(topo_.partition_count(), false);
    for (PartitionIndex v : partitions) {
        if (v >= wanted.size()) throw std::out_of_range("partition index out of range");
        wanted[v] = true;
        dist.entries[v] = {};
    }
    const bool all = dist.entries.size() == wanted.size();
    for (const PresenceVector& pv : presences(t, all ? nullptr : &wanted)) {
        for (const auto& [v, p] : pv.probs) {
            auto it = dist.entries.find(v);
            if (it == dist.entries.end()) continue;
            it->second.mu += p;
            it->second.sigma2 += p * (1.0 - p);
        }
    }
    return dist;
}

PopulationDistribution PopulationExtractor::extract(double t) const {
    std::vector<PartitionIndex> all(topo_.partition_count());
    std::iota(all.begin(), all.end(), PartitionIndex{0});
    return extract(all, t);
}

void write_population_csv(std::ostream& out, const Topology& topo, std::span<const PopulationDistribution> series) {
    out << "partition_id,t,mu,sigma2\n";
    char buf[96];
    for (const PopulationDistribution& d : series) {
        for (const auto& [v, e] : d.entries) {
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", d.time, e.mu, e.sigma2);
            out << topo.partition(v).id << buf;
        }
    }
}

std::vector<PopulationDistribution> read_population_csv(std::istream& in, const Topology& topo) {
    std::map<double, PopulationDistribution> by_time;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("partition_id", 0) == 0) continue;
        std::istringstream row(line);
        std::string id, t, mu, s2;
        if (!std::getline(row, id, ',') || !std::getline(row, t, ',') || !std::getline(row, mu, ',') ||
            !std::getline(row, s2)) {
            throw std::runtime_error("malformed population row on line " + std::to_string(line_no));
        }
        try {
            const double time = std::stod(t);
            PopulationDistribution& d = by_time[time];
            d.time = time;
            d.entries[topo.partition_index(id)] = {std::stod(mu), std::stod(s2)};
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("malformed number on line " + std::to_string(line_no));
        }
    }
    std::vector<PopulationDistribution> out;
    for (auto& [_, d] : by_time) out.push_back(std::move(d));
    return out;
}

}  // namespace popmon
