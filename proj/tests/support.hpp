#pragma once

// Shared fixtures and oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "popmon/harness.hpp"
#include "popmon/nn/layers.hpp"

namespace testing {

using namespace popmon;

// The two locations of the worked example: l0 in v3, l1 in v6.
inline const Location kL0{14.0, 13.0, 0};
inline const Location kL1{13.5, 0.4, 0};

inline double rel_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

/// Largest relative error between reverse-mode gradients and central
/// differences over every entry of `params`. The denominator never drops
/// below `floor`: central differences of an O(10) loss at h = 1e-5 carry
/// roundoff near eps * loss / h ~ 3e-10, which only stays under a 1e-4
/// relative tolerance for entries above a few 1e-6.
inline double max_grad_error(const std::vector<nn::Parameter*>& params,
                             const std::function<nn::Var(nn::Tape&)>& loss_fn, double h = 1e-5,
                             double floor = 1e-5) {
    for (auto* p : params) p->zero_grad();
    {
        nn::Tape t;
        nn::Var loss = loss_fn(t);
        t.backward(loss);
    }
    double worst = 0.0;
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            double up, down;
            {
                nn::Tape t;
                up = loss_fn(t).scalar();
            }
            p->value.data[i] = saved - h;
            {
                nn::Tape t;
                down = loss_fn(t).scalar();
            }
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad.data[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

inline void fill_random(nn::Parameter& p, StreamRng& rng, double lo = -1.0, double hi = 1.0) {
    for (double& x : p.value.data) x = rng.uniform(lo, hi);
}

inline nn::Matrix random_matrix(std::size_t r, std::size_t c, StreamRng& rng, double lo = -1.0, double hi = 1.0) {
    nn::Matrix m(r, c);
    for (double& x : m.data) x = rng.uniform(lo, hi);
    return m;
}

/// Rooms on a rows x cols grid with random cell sizes; a random spanning
/// tree of doors plus some extra doors keeps the building connected.
inline Topology random_grid_building(StreamRng& rng, std::size_t rows, std::size_t cols) {
    std::vector<double> xs{0.0}, ys{0.0};
    for (std::size_t c = 0; c < cols; ++c) xs.push_back(xs.back() + rng.uniform(5.0, 15.0));
    for (std::size_t r = 0; r < rows; ++r) ys.push_back(ys.back() + rng.uniform(5.0, 15.0));
    BuildingBuilder b;
    auto cell = [&](std::size_t r, std::size_t c) { return r * cols + c; };
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            b.add_room("p" + std::to_string(cell(r, c)), xs[c], ys[r], xs[c + 1], ys[r + 1]);
        }
    }
    struct Wall {
        std::size_t a, b;
        bool vertical;
        std::size_t r, c;
    };
    std::vector<Wall> walls;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c + 1 < cols) walls.push_back({cell(r, c), cell(r, c + 1), true, r, c});
            if (r + 1 < rows) walls.push_back({cell(r, c), cell(r + 1, c), false, r, c});
        }
    }
    // Fisher-Yates, then Kruskal-style union-find for a spanning tree
    for (std::size_t i = walls.size(); i > 1; --i) std::swap(walls[i - 1], walls[rng.below(i)]);
    std::vector<std::size_t> parent(rows * cols);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> root = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = root(parent[x]);
    };
    std::size_t door = 0;
    for (const Wall& w : walls) {
        const bool joins = root(w.a) != root(w.b);
        if (!joins && rng.uniform() > 0.35) continue;
        parent[root(w.a)] = root(w.b);
        double x, y;
        if (w.vertical) {
            x = xs[w.c + 1];
            y = rng.uniform(ys[w.r] + 1.0, ys[w.r + 1] - 1.0);
        } else {
            y = ys[w.r + 1];
            x = rng.uniform(xs[w.c] + 1.0, xs[w.c + 1] - 1.0);
        }
        b.add_door("d" + std::to_string(door++), x, y, w.a, w.b);
    }
    return b.build();
}

/// Partitions within indoor distance r of l: all-pairs shortest paths over
/// doors (Floyd-Warshall), then every partition entered by a door within r.
inline std::vector<PartitionIndex> brute_force_reach(const Topology& topo, const Location& l, double r) {
    const std::size_t nd = topo.door_count();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dd(nd, std::vector<double>(nd, inf));
    for (std::size_t i = 0; i < nd; ++i) dd[i][i] = 0.0;
    for (PartitionIndex v = 0; v < topo.partition_count(); ++v) {
        for (DoorIndex a : topo.partition(v).enterable_doors) {
            for (DoorIndex b : topo.partition(v).leaveable_doors) {
                if (a == b) continue;
                const auto& ea = topo.door(a).enterable_partitions;
                if (std::find(ea.begin(), ea.end(), v) == ea.end()) continue;
                dd[a][b] = std::min(dd[a][b], topo.door_to_door_distance(v, a, b));
            }
        }
    }
    for (std::size_t k = 0; k < nd; ++k)
        for (std::size_t i = 0; i < nd; ++i)
            for (std::size_t j = 0; j < nd; ++j) dd[i][j] = std::min(dd[i][j], dd[i][k] + dd[k][j]);
    const PartitionIndex host = topo.host_partition(l);
    std::vector<double> dist(nd, inf);
    for (DoorIndex s : topo.partition(host).leaveable_doors) {
        const double g = euclidean(l, topo.door(s).position);
        for (std::size_t j = 0; j < nd; ++j) dist[j] = std::min(dist[j], g + dd[s][j]);
    }
    std::vector<PartitionIndex> out{host};
    for (PartitionIndex v = 0; v < topo.partition_count(); ++v) {
        if (v == host) continue;
        for (DoorIndex d = 0; d < nd; ++d) {
            const auto& e = topo.door(d).enterable_partitions;
            if (dist[d] <= r && std::find(e.begin(), e.end(), v) != e.end()) {
                out.push_back(v);
                break;
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Three rooms in a row, each 10 x 10, doors on the shared walls at y = 5.
inline Topology chain_building() {
    BuildingBuilder b;
    const auto a = b.add_room("a", 0, 0, 10, 10);
    const auto m = b.add_room("b", 10, 0, 20, 10);
    const auto c = b.add_room("c", 20, 0, 30, 10);
    b.add_door("d0", 10, 5, a, m);
    b.add_door("d1", 20, 5, m, c);
    return b.build();
}

}  // namespace testing
