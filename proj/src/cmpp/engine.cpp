#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <queue>

#include "popmon/cmpp.hpp"

namespace popmon {

void CmppQuery::validate() const {
    if (!(range > 0.0)) throw QueryError("query range must be positive");
    if (!(threshold >= 1.0)) throw QueryError("population threshold must be at least 1");
    if (!(confidence > 0.0 && confidence < 1.0)) throw QueryError("confidence must lie in (0, 1)");
    if (!(interval > 0.0)) throw QueryError("result interval must be positive");
    if (divisor == 0) throw QueryError("loop divisor must be positive");
}

std::string to_string(PredictorMode mode) {
    switch (mode) {
        case PredictorMode::se: return "se";
        case PredictorMode::me: return "me";
        case PredictorMode::last: return "last";
    }
    return "?";
}

CmppEngine::CmppEngine(const Topology& topo, CmppQuery query, EngineConfig config, PredictorBackend backend)
    : topo_(topo), query_(query), config_(config), backend_(backend) {
    query_.validate();
    if (!(config_.validity > 0.0) || !(config_.delta > 0.0) || !(config_.sigma_floor > 0.0)) {
        throw QueryError("validity, grid spacing and sigma floor must be positive");
    }
    if (backend_.features == nullptr) backend_.features = &local_features_;
    switch (config_.mode) {
        case PredictorMode::se:
            if (backend_.se == nullptr || backend_.extractor == nullptr) throw QueryError("SE mode needs a model and an extractor");
            break;
        case PredictorMode::me: {
            if (backend_.me == nullptr || backend_.extractor == nullptr) throw QueryError("ME mode needs a model and an extractor");
            if (backend_.me->partition_count() != topo_.partition_count()) {
                throw QueryError("ME model was trained for a different building");
            }
            const double m = config_.validity / config_.delta;
            validity_steps_ = static_cast<std::size_t>(std::llround(m));
            if (validity_steps_ == 0 || std::abs(m - static_cast<double>(validity_steps_)) > 1e-9) {
                throw QueryError("validity must be a positive integer multiple of the grid spacing");
            }
            if (validity_steps_ >= backend_.me->window()) {
                throw QueryError("validity must span fewer grid steps than the feature window");
            }
            break;
        }
        case PredictorMode::last:
            if (backend_.store == nullptr) throw QueryError("LAST mode needs a trajectory store");
            break;
    }
}

template <class Visit>
void CmppEngine::expand(const Location& l, Visit&& visit) const {
    const PartitionIndex host = topo_.host_partition(l);
    std::vector<bool> reached(topo_.partition_count(), false);
    reached[host] = true;
    visit(host);

    std::vector<double> dist(topo_.door_count(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, DoorIndex>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (DoorIndex d : topo_.partition(host).leaveable_doors) {
        const double g = euclidean(l, topo_.door(d).position);
        if (g < dist[d]) {
            dist[d] = g;
            heap.emplace(g, d);
        }
    }
    std::vector<bool> done(topo_.door_count(), false);
    while (!heap.empty()) {
        const auto [g, d] = heap.top();
        heap.pop();
        if (done[d]) continue;
        done[d] = true;
        if (g > query_.range) break;
        for (PartitionIndex v : topo_.door(d).enterable_partitions) {
            if (!reached[v]) {
                reached[v] = true;
                visit(v);
            }
            for (DoorIndex next : topo_.partition(v).leaveable_doors) {
                if (next == d || done[next]) continue;
                const double cand = g + topo_.door_to_door_distance(v, d, next);
                if (cand < dist[next]) {
                    dist[next] = cand;
                    heap.emplace(cand, next);
                }
            }
        }
    }
}

std::vector<PartitionIndex> CmppEngine::reachable(const Location& l) const {
    std::vector<PartitionIndex> out;
    expand(l, [&](PartitionIndex v) { out.push_back(v); });
    return out;
}

std::vector<PartitionIndex> CmppEngine::search(const Location& l, double t_q) {
    std::vector<PartitionIndex> out;
    expand(l, [&](PartitionIndex v) {
        if (is_populated(v, t_q)) out.push_back(v);
    });
    return out;
}

bool CmppEngine::is_populated(PartitionIndex v, double t_q) {
    const CachedResult* entry = results_.find(v);
    if (config_.mode == PredictorMode::last || entry == nullptr || t_q - entry->time >= config_.validity) {
        population(v, t_q);
        entry = results_.find(v);
    }
    return entry->prob >= query_.confidence;
}

void CmppEngine::population(PartitionIndex v, double t_q) {
    ++predict_calls_;
    switch (config_.mode) {
        case PredictorMode::se: {
            const Prediction p = se_predict(v, t_q);
            results_.put(v, {pmf_exceed(p.mu, p.sigma, query_.threshold), t_q});
            break;
        }
        case PredictorMode::me: {
            const auto [mu, sigma] = me_predict(t_q);
            for (PartitionIndex u = 0; u < mu.size(); ++u) {
                results_.put(u, {pmf_exceed(mu[u], sigma[u], query_.threshold), t_q});
            }
            break;
        }
        case PredictorMode::last: {
            // the query is answered at t_c, so only fixes up to then are known
            const double t_c = t_q - query_.interval;
            if (!last_counts_ || last_counts_->first != t_c) {
                last_counts_.emplace(t_c, last_baseline(*backend_.store, topo_, t_c));
            }
            const double count = static_cast<double>(last_counts_->second[v]);
            results_.put(v, {count > query_.threshold ? 1.0 : 0.0, t_q});
            break;
        }
    }
}

FeaturePoint CmppEngine::feature(PartitionIndex v, double t) {
    if (auto hit = backend_.features->find(v, t)) {
        ++feature_hits_;
        return *hit;
    }
    const PartitionIndex only[] = {v};
    ++extract_calls_;
    const PopulationDistribution d = backend_.extractor->extract(only, t);
    const PopulationEntry& e = d.entries.at(v);
    const FeaturePoint p{e.mu, std::sqrt(std::max(e.sigma2, 0.0))};
    backend_.features->put(v, t, p);
    return p;
}

void CmppEngine::fill_grid_time(double t, std::vector<FeaturePoint>& out) {
    const std::size_t n = topo_.partition_count();
    out.assign(n, FeaturePoint{});
    bool complete = true;
    for (PartitionIndex v = 0; v < n && complete; ++v) {
        if (auto hit = backend_.features->find(v, t)) {
            out[v] = *hit;
        } else {
            complete = false;
        }
    }
    if (complete) {
        feature_hits_ += n;
        return;
    }
    ++extract_calls_;
    const PopulationDistribution d = backend_.extractor->extract(t);
    for (PartitionIndex v = 0; v < n; ++v) {
        const PopulationEntry& e = d.entries.at(v);
        out[v] = {e.mu, std::sqrt(std::max(e.sigma2, 0.0))};
        backend_.features->put(v, t, out[v]);
    }
}

Prediction CmppEngine::se_predict(PartitionIndex v, double t_q) {
    SeModel& model = *backend_.se;
    const std::size_t n = model.window();
    std::vector<FeaturePoint> inputs;
    inputs.reserve(n);
    for (std::size_t i = n; i >= 1; --i) inputs.push_back(feature(v, t_q - static_cast<double>(i) * config_.delta));
    return model.predict(inputs, config_.sigma_floor);
}

double CmppEngine::global_prediction_time(double t_q) const {
    const double period = static_cast<double>(validity_steps_) * config_.delta;
    return std::floor(t_q / period + 1e-9) * period;
}

std::pair<std::vector<double>, std::vector<double>> CmppEngine::me_predict(double t_q) {
    MeModel& model = *backend_.me;
    const double gpt = global_prediction_time(t_q);
    const std::size_t n = model.window();
    std::vector<nn::Matrix> inputs;
    std::vector<FeaturePoint> grid;
    for (std::size_t i = n; i >= 1; --i) {
        fill_grid_time(gpt - static_cast<double>(i) * config_.delta, grid);
        nn::Matrix x(grid.size(), 2);
        for (std::size_t v = 0; v < grid.size(); ++v) {
            x(v, 0) = grid[v][0];
            x(v, 1) = grid[v][1];
        }
        inputs.push_back(std::move(x));
    }
    return model.predict(inputs, config_.sigma_floor);
}

std::vector<Emission> CmppEngine::run(const LocationProvider& user) {
    std::vector<Emission> out;
    std::optional<double> t_lq;
    std::optional<Location> l_last;
    const double tick = query_.interval / static_cast<double>(query_.divisor);
    for (std::size_t step = 0;; ++step) {
        const double t_c = query_.t_start + static_cast<double>(step) * tick;
        if (t_c > query_.t_end) break;
        const double t_q = t_c + query_.interval;
        const std::optional<Location> l_q = user(t_q);
        if (!l_q || !topo_.try_host_partition(*l_q)) {
            ++paused_ticks_;
            continue;
        }
        if ((t_lq && t_q - *t_lq < query_.interval) || (l_last && *l_last == *l_q)) continue;

        const auto calls_before = predict_calls_;
        const auto hits_before = feature_hits_;
        const auto started = std::chrono::steady_clock::now();
        Emission e;
        e.t_q = t_q;
        e.populated = search(*l_q, t_q);
        e.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        std::sort(e.populated.begin(), e.populated.end());
        e.predict_calls = predict_calls_ - calls_before;
        e.cache_hits = feature_hits_ - hits_before;
        out.push_back(std::move(e));
        t_lq = t_q;
        l_last = l_q;
    }
    return out;
}

}  // namespace popmon
