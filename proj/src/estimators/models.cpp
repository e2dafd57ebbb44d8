#include <algorithm>
#include <cmath>

#include "popmon/estimators.hpp"

namespace popmon {

using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

void check_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw EstimatorError("model scale must be positive and finite");
}

}  // namespace

SeModel::SeModel(std::size_t window, std::size_t hidden, std::uint64_t seed)
    : gru("se.gru", 2, hidden),
      mu_head("se.mu_head", hidden, 1),
      sigma_head("se.sigma_head", hidden, 1),
      window_(window),
      hidden_(hidden),
      seed_(seed) {
    if (window == 0 || hidden == 0) throw EstimatorError("SE window and hidden size must be positive");
    StreamRng rng(derive_key(seed, fnv1a64("se")));
    gru.init(rng);
    mu_head.init(rng);
    sigma_head.init(rng);
}

void SeModel::set_scale(double s) {
    check_scale(s);
    scale_ = s;
}

std::pair<Var, Var> SeModel::forward(Tape& t, const std::vector<Var>& inputs) {
    if (inputs.size() != window_) {
        throw EstimatorError("SE expects " + std::to_string(window_) + " inputs, got " + std::to_string(inputs.size()));
    }
    std::vector<Var> scaled;
    scaled.reserve(inputs.size());
    for (const Var& x : inputs) scaled.push_back(nn::scale(x, 1.0 / scale_));
    Var h = gru.run(t, scaled);
    return {nn::scale(mu_head.forward(t, h), scale_), nn::scale(sigma_head.forward(t, h), scale_)};
}

Prediction SeModel::predict(std::span<const FeaturePoint> inputs, double sigma_floor) {
    Tape t;
    std::vector<Var> xs;
    for (const FeaturePoint& p : inputs) xs.push_back(t.constant(Matrix::from_rows({{p[0], p[1]}})));
    auto [mu, sigma] = forward(t, xs);
    return {mu.scalar(), std::max(sigma.scalar(), sigma_floor)};
}

std::vector<nn::Parameter*> SeModel::parameters() {
    std::vector<nn::Parameter*> out = gru.parameters();
    for (auto* p : mu_head.parameters()) out.push_back(p);
    for (auto* p : sigma_head.parameters()) out.push_back(p);
    return out;
}

MeModel::MeModel(const std::vector<std::vector<int>>& adjacency, std::size_t window, std::size_t hidden,
                 std::size_t gcn_layers, std::size_t key_size, std::uint64_t seed)
    : t_gru("me.t_gru", 2, hidden),
      ts_gru("me.ts_gru", hidden, hidden),
      attention("me.attention", hidden, key_size),
      mu_head("me.mu_head", 4 * key_size, 1),
      sigma_head("me.sigma_head", 4 * key_size, 1),
      adjacency_(adjacency),
      propagation_(nn::propagation_matrix(adjacency)),
      partitions_(adjacency.size()),
      window_(window),
      hidden_(hidden),
      layers_(gcn_layers),
      key_size_(key_size),
      seed_(seed) {
    if (partitions_ == 0 || window == 0 || hidden == 0 || gcn_layers == 0 || key_size == 0) {
        throw EstimatorError("ME dimensions must be positive");
    }
    for (std::size_t l = 0; l < gcn_layers; ++l) {
        const std::string suffix = std::to_string(l);
        s_gcn.emplace_back("me.s_gcn" + suffix, l == 0 ? 2 * window : hidden, hidden);
        ts_gcn.emplace_back("me.ts_gcn" + suffix, l == 0 ? 2 : hidden, hidden);
        st_gcn.emplace_back("me.st_gcn" + suffix, hidden, hidden);
    }
    StreamRng rng(derive_key(seed, fnv1a64("me")));
    t_gru.init(rng);
    for (auto& g : s_gcn) g.init(rng);
    for (auto& g : ts_gcn) g.init(rng);
    ts_gru.init(rng);
    for (auto& g : st_gcn) g.init(rng);
    attention.init(rng);
    mu_head.init(rng);
    sigma_head.init(rng);
}

void MeModel::set_scale(double s) {
    check_scale(s);
    scale_ = s;
}

std::pair<Var, Var> MeModel::forward(Tape& t, const std::vector<Matrix>& inputs) {
    if (inputs.size() != window_) {
        throw EstimatorError("ME expects " + std::to_string(window_) + " inputs, got " + std::to_string(inputs.size()));
    }
    const std::size_t n = partitions_;
    for (const Matrix& x : inputs) {
        if (x.rows != n || x.cols != 2) throw EstimatorError("ME input must be |V| x 2, got " + x.shape_string());
    }
    const Var p = t.constant(propagation_);

    std::vector<Var> xs;
    Matrix flat(n, 2 * window_);
    for (std::size_t i = 0; i < window_; ++i) {
        Matrix x = inputs[i];
        for (double& e : x.data) e /= scale_;
        for (std::size_t v = 0; v < n; ++v) {
            flat(v, i) = x(v, 0);
            flat(v, window_ + i) = x(v, 1);
        }
        xs.push_back(t.constant(std::move(x)));
    }

    // T: shared GRU over each partition's sequence (partitions are rows)
    const Var h_t = t_gru.run(t, xs);

    // S: GCN over the flattened window
    Var h_s = t.constant(std::move(flat));
    for (auto& g : s_gcn) h_s = g.forward(t, p, h_s);

    // TS: GCN per timestep, then GRU over the results
    std::vector<Var> spatial;
    for (const Var& x : xs) {
        Var h = x;
        for (auto& g : ts_gcn) h = g.forward(t, p, h);
        spatial.push_back(h);
    }
    const Var h_ts = ts_gru.run(t, spatial);

    // ST: GCN over the temporal summary
    Var h_st = h_t;
    for (auto& g : st_gcn) h_st = g.forward(t, p, h_st);

    const std::vector<Var> units{h_t, h_s, h_ts, h_st};
    const Var z = nn::concat_rows(units);
    const Var fused = attention.forward(t, z);
    std::vector<Var> blocks;
    for (std::size_t b = 0; b < 4; ++b) blocks.push_back(nn::slice_rows(fused, b * n, n));
    const Var features = nn::concat_cols(blocks);
    return {nn::scale(mu_head.forward(t, features), scale_), nn::scale(sigma_head.forward(t, features), scale_)};
}

std::pair<std::vector<double>, std::vector<double>> MeModel::predict(const std::vector<Matrix>& inputs,
                                                                     double sigma_floor) {
    Tape t;
    auto [mu, sigma] = forward(t, inputs);
    std::vector<double> m = mu.value().data;
    std::vector<double> s = sigma.value().data;
    for (double& x : s) x = std::max(x, sigma_floor);
    return {std::move(m), std::move(s)};
}

std::vector<nn::Parameter*> MeModel::parameters() {
    std::vector<nn::Parameter*> out;
    auto take = [&](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    take(t_gru.parameters());
    for (auto& g : s_gcn) take(g.parameters());
    for (auto& g : ts_gcn) take(g.parameters());
    take(ts_gru.parameters());
    for (auto& g : st_gcn) take(g.parameters());
    take(attention.parameters());
    take(mu_head.parameters());
    take(sigma_head.parameters());
    return out;
}

}  // namespace popmon
