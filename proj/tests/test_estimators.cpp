#include <doctest.h>

#include <json.hpp>

#include "support.hpp"

using namespace popmon;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

PopulationSeries constant_series(std::size_t length, std::size_t partitions, double mu, double sigma) {
    PopulationSeries s;
    s.partition_count = partitions;
    for (std::size_t k = 0; k < length; ++k) {
        s.mu.emplace_back(partitions, mu);
        s.sigma.emplace_back(partitions, sigma);
        s.present.push_back(true);
    }
    return s;
}

PopulationSeries random_series(std::size_t length, std::size_t partitions, StreamRng& rng) {
    PopulationSeries s;
    s.partition_count = partitions;
    for (std::size_t k = 0; k < length; ++k) {
        std::vector<double> mu(partitions), sigma(partitions);
        for (std::size_t v = 0; v < partitions; ++v) {
            mu[v] = rng.uniform(0.0, 5.0);
            sigma[v] = rng.uniform(0.1, 2.0);
        }
        s.mu.push_back(mu);
        s.sigma.push_back(sigma);
        s.present.push_back(true);
    }
    return s;
}

void zero_all(std::vector<nn::Parameter*> params) {
    for (auto* p : params) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

std::vector<std::vector<int>> ring_adjacency(std::size_t n) {
    std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
    for (std::size_t i = 0; i < n; ++i) a[i][(i + 1) % n] = a[(i + 1) % n][i] = 1;
    return a;
}

}  // namespace

TEST_CASE("window counts") {
    const auto s12 = constant_series(12, 1, 2.0, 1.0);
    CHECK(build_se_windows(s12, 10).size() == 2);
    CHECK(build_me_windows(s12, 10).size() == 2);
    CHECK(build_se_windows(constant_series(11, 1, 2.0, 1.0), 10).size() == 1);
    CHECK_THROWS_AS(build_se_windows(constant_series(10, 1, 2.0, 1.0), 10), EstimatorError);
    CHECK(build_se_windows(constant_series(12, 3, 2.0, 1.0), 10).size() == 6);
}

TEST_CASE("windows are aligned to the grid and constant series give identical windows") {
    StreamRng rng(2);
    const auto s = random_series(8, 2, rng);
    const auto w = build_se_windows(s, 3);
    for (const auto& win : w) {
        const std::size_t k = static_cast<std::size_t>(std::lround((win.time - s.start) / s.delta));
        CHECK(win.target[0] == s.mu[k][win.partition]);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(win.inputs[i][0] == s.mu[k - 3 + i][win.partition]);
            CHECK(win.inputs[i][1] == s.sigma[k - 3 + i][win.partition]);
        }
    }
    const auto c = build_se_windows(constant_series(9, 1, 2.0, 0.5), 4);
    for (const auto& win : c) {
        CHECK(win.inputs == c.front().inputs);
        CHECK(win.target == c.front().target);
    }
}

TEST_CASE("snapshots with gaps are zero-filled and flagged") {
    std::vector<PopulationDistribution> snaps(3);
    snaps[0].time = 0.0;
    snaps[1].time = 60.0;
    snaps[2].time = 180.0;
    for (auto& d : snaps) d.entries[0] = {2.0, 0.25};
    const auto s = PopulationSeries::from_snapshots(snaps, 1, 60.0);
    REQUIRE(s.length() == 4);
    CHECK_FALSE(s.present[2]);
    CHECK(s.mu[2][0] == 0.0);
    CHECK(s.sigma[1][0] == 0.5);
    const auto w = build_se_windows(s, 2);
    REQUIRE(w.size() == 2);
    CHECK_FALSE(w[0].complete);  // inputs at 60 and 120
    CHECK_FALSE(w[1].complete);
}

TEST_CASE("split by time") {
    const auto s = split_by_time(100, 0.7, 0.1);
    CHECK(s.train == 70);
    CHECK(s.validation == 10);
    CHECK(s.test == 20);
    CHECK_THROWS_AS(split_by_time(100, 0.9, 0.2), EstimatorError);
}

TEST_CASE("zero SE model reduces to its biases") {
    SeModel m(4, 3, 1);
    zero_all(m.parameters());
    m.mu_head.bias.value.data[0] = 1.25;
    m.sigma_head.bias.value.data[0] = -0.5;
    const std::vector<FeaturePoint> in(4, FeaturePoint{3.0, 1.0});
    const auto p = m.predict(in);
    CHECK(p.mu == 1.25);
    CHECK(p.sigma == 1e-6);
    m.sigma_head.bias.value.data[0] = 0.75;
    CHECK(m.predict(in).sigma == 0.75);
    const std::vector<FeaturePoint> short_in(3);
    CHECK_THROWS_AS(m.predict(short_in), EstimatorError);
}

TEST_CASE("SE prediction is deterministic") {
    SeModel a(4, 5, 9), b(4, 5, 9);
    StreamRng rng(1);
    std::vector<FeaturePoint> in(4);
    for (auto& x : in) x = {rng.uniform(0, 5), rng.uniform(0, 2)};
    const auto p = a.predict(in);
    CHECK(p.mu == a.predict(in).mu);
    CHECK(p.mu == b.predict(in).mu);
    CHECK(p.sigma == b.predict(in).sigma);
}

TEST_CASE("SE forward and loss gradient check") {
    SeModel m(3, 4, 5);
    StreamRng rng(5);
    std::vector<Matrix> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(testing::random_matrix(2, 2, rng, 0.0, 2.0));
    const Matrix mu = testing::random_matrix(2, 1, rng, 0, 3), sigma = testing::random_matrix(2, 1, rng, 0.1, 1);
    const double err = testing::max_grad_error(m.parameters(), [&](Tape& t) {
        std::vector<Var> in;
        for (const auto& x : xs) in.push_back(t.constant(x));
        auto [mh, sh] = m.forward(t, in);
        return wasserstein_loss(mh, sh, t.constant(mu), t.constant(sigma));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("ME forward shapes, zero weights and gradient check") {
    MeModel one({{0}}, 3, 4, 2, 4, 1);
    const std::vector<Matrix> x1(3, Matrix(1, 2, 1.0));
    const auto [m1, s1] = one.predict(x1);
    CHECK(m1.size() == 1);
    CHECK(s1.size() == 1);

    MeModel m(ring_adjacency(4), 3, 4, 2, 4, 2);
    StreamRng rng(3);
    std::vector<Matrix> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(testing::random_matrix(4, 2, rng, 0.0, 2.0));
    CHECK_THROWS_AS(m.predict({xs[0], xs[1]}), EstimatorError);
    CHECK_THROWS_AS(m.predict(std::vector<Matrix>(3, Matrix(3, 2))), EstimatorError);

    const Matrix mu = testing::random_matrix(4, 1, rng, 0, 3), sigma = testing::random_matrix(4, 1, rng, 0.1, 1);
    const double err = testing::max_grad_error(m.parameters(), [&](Tape& t) {
        auto [mh, sh] = m.forward(t, xs);
        return wasserstein_loss(mh, sh, t.constant(mu), t.constant(sigma));
    });
    CHECK(err < 1e-4);

    zero_all(m.parameters());
    m.mu_head.bias.value.data[0] = 0.3;
    const auto [mz, sz] = m.predict(xs);
    for (double x : mz) CHECK(x == 0.3);
    for (double x : sz) CHECK(x == 1e-6);
}

TEST_CASE("ME is equivariant under relabeling partitions") {
    const std::vector<std::vector<int>> adj{{0, 1, 0, 0}, {1, 0, 1, 1}, {0, 1, 0, 0}, {0, 1, 0, 0}};
    const std::vector<std::size_t> perm{2, 0, 3, 1};  // new index i holds old partition perm[i]
    std::vector<std::vector<int>> padj(4, std::vector<int>(4));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) padj[i][j] = adj[perm[i]][perm[j]];
    MeModel a(adj, 3, 4, 2, 4, 7), b(padj, 3, 4, 2, 4, 99);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) pb[i]->value = pa[i]->value;

    StreamRng rng(4);
    std::vector<Matrix> xs, pxs;
    for (int i = 0; i < 3; ++i) {
        xs.push_back(testing::random_matrix(4, 2, rng, 0.0, 3.0));
        Matrix p(4, 2);
        for (std::size_t v = 0; v < 4; ++v)
            for (std::size_t c = 0; c < 2; ++c) p(v, c) = xs.back()(perm[v], c);
        pxs.push_back(p);
    }
    const auto [ma, sa] = a.predict(xs);
    const auto [mb, sb] = b.predict(pxs);
    for (std::size_t v = 0; v < 4; ++v) {
        CHECK(mb[v] == doctest::Approx(ma[perm[v]]).epsilon(1e-12));
        CHECK(sb[v] == doctest::Approx(sa[perm[v]]).epsilon(1e-12));
    }
}

TEST_CASE("Wasserstein and variance losses") {
    const std::vector<double> mu{1.0}, sigma{2.0}, zero{0.0};
    CHECK(wasserstein_loss(zero, zero, mu, sigma) == 5.0);
    CHECK(wasserstein_loss(mu, sigma, mu, sigma) == 0.0);
    CHECK(wasserstein_loss(mu, sigma, zero, zero) == wasserstein_loss(zero, zero, mu, sigma));
    StreamRng rng(6);
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> a{rng.uniform(-3, 3)}, b{rng.uniform(0, 3)}, c{rng.uniform(-3, 3)},
            d{rng.uniform(0, 3)};
        CHECK(wasserstein_loss(a, b, c, d) >= 0.0);
    }

    const std::vector<double> m0{0.0}, m2{2.0}, v0{0.0}, v1{1.0};
    CHECK(mse_variance_loss(m2, v1, m0, v0, 1.0) == 2.5);
    CHECK(mse_variance_loss(m2, v1, m2, v1, 1.0) == 0.0);
    CHECK(mse_variance_loss(m2, v1, m0, v0, 0.0) == 2.0);
}

TEST_CASE("KL divergence between Normals") {
    CHECK(kl_normal(1.0, 2.0, 1.0, 2.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(kl_normal(1.0, 2.0, 1.0, 2.0)) < 1e-12);
    CHECK(kl_normal(0.0, 1.0, 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(kl_normal(0.0, 1.0, 0.0, 2.0) != doctest::Approx(kl_normal(0.0, 2.0, 0.0, 1.0)));
    StreamRng rng(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(kl_normal(rng.uniform(-2, 2), rng.uniform(0.1, 2), rng.uniform(-2, 2), rng.uniform(0.1, 2)) >= 0.0);
    }
    CHECK_THROWS_AS(kl_normal(0.0, 1.0, 0.0, 0.0), EstimatorError);

    const std::vector<double> mh{0.0, 1.0, 5.0}, sh{1.0, 1.0, 1.0}, m{1.0, 1.0, 5.0}, s{1.0, 1.0, 0.0};
    const auto k = average_kl(mh, sh, m, s);
    CHECK(k.count == 2);
    CHECK(k.excluded == 1);
    CHECK(k.mean == doctest::Approx(0.25));
}

TEST_CASE("training on a constant population converges") {
    const auto s = constant_series(40, 2, 3.0, 1.0);
    const auto windows = build_se_windows(s, 4);
    const std::span<const SeWindow> all(windows);
    TrainingConfig c;
    c.window = 4;
    c.hidden = 6;
    c.max_epochs = 500;
    c.patience = 500;
    c.batch_size = 16;
    SeModel m(4, 6, 3);
    m.set_scale(3.0);
    const auto r = train_se(m, all.subspan(0, 50), all.subspan(50), c);
    CHECK(r.train_loss.back() < 1e-2);
    const std::vector<FeaturePoint> in(4, FeaturePoint{3.0, 1.0});
    CHECK(std::abs(m.predict(in).mu - 3.0) < 0.1);
    for (double x : r.train_loss) CHECK(std::isfinite(x));
}

TEST_CASE("training is deterministic and lr 0 keeps the loss flat") {
    StreamRng rng(8);
    const auto s = random_series(30, 2, rng);
    const auto windows = build_se_windows(s, 4);
    const std::span<const SeWindow> all(windows);
    TrainingConfig c;
    c.window = 4;
    c.hidden = 4;
    c.max_epochs = 15;
    c.patience = 100;
    SeModel a(4, 4, 5), b(4, 4, 5);
    const auto ra = train_se(a, all.subspan(0, 40), all.subspan(40), c);
    const auto rb = train_se(b, all.subspan(0, 40), all.subspan(40), c);
    CHECK(ra.train_loss == rb.train_loss);
    CHECK(ra.validation_loss == rb.validation_loss);

    c.learning_rate = 0.0;
    SeModel z(4, 4, 5);
    const auto rz = train_se(z, all.subspan(0, 40), all.subspan(40), c);
    for (double x : rz.train_loss) CHECK(x == doctest::Approx(rz.train_loss.front()).epsilon(1e-12));

    CHECK_THROWS_AS(train_se(z, {}, all.subspan(40), c), EstimatorError);
}

TEST_CASE("early stopping restores the best checkpoint") {
    StreamRng rng(10);
    const auto s = random_series(30, 2, rng);
    const auto windows = build_se_windows(s, 4);
    const std::span<const SeWindow> all(windows);
    TrainingConfig c;
    c.window = 4;
    c.hidden = 4;
    c.max_epochs = 300;
    c.patience = 3;
    SeModel m(4, 4, 1);
    const auto r = train_se(m, all.subspan(0, 40), all.subspan(40), c);
    CHECK(r.early_stopped);
    CHECK(r.best_validation == *std::min_element(r.validation_loss.begin(), r.validation_loss.end()));
    CHECK(evaluate_se(m, all.subspan(40), c) == doctest::Approx(r.best_validation).epsilon(1e-12));
}

TEST_CASE("ME training runs and stays finite") {
    StreamRng rng(11);
    const auto s = random_series(20, 3, rng);
    const auto windows = build_me_windows(s, 3);
    const std::span<const MeWindow> all(windows);
    TrainingConfig c;
    c.window = 3;
    c.hidden = 4;
    c.key_size = 4;
    c.max_epochs = 10;
    MeModel m(ring_adjacency(3), 3, 4, 2, 4, 1);
    const auto r = train_me(m, all.subspan(0, 13), all.subspan(13), c);
    REQUIRE(!r.train_loss.empty());
    for (double x : r.train_loss) CHECK(std::isfinite(x));
    CHECK(r.train_loss.back() < r.train_loss.front());
}

TEST_CASE("model documents round trip bit-exactly") {
    SeModel se(4, 5, 3);
    se.set_scale(7.25);
    const std::string doc = serialize_model(se);
    CHECK(model_kind(doc) == "se");
    SeModel back = deserialize_se_model(doc);
    CHECK(back.scale() == 7.25);
    auto pa = se.parameters(), pb = back.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    const std::vector<FeaturePoint> in(4, FeaturePoint{1.5, 0.5});
    CHECK(se.predict(in).mu == back.predict(in).mu);

    auto j = nlohmann::json::parse(doc);
    j["seed"] = 12345;
    CHECK_THROWS_AS(deserialize_se_model(j.dump()), EstimatorError);
    CHECK_THROWS_AS(deserialize_me_model(doc), EstimatorError);

    MeModel me(ring_adjacency(5), 10, 16, 2, 16, 4);
    const std::string mdoc = serialize_model(me);
    const auto mj = nlohmann::json::parse(mdoc);
    CHECK(mj["architecture"]["gcn_layers"] == 2);
    CHECK(mj["architecture"]["hidden"] == 16);
    CHECK(mj["architecture"]["partitions"] == 5);
    MeModel mback = deserialize_me_model(mdoc);
    std::vector<Matrix> xs(10, Matrix(5, 2, 1.0));
    CHECK(me.predict(xs).first == mback.predict(xs).first);
}
