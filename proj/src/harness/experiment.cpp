#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "popmon/harness.hpp"

namespace popmon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::size_t worker_count(std::size_t configured) {
    if (configured > 0) return configured;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Runs fn(0..count-1) on a small pool; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<json> read_json_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

template <class Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ExperimentError&) {
        throw;
    } catch (const std::exception& e) {
        throw ExperimentError(stage, e.what());
    }
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw std::invalid_argument(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw std::invalid_argument("unknown key '" + key + "' in " + where);
        }
    }
}

PredictorMode parse_mode(const std::string& s) {
    if (s == "se") return PredictorMode::se;
    if (s == "me") return PredictorMode::me;
    if (s == "last") return PredictorMode::last;
    throw std::invalid_argument("unknown estimator '" + s + "'");
}

bool uses(const ExperimentConfig& c, PredictorMode m) {
    return std::find(c.estimators.begin(), c.estimators.end(), m) != c.estimators.end();
}

Topology make_building(const ExperimentConfig& c) {
    if (c.building_kind == "corridor") return corridor_building(c.corridor);
    if (c.building_kind == "ring") return ring_building();
    if (c.building_kind == "example") return example_building();
    return load_topology_file(c.topology_path);
}

Topology load_run_topology(const fs::path& dir) { return load_topology(read_text(dir / "topology.json")); }

TrajectoryStore load_store(const fs::path& dir) {
    std::ifstream in(dir / "trajectories.csv");
    if (!in) throw std::runtime_error("missing trajectories.csv; run gen-data first");
    const auto rows = read_trajectory_csv(in);
    return TrajectoryStore::ingest(rows);
}

std::size_t grid_length(const ExperimentConfig& c) {
    return static_cast<std::size_t>(std::floor(c.movement.duration / c.delta + 1e-9)) + 1;
}

SplitSizes run_split(const ExperimentConfig& c) {
    return split_by_time(grid_length(c), c.train_fraction, c.validation_fraction);
}

// Migrating hotspot: one room at a time draws `weight` times more visits, and
// the hot room steps to its neighbour every period. Corridor buildings cycle
// along the upper rooms and back along the lower ones.
std::vector<std::vector<double>> hotspot_schedule(const Topology& topo, const ExperimentConfig& c) {
    std::vector<PartitionIndex> order;
    if (c.building_kind == "corridor") {
        for (std::size_t i = 0; i < c.corridor.segments; ++i) order.push_back(topo.partition_index("a" + std::to_string(i)));
        for (std::size_t i = c.corridor.segments; i-- > 0;) order.push_back(topo.partition_index("b" + std::to_string(i)));
    } else {
        for (PartitionIndex v = 0; v < topo.partition_count(); ++v) order.push_back(v);
    }
    StreamRng rng(derive_key(c.seed, fnv1a64("hotspots")));
    const auto offset = static_cast<std::size_t>(rng.below(order.size()));
    const auto slots = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c.movement.duration / c.hotspot_period)));
    std::vector<std::vector<double>> schedule;
    for (std::size_t s = 0; s < slots; ++s) {
        std::vector<double> w(topo.partition_count(), 1.0);
        w[order[(offset + s) % order.size()]] = c.hotspot_weight;
        schedule.push_back(std::move(w));
    }
    return schedule;
}

MovementConfig effective_movement(const Topology& topo, const ExperimentConfig& c) {
    MovementConfig m = c.movement;
    if (c.hotspot_weight > 0.0) {
        m.weight_schedule = hotspot_schedule(topo, c);
        m.schedule_period = c.hotspot_period;
    }
    return m;
}

json location_json(const Location& l) { return json::array({l.x, l.y, l.floor}); }
Location location_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<int>()}; }

struct QueryInstance {
    std::size_t index = 0;
    std::string user;
    double t_start = 0.0;
    double t_end = 0.0;
    DenseTrace trace;
};

std::vector<QueryInstance> load_instances(const fs::path& dir, const Topology& topo) {
    const json doc = json::parse(read_text(dir / "users.json"));
    std::vector<QueryInstance> out;
    for (const json& j : doc.at("instances")) {
        std::vector<TraceSegment> segs;
        for (const json& s : j.at("segments")) {
            TraceSegment seg;
            seg.t_start = s.at("t_start").get<double>();
            seg.t_end = s.at("t_end").get<double>();
            seg.from = location_from(s.at("from"));
            seg.to = location_from(s.at("to"));
            seg.partition = topo.partition_index(s.at("partition").get<std::string>());
            segs.push_back(seg);
        }
        QueryInstance q;
        q.index = j.at("instance").get<std::size_t>();
        q.user = j.at("user").get<std::string>();
        q.t_start = j.at("t_start").get<double>();
        q.t_end = j.at("t_end").get<double>();
        q.trace = DenseTrace(q.user, std::move(segs));
        out.push_back(std::move(q));
    }
    return out;
}

PopulationSeries load_series(const fs::path& dir, const Topology& topo, double delta) {
    std::ifstream in(dir / "populations.csv");
    if (!in) throw std::runtime_error("missing populations.csv; run extract first");
    const auto snapshots = read_population_csv(in, topo);
    return PopulationSeries::from_snapshots(snapshots, topo.partition_count(), delta);
}

std::size_t grid_index(const PopulationSeries& s, double t) {
    return static_cast<std::size_t>(std::llround((t - s.start) / s.delta));
}

json train_result_json(const TrainResult& r, double ms) {
    return {{"train_loss", r.train_loss},
            {"validation_loss", r.validation_loss},
            {"best_epoch", r.best_epoch},
            {"best_validation", r.best_validation},
            {"early_stopped", r.early_stopped},
            {"elapsed_ms", ms}};
}

const char* loss_name(LossKind k) { return k == LossKind::wasserstein ? "wasserstein" : "mse_variance"; }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    ExperimentConfig c;
    check_keys(doc, "config",
               {"building", "movement", "extraction", "grid", "training", "estimators", "query", "split", "seed",
                "threads"});
    if (doc.contains("building")) {
        const json& b = doc["building"];
        check_keys(b, "building",
                   {"kind", "path", "segments", "segment_length", "corridor_width", "room_depth", "side_links"});
        c.building_kind = b.value("kind", c.building_kind);
        c.topology_path = b.value("path", c.topology_path);
        if (!c.topology_path.empty() && !b.contains("kind")) c.building_kind = "file";
        c.corridor.segments = b.value("segments", c.corridor.segments);
        c.corridor.segment_length = b.value("segment_length", c.corridor.segment_length);
        c.corridor.corridor_width = b.value("corridor_width", c.corridor.corridor_width);
        c.corridor.room_depth = b.value("room_depth", c.corridor.room_depth);
        c.corridor.side_links = b.value("side_links", c.corridor.side_links);
    }
    if (doc.contains("movement")) {
        const json& m = doc["movement"];
        check_keys(m, "movement",
                   {"objects", "dwell", "speed", "interval", "duration", "hotspot_weight", "hotspot_period"});
        c.movement.object_count = m.value("objects", c.movement.object_count);
        if (m.contains("dwell")) {
            c.movement.dwell_min = m["dwell"].at(0).get<double>();
            c.movement.dwell_max = m["dwell"].at(1).get<double>();
        }
        c.movement.speed = m.value("speed", c.movement.speed);
        if (m.contains("interval")) {
            c.movement.interval_min = m["interval"].at(0).get<double>();
            c.movement.interval_max = m["interval"].at(1).get<double>();
        }
        c.movement.duration = m.value("duration", c.movement.duration);
        c.hotspot_weight = m.value("hotspot_weight", c.hotspot_weight);
        c.hotspot_period = m.value("hotspot_period", c.hotspot_period);
    }
    if (doc.contains("extraction")) {
        const json& e = doc["extraction"];
        check_keys(e, "extraction", {"max_speed", "samples", "max_hops"});
        c.extraction.max_speed = e.value("max_speed", c.extraction.max_speed);
        c.extraction.samples = e.value("samples", c.extraction.samples);
        c.extraction.max_hops = e.value("max_hops", c.extraction.max_hops);
    }
    if (doc.contains("grid")) {
        check_keys(doc["grid"], "grid", {"delta"});
        c.delta = doc["grid"].value("delta", c.delta);
    }
    if (doc.contains("training")) {
        const json& t = doc["training"];
        check_keys(t, "training",
                   {"window", "hidden", "gcn_layers", "key_size", "learning_rate", "batch_size", "max_epochs",
                    "patience", "min_improvement", "loss", "variance_weight", "sigma_floor"});
        TrainingConfig& tc = c.training;
        tc.window = t.value("window", tc.window);
        tc.hidden = t.value("hidden", tc.hidden);
        tc.gcn_layers = t.value("gcn_layers", tc.gcn_layers);
        tc.key_size = t.value("key_size", tc.key_size);
        tc.learning_rate = t.value("learning_rate", tc.learning_rate);
        tc.batch_size = t.value("batch_size", tc.batch_size);
        tc.max_epochs = t.value("max_epochs", tc.max_epochs);
        tc.patience = t.value("patience", tc.patience);
        tc.min_improvement = t.value("min_improvement", tc.min_improvement);
        tc.variance_weight = t.value("variance_weight", tc.variance_weight);
        tc.sigma_floor = t.value("sigma_floor", tc.sigma_floor);
        const std::string loss = t.value("loss", std::string(loss_name(tc.loss)));
        if (loss == "wasserstein") {
            tc.loss = LossKind::wasserstein;
        } else if (loss == "mse_variance") {
            tc.loss = LossKind::mse_variance;
        } else {
            throw std::invalid_argument("unknown loss '" + loss + "'");
        }
    }
    if (doc.contains("estimators")) {
        c.estimators.clear();
        for (const json& e : doc["estimators"]) {
            const PredictorMode m = parse_mode(e.get<std::string>());
            if (!uses(c, m)) c.estimators.push_back(m);
        }
    }
    if (doc.contains("query")) {
        const json& q = doc["query"];
        check_keys(q, "query",
                   {"range", "threshold", "confidence", "interval", "divisor", "validity", "duration", "instances"});
        CmppQuery& cq = c.queries.query;
        cq.range = q.value("range", cq.range);
        cq.threshold = q.value("threshold", cq.threshold);
        cq.confidence = q.value("confidence", cq.confidence);
        cq.interval = q.value("interval", cq.interval);
        cq.divisor = q.value("divisor", cq.divisor);
        c.queries.validity = q.value("validity", c.queries.validity);
        c.queries.duration = q.value("duration", c.queries.duration);
        c.queries.instances = q.value("instances", c.queries.instances);
    }
    if (doc.contains("split")) {
        const json& s = doc["split"];
        check_keys(s, "split", {"train", "validation", "test"});
        c.train_fraction = s.value("train", c.train_fraction);
        c.validation_fraction = s.value("validation", c.validation_fraction);
        c.test_fraction = s.value("test", c.test_fraction);
    }
    c.threads = doc.value("threads", c.threads);
    c.apply_seed(doc.value("seed", c.seed));
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    return in_stage("config", [&] {
        ExperimentConfig c = from_json(json::parse(read_text(path)));
        // a relative topology path is taken relative to the config file
        if (c.building_kind == "file" && fs::path(c.topology_path).is_relative()) {
            c.topology_path = (path.parent_path() / c.topology_path).string();
        }
        c.validate();
        return c;
    });
}

json ExperimentConfig::to_json() const {
    json estimators_json = json::array();
    for (PredictorMode m : estimators) estimators_json.push_back(to_string(m));
    return {
        {"building",
         {{"kind", building_kind},
          {"path", topology_path},
          {"segments", corridor.segments},
          {"segment_length", corridor.segment_length},
          {"corridor_width", corridor.corridor_width},
          {"room_depth", corridor.room_depth},
          {"side_links", corridor.side_links}}},
        {"movement",
         {{"objects", movement.object_count},
          {"dwell", {movement.dwell_min, movement.dwell_max}},
          {"speed", movement.speed},
          {"interval", {movement.interval_min, movement.interval_max}},
          {"duration", movement.duration},
          {"hotspot_weight", hotspot_weight},
          {"hotspot_period", hotspot_period}}},
        {"extraction",
         {{"max_speed", extraction.max_speed}, {"samples", extraction.samples}, {"max_hops", extraction.max_hops}}},
        {"grid", {{"delta", delta}}},
        {"training",
         {{"window", training.window},
          {"hidden", training.hidden},
          {"gcn_layers", training.gcn_layers},
          {"key_size", training.key_size},
          {"learning_rate", training.learning_rate},
          {"batch_size", training.batch_size},
          {"max_epochs", training.max_epochs},
          {"patience", training.patience},
          {"min_improvement", training.min_improvement},
          {"loss", loss_name(training.loss)},
          {"variance_weight", training.variance_weight},
          {"sigma_floor", training.sigma_floor}}},
        {"estimators", estimators_json},
        {"query",
         {{"range", queries.query.range},
          {"threshold", queries.query.threshold},
          {"confidence", queries.query.confidence},
          {"interval", queries.query.interval},
          {"divisor", queries.query.divisor},
          {"validity", queries.validity},
          {"duration", queries.duration},
          {"instances", queries.instances}}},
        {"split", {{"train", train_fraction}, {"validation", validation_fraction}, {"test", test_fraction}}},
        {"seed", seed},
        {"threads", threads},
    };
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw ExperimentError("config", what); };
    if (building_kind != "corridor" && building_kind != "ring" && building_kind != "example" &&
        building_kind != "file") {
        fail("unknown building kind '" + building_kind + "'");
    }
    if (building_kind == "file" && !fs::exists(topology_path)) fail("topology file not found: " + topology_path);
    try {
        movement.validate();
        training.validate();
        queries.query.validate();
    } catch (const std::exception& e) {
        fail(e.what());
    }
    if (movement.object_count == 0) fail("at least one object is required");
    if (!(delta > 0.0)) fail("grid spacing must be positive");
    if (hotspot_weight < 0.0 || !(hotspot_period > 0.0)) fail("invalid hotspot schedule");
    if (train_fraction < 0.0 || validation_fraction < 0.0 || test_fraction < 0.0 ||
        std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
        fail("split fractions must be non-negative and sum to 1");
    }
    if (estimators.empty()) fail("no estimator selected");
    if (queries.instances == 0 || !(queries.duration > 0.0)) fail("query instances and duration must be positive");
    if (!(queries.validity > 0.0)) fail("validity must be positive");
    if (uses(*this, PredictorMode::me)) {
        const double m = queries.validity / delta;
        if (std::abs(m - std::round(m)) > 1e-9 || std::round(m) < 1.0 ||
            std::round(m) >= static_cast<double>(training.window)) {
            fail("validity must be a whole number of grid steps, fewer than the window");
        }
    }
    const SplitSizes s = split_by_time(grid_length(*this), train_fraction, validation_fraction);
    if (s.train <= training.window || s.validation == 0 || s.test == 0) {
        fail("simulation too short for the window and split");
    }
    const double test_start = static_cast<double>(s.train + s.validation) * delta;
    if (test_start + queries.duration + queries.query.interval > movement.duration) {
        fail("test period is shorter than one query");
    }
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
    seed = s;
    movement.seed = derive_key(s, fnv1a64("movement"));
    extraction.seed = derive_key(s, fnv1a64("extraction"));
    training.seed = derive_key(s, fnv1a64("training"));
}

void stage_generate(const ExperimentConfig& config, const fs::path& dir) {
    in_stage("gen-data", [&] {
        config.validate();
        fs::create_directories(dir);
        write_text(dir / "config.json", config.to_json().dump(2) + "\n");
        const Topology topo = make_building(config);
        write_text(dir / "topology.json", topology_to_json(topo));

        const MovementConfig movement = effective_movement(topo, config);
        const Movement data = generate_movement(topo, movement);
        {
            std::ofstream out(dir / "trajectories.csv");
            write_trajectory_csv(out, data.sparse);
        }
        {
            std::ofstream out(dir / "ground_truth.csv");
            write_ground_truth_csv(out, topo, data.dense);
        }

        // query users move like everyone else but are not part of the data
        MovementConfig users = movement;
        users.object_count = config.queries.instances;
        users.id_prefix = "q";
        users.seed = derive_key(config.seed, fnv1a64("query-users"));
        const Movement user_data = generate_movement(topo, users);

        const SplitSizes split = run_split(config);
        const double lo = static_cast<double>(split.train + split.validation) * config.delta;
        const double hi = config.movement.duration - config.queries.duration - config.queries.query.interval;
        StreamRng rng(derive_key(config.seed, fnv1a64("query-windows")));
        json instances = json::array();
        for (std::size_t i = 0; i < user_data.dense.size(); ++i) {
            const DenseTrace& tr = user_data.dense[i];
            const double t_start = std::floor(rng.uniform(lo, hi));
            json segs = json::array();
            for (const TraceSegment& s : tr.segments()) {
                segs.push_back({{"t_start", s.t_start},
                                {"t_end", s.t_end},
                                {"from", location_json(s.from)},
                                {"to", location_json(s.to)},
                                {"partition", topo.partition(s.partition).id}});
            }
            instances.push_back({{"instance", i},
                                 {"user", tr.object()},
                                 {"t_start", t_start},
                                 // the last result time t_end + interval closes the window
                                 {"t_end", t_start + config.queries.duration - config.queries.query.interval},
                                 {"segments", segs}});
        }
        write_text(dir / "users.json", json{{"instances", instances}}.dump() + "\n");
    });
}

void stage_extract(const ExperimentConfig& config, const fs::path& dir) {
    in_stage("extract", [&] {
        const auto started = std::chrono::steady_clock::now();
        const Topology topo = load_run_topology(dir);
        const TrajectoryStore store = load_store(dir);
        const PopulationExtractor extractor(topo, store, config.extraction);
        const std::size_t length = grid_length(config);
        std::vector<PopulationDistribution> series(length);
        parallel_for(length, worker_count(config.threads), [&](std::size_t k) {
            series[k] = extractor.extract(static_cast<double>(k) * config.delta);
        });
        std::ofstream out(dir / "populations.csv");
        write_population_csv(out, topo, series);
        const json stats = {{"stage", "extract"},
                            {"grid_points", length},
                            {"empty_path_objects", extractor.empty_path_objects()},
                            {"unlocatable_pairs", extractor.unlocatable_pairs()},
                            {"elapsed_ms", elapsed_ms(started)}};
        write_text(dir / "logs" / "extract.json", stats.dump(2) + "\n");
    });
}

void extract_snapshot(const ExperimentConfig& config, const fs::path& dir, double t, const fs::path& out) {
    in_stage("extract", [&] {
        const Topology topo = load_run_topology(dir);
        const TrajectoryStore store = load_store(dir);
        const PopulationExtractor extractor(topo, store, config.extraction);
        const PopulationDistribution d = extractor.extract(t);
        std::ostringstream ss;
        write_population_csv(ss, topo, std::span<const PopulationDistribution>(&d, 1));
        write_text(out, ss.str());
    });
}

void stage_train(const ExperimentConfig& config, const fs::path& dir) {
    in_stage("train", [&] {
        fs::remove(dir / "logs" / "kl.jsonl");
        const bool want_se = uses(config, PredictorMode::se);
        const bool want_me = uses(config, PredictorMode::me);
        if (!want_se && !want_me) return;

        const Topology topo = load_run_topology(dir);
        const PopulationSeries series = load_series(dir, topo, config.delta);
        const SplitSizes split = split_by_time(series.length(), config.train_fraction, config.validation_fraction);
        auto part_of = [&](const PopulationSeries& s, double t) {
            const std::size_t k = grid_index(s, t);
            return k < split.train ? 0 : k < split.train + split.validation ? 1 : 2;
        };

        double target_max = 1.0;
        for (std::size_t k = 0; k < split.train; ++k) {
            for (double m : series.mu[k]) target_max = std::max(target_max, m);
        }

        std::vector<json> kl_lines;
        std::mutex kl_mutex;
        std::vector<std::function<void()>> jobs;
        if (want_se) {
            jobs.emplace_back([&] {
                std::vector<SeWindow> parts[3];
                for (SeWindow& w : build_se_windows(series, config.training.window)) {
                    if (w.complete) parts[part_of(series, w.time)].push_back(std::move(w));
                }
                SeModel model(config.training.window, config.training.hidden, config.training.seed);
                model.set_scale(target_max);
                const auto started = std::chrono::steady_clock::now();
                const TrainResult r = train_se(model, parts[0], parts[1], config.training);
                const double ms = elapsed_ms(started);
                write_text(dir / "models" / "se.json", serialize_model(model));
                write_text(dir / "logs" / "training_se.json", train_result_json(r, ms).dump(2) + "\n");

                std::map<double, std::vector<const SeWindow*>> by_time;
                for (const SeWindow& w : parts[2]) by_time[w.time].push_back(&w);
                std::vector<json> lines;
                for (const auto& [t, ws] : by_time) {
                    std::vector<double> mh, sh, mu, sg;
                    for (const SeWindow* w : ws) {
                        const Prediction p = model.predict(w->inputs, config.training.sigma_floor);
                        mh.push_back(p.mu);
                        sh.push_back(p.sigma);
                        mu.push_back(w->target[0]);
                        sg.push_back(w->target[1]);
                    }
                    const KlSummary s = average_kl(mh, sh, mu, sg);
                    lines.push_back({{"model", "se"},
                                     {"t", t},
                                     {"kl_sum", s.mean * static_cast<double>(s.count)},
                                     {"count", s.count},
                                     {"excluded", s.excluded}});
                }
                std::lock_guard lock(kl_mutex);
                kl_lines.insert(kl_lines.end(), lines.begin(), lines.end());
            });
        }
        if (want_me) {
            jobs.emplace_back([&] {
                std::vector<MeWindow> parts[3];
                for (MeWindow& w : build_me_windows(series, config.training.window)) {
                    if (w.complete) parts[part_of(series, w.time)].push_back(std::move(w));
                }
                MeModel model(topo.adjacency_matrix(), config.training.window, config.training.hidden,
                              config.training.gcn_layers, config.training.key_size,
                              derive_key(config.training.seed, 1));
                model.set_scale(target_max);
                const auto started = std::chrono::steady_clock::now();
                const TrainResult r = train_me(model, parts[0], parts[1], config.training);
                const double ms = elapsed_ms(started);
                write_text(dir / "models" / "me.json", serialize_model(model));
                write_text(dir / "logs" / "training_me.json", train_result_json(r, ms).dump(2) + "\n");

                std::vector<json> lines;
                for (const MeWindow& w : parts[2]) {
                    const auto [mh, sh] = model.predict(w.inputs, config.training.sigma_floor);
                    const KlSummary s = average_kl(mh, sh, w.target_mu, w.target_sigma);
                    lines.push_back({{"model", "me"},
                                     {"t", w.time},
                                     {"kl_sum", s.mean * static_cast<double>(s.count)},
                                     {"count", s.count},
                                     {"excluded", s.excluded}});
                }
                std::lock_guard lock(kl_mutex);
                kl_lines.insert(kl_lines.end(), lines.begin(), lines.end());
            });
        }
        parallel_for(jobs.size(), worker_count(config.threads), [&](std::size_t i) { jobs[i](); });

        std::stable_sort(kl_lines.begin(), kl_lines.end(), [](const json& a, const json& b) {
            return a["model"].get<std::string>() < b["model"].get<std::string>();
        });
        std::string text;
        for (const json& j : kl_lines) text += j.dump() + "\n";
        write_text(dir / "logs" / "kl.jsonl", text);
    });
}

void stage_monitor(const ExperimentConfig& config, const fs::path& dir) {
    in_stage("monitor", [&] {
        const Topology topo = load_run_topology(dir);
        const TrajectoryStore store = load_store(dir);
        const PopulationExtractor extractor(topo, store, config.extraction);
        const std::vector<QueryInstance> instances = load_instances(dir, topo);
        std::vector<DenseTrace> truth;
        {
            std::ifstream in(dir / "ground_truth.csv");
            if (!in) throw std::runtime_error("missing ground_truth.csv; run gen-data first");
            truth = read_ground_truth_csv(in, topo);
        }
        std::string se_doc, me_doc;
        if (uses(config, PredictorMode::se)) se_doc = read_text(dir / "models" / "se.json");
        if (uses(config, PredictorMode::me)) me_doc = read_text(dir / "models" / "me.json");

        struct Task {
            PredictorMode mode;
            std::size_t instance;
        };
        std::vector<Task> tasks;
        for (PredictorMode m : config.estimators) {
            for (std::size_t i = 0; i < instances.size(); ++i) tasks.push_back({m, i});
        }
        std::vector<json> summaries(tasks.size());
        parallel_for(tasks.size(), worker_count(config.threads), [&](std::size_t ti) {
            const Task& task = tasks[ti];
            const QueryInstance& qi = instances[task.instance];
            SeModel se;
            MeModel me;
            FeatureCache features(true);
            PredictorBackend backend;
            backend.extractor = &extractor;
            backend.store = &store;
            backend.features = &features;
            if (task.mode == PredictorMode::se) {
                se = deserialize_se_model(se_doc);
                backend.se = &se;
            } else if (task.mode == PredictorMode::me) {
                me = deserialize_me_model(me_doc);
                backend.me = &me;
            }
            CmppQuery q = config.queries.query;
            q.t_start = qi.t_start;
            q.t_end = qi.t_end;
            EngineConfig ec;
            ec.mode = task.mode;
            ec.validity = config.queries.validity;
            ec.delta = config.delta;
            ec.sigma_floor = config.training.sigma_floor;
            CmppEngine engine(topo, q, ec, backend);
            const auto emissions = engine.run([&](double t) { return qi.trace.location_at(t); });

            std::string text;
            for (const Emission& e : emissions) {
                const Location l = *qi.trace.location_at(e.t_q);
                const auto reached = engine.reachable(l);
                const auto truth_set = true_populated(truth, reached, q.threshold, e.t_q);
                json populated = json::array(), actual = json::array();
                for (PartitionIndex v : e.populated) populated.push_back(topo.partition(v).id);
                for (PartitionIndex v : truth_set) actual.push_back(topo.partition(v).id);
                text += json{{"t_q", e.t_q},
                             {"populated", populated},
                             {"truth", actual},
                             {"elapsed_ms", e.elapsed_ms},
                             {"predict_calls", e.predict_calls},
                             {"cache_hits", e.cache_hits}}
                            .dump() +
                        "\n";
            }
            const std::string name = "monitor_" + to_string(task.mode) + "_" + std::to_string(qi.index) + ".jsonl";
            write_text(dir / "logs" / name, text);
            summaries[ti] = {{"mode", to_string(task.mode)},
                             {"instance", qi.index},
                             {"user", qi.user},
                             {"t_start", qi.t_start},
                             {"t_end", qi.t_end},
                             {"log", name},
                             {"emissions", emissions.size()},
                             {"predict_calls", engine.predict_calls()},
                             {"cache_hits", engine.feature_hits()},
                             {"extract_calls", engine.extract_calls()},
                             {"paused_ticks", engine.paused_ticks()}};
        });
        std::string text;
        for (const json& s : summaries) text += s.dump() + "\n";
        write_text(dir / "logs" / "instances.jsonl", text);
    });
}

json stage_evaluate(const fs::path& dir) {
    return in_stage("evaluate", [&] {
        json report = json::object();

        if (fs::exists(dir / "logs" / "kl.jsonl")) {
            std::map<std::string, std::array<double, 4>> kl;  // sum, count, excluded, windows
            for (const json& j : read_json_lines(dir / "logs" / "kl.jsonl")) {
                auto& a = kl[j.at("model").get<std::string>()];
                a[0] += j.at("kl_sum").get<double>();
                a[1] += j.at("count").get<double>();
                a[2] += j.at("excluded").get<double>();
                a[3] += 1.0;
            }
            if (!kl.empty()) {
                json section = json::object();
                for (const auto& [model, a] : kl) {
                    section[model] = {{"mean", a[1] > 0.0 ? a[0] / a[1] : 0.0},
                                      {"terms", static_cast<std::size_t>(a[1])},
                                      {"excluded", static_cast<std::size_t>(a[2])},
                                      {"windows", static_cast<std::size_t>(a[3])}};
                }
                report["kl"] = section;
            }
        }

        const auto summaries = read_json_lines(dir / "logs" / "instances.jsonl");
        std::vector<std::string> modes;
        for (const json& s : summaries) {
            const auto m = s.at("mode").get<std::string>();
            if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
        }
        json monitoring = json::object();
        for (const std::string& mode : modes) {
            std::size_t tp = 0, fp = 0, fn = 0, emissions = 0;
            std::uint64_t calls = 0, hits = 0, extracts = 0, paused = 0;
            double total_ms = 0.0;
            json per_instance = json::array();
            for (const json& s : summaries) {
                if (s.at("mode") != mode) continue;
                std::vector<double> keys;
                std::vector<std::vector<PartitionIndex>> pred, truth;
                std::map<std::string, PartitionIndex> ids;
                auto intern = [&](const json& arr) {
                    std::vector<PartitionIndex> out;
                    for (const json& v : arr) out.push_back(ids.emplace(v.get<std::string>(), ids.size()).first->second);
                    return out;
                };
                double ms = 0.0;
                const auto lines = read_json_lines(dir / "logs" / s.at("log").get<std::string>());
                for (const json& e : lines) {
                    keys.push_back(e.at("t_q").get<double>());
                    pred.push_back(intern(e.at("populated")));
                    truth.push_back(intern(e.at("truth")));
                    ms += e.at("elapsed_ms").get<double>();
                }
                const F1Score f = f1_score(keys, pred, keys, truth);
                tp += f.tp;
                fp += f.fp;
                fn += f.fn;
                emissions += lines.size();
                total_ms += ms;
                calls += s.at("predict_calls").get<std::uint64_t>();
                hits += s.at("cache_hits").get<std::uint64_t>();
                extracts += s.at("extract_calls").get<std::uint64_t>();
                paused += s.at("paused_ticks").get<std::uint64_t>();
                per_instance.push_back({{"instance", s.at("instance")},
                                        {"user", s.at("user")},
                                        {"emissions", lines.size()},
                                        {"precision", f.precision},
                                        {"recall", f.recall},
                                        {"f1", f.f1},
                                        {"mean_response_ms", lines.empty() ? 0.0 : ms / static_cast<double>(lines.size())}});
            }
            const F1Score f = f1_from_counts(tp, fp, fn);
            monitoring[mode] = {{"precision", f.precision},
                                {"recall", f.recall},
                                {"f1", f.f1},
                                {"tp", tp},
                                {"fp", fp},
                                {"fn", fn},
                                {"emissions", emissions},
                                {"predict_calls", calls},
                                {"cache_hits", hits},
                                {"extract_calls", extracts},
                                {"paused_ticks", paused},
                                {"mean_response_ms", emissions == 0 ? 0.0 : total_ms / static_cast<double>(emissions)},
                                {"instances", per_instance}};
        }
        report["monitoring"] = monitoring;
        write_text(dir / "report.json", report.dump(2) + "\n");
        return report;
    });
}

json run_experiment(const ExperimentConfig& config, const fs::path& dir) {
    stage_generate(config, dir);
    stage_extract(config, dir);
    stage_train(config, dir);
    stage_monitor(config, dir);
    return stage_evaluate(dir);
}

json strip_timing(const json& report) {
    if (report.is_object()) {
        json out = json::object();
        for (const auto& [key, value] : report.items()) {
            if (key.size() >= 3 && key.compare(key.size() - 3, 3, "_ms") == 0) continue;
            out[key] = strip_timing(value);
        }
        return out;
    }
    if (report.is_array()) {
        json out = json::array();
        for (const json& v : report) out.push_back(strip_timing(v));
        return out;
    }
    return report;
}

}  // namespace popmon
