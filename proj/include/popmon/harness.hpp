#pragma once

// Synthetic buildings, scoring and the end-to-end experiment pipeline.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "popmon/cmpp.hpp"
#include "popmon/estimators.hpp"
#include "popmon/indoor_model.hpp"
#include "popmon/population.hpp"
#include "popmon/trajectory.hpp"

namespace popmon {

class ExperimentError : public std::runtime_error {
public:
    ExperimentError(const std::string& stage, const std::string& message)
        : std::runtime_error(stage + ": " + message), stage_(stage) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Rectangular rooms joined by two-way doors.
class BuildingBuilder {
public:
    PartitionIndex add_room(const std::string& id, double x0, double y0, double x1, double y1, int floor = 0);
    DoorIndex add_door(const std::string& id, double x, double y, PartitionIndex a, PartitionIndex b, int floor = 0);
    DoorIndex add_exterior_door(const std::string& id, double x, double y, PartitionIndex v, int floor = 0);
    Topology build(int floors = 1) const;

private:
    std::vector<Partition> partitions_;
    std::vector<Door> doors_;
};

/// The seven-room, nine-door example building.
Topology example_building();

/// 2 x 3 rooms whose doors form a single cycle of six partitions.
Topology ring_building();

/// A corridor cut into `segments` pieces with one room on each side of every
/// piece. Rooms open onto their corridor piece; neighbouring rooms on the
/// same side are also joined when `side_links` is set.
struct CorridorSpec {
    std::size_t segments = 4;
    double segment_length = 12.0;
    double corridor_width = 4.0;
    double room_depth = 10.0;
    bool side_links = true;
};
Topology corridor_building(const CorridorSpec& spec);

/// Population series of a crowd circling a ring of partitions plus random
/// background visitors; mu and sigma follow from per-object presences.
struct CrowdSpec {
    std::size_t partitions = 6;
    std::size_t steps = 480;
    double delta = 60.0;
    std::size_t crowd_size = 8;
    std::size_t dwell_min = 2;  // grid steps
    std::size_t dwell_max = 4;
    std::size_t background = 6;
    std::uint64_t seed = 1;
};
PopulationSeries migrating_crowd_series(const CrowdSpec& spec);

struct F1Score {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
};

/// Micro-averaged over emissions. keys[i] labels predicted[i] and truth[i];
/// both key lists must be identical.
F1Score f1_score(const std::vector<double>& predicted_keys, const std::vector<std::vector<PartitionIndex>>& predicted,
                 const std::vector<double>& truth_keys, const std::vector<std::vector<PartitionIndex>>& truth);
F1Score f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Partitions whose true population exceeds the threshold.
std::vector<PartitionIndex> true_populated(std::span<const DenseTrace> traces, std::span<const PartitionIndex> among,
                                           double threshold, double t);

struct QuerySettings {
    CmppQuery query;
    double validity = 120.0;
    double duration = 3600.0;
    std::size_t instances = 10;
};

struct ExperimentConfig {
    std::string building_kind = "corridor";  // corridor | ring | example | file
    std::string topology_path;               // for "file"
    CorridorSpec corridor;
    MovementConfig movement;
    double hotspot_weight = 0.0;  // > 0 builds a rotating room schedule
    double hotspot_period = 900.0;
    ExtractorConfig extraction;
    double delta = 60.0;
    TrainingConfig training;
    std::vector<PredictorMode> estimators{PredictorMode::se, PredictorMode::me, PredictorMode::last};
    QuerySettings queries;
    double train_fraction = 0.7;
    double validation_fraction = 0.1;
    double test_fraction = 0.2;
    std::uint64_t seed = 7;
    std::size_t threads = 0;  // 0 = hardware concurrency

    static ExperimentConfig from_json(const nlohmann::json& doc);
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;
    /// Copies the master seed into the per-stage seeds.
    void apply_seed(std::uint64_t seed);
};

/// Stage entry points. Each reads its inputs from and writes its outputs to
/// the run directory.
void stage_generate(const ExperimentConfig& config, const std::filesystem::path& dir);
void stage_extract(const ExperimentConfig& config, const std::filesystem::path& dir);
/// Single snapshot at t written to `out` as population CSV.
void extract_snapshot(const ExperimentConfig& config, const std::filesystem::path& dir, double t,
                      const std::filesystem::path& out);
void stage_train(const ExperimentConfig& config, const std::filesystem::path& dir);
void stage_monitor(const ExperimentConfig& config, const std::filesystem::path& dir);
/// Recomputes the report from the raw logs and writes report.json.
nlohmann::json stage_evaluate(const std::filesystem::path& dir);

/// All stages in order; returns the report.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::filesystem::path& dir);

/// The report without wall-clock fields (keys ending in "_ms").
nlohmann::json strip_timing(const nlohmann::json& report);

}  // namespace popmon
