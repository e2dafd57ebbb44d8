#pragma once

// Single-way (SE) and multi-way (ME) population estimators: feature windows,
// models, losses, training and persistence.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "popmon/nn/layers.hpp"
#include "popmon/nn/tensor.hpp"
#include "popmon/population.hpp"

namespace popmon {

class EstimatorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// (mu, sigma) per partition on a regular time grid start + k * delta.
/// Missing grid points hold (0, 0) with present[k] == false.
struct PopulationSeries {
    double start = 0.0;
    double delta = 60.0;
    std::size_t partition_count = 0;
    std::vector<std::vector<double>> mu;     // [k][v]
    std::vector<std::vector<double>> sigma;  // [k][v]
    std::vector<bool> present;

    std::size_t length() const noexcept { return mu.size(); }
    double time(std::size_t k) const noexcept { return start + static_cast<double>(k) * delta; }

    /// Places snapshots on the grid spanning their time range.
    static PopulationSeries from_snapshots(std::span<const PopulationDistribution> snapshots,
                                           std::size_t partition_count, double delta);
    /// Grid points [begin, begin + count).
    PopulationSeries slice(std::size_t begin, std::size_t count) const;
};

using FeaturePoint = std::array<double, 2>;  // (mu, sigma)

struct SeWindow {
    PartitionIndex partition = 0;
    double time = 0.0;
    std::vector<FeaturePoint> inputs;  // oldest first, the last at time - delta
    FeaturePoint target{};
    bool complete = true;              // every input grid point was present
};

struct MeWindow {
    double time = 0.0;
    std::vector<nn::Matrix> inputs;  // N matrices |V| x 2, oldest first
    std::vector<double> target_mu;
    std::vector<double> target_sigma;
    bool complete = true;
};

/// Sliding windows with stride delta: length - n windows per partition.
std::vector<SeWindow> build_se_windows(const PopulationSeries& series, std::size_t n);
std::vector<MeWindow> build_me_windows(const PopulationSeries& series, std::size_t n);

enum class LossKind { wasserstein, mse_variance };

struct TrainingConfig {
    std::size_t window = 10;      // N
    std::size_t hidden = 16;      // GRU / GCN output width K
    std::size_t gcn_layers = 2;   // l
    std::size_t key_size = 16;    // attention width K''
    double learning_rate = 0.01;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double min_improvement = 1e-4;
    std::uint64_t seed = 1;
    double sigma_floor = 1e-6;
    LossKind loss = LossKind::wasserstein;
    double variance_weight = 1.0;  // lambda of the MSE-variance loss

    void validate() const;
};

struct Prediction {
    double mu = 0.0;
    double sigma = 0.0;
};

/// Shared GRU over the N (mu, sigma) inputs of one partition, then two linear
/// heads. Inputs are divided by `scale` and outputs multiplied by it.
class SeModel {
public:
    SeModel() = default;
    SeModel(std::size_t window, std::size_t hidden, std::uint64_t seed);

    std::size_t window() const noexcept { return window_; }
    std::size_t hidden() const noexcept { return hidden_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double scale() const noexcept { return scale_; }
    void set_scale(double s);

    /// Raw (unclamped) heads for a batch: inputs[i] is B x 2 for step i.
    std::pair<nn::Var, nn::Var> forward(nn::Tape& t, const std::vector<nn::Var>& inputs);
    /// One window, sigma clamped to sigma_floor.
    Prediction predict(std::span<const FeaturePoint> inputs, double sigma_floor = 1e-6);

    std::vector<nn::Parameter*> parameters();

    nn::GruCell gru;
    nn::Dense mu_head;
    nn::Dense sigma_head;

private:
    std::size_t window_ = 0;
    std::size_t hidden_ = 0;
    std::uint64_t seed_ = 0;
    double scale_ = 1.0;
};

/// Temporal (T), spatial (S), temporal-spatial (TS) and spatial-temporal (ST)
/// units fused by self-attention over their stacked outputs. Output heads are
/// shared by all partitions, so the model is equivariant under relabeling.
class MeModel {
public:
    MeModel() = default;
    MeModel(const std::vector<std::vector<int>>& adjacency, std::size_t window, std::size_t hidden,
            std::size_t gcn_layers, std::size_t key_size, std::uint64_t seed);

    std::size_t partition_count() const noexcept { return partitions_; }
    std::size_t window() const noexcept { return window_; }
    std::size_t hidden() const noexcept { return hidden_; }
    std::size_t gcn_layers() const noexcept { return layers_; }
    std::size_t key_size() const noexcept { return key_size_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double scale() const noexcept { return scale_; }
    void set_scale(double s);
    const std::vector<std::vector<int>>& adjacency() const noexcept { return adjacency_; }
    const nn::Matrix& propagation() const noexcept { return propagation_; }

    /// Raw heads, each |V| x 1. inputs are N matrices |V| x 2.
    std::pair<nn::Var, nn::Var> forward(nn::Tape& t, const std::vector<nn::Matrix>& inputs);
    std::pair<std::vector<double>, std::vector<double>> predict(const std::vector<nn::Matrix>& inputs,
                                                                double sigma_floor = 1e-6);

    std::vector<nn::Parameter*> parameters();

    nn::GruCell t_gru;
    std::vector<nn::GcnLayer> s_gcn;
    std::vector<nn::GcnLayer> ts_gcn;
    nn::GruCell ts_gru;
    std::vector<nn::GcnLayer> st_gcn;
    nn::SelfAttention attention;
    nn::Dense mu_head;
    nn::Dense sigma_head;

private:
    std::vector<std::vector<int>> adjacency_;
    nn::Matrix propagation_;
    std::size_t partitions_ = 0;
    std::size_t window_ = 0;
    std::size_t hidden_ = 0;
    std::size_t layers_ = 0;
    std::size_t key_size_ = 0;
    std::uint64_t seed_ = 0;
    double scale_ = 1.0;
};

// Losses over column vectors (B x 1 or |V| x 1), summed over rows.
nn::Var wasserstein_loss(nn::Var mu_hat, nn::Var sigma_hat, nn::Var mu, nn::Var sigma);
nn::Var mse_variance_loss(nn::Var mu_hat, nn::Var sigma_hat, nn::Var mu, nn::Var sigma, double lambda);
double wasserstein_loss(std::span<const double> mu_hat, std::span<const double> sigma_hat,
                        std::span<const double> mu, std::span<const double> sigma);
double mse_variance_loss(std::span<const double> mu_hat, std::span<const double> var_hat,
                         std::span<const double> mu, std::span<const double> var, double lambda);

/// KL(N(mu_hat, sigma_hat^2) || N(mu, sigma^2)).
double kl_normal(double mu_hat, double sigma_hat, double mu, double sigma);

struct KlSummary {
    double mean = 0.0;
    std::size_t count = 0;
    std::size_t excluded = 0;  // truth sigma == 0
};

/// Average KL over partitions; partitions with zero truth sigma are excluded
/// and counted.
KlSummary average_kl(std::span<const double> mu_hat, std::span<const double> sigma_hat, std::span<const double> mu,
                     std::span<const double> sigma);

struct TrainResult {
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    std::size_t best_epoch = 0;
    double best_validation = 0.0;
    bool early_stopped = false;
};

/// Mini-batch Adam with early stopping; the model ends at its best-validation
/// checkpoint. Losses are reported as means per window.
TrainResult train_se(SeModel& model, std::span<const SeWindow> train, std::span<const SeWindow> validation,
                     const TrainingConfig& config);
TrainResult train_me(MeModel& model, std::span<const MeWindow> train, std::span<const MeWindow> validation,
                     const TrainingConfig& config);

/// Mean loss per window under the configured loss kind.
double evaluate_se(SeModel& model, std::span<const SeWindow> windows, const TrainingConfig& config);
double evaluate_me(MeModel& model, std::span<const MeWindow> windows, const TrainingConfig& config);

/// Grid-point counts of a contiguous train/validation/test split.
struct SplitSizes {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};
SplitSizes split_by_time(std::size_t length, double train_fraction, double validation_fraction);

// Persistence: JSON header plus base64 little-endian parameter blobs and a
// SHA-256 over the canonical document without the hash field.
std::string serialize_model(SeModel& model);
std::string serialize_model(MeModel& model);
SeModel deserialize_se_model(const std::string& document);
MeModel deserialize_me_model(const std::string& document);
/// "se" or "me".
std::string model_kind(const std::string& document);

}  // namespace popmon
