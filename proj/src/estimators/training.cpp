#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "popmon/estimators.hpp"

namespace popmon {

using nn::Matrix;
using nn::Tape;
using nn::Var;

void TrainingConfig::validate() const {
    if (window == 0 || hidden == 0 || gcn_layers == 0 || key_size == 0 || batch_size == 0 || max_epochs == 0) {
        throw EstimatorError("training sizes must be positive");
    }
    if (learning_rate < 0.0 || !(sigma_floor > 0.0) || min_improvement < 0.0 || variance_weight < 0.0) {
        throw EstimatorError("invalid training hyperparameters");
    }
}

namespace {

Var column(Tape& t, const std::vector<double>& values) {
    Matrix m(values.size(), 1);
    m.data = values;
    return t.constant(std::move(m));
}

Var loss_of(const TrainingConfig& config, Var mu_hat, Var sigma_hat, Var mu, Var sigma) {
    if (config.loss == LossKind::mse_variance) {
        return mse_variance_loss(mu_hat, sigma_hat, mu, sigma, config.variance_weight);
    }
    return wasserstein_loss(mu_hat, sigma_hat, mu, sigma);
}

// Returns the summed loss over the batch; gradients of (sum / divisor) are
// accumulated into the parameters.
double se_batch(SeModel& model, std::span<const SeWindow> all, std::span<const std::size_t> idx,
                const TrainingConfig& config, double divisor, bool with_grad) {
    Tape t;
    std::vector<Var> inputs;
    for (std::size_t i = 0; i < model.window(); ++i) {
        Matrix x(idx.size(), 2);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            x(b, 0) = all[idx[b]].inputs[i][0];
            x(b, 1) = all[idx[b]].inputs[i][1];
        }
        inputs.push_back(t.constant(std::move(x)));
    }
    std::vector<double> mu, sigma;
    for (std::size_t i : idx) {
        mu.push_back(all[i].target[0]);
        sigma.push_back(all[i].target[1]);
    }
    auto [mu_hat, sigma_hat] = model.forward(t, inputs);
    const Var loss = loss_of(config, mu_hat, sigma_hat, column(t, mu), column(t, sigma));
    const double value = loss.scalar();
    if (with_grad) t.backward(nn::scale(loss, 1.0 / divisor));
    return value;
}

double me_sample(MeModel& model, const MeWindow& w, const TrainingConfig& config, double divisor, bool with_grad) {
    Tape t;
    auto [mu_hat, sigma_hat] = model.forward(t, w.inputs);
    const Var loss = loss_of(config, mu_hat, sigma_hat, column(t, w.target_mu), column(t, w.target_sigma));
    const double value = loss.scalar();
    if (with_grad) t.backward(nn::scale(loss, 1.0 / divisor));
    return value;
}

struct Snapshot {
    std::vector<Matrix> values;
};

Snapshot take(const std::vector<nn::Parameter*>& params) {
    Snapshot s;
    for (const nn::Parameter* p : params) s.values.push_back(p->value);
    return s;
}

void restore(const std::vector<nn::Parameter*>& params, const Snapshot& s) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
}

// Shared epoch loop. run_batch(indices, with_grad) returns the summed loss of
// those windows; evaluate() returns the mean validation loss (or nullopt).
TrainResult fit(std::vector<nn::Parameter*> params, std::size_t train_count, const TrainingConfig& config,
                const std::function<double(std::span<const std::size_t>)>& run_batch,
                const std::function<std::optional<double>()>& evaluate) {
    config.validate();
    if (train_count == 0) throw EstimatorError("empty training set");
    nn::Adam adam(params, {config.learning_rate, 0.9, 0.999, 1e-8});
    StreamRng rng(derive_key(config.seed, fnv1a64("shuffle")));
    std::vector<std::size_t> order(train_count);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    Snapshot best = take(params);
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0.0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t end = std::min(order.size(), b + config.batch_size);
            adam.zero_grad();
            total += run_batch(std::span<const std::size_t>(order).subspan(b, end - b));
            adam.step();
        }
        const double train_loss = total / static_cast<double>(train_count);
        result.train_loss.push_back(train_loss);
        const std::optional<double> val = evaluate();
        const double score = val.value_or(train_loss);
        result.validation_loss.push_back(score);
        if (score < best_score - config.min_improvement) {
            best_score = score;
            best = take(params);
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            result.early_stopped = true;
            break;
        }
    }
    restore(params, best);
    adam.zero_grad();
    result.best_validation = best_score;
    return result;
}

double target_scale(double max_mu) { return std::max(1.0, max_mu); }

}  // namespace

double evaluate_se(SeModel& model, std::span<const SeWindow> windows, const TrainingConfig& config) {
    if (windows.empty()) throw EstimatorError("no windows to evaluate");
    std::vector<std::size_t> idx(windows.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    double total = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += 256) {
        const std::size_t end = std::min(idx.size(), b + 256);
        total += se_batch(model, windows, std::span<const std::size_t>(idx).subspan(b, end - b), config, 1.0, false);
    }
    return total / static_cast<double>(windows.size());
}

double evaluate_me(MeModel& model, std::span<const MeWindow> windows, const TrainingConfig& config) {
    if (windows.empty()) throw EstimatorError("no windows to evaluate");
    double total = 0.0;
    for (const MeWindow& w : windows) total += me_sample(model, w, config, 1.0, false);
    return total / static_cast<double>(windows.size());
}

TrainResult train_se(SeModel& model, std::span<const SeWindow> train, std::span<const SeWindow> validation,
                     const TrainingConfig& config) {
    if (train.empty()) throw EstimatorError("empty training set");
    double max_mu = 0.0;
    for (const SeWindow& w : train) max_mu = std::max(max_mu, w.target[0]);
    model.set_scale(target_scale(max_mu));
    return fit(
        model.parameters(), train.size(), config,
        [&](std::span<const std::size_t> idx) {
            return se_batch(model, train, idx, config, static_cast<double>(idx.size()), true);
        },
        [&]() -> std::optional<double> {
            if (validation.empty()) return std::nullopt;
            return evaluate_se(model, validation, config);
        });
}

TrainResult train_me(MeModel& model, std::span<const MeWindow> train, std::span<const MeWindow> validation,
                     const TrainingConfig& config) {
    if (train.empty()) throw EstimatorError("empty training set");
    double max_mu = 0.0;
    for (const MeWindow& w : train) {
        for (double m : w.target_mu) max_mu = std::max(max_mu, m);
    }
    model.set_scale(target_scale(max_mu));
    return fit(
        model.parameters(), train.size(), config,
        [&](std::span<const std::size_t> idx) {
            double total = 0.0;
            for (std::size_t i : idx) total += me_sample(model, train[i], config, static_cast<double>(idx.size()), true);
            return total;
        },
        [&]() -> std::optional<double> {
            if (validation.empty()) return std::nullopt;
            return evaluate_me(model, validation, config);
        });
}

}  // namespace popmon
