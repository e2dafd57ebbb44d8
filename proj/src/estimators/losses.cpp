#include <cmath>

#include "popmon/estimators.hpp"

namespace popmon {

nn::Var wasserstein_loss(nn::Var mu_hat, nn::Var sigma_hat, nn::Var mu, nn::Var sigma) {
    return nn::add(nn::sum_squares(nn::sub(mu, mu_hat)), nn::sum_squares(nn::sub(sigma, sigma_hat)));
}

nn::Var mse_variance_loss(nn::Var mu_hat, nn::Var sigma_hat, nn::Var mu, nn::Var sigma, double lambda) {
    const nn::Var var_hat = nn::hadamard(sigma_hat, sigma_hat);
    const nn::Var var = nn::hadamard(sigma, sigma);
    return nn::scale(nn::add(nn::sum_squares(nn::sub(mu, mu_hat)), nn::scale(nn::sum_squares(nn::sub(var, var_hat)), lambda)),
                     0.5);
}

namespace {

void require_equal_sizes(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    if (a != b || a != c || a != d) throw EstimatorError("loss operands differ in length");
}

}  // namespace

double wasserstein_loss(std::span<const double> mu_hat, std::span<const double> sigma_hat,
                        std::span<const double> mu, std::span<const double> sigma) {
    require_equal_sizes(mu_hat.size(), sigma_hat.size(), mu.size(), sigma.size());
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        total += (mu[i] - mu_hat[i]) * (mu[i] - mu_hat[i]) + (sigma[i] - sigma_hat[i]) * (sigma[i] - sigma_hat[i]);
    }
    return total;
}

double mse_variance_loss(std::span<const double> mu_hat, std::span<const double> var_hat,
                         std::span<const double> mu, std::span<const double> var, double lambda) {
    require_equal_sizes(mu_hat.size(), var_hat.size(), mu.size(), var.size());
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        m += (mu[i] - mu_hat[i]) * (mu[i] - mu_hat[i]);
        v += (var[i] - var_hat[i]) * (var[i] - var_hat[i]);
    }
    return 0.5 * (m + lambda * v);
}

double kl_normal(double mu_hat, double sigma_hat, double mu, double sigma) {
    if (!(sigma_hat > 0.0) || !(sigma > 0.0)) throw EstimatorError("KL needs positive standard deviations");
    const double d = mu_hat - mu;
    return std::log(sigma / sigma_hat) + (sigma_hat * sigma_hat + d * d) / (2.0 * sigma * sigma) - 0.5;
}

KlSummary average_kl(std::span<const double> mu_hat, std::span<const double> sigma_hat, std::span<const double> mu,
                     std::span<const double> sigma) {
    require_equal_sizes(mu_hat.size(), sigma_hat.size(), mu.size(), sigma.size());
    KlSummary s;
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(sigma[i] > 0.0)) {
            ++s.excluded;
            continue;
        }
        total += kl_normal(mu_hat[i], sigma_hat[i], mu[i], sigma[i]);
        ++s.count;
    }
    s.mean = s.count == 0 ? 0.0 : total / static_cast<double>(s.count);
    return s;
}

}  // namespace popmon
