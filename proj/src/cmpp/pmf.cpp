#include <cmath>

#include "popmon/cmpp.hpp"

namespace popmon {

double pmf_exceed(double mu, double sigma, double theta) {
    if (sigma < 0.0 || !std::isfinite(sigma) || !std::isfinite(mu)) {
        throw std::invalid_argument("pmf_exceed needs finite mu and sigma >= 0");
    }
    if (sigma == 0.0) return mu > theta ? 1.0 : 0.0;
    const double norm = (theta - mu) / sigma;
    if (norm < -4.0) return 1.0;
    if (norm > 4.0) return 0.0;
    return 0.5 * std::erfc(norm / std::sqrt(2.0));
}

}  // namespace popmon
