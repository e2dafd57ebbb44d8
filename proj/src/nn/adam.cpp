#include <cmath>

#include "popmon/nn/layers.hpp"

namespace popmon::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.rows, p->value.cols);
        v_.emplace_back(p->value.rows, p->value.cols);
        if (!p->grad.same_shape(p->value)) p->zero_grad();
    }
}

void Adam::step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        Matrix& m = m_[k];
        Matrix& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            m.data[i] = config_.beta1 * m.data[i] + (1.0 - config_.beta1) * g;
            v.data[i] = config_.beta2 * v.data[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m.data[i] / c1;
            const double v_hat = v.data[i] / c2;
            p.value.data[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace popmon::nn
